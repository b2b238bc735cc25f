"""Neural network training with domain constraints guaranteed over a whole input box."""

from .constraints import DomainConstraint, evaluate_constraint, load_constraint
from .data import DatasetSchema, ScaledDataset, generate_task, load_and_scale, load_task, write_task
from .intervals import BoundsBox, Interval, affine_layer_bounds, propagate
from .network import Activation, Network, TaskKind, backward, forward, init_standard
from .trainer import TrainConfig, TrainResult, train, train_baseline
from .translation import TranslatedConstraint, build_soft_constraints, translate
from .verify import constraint_accuracy, evaluate, find_counterexample, predictive_metrics

__all__ = [
    "Activation",
    "BoundsBox",
    "DatasetSchema",
    "DomainConstraint",
    "Interval",
    "Network",
    "ScaledDataset",
    "TaskKind",
    "TrainConfig",
    "TrainResult",
    "TranslatedConstraint",
    "affine_layer_bounds",
    "backward",
    "build_soft_constraints",
    "constraint_accuracy",
    "evaluate",
    "evaluate_constraint",
    "find_counterexample",
    "forward",
    "generate_task",
    "init_standard",
    "load_and_scale",
    "load_constraint",
    "load_task",
    "predictive_metrics",
    "propagate",
    "train",
    "train_baseline",
    "translate",
    "write_task",
]
