"""Federated learning simulator: layer-wise mean merging with pairwise-mask secure aggregation."""

__version__ = "0.1.0"

from .data import (  # noqa: E402
    ClientDataset,
    Dataset,
    load_mhealth,
    make_synthetic,
    partition_clients,
    split_train_test,
    standardize_apply,
    standardize_fit,
)
from .federation import FederationConfig, merge_models, run_federation, run_round  # noqa: E402
from .metrics import MetricsReport, evaluate  # noqa: E402
from .nn import Model, forward, init_model, train_local  # noqa: E402

__all__ = [
    "ClientDataset",
    "Dataset",
    "FederationConfig",
    "MetricsReport",
    "Model",
    "evaluate",
    "forward",
    "init_model",
    "load_mhealth",
    "make_synthetic",
    "merge_models",
    "partition_clients",
    "run_federation",
    "run_round",
    "split_train_test",
    "standardize_apply",
    "standardize_fit",
    "train_local",
]
