"""Centralized layer-wise-mean federation.

A round broadcasts the global model, lets every client train a copy on its
own shard, and replaces the global model by the mean of the returned
models. Rounds repeat until the global weights stop moving (max-abs change
at most ``convergence_tol``) or the round cap is hit.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import secagg
from .data import ClientDataset, Dataset
from .errors import ArchitectureError, ClientError
from .metrics import CSV_FIELDS, MetricsReport, evaluate
from .nn import Model, flatten, init_model, train_local

log = logging.getLogger(__name__)

# stream tags for derive_seed, keep stable: they are part of the reproducibility contract
SEED_INIT = 0
SEED_TRAIN = 1
SEED_PAIRWISE = 2

HISTORY_FIELDS = ("round", "weight_delta") + CSV_FIELDS


def derive_seed(*parts: int) -> int:
    """Deterministic 64-bit seed from a tuple of non-negative ints (SeedSequence hash)."""
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class FederationConfig:
    t: int
    rounds: int = 20
    local_epochs: int = 50
    batch_size: int = 32
    lr: float = 0.01
    convergence_tol: float = 1e-4
    seed: int = 42
    secure_agg: bool = True
    frac_bits: int = secagg.DEFAULT_FRAC_BITS
    weighted: bool = False
    hidden: tuple[int, ...] = (64, 32)
    rho: float = 0.9
    eps: float = 1e-7

    def __post_init__(self):
        if self.t < 1:
            raise ValueError("t must be >= 1")
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if self.local_epochs < 1 or self.batch_size < 1:
            raise ValueError("local_epochs and batch_size must be >= 1")
        if not self.convergence_tol >= 0:
            raise ValueError("convergence_tol must be >= 0")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))

    def layer_sizes(self, n_features: int, n_classes: int) -> list[int]:
        return [n_features, *self.hidden, n_classes]


@dataclass
class RoundRecord:
    round_index: int
    global_model: Model = field(repr=False)
    metrics: MetricsReport | None
    weight_delta: float

    def csv_row(self) -> dict:
        row = {"round": self.round_index, "weight_delta": self.weight_delta}
        if self.metrics is not None:
            row.update(self.metrics.csv_row())
        else:
            row.update({name: "" for name in CSV_FIELDS})
        return row


def _check_same_arch(models: Sequence[Model]) -> None:
    arch = models[0].arch_id
    for i, m in enumerate(models[1:], 1):
        if m.arch_id != arch:
            raise ArchitectureError(f"model {i} has architecture {m.arch_id}, expected {arch}")


def merge_models(models: Sequence[Model], weights: Sequence[float] | None = None) -> Model:
    """Entry-wise mean of the models' weights and biases.

    Unweighted by default; ``weights`` (e.g. shard sizes) gives a weighted mean.
    """
    if not models:
        raise ValueError("cannot merge an empty list of models")
    _check_same_arch(models)
    if weights is None:
        merged = [
            (np.mean([m.layers[i].weights for m in models], axis=0),
             np.mean([m.layers[i].bias for m in models], axis=0))
            for i in range(len(models[0].layers))
        ]
    else:
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != (len(models),) or np.any(w < 0) or w.sum() <= 0:
            raise ValueError("need one non-negative weight per model with a positive total")
        w = w / w.sum()
        merged = [
            (np.tensordot(w, [m.layers[i].weights for m in models], axes=1),
             np.tensordot(w, [m.layers[i].bias for m in models], axes=1))
            for i in range(len(models[0].layers))
        ]
    return models[0].with_params(merged)


def max_abs_delta(prev: Model, nxt: Model) -> float:
    if prev.arch_id != nxt.arch_id:
        raise ArchitectureError("cannot compare models of different architectures")
    return float(np.max(np.abs(flatten(prev) - flatten(nxt))))


def has_converged(prev: Model, nxt: Model, tol: float) -> bool:
    return max_abs_delta(prev, nxt) <= tol


def _train_client(global_model: Model, client: ClientDataset, cfg: FederationConfig, round_index: int) -> Model:
    try:
        return train_local(
            global_model,
            client.data,
            cfg.local_epochs,
            cfg.batch_size,
            seed=derive_seed(cfg.seed, SEED_TRAIN, round_index, client.client_id),
            lr=cfg.lr,
            rho=cfg.rho,
            eps=cfg.eps,
        )
    except Exception as exc:
        raise ClientError(client.client_id, exc) from exc


def _secure_client(
    global_model: Model,
    client: ClientDataset,
    cfg: FederationConfig,
    round_index: int,
    seeds: secagg.PairwiseSeeds,
    share: float,
) -> secagg.MaskedUpdate:
    # the plaintext local model never leaves this function
    local = _train_client(global_model, client, cfg, round_index)
    if share != 1.0:
        local = local.with_params([(w * share, b * share) for w, b in local.params()])
    try:
        return secagg.client_update(local, client.client_id, seeds, round_index, cfg.frac_bits)
    except Exception as exc:
        raise ClientError(client.client_id, exc) from exc


def run_round(
    global_model: Model,
    clients: Sequence[ClientDataset],
    cfg: FederationConfig,
    round_index: int = 1,
    seeds: secagg.PairwiseSeeds | None = None,
) -> Model:
    """One broadcast / local-train / merge cycle."""
    if not clients:
        raise ValueError("a round needs at least one client")
    clients = sorted(clients, key=lambda c: c.client_id)
    sizes = [len(c) for c in clients]

    if not cfg.secure_agg or len(clients) == 1:
        if cfg.secure_agg:
            # a lone client's "sum" is its model; masking cannot hide anything
            log.debug("single client: secure aggregation bypassed")
        models = [_train_client(global_model, c, cfg, round_index) for c in clients]
        return merge_models(models, sizes if cfg.weighted else None)

    ids = [c.client_id for c in clients]
    if ids != list(range(len(clients))):
        raise ValueError(f"secure aggregation needs client ids 0..{len(clients) - 1}, got {ids}")
    if seeds is None:
        seeds = secagg.deal_pairwise_seeds(len(clients), derive_seed(cfg.seed, SEED_PAIRWISE))
    total = float(sum(sizes))
    updates = [
        _secure_client(
            global_model, c, cfg, round_index, seeds,
            share=(n / total) if cfg.weighted else 1.0,
        )
        for c, n in zip(clients, sizes)
    ]
    ring_sum = secagg.aggregate_masked(updates, len(clients))
    # weighted shares already sum to one
    n_div = 1 if cfg.weighted else len(clients)
    return secagg.decode_sum(ring_sum, n_div, cfg.frac_bits, like=global_model)


def run_federation(
    clients: Sequence[ClientDataset],
    test: Dataset | None,
    cfg: FederationConfig,
) -> tuple[Model, list[RoundRecord]]:
    """Full federation: initialise, then run rounds until convergence or the cap.

    Returns the final global model and one :class:`RoundRecord` per round,
    each scored on ``test`` (skipped when ``test`` is None).
    """
    if not clients:
        raise ValueError("federation needs at least one client")
    first = clients[0].data
    sizes = cfg.layer_sizes(first.n_features, first.class_count)
    global_model = init_model(sizes, derive_seed(cfg.seed, SEED_INIT))

    seeds = None
    if cfg.secure_agg and len(clients) > 1:
        seeds = secagg.deal_pairwise_seeds(len(clients), derive_seed(cfg.seed, SEED_PAIRWISE))

    history: list[RoundRecord] = []
    for r in range(1, cfg.rounds + 1):
        new_model = run_round(global_model, clients, cfg, r, seeds)
        delta = max_abs_delta(global_model, new_model)
        metrics = evaluate(new_model, test) if test is not None else None
        history.append(RoundRecord(r, new_model, metrics, delta))
        log.info("round %d: weight_delta=%.3g", r, delta)
        global_model = new_model
        if seeds is not None:
            seeds = seeds.next_round()
        if delta <= cfg.convergence_tol:
            break
    return global_model, history


def write_history_csv(history: Sequence[RoundRecord], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=HISTORY_FIELDS)
        writer.writeheader()
        for rec in history:
            writer.writerow({k: _fmt(v) for k, v in rec.csv_row().items()})


def _fmt(value):
    return repr(value) if isinstance(value, float) else value
