"""Client-count sweep: repeated federations per client count, plus a centralized baseline.

Every random choice in a grid derives from the single base seed through
:func:`fedsim.federation.derive_seed`, so the manifest written next to the
results is enough to regenerate ``raw.csv`` byte for byte.
"""

from __future__ import annotations

import csv
import glob
import hashlib
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__, secagg
from .data import (
    Dataset,
    load_mhealth,
    make_synthetic,
    partition_clients,
    split_train_test,
    standardize_apply,
    standardize_fit,
)
from .errors import FedsimError
from .federation import (
    SEED_INIT,
    SEED_TRAIN,
    FederationConfig,
    RoundRecord,
    derive_seed,
    run_federation,
)
from .metrics import CSV_FIELDS, MetricsReport, evaluate
from .nn import Model, init_model, train_local

log = logging.getLogger(__name__)

DEFAULT_CLIENT_COUNTS = (3, 5, 10, 15, 30)
FULL_REPETITIONS = 30
MANIFEST_VERSION = 1

SEED_SYNTHETIC = 10
SEED_SPLIT = 11
SEED_PARTITION = 12
SEED_FEDERATION = 13

SEED_DERIVATION = (
    "derive_seed(*ints) = SeedSequence(ints).generate_state(1, uint64)[0]; "
    "synthetic data = derive_seed(base, 10); split = derive_seed(base, 11, rep); "
    "partition = derive_seed(base, 12, rep, t); federation = derive_seed(base, 13, rep) "
    "(shared by every t and the baseline of that rep); inside a federation: "
    "init = derive_seed(fed, 0), client training = derive_seed(fed, 1, round, client_id), "
    "pairwise mask seeds = derive_seed(fed, 2); rep is forced to 0 when repeat_seeds is set"
)

BASELINE = "baseline"
RAW_FIELDS = (
    "t", "repetition", "status", "rounds_run", "final_weight_delta",
    *CSV_FIELDS, "split_seed", "partition_seed", "federation_seed", "error",
)
HISTORY_FIELDS = ("t", "repetition", "round", "weight_delta", *CSV_FIELDS)


@dataclass(frozen=True)
class DataSource:
    """Either an MHEALTH file glob or synthetic blob parameters ``(m, n, classes, separation)``."""

    mhealth_glob: str | None = None
    synthetic: tuple[int, int, int, float] | None = None
    keep_null: bool = False

    def __post_init__(self):
        if (self.mhealth_glob is None) == (self.synthetic is None):
            raise ValueError("give exactly one of mhealth_glob or synthetic")

    def load(self, base_seed: int) -> tuple[Dataset, dict]:
        if self.synthetic is not None:
            m, n, c, sep = self.synthetic
            seed = derive_seed(base_seed, SEED_SYNTHETIC)
            return make_synthetic(int(m), int(n), int(c), float(sep), seed), {"synthetic_seed": seed}
        paths = sorted(glob.glob(self.mhealth_glob))
        if not paths:
            raise FileNotFoundError(f"no files match {self.mhealth_glob!r}")
        digests = {p: hashlib.sha256(Path(p).read_bytes()).hexdigest() for p in paths}
        return load_mhealth(paths, keep_null=self.keep_null), {"files": digests}


@dataclass(frozen=True)
class ExperimentGrid:
    source: DataSource
    base: FederationConfig = field(default_factory=lambda: FederationConfig(t=1))
    client_counts: tuple[int, ...] = DEFAULT_CLIENT_COUNTS
    repetitions: int = 10
    test_fraction: float = 0.2
    include_baseline: bool = True
    repeat_seeds: bool = False
    average: str = "macro"

    def __post_init__(self):
        object.__setattr__(self, "client_counts", tuple(int(t) for t in self.client_counts))
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if any(t < 1 for t in self.client_counts):
            raise ValueError("client counts must be >= 1")
        if not self.client_counts and not self.include_baseline:
            raise ValueError("empty grid: no client counts and no baseline")

    def seeds_for(self, rep: int, t: int | None) -> dict[str, int]:
        r = 0 if self.repeat_seeds else rep
        base = self.base.seed
        out = {
            "split_seed": derive_seed(base, SEED_SPLIT, r),
            "federation_seed": derive_seed(base, SEED_FEDERATION, r),
        }
        out["partition_seed"] = derive_seed(base, SEED_PARTITION, r, t) if t is not None else ""
        return out

    def groups(self) -> list[int | str]:
        keys: list[int | str] = list(self.client_counts)
        if self.include_baseline:
            keys.append(BASELINE)
        return keys

    def to_dict(self) -> dict:
        d = asdict(self)
        d["base"]["hidden"] = list(self.base.hidden)
        d["client_counts"] = list(self.client_counts)
        if self.source.synthetic is not None:
            d["source"]["synthetic"] = list(self.source.synthetic)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentGrid":
        src = dict(d["source"])
        if src.get("synthetic") is not None:
            m, n, c, sep = src["synthetic"]
            src["synthetic"] = (int(m), int(n), int(c), float(sep))
        base = dict(d["base"])
        base["hidden"] = tuple(base["hidden"])
        rest = {k: v for k, v in d.items() if k not in ("source", "base")}
        rest["client_counts"] = tuple(rest["client_counts"])
        return cls(source=DataSource(**src), base=FederationConfig(**base), **rest)


@dataclass
class RunResult:
    t: int | str
    repetition: int
    seeds: dict[str, int]
    status: str = "ok"
    report: MetricsReport | None = None
    history: list[RoundRecord] = field(default_factory=list, repr=False)
    error: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def raw_row(self) -> dict:
        row = {
            "t": self.t,
            "repetition": self.repetition,
            "status": self.status,
            "rounds_run": len(self.history) if self.t != BASELINE else "",
            "final_weight_delta": self.history[-1].weight_delta if self.history else "",
            "error": self.error,
            **self.seeds,
        }
        for name in CSV_FIELDS:
            row[name] = getattr(self.report, name) if self.report is not None else ""
        return row


@dataclass
class GridResult:
    grid: ExperimentGrid
    runs: list[RunResult]
    source_info: dict = field(default_factory=dict)

    @property
    def failed(self) -> list[RunResult]:
        return [r for r in self.runs if not r.ok]

    def summary(self) -> list[dict]:
        """Mean and population std of each metric per client count (and baseline)."""
        rows = []
        for key in self.grid.groups():
            runs = [r for r in self.runs if r.t == key]
            good = [r for r in runs if r.ok]
            row = {"t": key, "n_runs": len(good), "excluded_count": len(runs) - len(good)}
            for name in CSV_FIELDS:
                vals = np.array([getattr(r.report, name) for r in good], dtype=np.float64)
                row[f"{name}_mean"] = float(vals.mean()) if vals.size else math.nan
                row[f"{name}_std"] = float(vals.std()) if vals.size else math.nan
            rows.append(row)
        return rows


def _prepare(grid: ExperimentGrid, data: Dataset, rep: int) -> tuple[Dataset, Dataset]:
    train, test = split_train_test(data, grid.test_fraction, grid.seeds_for(rep, None)["split_seed"])
    # fit on the whole training split before partitioning: simulation convenience, not private
    params = standardize_fit(train)
    return standardize_apply(params, train), standardize_apply(params, test)


def train_baseline(cfg: FederationConfig, train: Dataset) -> Model:
    """Centralized model with the federation's hyper-parameters.

    Uses the same seeds as client 0 in round 1, so it coincides with a
    one-client, one-round federation.
    """
    model = init_model(cfg.layer_sizes(train.n_features, train.class_count), derive_seed(cfg.seed, SEED_INIT))
    return train_local(
        model, train, cfg.local_epochs, cfg.batch_size,
        seed=derive_seed(cfg.seed, SEED_TRAIN, 1, 0), lr=cfg.lr, rho=cfg.rho, eps=cfg.eps,
    )


def run_baseline(cfg: FederationConfig, train: Dataset, test: Dataset, average: str = "macro") -> MetricsReport:
    return evaluate(train_baseline(cfg, train), test, average)


def _one_run(grid: ExperimentGrid, train: Dataset, test: Dataset, rep: int, t: int | str) -> RunResult:
    seeds = grid.seeds_for(rep, None if t == BASELINE else t)
    result = RunResult(t, rep, seeds)
    cfg = replace(grid.base, seed=seeds["federation_seed"])
    try:
        if t == BASELINE:
            result.report = run_baseline(cfg, train, test, grid.average)
        else:
            cfg = replace(cfg, t=t)
            clients = partition_clients(train, t, seeds["partition_seed"])
            _, history = run_federation(clients, test, cfg)
            result.history = history
            result.report = evaluate(history[-1].global_model, test, grid.average)
    except (FedsimError, ArithmeticError, ValueError) as exc:
        log.warning("run t=%s rep=%d failed: %s", t, rep, exc)
        result.status, result.error, result.report = "failed", f"{type(exc).__name__}: {exc}", None
    return result


def run_grid(grid: ExperimentGrid, jobs: int = 1) -> GridResult:
    """Run every (client count, repetition) federation plus per-repetition baselines.

    The data source is loaded first; a failure there raises before any run.
    A run that fails numerically is kept as a ``failed`` row.
    """
    data, info = grid.source.load(grid.base.seed)
    splits = {rep: _prepare(grid, data, rep) for rep in range(grid.repetitions)}
    tasks = [(rep, t) for rep in range(grid.repetitions) for t in grid.groups()]

    def work(task):
        rep, t = task
        return _one_run(grid, *splits[rep], rep, t)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            runs = list(pool.map(work, tasks))
    else:
        runs = [work(task) for task in tasks]
    order = {key: i for i, key in enumerate(grid.groups())}
    runs.sort(key=lambda r: (order[r.t], r.repetition))
    return GridResult(grid, runs, info)


def _cell(value):
    return repr(value) if isinstance(value, float) else value


def _write_csv(path: Path, fields: Sequence[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(fields), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _cell(row[k]) for k in fields})


def manifest(result: GridResult) -> dict:
    return {
        "tool": "fedsim",
        "version": __version__,
        "manifest_version": MANIFEST_VERSION,
        "grid": result.grid.to_dict(),
        "seed_derivation": SEED_DERIVATION,
        "prg_id": secagg.PRG_ID,
        "data": result.source_info,
        "runs": [
            {"t": r.t, "repetition": r.repetition, "status": r.status, **r.seeds}
            for r in result.runs
        ],
    }


def emit_report(result: GridResult, out_dir) -> dict[str, Path]:
    """Write raw.csv, summary.csv, trend.csv, history.csv and manifest.json into ``out_dir``."""
    if not result.runs:
        raise ValueError("refusing to write an empty grid result")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {name: out / name for name in
             ("raw.csv", "summary.csv", "trend.csv", "history.csv", "manifest.json")}

    _write_csv(paths["raw.csv"], RAW_FIELDS, (r.raw_row() for r in result.runs))

    summary = result.summary()
    sum_fields = ["t", "n_runs", "excluded_count"] + [
        f"{name}_{stat}" for name in CSV_FIELDS for stat in ("mean", "std")
    ]
    _write_csv(paths["summary.csv"], sum_fields, summary)

    base_row = next((row for row in summary if row["t"] == BASELINE), None)
    trend = []
    for name in CSV_FIELDS:
        for row in summary:
            if row["t"] == BASELINE:
                continue
            trend.append({
                "metric": name, "t": row["t"],
                "mean": row[f"{name}_mean"], "std": row[f"{name}_std"],
                "baseline_mean": base_row[f"{name}_mean"] if base_row else "",
            })
    _write_csv(paths["trend.csv"], ("metric", "t", "mean", "std", "baseline_mean"), trend)

    hist_rows = []
    for r in result.runs:
        for rec in r.history:
            row = {"t": r.t, "repetition": r.repetition, **rec.csv_row()}
            hist_rows.append(row)
    _write_csv(paths["history.csv"], HISTORY_FIELDS, hist_rows)

    with open(paths["manifest.json"], "w", encoding="utf-8") as fh:
        json.dump(manifest(result), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return paths


def grid_from_manifest(path) -> ExperimentGrid:
    with open(path, encoding="utf-8") as fh:
        record = json.load(fh)
    if record.get("manifest_version") != MANIFEST_VERSION:
        raise ValueError(f"unsupported manifest version {record.get('manifest_version')!r}")
    return ExperimentGrid.from_dict(record["grid"])


def read_raw_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))
