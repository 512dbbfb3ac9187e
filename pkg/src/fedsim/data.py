"""Dataset ingestion, preprocessing, splitting and client partitioning."""

from __future__ import annotations

import glob as _glob
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    EmptyDatasetError,
    FormatError,
    ParseError,
    StratificationError,
    TooManyClientsError,
)

STD_FLOOR = 1e-8

# MHEALTH label for rows recorded between activities
MHEALTH_NULL_LABEL = 0


@dataclass(frozen=True)
class Dataset:
    x: np.ndarray
    y: np.ndarray
    class_count: int
    feature_names: tuple[str, ...] | None = None

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.int64)
        if x.ndim != 2 or y.shape != (x.shape[0],):
            raise FormatError(f"features {x.shape} and labels {y.shape} do not line up")
        if x.shape[0] < 1:
            raise EmptyDatasetError("dataset has no rows")
        if not np.all(np.isfinite(x)):
            raise FormatError("features contain NaN or Inf")
        if y.min() < 0 or y.max() >= self.class_count:
            raise FormatError(f"labels outside [0, {self.class_count})")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    def __len__(self) -> int:
        return self.x.shape[0]

    @property
    def n_features(self) -> int:
        return self.x.shape[1]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.x[idx], self.y[idx], self.class_count, self.feature_names)


@dataclass(frozen=True)
class ClientDataset:
    client_id: int
    data: Dataset

    @property
    def x(self) -> np.ndarray:
        return self.data.x

    @property
    def y(self) -> np.ndarray:
        return self.data.y

    def __len__(self) -> int:
        return len(self.data)


@dataclass(frozen=True)
class StandardizationParams:
    mean: np.ndarray
    std: np.ndarray


def _read_log(path) -> np.ndarray:
    try:
        rows = np.loadtxt(path, dtype=np.float64, ndmin=2)
    except ValueError:
        rows = None
    if rows is not None:
        if rows.size and not np.all(np.isfinite(rows)):
            bad = int(np.argwhere(~np.isfinite(rows))[0][0])
            raise ParseError(path, bad + 1, "non-finite value")
        return rows
    # slow path, only to produce a precise error location
    width = None
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            fields = line.split()
            if not fields:
                continue
            try:
                values = [float(f) for f in fields]
            except ValueError as exc:
                raise ParseError(path, line_no, str(exc)) from None
            if not all(np.isfinite(values)):
                raise ParseError(path, line_no, "non-finite value")
            if width is None:
                width = len(values)
            elif len(values) != width:
                raise FormatError(
                    f"{path}:{line_no}: expected {width} columns, found {len(values)}"
                )
    raise ParseError(path, 0, "unreadable file")


def load_mhealth(paths: Iterable, keep_null: bool = False) -> Dataset:
    """Read MHEALTH subject logs into one dataset.

    Each file holds whitespace-separated numeric columns with the activity
    label last. Rows labelled 0 (no activity) are dropped unless
    ``keep_null`` is set, in which case they become the last class. The
    remaining labels are remapped to ``0..C-1`` in ascending order.
    """
    paths = [Path(p) for p in paths]
    if not paths:
        raise FileNotFoundError("no MHEALTH files given")
    blocks = []
    width = None
    for path in paths:
        rows = _read_log(path)
        if rows.shape[0] == 0:
            continue
        if width is None:
            width = rows.shape[1]
        elif rows.shape[1] != width:
            raise FormatError(f"{path}: {rows.shape[1]} columns, earlier files had {width}")
        blocks.append(rows)
    if not blocks:
        raise EmptyDatasetError("MHEALTH files contain no rows")
    if width < 2:
        raise FormatError("need at least one feature column plus the label column")
    table = np.concatenate(blocks)
    raw = table[:, -1]
    if np.any(raw != np.round(raw)):
        raise FormatError("label column holds non-integer values")
    raw = raw.astype(np.int64)
    x = table[:, :-1]

    if not keep_null:
        keep = raw != MHEALTH_NULL_LABEL
        x, raw = x[keep], raw[keep]
        if raw.size == 0:
            raise EmptyDatasetError("every row carries the null label 0")
    activities = np.unique(raw[raw != MHEALTH_NULL_LABEL])
    order = list(activities)
    if keep_null and np.any(raw == MHEALTH_NULL_LABEL):
        order.append(MHEALTH_NULL_LABEL)
    lookup = {int(label): i for i, label in enumerate(order)}
    return Dataset(x, _remap(raw, lookup), len(order))


def _remap(raw: np.ndarray, lookup: dict) -> np.ndarray:
    keys = np.array(sorted(lookup))
    values = np.array([lookup[k] for k in keys])
    return values[np.searchsorted(keys, raw)]


def load_mhealth_glob(pattern: str, keep_null: bool = False) -> Dataset:
    paths = sorted(_glob.glob(pattern))
    if not paths:
        raise FileNotFoundError(f"no files match {pattern!r}")
    return load_mhealth(paths, keep_null=keep_null)


def save_mhealth(data: Dataset, path) -> None:
    """Write ``data`` in MHEALTH log layout (labels shifted to 1..C)."""
    with open(path, "w", encoding="utf-8") as fh:
        for row, label in zip(data.x, data.y):
            fh.write("\t".join(repr(float(v)) for v in row))
            fh.write(f"\t{int(label) + 1}\n")


def standardize_fit(train: Dataset) -> StandardizationParams:
    mean = train.x.mean(axis=0)
    std = np.maximum(train.x.std(axis=0), STD_FLOOR)
    return StandardizationParams(mean, std)


def standardize_apply(params: StandardizationParams, data: Dataset) -> Dataset:
    x = (data.x - params.mean) / params.std
    return Dataset(x, data.y, data.class_count, data.feature_names)


def split_train_test(d: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Stratified split; each class contributes ``round(n_c * test_fraction)`` test rows.

    Both parts keep the rows in their original relative order.
    """
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must be strictly between 0 and 1")
    rng = np.random.default_rng(seed)
    test_idx = []
    for c in range(d.class_count):
        rows = np.flatnonzero(d.y == c)
        if rows.size == 0:
            continue
        if rows.size < 2:
            raise StratificationError(f"class {c} has {rows.size} row(s); need at least 2")
        n_test = int(np.clip(np.floor(rows.size * test_fraction + 0.5), 1, rows.size - 1))
        test_idx.append(rng.permutation(rows)[:n_test])
    test_mask = np.zeros(len(d), dtype=bool)
    test_mask[np.concatenate(test_idx)] = True
    return d.subset(~test_mask), d.subset(test_mask)


def partition_clients(train: Dataset, t: int, seed: int) -> list[ClientDataset]:
    """Deal the rows at random into ``t`` disjoint IID shards of near-equal size.

    Shard sizes differ by at most one. Within a shard the rows keep their
    original order, so ``t == 1`` reproduces ``train`` exactly.
    """
    if t < 1:
        raise ValueError("need at least one client")
    if t > len(train):
        raise TooManyClientsError(f"{t} clients but only {len(train)} rows")
    order = np.random.default_rng(seed).permutation(len(train))
    shards = np.array_split(order, t)
    return [ClientDataset(i, train.subset(np.sort(shard))) for i, shard in enumerate(shards)]


def make_synthetic(
    m: int, n: int, classes: int, separation: float, seed: int
) -> Dataset:
    """Balanced Gaussian blobs with unit covariance.

    With ``n >= classes`` the centres form a randomly rotated regular simplex,
    every pair exactly ``separation`` apart. Otherwise centres are drawn at
    random and rescaled so the closest pair is ``separation`` apart.
    """
    if m < 1 or n < 1 or classes < 2 or separation <= 0:
        raise ValueError("m, n, separation must be positive and classes >= 2")
    rng = np.random.default_rng(seed)
    if n >= classes:
        basis, _ = np.linalg.qr(rng.standard_normal((n, classes)))
        centers = basis.T * (separation / np.sqrt(2.0))
    else:
        centers = rng.standard_normal((classes, n))
        diffs = centers[:, None, :] - centers[None, :, :]
        dist = np.sqrt((diffs ** 2).sum(axis=-1))
        centers *= separation / dist[np.triu_indices(classes, 1)].min()

    counts = np.full(classes, m // classes)
    counts[: m % classes] += 1
    y = np.repeat(np.arange(classes), counts)
    y = y[rng.permutation(m)]
    x = centers[y] + rng.standard_normal((m, n))
    return Dataset(x, y, classes)


def class_centroids(d: Dataset) -> np.ndarray:
    return np.stack([d.x[d.y == c].mean(axis=0) for c in range(d.class_count)])


def concat(parts: Sequence[Dataset]) -> Dataset:
    return Dataset(
        np.concatenate([p.x for p in parts]),
        np.concatenate([p.y for p in parts]),
        parts[0].class_count,
        parts[0].feature_names,
    )
