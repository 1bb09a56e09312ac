"""Dataset ingestion, norm-bounded normalization, splitting and synthetic blobs."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class DataError(ValueError):
    """Raised for malformed input data or invalid split requests."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


def norm_divisor(dim: int, p: float) -> float:
    """Global divisor that maps the unit hypercube into the unit Lp ball."""
    if math.isinf(p):
        return 1.0
    return float(dim) ** (1.0 / p)


def parse_norm_order(p) -> float:
    if isinstance(p, str):
        if p.lower() in ("inf", "infinity", "max"):
            return math.inf
        p = float(p)
    p = float(p)
    if p not in (1.0, 2.0) and not math.isinf(p):
        raise DataError(f"norm order must be 1, 2 or inf, got {p}")
    return p


@dataclass(frozen=True)
class ColumnEncoding:
    """How one raw CSV column maps onto feature columns."""

    name: str
    start: int
    width: int
    categories: tuple[str, ...] | None = None  # None for numeric columns


@dataclass(frozen=True)
class NormalizationSpec:
    mins: np.ndarray
    maxs: np.ndarray
    divisor: float
    p: float

    def apply(self, raw: np.ndarray) -> np.ndarray:
        """Scale raw feature rows; out-of-range values are clipped first."""
        raw = np.atleast_2d(np.asarray(raw, dtype=np.float64))
        clipped = np.clip(raw, self.mins, self.maxs)
        span = self.maxs - self.mins
        safe = np.where(span > 0, span, 1.0)
        scaled = np.where(span > 0, (clipped - self.mins) / safe, 0.0)
        return scaled / self.divisor

    def to_dict(self) -> dict:
        return {
            "mins": self.mins.tolist(),
            "maxs": self.maxs.tolist(),
            "divisor": self.divisor,
            "p": "inf" if math.isinf(self.p) else self.p,
        }


@dataclass(frozen=True)
class Dataset:
    """Immutable labeled feature matrix.

    ``X`` has shape (n, d) and ``y`` holds dense class indices in
    ``[0, num_classes)``.
    """

    X: np.ndarray
    y: np.ndarray
    num_classes: int
    label_names: tuple[str, ...] = ()
    feature_names: tuple[str, ...] = ()
    encoding: tuple[ColumnEncoding, ...] = ()
    normalization: NormalizationSpec | None = None
    name: str = "dataset"

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.int64)
        if X.ndim != 2:
            raise DataError(f"feature matrix must be 2-D, got shape {X.shape}")
        if y.shape != (X.shape[0],):
            raise DataError(f"{y.shape[0]} labels for {X.shape[0]} samples")
        if not np.all(np.isfinite(X)):
            raise DataError("features contain NaN or Inf")
        if y.size and (y.min() < 0 or y.max() >= self.num_classes):
            raise DataError(f"labels must lie in [0, {self.num_classes})")
        object.__setattr__(self, "X", _frozen(X))
        object.__setattr__(self, "y", _frozen(y))
        if not self.label_names:
            object.__setattr__(
                self, "label_names", tuple(str(c) for c in range(self.num_classes))
            )

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def subset(self, indices: Iterable[int]) -> "Dataset":
        idx = np.asarray(list(indices) if not isinstance(indices, np.ndarray) else indices,
                         dtype=np.int64)
        return replace(self, X=self.X[idx], y=self.y[idx])

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.y, minlength=self.num_classes)


def load_csv(
    path: str | Path,
    label_column: str,
    categorical_columns: Iterable[str] = (),
    name: str | None = None,
) -> Dataset:
    """Read an RFC-4180 CSV with a header row into a :class:`Dataset`.

    Categorical columns are one-hot encoded with categories in first-appearance
    order; every other non-label column must parse as a real number. Labels
    become dense indices in first-appearance order.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"{path}: file not found")
    categorical = set(categorical_columns)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    body = rows[1:]
    if not body:
        raise DataError(f"{path}: no data rows")
    if label_column not in header:
        raise DataError(f"{path}: unknown label column {label_column!r}")
    unknown = categorical - set(header)
    if unknown:
        raise DataError(f"{path}: unknown categorical columns {sorted(unknown)}")
    label_pos = header.index(label_column)
    for r, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise DataError(
                f"{path}:{r}: expected {len(header)} fields, found {len(row)}"
            )

    labels: dict[str, int] = {}
    y = np.empty(len(body), dtype=np.int64)
    for i, row in enumerate(body):
        y[i] = labels.setdefault(row[label_pos].strip(), len(labels))

    blocks: list[np.ndarray] = []
    encoding: list[ColumnEncoding] = []
    feature_names: list[str] = []
    start = 0
    for c, col in enumerate(header):
        if c == label_pos:
            continue
        if col in categorical:
            cats: dict[str, int] = {}
            codes = [cats.setdefault(row[c].strip(), len(cats)) for row in body]
            block = np.zeros((len(body), len(cats)))
            block[np.arange(len(body)), codes] = 1.0
            encoding.append(ColumnEncoding(col, start, len(cats), tuple(cats)))
            feature_names.extend(f"{col}={v}" for v in cats)
        else:
            block = np.empty((len(body), 1))
            for i, row in enumerate(body):
                cell = row[c].strip()
                try:
                    block[i, 0] = float(cell)
                except ValueError:
                    raise DataError(
                        f"{path}:{i + 2}: column {col!r}: cannot parse {cell!r} as a number"
                    ) from None
                if not math.isfinite(block[i, 0]):
                    raise DataError(f"{path}:{i + 2}: column {col!r}: non-finite value")
            encoding.append(ColumnEncoding(col, start, 1))
            feature_names.append(col)
        blocks.append(block)
        start += block.shape[1]

    X = np.hstack(blocks) if blocks else np.zeros((len(body), 0))
    return Dataset(
        X=X,
        y=y,
        num_classes=len(labels),
        label_names=tuple(labels),
        feature_names=tuple(feature_names),
        encoding=tuple(encoding),
        name=name or path.stem,
    )


def decode_categorical(X: np.ndarray, encoding: Sequence[ColumnEncoding]) -> list[dict]:
    """Invert one-hot blocks back into raw category strings (numeric columns pass through)."""
    out = []
    for row in np.atleast_2d(X):
        rec = {}
        for enc in encoding:
            block = row[enc.start:enc.start + enc.width]
            if enc.categories is None:
                rec[enc.name] = float(block[0])
            else:
                rec[enc.name] = enc.categories[int(np.argmax(block))]
        out.append(rec)
    return out


def normalize(ds: Dataset, p=2) -> tuple[Dataset, NormalizationSpec]:
    """Min-max scale every feature to [0, 1], then divide by ``d ** (1/p)``.

    Afterwards every in-range vector has ``||x||_p <= 1``. Constant features
    map to 0.
    """
    if len(ds) == 0:
        raise DataError("cannot normalize an empty dataset")
    p = parse_norm_order(p)
    spec = NormalizationSpec(
        mins=_frozen(ds.X.min(axis=0)),
        maxs=_frozen(ds.X.max(axis=0)),
        divisor=norm_divisor(ds.dim, p),
        p=p,
    )
    return replace(ds, X=spec.apply(ds.X), normalization=spec), spec


@dataclass(frozen=True)
class SplitPlan:
    target_train: np.ndarray
    target_test: np.ndarray
    shadow_pool: np.ndarray
    eval_members: np.ndarray
    eval_nonmembers: np.ndarray
    seed: int = 0

    _FIELDS = ("target_train", "target_test", "shadow_pool", "eval_members", "eval_nonmembers")

    def to_dict(self) -> dict:
        d = {k: getattr(self, k).tolist() for k in self._FIELDS}
        d["seed"] = self.seed
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "SplitPlan":
        return cls(**{k: _frozen(np.asarray(d[k], dtype=np.int64)) for k in cls._FIELDS},
                   seed=int(d["seed"]))


def split(
    ds: Dataset,
    fractions: tuple[float, float, float],
    eval_size: int,
    seed: int,
) -> SplitPlan:
    """Shuffle deterministically and cut target-train / target-test / shadow-pool.

    Evaluation members come from target-train and non-members from
    target-test, ``eval_size`` of each.
    """
    if len(fractions) != 3 or any(f < 0 for f in fractions):
        raise DataError(f"fractions must be three non-negative numbers, got {fractions}")
    if sum(fractions) > 1 + 1e-9:
        raise DataError(f"fractions sum to {sum(fractions)} > 1")
    n = len(ds)
    sizes = [int(math.floor(f * n + 1e-9)) for f in fractions]
    for nm, s in zip(("target_train", "target_test", "shadow_pool"), sizes):
        if s == 0:
            raise DataError(f"partition {nm} is empty ({n} samples)")
    if eval_size < 1:
        raise DataError("eval_size must be >= 1")
    if eval_size > min(sizes[0], sizes[1]):
        raise DataError(
            f"eval_size {eval_size} exceeds min(|target_train|={sizes[0]}, "
            f"|target_test|={sizes[1]})"
        )
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    a, b = sizes[0], sizes[0] + sizes[1]
    train, test, shadow = perm[:a], perm[a:b], perm[b:b + sizes[2]]
    members = rng.choice(train, size=eval_size, replace=False)
    nonmembers = rng.choice(test, size=eval_size, replace=False)
    return SplitPlan(
        target_train=_frozen(np.sort(train)),
        target_test=_frozen(np.sort(test)),
        shadow_pool=_frozen(np.sort(shadow)),
        eval_members=_frozen(np.sort(members)),
        eval_nonmembers=_frozen(np.sort(nonmembers)),
        seed=seed,
    )


def synth_blobs(
    num_classes: int,
    dim: int,
    per_class: int,
    spread: float,
    seed: int,
    p=2,
    name: str = "blobs",
) -> Dataset:
    """Isotropic Gaussian clusters around uniform random centers in [0, 1]^d.

    The result is already normalized with :func:`normalize` so it sits in the
    unit Lp ball.
    """
    if num_classes < 2 or dim < 1 or per_class < 1 or not spread > 0:
        raise DataError("synth_blobs needs num_classes >= 2, dim >= 1, per_class >= 1, spread > 0")
    rng = np.random.default_rng(seed)
    centers = rng.uniform(0.0, 1.0, size=(num_classes, dim))
    noise = rng.standard_normal((num_classes, per_class, dim)) * spread
    X = (centers[:, None, :] + noise).reshape(-1, dim)
    y = np.repeat(np.arange(num_classes), per_class)
    raw = Dataset(
        X=X,
        y=y,
        num_classes=num_classes,
        feature_names=tuple(f"x{j}" for j in range(dim)),
        name=name,
    )
    out, _ = normalize(raw, p)
    return out


def lp_norms(X: np.ndarray, p: float) -> np.ndarray:
    return np.linalg.norm(np.atleast_2d(X), ord=p, axis=1)
