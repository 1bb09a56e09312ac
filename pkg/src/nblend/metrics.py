"""Distortion metrics, label-loss verification and the drop-vs-CVD correlation table."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np


def _pairs(original, smoothed) -> tuple[np.ndarray, np.ndarray]:
    original = np.atleast_2d(np.asarray(original, dtype=np.float64))
    smoothed = np.atleast_2d(np.asarray(smoothed, dtype=np.float64))
    if original.size == 0 or len(original) == 0:
        raise ValueError("need at least one (original, smoothed) pair")
    if original.shape != smoothed.shape:
        raise ValueError(f"shape mismatch {original.shape} vs {smoothed.shape}")
    return original, smoothed


def pcd(original, smoothed, predicted=None) -> float:
    """Mean |original[y] - smoothed[y]| at each pair's original predicted label."""
    original, smoothed = _pairs(original, smoothed)
    if predicted is None:
        predicted = np.argmax(original, axis=1)
    rows = np.arange(len(original))
    return float(np.mean(np.abs(original[rows, predicted] - smoothed[rows, predicted])))


def cvd(original, smoothed) -> float:
    """Mean Euclidean distance between original and smoothed vectors."""
    original, smoothed = _pairs(original, smoothed)
    return float(np.mean(np.linalg.norm(original - smoothed, axis=1)))


def label_loss_rate(original, smoothed, predicted=None) -> float:
    """Fraction of pairs whose smoothed argmax differs from the original label."""
    original, smoothed = _pairs(original, smoothed)
    if predicted is None:
        predicted = np.argmax(original, axis=1)
    return float(np.mean(np.argmax(smoothed, axis=1) != np.asarray(predicted)))


def accuracy_drop(no_def: float, with_def: float) -> float:
    for v in (no_def, with_def):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"accuracy {v} outside [0, 1]")
    return no_def - with_def


@dataclass(frozen=True)
class DistortionReport:
    pcd: float
    cvd: float
    label_loss_rate: float
    n_queries: int
    fallback_rate: float


def distortion_report(original, smoothed, fallback=None) -> DistortionReport:
    """PCD/CVD over non-fallback queries; label loss over every query."""
    original, smoothed = _pairs(original, smoothed)
    fallback = np.zeros(len(original), bool) if fallback is None else np.asarray(fallback, bool)
    keep = ~fallback
    if keep.any():
        p, c = pcd(original[keep], smoothed[keep]), cvd(original[keep], smoothed[keep])
    else:
        p = c = 0.0
    return DistortionReport(
        pcd=p,
        cvd=c,
        label_loss_rate=label_loss_rate(original, smoothed),
        n_queries=len(original),
        fallback_rate=float(fallback.mean()),
    )


@dataclass
class ExperimentCell:
    dataset: str
    model: str
    attack: str
    accuracy_no_defense: float
    accuracy_with_defense: float
    distortion: DistortionReport
    seeds: dict = field(default_factory=dict)

    def __post_init__(self):
        for v in (self.accuracy_no_defense, self.accuracy_with_defense):
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"accuracy {v} outside [0, 1]")

    @property
    def drop(self) -> float:
        return accuracy_drop(self.accuracy_no_defense, self.accuracy_with_defense)


def pearson(x, y) -> float | None:
    """Pearson r, or None when either side has zero variance."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(x) < 2:
        return None
    dx, dy = x - x.mean(), y - y.mean()
    den = math.sqrt(float(dx @ dx) * float(dy @ dy))
    if den == 0.0:
        return None
    return float(dx @ dy) / den


@dataclass
class CorrelationTable:
    rows: list[dict]
    pearson_drop_cvd: float | None

    def to_dict(self) -> dict:
        return asdict(self)


def correlation_table(cells: list[ExperimentCell]) -> CorrelationTable:
    if not cells:
        raise ValueError("need at least one experiment cell")
    rows = [
        {
            "model": c.model,
            "dataset": c.dataset,
            "accuracy_drop": c.drop,
            "cvd": c.distortion.cvd,
            "pcd": c.distortion.pcd,
        }
        for c in cells
    ]
    r = pearson([r["accuracy_drop"] for r in rows], [r["cvd"] for r in rows])
    return CorrelationTable(rows, r)
