"""Quadratic weighted kappa, score discretization, and checkpoint evaluation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from . import dataio
from .errors import ConfigurationError, NumericError
from .network import Checkpoint

THRESHOLDS = (0.5, 1.5, 2.5, 3.5)
N_LEVELS = 5


def discretize(score: float) -> int:
    """Integer level for a regression score: the count of thresholds at or
    below it (so a score exactly at a threshold rounds upward), clamped to
    the 0..4 range."""
    if not math.isfinite(score):
        raise NumericError(f"cannot discretize non-finite score {score!r}")
    level = sum(1 for t in THRESHOLDS if score >= t)
    return min(max(level, 0), N_LEVELS - 1)


@dataclass
class KappaReport:
    confusion: np.ndarray              # [5,5] int, rows = ground truth
    kappa: float
    n: int
    failures: list[tuple[str, str]] = field(default_factory=list)

    def to_text(self) -> str:
        lines = [f"n: {self.n}", f"kappa: {self.kappa:.6f}", "confusion:"]
        for row in self.confusion:
            lines.append(" ".join(f"{int(v):6d}" for v in row))
        for image_id, why in self.failures:
            lines.append(f"failed: {image_id}: {why}")
        return "\n".join(lines) + "\n"


def confusion_matrix(truth: Sequence[int], pred: Sequence[int]) -> np.ndarray:
    m = np.zeros((N_LEVELS, N_LEVELS), dtype=np.int64)
    for t, p in zip(truth, pred):
        m[t, p] += 1
    return m


def kappa_from_confusion(confusion: np.ndarray) -> float:
    """kappa = 1 - sum(w*O) / sum(w*E) with squared-distance weights
    w_ij = (i-j)^2/(N-1)^2 and E the outer product of the marginal
    histograms scaled to the sample count."""
    observed = np.asarray(confusion, np.float64)
    n = observed.sum()
    if n == 0:
        raise ConfigurationError("empty confusion matrix")
    idx = np.arange(N_LEVELS, dtype=np.float64)
    weights = (idx[:, None] - idx[None, :]) ** 2 / (N_LEVELS - 1) ** 2
    expected = np.outer(observed.sum(axis=1), observed.sum(axis=0)) / n
    denom = (weights * expected).sum()
    if denom == 0.0:
        # both raters constant; only perfect agreement is well defined
        if np.array_equal(observed, expected):
            return 1.0
        raise NumericError("kappa undefined: no expected disagreement")
    return 1.0 - (weights * observed).sum() / denom


def quadratic_weighted_kappa(truth: Sequence[int], pred: Sequence[int]) -> float:
    truth = list(truth)
    pred = list(pred)
    if len(truth) != len(pred) or not truth:
        raise ConfigurationError("rating vectors must be equal-length and non-empty")
    for v in (*truth, *pred):
        if v not in range(N_LEVELS):
            raise ConfigurationError(f"rating {v!r} outside 0..4")
    return kappa_from_confusion(confusion_matrix(truth, pred))


def evaluate(
    checkpoint: Checkpoint,
    manifest: Sequence[dataio.ManifestRecord],
    data_root: Union[str, Path],
    batch_size: int = 32,
) -> KappaReport:
    """Forward every manifest image (no augmentation), discretize, score.

    Records whose image is missing or unreadable are collected as
    failures and evaluation continues; they are excluded from the matrix.
    """
    if not manifest:
        raise ConfigurationError("empty manifest")
    net = checkpoint.to_network()
    stats = dataio.ChannelStats(checkpoint.meta.mean, checkpoint.meta.std)
    resolution = checkpoint.meta.resolution or net.spec.input_size
    if resolution != net.spec.input_size:
        raise ConfigurationError(
            f"checkpoint resolution {resolution} != network input {net.spec.input_size}"
        )

    truth: list[int] = []
    pred: list[int] = []
    failures: list[tuple[str, str]] = []
    batch: list[np.ndarray] = []
    batch_levels: list[int] = []

    def flush() -> None:
        if not batch:
            return
        out = net.forward(np.stack(batch)).data[:, 0]
        truth.extend(batch_levels)
        pred.extend(discretize(float(v)) for v in out)
        batch.clear()
        batch_levels.clear()

    for record in manifest:
        path = dataio.find_image(data_root, record.image_id)
        if path is None:
            failures.append((record.image_id, "image file not found"))
            continue
        try:
            batch.append(dataio.preprocess(path, resolution, stats))
        except (ConfigurationError, OSError) as e:
            failures.append((record.image_id, str(e)))
            continue
        batch_levels.append(record.level)
        if len(batch) == batch_size:
            flush()
    flush()

    if not truth:
        raise ConfigurationError("no images could be evaluated")
    confusion = confusion_matrix(truth, pred)
    return KappaReport(confusion, kappa_from_confusion(confusion), len(truth), failures)
