"""Video-level scores and the ACC/AUC/EER metric computations.

Scores are probabilities of the fake class. AUC is the Mann-Whitney
statistic (ties count one half), computed by exact pairwise summation. EER
uses the predict-fake-iff-score>=threshold convention: sweep the distinct
scores, find where the false-negative rate crosses the false-positive rate,
and linearly interpolate between the bracketing thresholds.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

ACC_THRESHOLD = 0.5


class MetricsError(ValueError):
    pass


@dataclass(frozen=True)
class VideoScore:
    video_id: str
    score: float
    label: int | None = None
    clip_scores: tuple[float, ...] = ()

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise MetricsError(f"score must be in [0, 1], got {self.score}")


@dataclass(frozen=True)
class MetricsReport:
    acc: float | None
    auc: float | None
    eer: float | None
    threshold: float
    n_videos: int
    protocol: str = ""
    perturbation: str | None = None
    extras: dict = field(default_factory=dict)

    def to_text(self) -> str:
        lines = [
            f"protocol = {self.protocol}",
            f"perturbation = {self.perturbation if self.perturbation else 'none'}",
            f"n_videos = {self.n_videos}",
            f"threshold = {self.threshold}",
            f"acc = {_fmt(self.acc)}",
            f"auc = {_fmt(self.auc)}",
            f"eer = {_fmt(self.eer)}",
        ]
        for key in sorted(self.extras):
            lines.append(f"{key} = {self.extras[key]}")
        return "\n".join(lines) + "\n"

    def save(self, path: Path | str) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_text())


def _fmt(value: float | None) -> str:
    return "undefined" if value is None else f"{value:.6f}"


def auc_percent(labels: np.ndarray, scores: np.ndarray) -> float:
    """Probability (in %) that a random fake outranks a random real."""
    fake = scores[labels == 1]
    real = scores[labels == 0]
    if len(fake) == 0 or len(real) == 0:
        raise MetricsError("AUC needs both classes")
    wins = 0.0
    # chunked pairwise sum keeps memory bounded for large video sets
    step = max(1, int(4e6) // max(len(real), 1))
    for lo in range(0, len(fake), step):
        chunk = fake[lo:lo + step, None]
        wins += (chunk > real[None, :]).sum()
        wins += 0.5 * (chunk == real[None, :]).sum()
    return 100.0 * wins / (len(fake) * len(real))


def _rates(labels: np.ndarray, scores: np.ndarray, threshold: float) -> tuple[float, float]:
    """(FPR, FNR) under predict-fake-iff-score>=threshold."""
    real = scores[labels == 0]
    fake = scores[labels == 1]
    fpr = float((real >= threshold).mean())
    fnr = float((fake < threshold).mean())
    return fpr, fnr


def interpolate_crossing(fpr_lo: float, fnr_lo: float,
                         fpr_hi: float, fnr_hi: float) -> float:
    """Equal-error value between two sweep points where FNR-FPR changes sign."""
    d_lo = fnr_lo - fpr_lo
    d_hi = fnr_hi - fpr_hi
    if d_hi == d_lo:
        return fpr_hi
    alpha = -d_lo / (d_hi - d_lo)
    return fpr_lo + alpha * (fpr_hi - fpr_lo)


def eer_percent(labels: np.ndarray, scores: np.ndarray) -> float:
    fake = scores[labels == 1]
    real = scores[labels == 0]
    if len(fake) == 0 or len(real) == 0:
        raise MetricsError("EER needs both classes")
    thresholds = np.unique(scores)
    sweep = np.concatenate([thresholds, [thresholds[-1] + 1.0]])
    prev_fpr, prev_fnr = 1.0, 0.0  # below the lowest score everything is fake
    for t in sweep:
        fpr, fnr = _rates(labels, scores, t)
        if fnr - fpr >= 0.0:
            if fnr == fpr:
                return 100.0 * fpr
            return 100.0 * interpolate_crossing(prev_fpr, prev_fnr, fpr, fnr)
        prev_fpr, prev_fnr = fpr, fnr
    raise MetricsError("no FPR/FNR crossing found")  # unreachable: d(+inf) = +1


def acc_percent(labels: np.ndarray, scores: np.ndarray,
                threshold: float = ACC_THRESHOLD) -> float:
    predictions = (scores >= threshold).astype(int)
    return 100.0 * float((predictions == labels).mean())


def compute_metrics(scores: list[VideoScore], protocol: str = "",
                    perturbation: str | None = None) -> MetricsReport:
    """ACC at the fixed threshold plus AUC/EER when both classes appear."""
    if not scores:
        raise MetricsError("no video scores given")
    missing = [s.video_id for s in scores if s.label is None]
    if missing:
        raise MetricsError(f"unlabeled videos in metric input: {missing[:5]}")
    labels = np.asarray([s.label for s in scores])
    values = np.asarray([s.score for s in scores], dtype=np.float64)
    acc = acc_percent(labels, values)
    single_class = len(np.unique(labels)) < 2
    auc = None if single_class else auc_percent(labels, values)
    eer = None if single_class else eer_percent(labels, values)
    return MetricsReport(acc=acc, auc=auc, eer=eer, threshold=ACC_THRESHOLD,
                         n_videos=len(scores), protocol=protocol,
                         perturbation=perturbation)
