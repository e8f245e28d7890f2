"""Localization error metrics and the uniform random-guess baseline."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np


@dataclass
class Metrics:
    rms_l2: float
    rms_x: float
    rms_y: float
    aou: float
    n_frames: int
    random_rms_l2: float | None = None
    random_rms_x: float | None = None
    random_rms_y: float | None = None
    random_aou: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def align(est_t, truth_t) -> np.ndarray:
    """Index of the nearest truth timestamp for every estimate timestamp."""
    truth_t = np.asarray(truth_t, dtype=float)
    est_t = np.asarray(est_t, dtype=float)
    j = np.clip(np.searchsorted(truth_t, est_t), 1, len(truth_t) - 1)
    left = truth_t[j - 1]
    right = truth_t[j]
    return np.where(np.abs(est_t - left) <= np.abs(right - est_t), j - 1, j)


def error_metrics(est_xy, true_xy, room_area: float) -> Metrics:
    err = np.asarray(est_xy, dtype=float) - np.asarray(true_xy, dtype=float)
    mse_x = float(np.mean(err[:, 0] ** 2))
    mse_y = float(np.mean(err[:, 1] ** 2))
    return Metrics(
        rms_l2=float(np.sqrt(mse_x + mse_y)),
        rms_x=float(np.sqrt(mse_x)),
        rms_y=float(np.sqrt(mse_y)),
        aou=(mse_x + mse_y) / room_area,
        n_frames=len(err),
    )


def random_baseline(true_xy, room_bounds, rng) -> Metrics:
    """Errors of guessing a uniform random point in the room at every frame."""
    xmin, ymin, xmax, ymax = room_bounds
    true_xy = np.asarray(true_xy, dtype=float)
    guess = np.column_stack([
        rng.uniform(xmin, xmax, len(true_xy)),
        rng.uniform(ymin, ymax, len(true_xy)),
    ])
    return error_metrics(guess, true_xy, (xmax - xmin) * (ymax - ymin))


def expected_random_rms(true_xy, room_bounds) -> tuple[float, float]:
    """Closed-form RMS x and y error of uniform guessing against a fixed path.

    For ``U ~ Uniform(a, b)``: ``E[(U - t)^2] = (b - a)^2 / 12 + ((a + b) / 2 - t)^2``.
    """
    xmin, ymin, xmax, ymax = room_bounds
    t = np.asarray(true_xy, dtype=float)
    ex = (xmax - xmin) ** 2 / 12 + ((xmin + xmax) / 2 - t[:, 0]) ** 2
    ey = (ymax - ymin) ** 2 / 12 + ((ymin + ymax) / 2 - t[:, 1]) ** 2
    return float(np.sqrt(ex.mean())), float(np.sqrt(ey.mean()))


def evaluate(est_t, est_xy, truth_t, truth_xy, room_bounds, seed: int = 0) -> Metrics:
    """RMS errors of estimates against time-aligned ground truth.

    Frames whose nearest truth sample has no target are dropped. The random
    baseline uses the same frames, without gating.
    """
    est_xy = np.asarray(est_xy, dtype=float).reshape(-1, 2)
    if len(est_xy) == 0:
        raise ValueError("no estimates to evaluate")
    truth_xy = np.asarray(truth_xy, dtype=float)
    idx = align(est_t, truth_t)
    true = truth_xy[idx]
    keep = ~np.isnan(true[:, 0]) & ~np.isnan(est_xy[:, 0])
    if not keep.any():
        raise ValueError("no estimate overlaps a frame with the target present")
    xmin, ymin, xmax, ymax = room_bounds
    area = (xmax - xmin) * (ymax - ymin)
    m = error_metrics(est_xy[keep], true[keep], area)
    rb = random_baseline(true[keep], room_bounds, np.random.default_rng(seed))
    m.random_rms_l2, m.random_rms_x, m.random_rms_y, m.random_aou = rb.rms_l2, rb.rms_x, rb.rms_y, rb.aou
    return m


def aou_reduction(baseline: Metrics, improved: Metrics) -> float:
    """Percent reduction of the area of uncertainty."""
    return 100.0 * (baseline.aou - improved.aou) / baseline.aou
