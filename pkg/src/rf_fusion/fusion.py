"""Combining RTI and UWB images into one position estimate.

Three methods: voxel-wise image product, joint linear inversion with a
stacked RSS/UWB weight matrix, and taking y from RTI and x from the UWB
image row at that y.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geometry import VoxelGrid
from .rti import build_projection

EMPTY_AREA_THRESHOLD = 0.05


@dataclass
class CombinedImage:
    values: np.ndarray
    rti_t: float | None
    uwb_t: float | None
    method: str


@dataclass
class PositionEstimate:
    t: float | None
    voxel: int | None
    x: float | None
    y: float | None
    valid: bool
    method: str
    flag: str = ""  # "", "empty-area", "zero-image", "uwb-row-empty"


def _estimate_at(grid: VoxelGrid, n: int, t, method: str, flag: str = "") -> PositionEstimate:
    x, y = grid.center(int(n))
    return PositionEstimate(t, int(n), x, y, True, method, flag)


def _invalid(t, method: str, flag: str) -> PositionEstimate:
    return PositionEstimate(t, None, None, None, False, method, flag)


def shift_normalize(img) -> np.ndarray | None:
    """Shift so the minimum is 0, then scale to unit sum. ``None`` if the
    shifted image sums to 0 (constant image)."""
    v = np.asarray(img, dtype=float)
    v = v - v.min()
    s = v.sum()
    if not s > 0:
        return None
    return v / s


def fuse_product(rti_image, uwb_image, grid: VoxelGrid, threshold: float = EMPTY_AREA_THRESHOLD,
                 t=None, rti_t=None):
    """Voxel-wise product of the two images and its argmax.

    The empty-area test uses the raw product; the estimate comes from the
    product of the shift/sum-normalized images.
    """
    lr = np.asarray(rti_image, dtype=float)
    lu = np.asarray(uwb_image, dtype=float)
    if lr.shape != lu.shape or lr.shape != (grid.n_voxels,):
        raise ValueError("RTI and UWB images must be on the same grid")
    raw = lr * lu
    if raw.max() <= threshold:
        return CombinedImage(raw, rti_t, t, "product"), _invalid(t, "product", "empty-area")
    nr, nu = shift_normalize(lr), shift_normalize(lu)
    if nr is None or nu is None:
        return CombinedImage(raw, rti_t, t, "product"), _invalid(t, "product", "zero-image")
    combined = nr * nu
    if not combined.max() > 0:
        return CombinedImage(combined, rti_t, t, "product"), _invalid(t, "product", "zero-image")
    return CombinedImage(combined, rti_t, t, "product"), _estimate_at(grid, int(np.argmax(combined)), t, "product")


def uwb_weight_matrix(delay_bins, n_bins: int, normalize: bool = False) -> np.ndarray:
    """Ideal ``alpha`` pattern per voxel, shape (M, N): a unit step that turns
    on at the voxel's delay bin. A voxel whose bin is beyond ``n_bins`` gets an
    all-zero column. ``normalize`` sum-normalizes the columns instead."""
    k = np.asarray(delay_bins, dtype=int)
    bins = np.arange(1, n_bins + 1)[:, None]
    WU = (bins >= k[None, :]).astype(float)
    if normalize:
        s = WU.sum(axis=0)
        WU[:, s > 0] /= s[s > 0]
    return WU


class JointInversion:
    """Regularized inversion of the stacked RSS/UWB system.

    ``uwb_weight`` multiplies both the UWB rows of the weight matrix and the
    UWB measurements, setting the relative trust in UWB rows. With
    ``normalize`` the columns of ``W_U`` and each ``y_U`` are sum-normalized
    before stacking; this shrinks the UWB rows well below the RSS noise level,
    so it is off by default.
    """

    def __init__(self, W_R, W_U, grid: VoxelGrid, sigma_n: float = 1.0, sigma_x2: float = 0.05,
                 delta_c: float = 4.0, uwb_weight: float = 1.0, normalize: bool = False):
        self.W_R = np.asarray(W_R, dtype=float)
        self.W_U = np.array(W_U, dtype=float)
        if self.W_R.shape[1] != self.W_U.shape[1]:
            raise ValueError("W_R and W_U must have the same number of voxels")
        self.grid = grid
        self.uwb_weight = uwb_weight
        self.normalize = normalize
        if normalize:
            s = self.W_U.sum(axis=0)
            self.W_U[:, s > 0] /= s[s > 0]
        W_C = np.vstack([self.W_R, uwb_weight * self.W_U])
        self.Pi = build_projection(W_C, sigma_n, sigma_x2, delta_c, grid)

    def image(self, y_R, y_U) -> np.ndarray:
        y_R = np.asarray(y_R, dtype=float)
        y_U = np.asarray(y_U, dtype=float)
        if y_U.shape != (self.W_U.shape[0],):
            raise ValueError(f"alpha has length {y_U.shape}, W_U has {self.W_U.shape[0]} rows")
        if y_R.shape != (self.W_R.shape[0],):
            raise ValueError(f"y_R has length {y_R.shape}, W_R has {self.W_R.shape[0]} rows")
        if self.normalize:
            total = y_U.sum()
            y_U = y_U / total if total > 0 else np.zeros_like(y_U)
        return self.Pi @ np.concatenate([y_R, self.uwb_weight * y_U])

    def fuse(self, y_R, y_U, t=None, rti_t=None):
        img = self.image(y_R, y_U)
        combined = CombinedImage(img, rti_t, t, "joint")
        if not np.any(img):
            return combined, _invalid(t, "joint", "zero-image")
        return combined, _estimate_at(self.grid, int(np.argmax(img)), t, "joint")


def fuse_joint_inversion(y_R, y_U, W_R, W_U, grid: VoxelGrid, sigma_n: float = 1.0,
                         sigma_x2: float = 0.05, delta_c: float = 4.0, uwb_weight: float = 1.0,
                         normalize: bool = False, t=None, rti_t=None):
    """One-shot joint inversion; build a :class:`JointInversion` to reuse the
    projection across frames."""
    return JointInversion(W_R, W_U, grid, sigma_n, sigma_x2, delta_c, uwb_weight, normalize).fuse(y_R, y_U, t, rti_t)


def fuse_x_from_y(rti_image, uwb_image, grid: VoxelGrid, threshold: float = EMPTY_AREA_THRESHOLD,
                  t=None) -> PositionEstimate:
    """y from the RTI argmax, x from the UWB image row at that y.

    Falls back to the RTI estimate (flag ``uwb-row-empty``) when that row of
    the UWB image is all zeros.
    """
    lr = np.asarray(rti_image, dtype=float)
    lu = np.asarray(uwb_image, dtype=float)
    if lr.shape != lu.shape or lr.shape != (grid.n_voxels,):
        raise ValueError("RTI and UWB images must be on the same grid")
    if lr.max() <= threshold:
        return _invalid(t, "xfromy", "empty-area")
    n_r = int(np.argmax(lr))
    _, iy = grid.unravel(n_r)
    row = grid.row(int(iy))
    vals = lu[row]
    if not np.any(vals > 0):
        return _estimate_at(grid, n_r, t, "xfromy", "uwb-row-empty")
    return _estimate_at(grid, int(row[np.argmax(vals)]), t, "xfromy")


def rti_only(rti_image, grid: VoxelGrid, threshold: float = EMPTY_AREA_THRESHOLD,
             t=None, method: str = "rti") -> PositionEstimate:
    lr = np.asarray(rti_image, dtype=float)
    if lr.max() <= threshold:
        return _invalid(t, method, "empty-area")
    return _estimate_at(grid, int(np.argmax(lr)), t, method)


def synchronize(rti_times: Sequence[float], uwb_times: Sequence[float]) -> list[tuple[int, int]]:
    """Pair each UWB frame with the latest RTI frame at or before it.

    Returns ``(uwb_index, rti_index)`` pairs; UWB frames that precede every
    RTI frame are dropped. Both sequences must be time-ordered.
    """
    pairs = []
    rti_times = np.asarray(rti_times, dtype=float)
    for i, t in enumerate(uwb_times):
        j = int(np.searchsorted(rti_times, t, side="right")) - 1
        if j >= 0:
            pairs.append((i, j))
    return pairs
