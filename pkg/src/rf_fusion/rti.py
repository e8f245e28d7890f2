"""Radio tomographic imaging from multi-channel RSS.

Two link-measurement flavours feed the same regularized least-squares
inversion:

* attenuation-based (AB): mean RSS change, relative to an empty-room
  calibration, over the ``m`` most anti-fade channels of each link;
* variance-based (VB): mean short-term RSS variance over the same kind of
  channel selection, using a long-window running mean as both the variance
  centre and the fade-level estimate. Needs no calibration.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import linalg
from scipy.spatial.distance import cdist

from .geometry import LinkSet, VoxelGrid

log = logging.getLogger(__name__)

Link = tuple[int, int]


@dataclass(frozen=True)
class RssSample:
    t: float
    link: Link
    channel: int
    rss: float


@dataclass(frozen=True)
class RtiParams:
    voxel_width: float = 0.15
    ellipse_excess: float = 0.02
    sigma_x2: float = 0.05
    sigma_n: float = 1.0
    delta_c: float = 4.0
    n_channels: int = 3
    n_short: int = 5
    n_long: int = 50

    def __post_init__(self):
        for name in ("voxel_width", "ellipse_excess", "sigma_x2", "sigma_n", "delta_c"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.n_channels < 1:
            raise ValueError("n_channels must be >= 1")
        if not 2 <= self.n_short < self.n_long:
            raise ValueError("need 2 <= n_short < n_long")


# -- weight model and inversion ---------------------------------------------

def compute_weight_matrix(links: LinkSet, node_positions, grid: VoxelGrid,
                          ellipse_excess: float) -> np.ndarray:
    """Ellipse spatial-impact model, shape (L, N).

    A voxel gets weight ``1/sqrt(d)`` on a link of length ``d`` when its center
    lies strictly inside the ellipse with foci at the link ends and excess
    path ``ellipse_excess``; zero otherwise.
    """
    pos = np.asarray(node_positions, dtype=float)
    centers = grid.centers()
    W = np.zeros((len(links), grid.n_voxels))
    for l, ((a, b), d) in enumerate(zip(links.links, links.lengths)):
        if d <= 0:
            raise ValueError(f"zero-length link {(a, b)}")
        path = np.linalg.norm(centers - pos[a], axis=1) + np.linalg.norm(centers - pos[b], axis=1)
        W[l, path < d + ellipse_excess] = 1.0 / np.sqrt(d)
    return W


def prior_covariance(centers, sigma_x2: float, delta_c: float) -> np.ndarray:
    return sigma_x2 * np.exp(-cdist(centers, centers) / delta_c)


def build_projection(W, sigma_n: float, sigma_x2: float, delta_c: float,
                     grid_or_centers) -> np.ndarray:
    """Regularized least-squares operator ``(W'W + Cx^-1 sigma_n^2)^-1 W'``.

    ``grid_or_centers`` is a :class:`VoxelGrid` or an (N, 2) array of voxel
    centers used for the exponential prior covariance.
    """
    W = np.asarray(W, dtype=float)
    centers = grid_or_centers.centers() if isinstance(grid_or_centers, VoxelGrid) else np.asarray(grid_or_centers)
    if len(centers) != W.shape[1]:
        raise ValueError(f"W has {W.shape[1]} columns but there are {len(centers)} voxels")
    Cx = prior_covariance(centers, sigma_x2, delta_c)
    n = len(Cx)
    try:
        Cx_inv = linalg.cho_solve(linalg.cho_factor(Cx, lower=True), np.eye(n))
        A = W.T @ W + Cx_inv * sigma_n**2
        Pi = linalg.cho_solve(linalg.cho_factor(A, lower=True), W.T)
    except linalg.LinAlgError as exc:
        raise ValueError(f"prior covariance is singular: {exc}") from exc
    return Pi


def estimate_image(Pi, y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or y.shape[0] != Pi.shape[1]:
        raise ValueError(f"expected {Pi.shape[1]} link measurements, got shape {y.shape}")
    return Pi @ y


@dataclass(eq=False)
class RtiModel:
    """Weight matrix plus its precomputed projection for a fixed link set."""

    links: LinkSet
    grid: VoxelGrid
    params: RtiParams
    W: np.ndarray
    Pi: np.ndarray

    @classmethod
    def build(cls, links: LinkSet, node_positions, grid: VoxelGrid,
              params: RtiParams | None = None) -> "RtiModel":
        params = params or RtiParams()
        W = compute_weight_matrix(links, node_positions, grid, params.ellipse_excess)
        Pi = build_projection(W, params.sigma_n, params.sigma_x2, params.delta_c, grid)
        return cls(links, grid, params, W, Pi)

    def image(self, y) -> np.ndarray:
        return estimate_image(self.Pi, y)


# -- calibration and fade levels ----------------------------------------------

@dataclass
class CalibrationTable:
    means: dict[tuple[Link, int], float]
    counts: dict[tuple[Link, int], int]

    def mean(self, link: Link, channel: int) -> float:
        return self.means[(link, channel)]

    def channel_means(self, link: Link) -> dict[int, float]:
        return {c: m for (l, c), m in self.means.items() if l == link}


class CalibrationError(ValueError):
    pass


def calibrate(samples: Iterable[RssSample], links: Sequence[Link] | None = None,
              channels: Sequence[int] | None = None) -> CalibrationTable:
    """Per (link, channel) mean RSS over an empty-room period.

    If ``links``/``channels`` are given, every combination must be covered;
    the error lists the missing ones.
    """
    sums: dict[tuple[Link, int], float] = {}
    counts: dict[tuple[Link, int], int] = {}
    for s in samples:
        key = (tuple(s.link), s.channel)
        sums[key] = sums.get(key, 0.0) + s.rss
        counts[key] = counts.get(key, 0) + 1
    if links is not None and channels is not None:
        missing = [(l, c) for l in links for c in channels if (tuple(l), c) not in counts]
        if missing:
            shown = ", ".join(f"{l}/ch{c}" for l, c in missing[:10])
            more = f" (+{len(missing) - 10} more)" if len(missing) > 10 else ""
            raise CalibrationError(f"calibration has no samples for {shown}{more}")
    if not counts:
        raise CalibrationError("calibration has no samples")
    return CalibrationTable({k: sums[k] / counts[k] for k in sums}, counts)


def fade_levels(table: CalibrationTable, link: Link) -> dict[int, float]:
    """Fade level of each channel relative to the link's weakest channel."""
    means = table.channel_means(tuple(link))
    floor = min(means.values())
    return {c: m - floor for c, m in sorted(means.items())}


def rank_channels(levels: Mapping[int, float]) -> list[int]:
    """Channels from most anti-fade (highest level) to deepest fade.
    Ties go to the lower channel index."""
    return sorted(levels, key=lambda c: (-levels[c], c))


def select_channels(levels: Mapping[int, float], m: int) -> list[int]:
    if m > len(levels):
        raise ValueError(f"cannot select {m} channels out of {len(levels)}")
    return rank_channels(levels)[:m]


def ab_link_measurement(table: CalibrationTable, link: Link, selected: Sequence[int],
                        current: Mapping[int, float]) -> float:
    """Mean RSS change ``r - r_bar`` over the selected channels (signed;
    attenuation gives negative values)."""
    if not selected:
        raise ValueError("no channels selected")
    link = tuple(link)
    return float(np.mean([current[c] - table.mean(link, c) for c in selected]))


def short_term_variance(window: Sequence[float], n_short: int, n_long: int) -> float | None:
    """Unbiased variance of the last ``n_short`` samples about the mean of the
    last ``n_long`` (fewer if the window is still filling). ``None`` until
    ``n_short`` samples exist."""
    if len(window) < n_short:
        return None
    w = np.asarray(window, dtype=float)
    mu = w[-n_long:].mean()
    return float(np.sum((w[-n_short:] - mu) ** 2) / (n_short - 1))


def vb_link_measurement(windows: Mapping[int, Sequence[float]], m: int, n_short: int = 5,
                        n_long: int = 50) -> float | None:
    """Variance-based link measurement from per-channel RSS histories.

    The long-window mean of each channel doubles as its fade level for the
    anti-fade-first channel selection. Returns ``None`` (unavailable) while
    any selected channel has fewer than ``n_short`` samples.
    """
    levels = {c: float(np.mean(np.asarray(w, dtype=float)[-n_long:])) for c, w in windows.items() if len(w)}
    if len(levels) < m:
        return None
    selected = select_channels(levels, m)
    values = [short_term_variance(windows[c], n_short, n_long) for c in selected]
    if any(v is None for v in values):
        return None
    return float(np.mean(values))


# -- streaming frame assembly -----------------------------------------------

@dataclass
class RtiFrame:
    t: float
    y: np.ndarray


@dataclass
class RtiStream:
    """Turns an RSS sample stream into one link-measurement vector per round.

    A round closes once every (link, channel) pair has reported; if a pair
    reports twice before that, the round is closed early and missing pairs
    carry their last value forward.

    ``mode`` is ``"ab"`` (needs ``calibration``) or ``"vb"``. AB frames carry
    the attenuation ``-y`` so that a shadowing person shows up as positive
    image intensity.
    """

    links: Sequence[Link]
    channels: Sequence[int]
    mode: str = "ab"
    params: RtiParams = field(default_factory=RtiParams)
    calibration: CalibrationTable | None = None

    def __post_init__(self):
        if self.mode not in ("ab", "vb"):
            raise ValueError(f"unknown RTI mode {self.mode!r}")
        if self.mode == "ab" and self.calibration is None:
            raise CalibrationError("AB-RTI requires a calibration table")
        self.links = [tuple(l) for l in self.links]
        self.channels = list(self.channels)
        if self.params.n_channels > len(self.channels):
            raise ValueError(f"cannot select {self.params.n_channels} of {len(self.channels)} channels")
        L, C = len(self.links), len(self.channels)
        self._li = {l: i for i, l in enumerate(self.links)}
        self._ci = {c: i for i, c in enumerate(self.channels)}
        self._latest = np.full((L, C), np.nan)
        self._seen = np.zeros((L, C), dtype=bool)
        self._n_seen = 0
        self._last_t = None
        if self.mode == "ab":
            self._ref = np.array([[self.calibration.mean(l, c) for c in self.channels] for l in self.links])
            self._mask = np.zeros((L, C), dtype=bool)
            for i, l in enumerate(self.links):
                sel = select_channels(fade_levels(self.calibration, l), self.params.n_channels)
                self._mask[i, [self._ci[c] for c in sel]] = True
        else:
            self._hist = np.full((L, C, self.params.n_long), np.nan)
            self._ptr = np.zeros((L, C), dtype=int)
            self._count = np.zeros((L, C), dtype=int)

    def push(self, sample: RssSample) -> RtiFrame | None:
        li = self._li.get(tuple(sample.link))
        ci = self._ci.get(sample.channel)
        if li is None or ci is None:
            return None
        frame = None
        if self._seen[li, ci]:
            frame = self._close()
        self._latest[li, ci] = sample.rss
        if self.mode == "vb":
            p = self._ptr[li, ci]
            self._hist[li, ci, p] = sample.rss
            self._ptr[li, ci] = (p + 1) % self.params.n_long
            self._count[li, ci] += 1
        self._seen[li, ci] = True
        self._n_seen += 1
        self._last_t = sample.t
        if self._n_seen == self._seen.size:
            frame = self._close()
        return frame

    def _close(self) -> RtiFrame | None:
        self._seen[:] = False
        self._n_seen = 0
        y = self._ab() if self.mode == "ab" else self._vb()
        if y is None:
            return None
        return RtiFrame(self._last_t, y)

    def _ab(self) -> np.ndarray | None:
        if np.isnan(self._latest[self._mask]).any():
            return None
        delta = np.where(self._mask, self._latest - self._ref, 0.0)
        return -delta.sum(axis=1) / self.params.n_channels

    def _vb(self) -> np.ndarray | None:
        p = self.params
        # long-window mean; the ring holds NaN until filled
        mu = np.nanmean(np.where(self._count[..., None] > 0, self._hist, np.nan), axis=2) \
            if (self._count > 0).all() else None
        if mu is None or (self._count < p.n_short).any():
            return None
        idx = (self._ptr[..., None] - 1 - np.arange(p.n_short)) % p.n_long
        recent = np.take_along_axis(self._hist, idx, axis=2)
        s = ((recent - mu[..., None]) ** 2).sum(axis=2) / (p.n_short - 1)
        # anti-fade first, ties to the lower channel index (stable sort)
        order = np.argsort(-mu, axis=1, kind="stable")[:, :p.n_channels]
        return np.take_along_axis(s, order, axis=1).mean(axis=1)


def rti_frames(samples: Iterable[RssSample], stream: RtiStream) -> list[RtiFrame]:
    frames = []
    for s in samples:
        f = stream.push(s)
        if f is not None:
            frames.append(f)
    return frames
