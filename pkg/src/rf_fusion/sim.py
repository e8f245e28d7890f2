"""Synthetic through-wall scenarios: a person walking a waypoint loop inside a
room monitored by RSS sensors on two opposite walls and one UWB radio pair.

The RSS side follows the usual link model (transmit power, log-distance path
loss, static per-channel fade offset, shadowing, slow drift, measurement
noise). The CIR side is a static multipath profile plus a fluctuating target
tap at the bistatic delay and the diffuse energy the person scatters into
later bins.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    Deployment,
    build_grid,
    delay_bin_of_point,
    bistatic_delay_bin,
    excess_path,
    make_links,
)
from .rti import RssSample
from .uwb import CirFrame


@dataclass
class RssModel:
    n_channels: int = 4
    tx_power: list[float] = field(default_factory=lambda: [0.0, -0.5, 0.5, -1.0])
    ref_loss: float = 40.0
    path_loss_exp: float = 2.0
    wall_loss: float = 6.0
    fade_std: float = 4.0
    shadow_depth: float = 3.0
    shadow_excess: float = 0.02
    noise_std: float = 0.5
    drift_std: float = 3.5
    drift_tau: float = 120.0
    deep_fade_level: float = -4.0
    deep_fade_std: float = 2.0
    deep_fade_excess: float = 1.0
    round_period: float = 0.4
    quantize: bool = True


@dataclass
class CirModel:
    n_bins: int = 48
    los_bin: int = 6
    sampling_period: float = 1.0
    frame_period: float = 0.1
    los_energy: float = 10.0
    multipath_energy: float = 3.0
    multipath_decay: float = 12.0
    target_energy: float = 3.0
    tail_ratio: float = 0.6
    tail_decay: float = 20.0
    snr_db: float = 15.0

    @property
    def noise_std(self) -> float:
        # SNR = mean target-tap energy over the per-bin energy noise std
        return self.target_energy / 10 ** (self.snr_db / 10)


@dataclass
class Scenario:
    name: str
    room_bounds: tuple[float, float, float, float]
    rss_nodes: list[list[float]]
    uwb_tx: list[float]
    uwb_rx: list[float]
    waypoints: list[list[float]] = field(default_factory=list)
    speed: float = 0.5
    loop: bool = True
    calibration_s: float = 20.0
    duration: float = 80.0
    seed: int = 0
    rss: RssModel = field(default_factory=RssModel)
    cir: CirModel = field(default_factory=CirModel)

    def __post_init__(self):
        self.room_bounds = tuple(float(v) for v in self.room_bounds)
        if not self.speed > 0:
            raise ValueError("speed must be positive")
        if not 0 <= self.calibration_s <= self.duration:
            raise ValueError("need 0 <= calibration_s <= duration")
        xmin, ymin, xmax, ymax = self.room_bounds
        for x, y in self.waypoints:
            if not (xmin <= x <= xmax and ymin <= y <= ymax):
                raise ValueError(f"waypoint {(x, y)} outside the room")
        if len(self.waypoints) == 1:
            raise ValueError("a path needs 0 or at least 2 waypoints")
        if isinstance(self.rss, dict):
            self.rss = RssModel(**self.rss)
        if isinstance(self.cir, dict):
            self.cir = CirModel(**self.cir)
        if len(self.rss.tx_power) != self.rss.n_channels:
            raise ValueError("tx_power needs one entry per channel")

    @property
    def deployment(self) -> Deployment:
        return Deployment(self.room_bounds, np.array(self.rss_nodes), np.array(self.uwb_tx), np.array(self.uwb_rx))

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["room_bounds"] = list(self.room_bounds)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown scenario keys: {sorted(unknown)}")
        return cls(**d)

    def with_seed(self, seed: int) -> "Scenario":
        return dataclasses.replace(self, seed=seed)

    def without_target(self) -> "Scenario":
        return dataclasses.replace(self, waypoints=[])

    # -- ground-truth motion --------------------------------------------------

    def position(self, t: float):
        """True target position at time ``t`` or ``None`` when absent."""
        if not self.waypoints or t < self.calibration_s:
            return None
        pts = np.asarray(self.waypoints, dtype=float)
        if self.loop:
            pts = np.vstack([pts, pts[:1]])
        seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        total = seg.sum()
        s = (t - self.calibration_s) * self.speed
        if self.loop:
            s = s % total
        elif s > total:
            return None
        for i, L in enumerate(seg):
            if s <= L or i == len(seg) - 1:
                f = min(s / L, 1.0) if L > 0 else 0.0
                return tuple(pts[i] + f * (pts[i + 1] - pts[i]))
            s -= L
        return None

    def positions(self, times) -> np.ndarray:
        """(T, 2) positions, NaN where the target is absent."""
        out = np.full((len(times), 2), np.nan)
        for i, t in enumerate(times):
            p = self.position(float(t))
            if p is not None:
                out[i] = p
        return out

    def _rngs(self):
        ss = np.random.SeedSequence(self.seed)
        return [np.random.default_rng(s) for s in ss.spawn(5)]


def _wall_nodes(x: float, count: int, spacing: float, y_center: float) -> list[list[float]]:
    y0 = y_center - spacing * (count - 1) / 2
    return [[x, y0 + i * spacing] for i in range(count)]


def _loop_path(bounds, margin: float) -> list[list[float]]:
    xmin, ymin, xmax, ymax = bounds
    return [[xmin + margin, ymin + margin], [xmax - margin, ymin + margin],
            [xmax - margin, ymax - margin], [xmin + margin, ymax - margin]]


def study_room(seed: int = 0, per_side: tuple[int, int] = (17, 16), **kw) -> Scenario:
    """3.82 m x 5.49 m room, RSS sensors 30.5 cm apart on the two long walls,
    UWB radios 1 m apart on the low-x side."""
    bounds = (0.0, 0.0, 3.82, 5.49)
    yc = 5.49 / 2
    nodes = _wall_nodes(-0.3, per_side[0], 0.305, yc) + _wall_nodes(3.82 + 0.3, per_side[1], 0.305, yc)
    kw.setdefault("waypoints", _loop_path(bounds, 0.6))
    return Scenario("study-room", bounds, nodes, [-0.6, yc - 0.5], [-0.6, yc + 0.5], seed=seed, **kw)


def motel_room(seed: int = 0, per_side: int = 10, uwb_spacing: float = 2.7, **kw) -> Scenario:
    """3.96 m x 7.11 m room, ten RSS sensors along each adjoining wall."""
    bounds = (0.0, 0.0, 3.96, 7.11)
    yc = 7.11 / 2
    spacing = 6.5 / (per_side - 1)
    nodes = _wall_nodes(-0.3, per_side, spacing, yc) + _wall_nodes(3.96 + 0.3, per_side, spacing, yc)
    kw.setdefault("waypoints", _loop_path(bounds, 0.7))
    return Scenario("motel-room", bounds, nodes, [-0.6, yc - uwb_spacing / 2], [-0.6, yc + uwb_spacing / 2],
                    seed=seed, **kw)


# -- RSS ------------------------------------------------------------------------

@dataclass
class RssArrays:
    """Dense form of an RSS stream: ``rss[r, c, l]`` sampled at ``times[r, c, l]``."""

    links: tuple
    channels: list[int]
    times: np.ndarray
    rss: np.ndarray
    static_mean: np.ndarray  # (C, L) P_c - L - F, noise- and target-free

    def samples(self) -> list[RssSample]:
        R, C, L = self.rss.shape
        out = []
        for r in range(R):
            for c in range(C):
                ch = self.channels[c]
                for l in range(L):
                    out.append(RssSample(float(self.times[r, c, l]), self.links[l], ch, float(self.rss[r, c, l])))
        return out


def fade_offsets(scn: Scenario, n_links: int) -> np.ndarray:
    """Static per-channel fade level of every link, shape (C, L)."""
    return scn._rngs()[0].normal(0.0, scn.rss.fade_std, size=(scn.rss.n_channels, n_links))


def generate_rss_arrays(scn: Scenario) -> RssArrays:
    m = scn.rss
    dep = scn.deployment
    links = make_links(dep)
    L, C = len(links), m.n_channels
    R = int(math.floor(scn.duration / m.round_period + 1e-9))
    pos = dep.rss_nodes
    a = pos[[l[0] for l in links.links]]
    b = pos[[l[1] for l in links.links]]
    d = links.lengths
    same_side = np.array([dep.node_sides[i] == dep.node_sides[j] for i, j in links.links])
    path_loss = m.ref_loss + 10 * m.path_loss_exp * np.log10(np.maximum(d, 0.1)) + m.wall_loss * (~same_side)
    F = fade_offsets(scn, L)
    static = np.asarray(m.tx_power, dtype=float)[:, None] - path_loss[None, :] + F

    slot = (np.arange(C)[:, None] * L + np.arange(L)[None, :]) / (C * L) * m.round_period
    times = np.arange(R)[:, None, None] * m.round_period + slot[None]
    times = np.round(times, 6)

    rng = scn._rngs()[1]
    noise = rng.normal(0.0, m.noise_std, size=(R, C, L))
    deep = rng.normal(0.0, m.deep_fade_std, size=(R, C, L))
    shadow = np.zeros((R, C, L))
    if scn.waypoints:
        deep_mask = F < m.deep_fade_level
        for r in range(R):
            # one target position per channel sweep keeps this vectorized
            for c in range(C):
                p = scn.position(float(times[r, c, 0]))
                if p is None:
                    continue
                p = np.asarray(p)
                ex = np.linalg.norm(a - p, axis=1) + np.linalg.norm(b - p, axis=1) - d
                shadow[r, c] = m.shadow_depth * (ex < m.shadow_excess)
                shadow[r, c] += deep[r, c] * (deep_mask[c] & (ex < m.deep_fade_excess))
    rss = static[None] - shadow - noise + rss_drift(scn, R, C, L)
    if m.quantize:
        rss = np.round(rss)
    channels = list(range(1, C + 1))
    return RssArrays(links.links, channels, times, rss, static)


def rss_drift(scn: Scenario, n_rounds: int, n_channels: int, n_links: int) -> np.ndarray:
    """Slow per-link, per-channel RSS wander: a stationary AR(1) process
    sampled once per round, so a calibration taken earlier goes stale."""
    m = scn.rss
    out = np.zeros((n_rounds, n_channels, n_links))
    if m.drift_std <= 0 or n_rounds == 0:
        return out
    phi = math.exp(-m.round_period / m.drift_tau)
    eps = scn._rngs()[4].normal(0.0, m.drift_std, size=out.shape)
    out[0] = eps[0]
    innov = math.sqrt(1 - phi * phi)
    for r in range(1, n_rounds):
        out[r] = phi * out[r - 1] + innov * eps[r]
    return out


def generate_rss_stream(scn: Scenario) -> list[RssSample]:
    return generate_rss_arrays(scn).samples()


# -- CIR ------------------------------------------------------------------------

def static_cir_profile(scn: Scenario) -> np.ndarray:
    m = scn.cir
    rng = scn._rngs()[2]
    k = np.arange(1, m.n_bins + 1)
    prof = np.zeros(m.n_bins)
    after = k > m.los_bin
    prof[after] = m.multipath_energy * np.exp(-(k[after] - m.los_bin) / m.multipath_decay) * rng.exponential(1.0, after.sum())
    prof[k == m.los_bin] = m.los_energy
    return prof


def target_bin(scn: Scenario, point) -> int:
    m = scn.cir
    return delay_bin_of_point(point, scn.deployment, m.sampling_period, m.los_bin)


def cir_times(scn: Scenario) -> np.ndarray:
    n = int(math.floor(scn.duration / scn.cir.frame_period + 1e-9))
    return np.round(np.arange(n) * scn.cir.frame_period, 6)


def generate_cir_stream(scn: Scenario) -> list[CirFrame]:
    m = scn.cir
    prof = static_cir_profile(scn)
    rng = scn._rngs()[3]
    k = np.arange(1, m.n_bins + 1)
    frames = []
    for t in cir_times(scn):
        r = prof.copy()
        p = scn.position(float(t))
        if p is not None:
            ks = target_bin(scn, p)
            if ks <= m.n_bins:
                r[ks - 1] += m.target_energy * rng.exponential(1.0)
            tail = k > ks
            r[tail] += m.target_energy * m.tail_ratio * np.exp(-(k[tail] - ks) / m.tail_decay) * rng.exponential(1.0, tail.sum())
        r = r + rng.normal(0.0, m.noise_std, m.n_bins)
        frames.append(CirFrame(float(t), np.maximum(r, 0.0)))
    return frames


# -- ground truth -----------------------------------------------------------------

@dataclass
class GroundTruth:
    t: np.ndarray
    xy: np.ndarray  # NaN when absent
    k_star: np.ndarray  # 0 when absent

    @property
    def present(self) -> np.ndarray:
        return ~np.isnan(self.xy[:, 0])


def ground_truth(scn: Scenario, voxel_width: float = 0.15) -> GroundTruth:
    """True position and target delay bin (of the voxel holding the target)
    at every CIR frame time."""
    t = cir_times(scn)
    xy = scn.positions(t)
    dep = scn.deployment
    grid = build_grid(dep, voxel_width)
    ks = np.zeros(len(t), dtype=int)
    for i, p in enumerate(xy):
        if not np.isnan(p[0]):
            ks[i] = bistatic_delay_bin(grid, dep, grid.voxel_of(p), scn.cir.sampling_period, scn.cir.los_bin)
    return GroundTruth(t, xy, ks)


def true_excess(scn: Scenario, point) -> float:
    return float(excess_path(point, scn.uwb_tx, scn.uwb_rx)[0])
