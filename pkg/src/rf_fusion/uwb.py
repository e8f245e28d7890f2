"""UWB bistatic range estimation from channel impulse response energies.

CIR bins are numbered ``k = 1..M`` and stored 0-based in arrays, so
``energies[k - 1]`` is bin ``k``. Along the delay axis a two-state hidden
Markov chain goes from unchanged (0) to changed (1) at the target's
bistatic delay; state 1 is absorbing.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

OBS_EPS = 1e-12
VARIANCE_FLOOR_REL = 1e-9
SCALE_FLOOR = 1e-3


@dataclass(frozen=True)
class CirFrame:
    t: float
    energies: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.energies, dtype=float)
        if e.ndim != 1 or np.any(e < 0):
            raise ValueError("CIR energies must be a non-negative vector")
        object.__setattr__(self, "energies", e)


@dataclass(frozen=True)
class CirCalibration:
    mean: np.ndarray
    var: np.ndarray
    floor: float

    @classmethod
    def from_frames(cls, frames: Sequence[CirFrame]) -> "CirCalibration":
        if len(frames) < 2:
            raise ValueError("CIR calibration needs at least 2 frames")
        R = np.stack([f.energies for f in frames])
        floor = VARIANCE_FLOOR_REL * max(float(R.mean()), OBS_EPS)
        return cls(R.mean(axis=0), np.maximum(R.var(axis=0, ddof=1), floor), floor)


def kld_observation(mu_p, var_p, mu_q, var_q, floor: float = 0.0):
    """Symmetric KL divergence between two Gaussians (vectorized).

    Variances are floored at ``floor`` (or a tiny positive value) so the
    result is always finite.
    """
    lo = floor if floor > 0 else OBS_EPS
    vp = np.maximum(np.asarray(var_p, dtype=float), lo)
    vq = np.maximum(np.asarray(var_q, dtype=float), lo)
    dm2 = (np.asarray(mu_p, dtype=float) - np.asarray(mu_q, dtype=float)) ** 2
    return 0.5 * (vp / vq + vq / vp + dm2 * (vp + vq) / (vp * vq)) - 1.0


# -- hidden Markov model over the delay axis ---------------------------------

@dataclass(frozen=True)
class HmmParams:
    """``initial`` (2,), ``transition`` (2, 2) and log-normal observation
    parameters: ``ln O`` ~ Normal(``obs_loc[i]``, ``obs_scale[i]``) in state i."""

    initial: np.ndarray
    transition: np.ndarray
    obs_loc: np.ndarray
    obs_scale: np.ndarray

    def __post_init__(self):
        for name in ("initial", "transition", "obs_loc", "obs_scale"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if self.initial.shape != (2,) or not np.isclose(self.initial.sum(), 1.0) or np.any(self.initial < 0):
            raise ValueError("initial must be a probability vector of length 2")
        P = self.transition
        if P.shape != (2, 2) or np.any(P < 0) or not np.allclose(P.sum(axis=1), 1.0):
            raise ValueError("transition must be a 2x2 row-stochastic matrix")
        if P[1, 0] != 0.0:
            raise ValueError("changed state must be absorbing (P[1,0] == 0)")
        if np.any(self.obs_scale <= 0):
            raise ValueError("observation scales must be positive")

    @classmethod
    def default(cls, n_bins: int, change_rate: float | None = None,
                loc=(-1.0, 2.0), scale=(1.0, 1.5)) -> "HmmParams":
        """Seed parameters: one change expected per sweep of ``n_bins``."""
        rho = 1.0 / n_bins if change_rate is None else change_rate
        return cls(
            initial=[1.0 - rho, rho],
            transition=[[1.0 - rho, rho], [0.0, 1.0]],
            obs_loc=list(loc),
            obs_scale=list(scale),
        )

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("initial", "transition", "obs_loc", "obs_scale")}


def observation_loglik(obs, params: HmmParams) -> np.ndarray:
    """Log-normal log densities, shape (M, 2)."""
    o = np.asarray(obs, dtype=float)
    if np.any(~np.isfinite(o)):
        raise ValueError("observations must be finite")
    lo = np.log(np.maximum(o, 0.0) + OBS_EPS)[:, None]
    s = params.obs_scale[None, :]
    z = (lo - params.obs_loc[None, :]) / s
    return -lo - np.log(s) - 0.5 * math.log(2 * math.pi) - 0.5 * z**2


@dataclass
class Smoothed:
    gamma: np.ndarray  # (M, 2) state posteriors
    xi: np.ndarray  # (2, 2) expected transition counts
    loglik: float


def _smooth(logb: np.ndarray, params: HmmParams) -> Smoothed:
    M = logb.shape[0]
    shift = logb.max(axis=1, keepdims=True)
    if not np.all(np.isfinite(shift)):
        raise ValueError("degenerate observation: zero likelihood under both states")
    b = np.exp(logb - shift)
    P = params.transition
    fwd = np.empty((M, 2))
    scale = np.empty(M)
    a = params.initial * b[0]
    for k in range(M):
        if k:
            a = (fwd[k - 1] @ P) * b[k]
        c = a.sum()
        if not c > 0:
            raise ValueError(f"degenerate observation at bin {k + 1}: zero likelihood")
        fwd[k] = a / c
        scale[k] = c
    bwd = np.empty((M, 2))
    bwd[-1] = 1.0
    for k in range(M - 2, -1, -1):
        bwd[k] = P @ (b[k + 1] * bwd[k + 1]) / scale[k + 1]
    gamma = fwd * bwd
    gamma /= gamma.sum(axis=1, keepdims=True)
    xi = np.zeros((2, 2))
    for k in range(M - 1):
        xi += fwd[k][:, None] * P * (b[k + 1] * bwd[k + 1])[None, :] / scale[k + 1]
    loglik = float(np.log(scale).sum() + shift.sum())
    return Smoothed(gamma, xi, loglik)


def forward_backward(observations, params: HmmParams) -> np.ndarray:
    """Posterior probability of the changed state at every bin, ``alpha_k``."""
    logb = observation_loglik(observations, params)
    return _smooth(logb, params).gamma[:, 1]


def log_likelihood(observations, params: HmmParams) -> float:
    return _smooth(observation_loglik(observations, params), params).loglik


def estimate_k_star(alpha, threshold: float = 0.5) -> int | None:
    """First bin (1-based) whose changed-state posterior exceeds ``threshold``;
    ``None`` when no bin does (no target)."""
    hits = np.flatnonzero(np.asarray(alpha) > threshold)
    return int(hits[0]) + 1 if hits.size else None


def baum_welch_update(history: Iterable, params: HmmParams,
                      scale_floor: float = SCALE_FLOOR) -> HmmParams:
    """One EM re-estimation of ``params`` from observation vectors.

    The absorbing structure of the transition matrix is kept (P[1,0] = 0).
    Observation scales are floored at ``scale_floor``; a state with no
    posterior mass keeps its previous observation parameters.
    """
    init = np.zeros(2)
    xi = np.zeros((2, 2))
    w_sum = np.zeros(2)
    m1 = np.zeros(2)
    m2 = np.zeros(2)
    n = 0
    for obs in history:
        o = np.asarray(obs, dtype=float)
        if np.any(np.isnan(o)):
            raise ValueError("NaN in observation history")
        sm = _smooth(observation_loglik(o, params), params)
        lo = np.log(np.maximum(o, 0.0) + OBS_EPS)
        init += sm.gamma[0]
        xi += sm.xi
        w_sum += sm.gamma.sum(axis=0)
        m1 += sm.gamma.T @ lo
        m2 += sm.gamma.T @ lo**2
        n += 1
    if n == 0:
        raise ValueError("empty observation history")
    initial = init / n
    transition = params.transition.copy()
    if xi[0].sum() > 0:
        p01 = xi[0, 1] / xi[0].sum()
        transition[0] = [1.0 - p01, p01]
    loc = params.obs_loc.copy()
    scale = params.obs_scale.copy()
    for i in range(2):
        if w_sum[i] > 1e-12:
            loc[i] = m1[i] / w_sum[i]
            var = max(m2[i] / w_sum[i] - loc[i] ** 2, 0.0)
            scale[i] = max(math.sqrt(var), scale_floor)
    return replace(params, initial=initial, transition=transition, obs_loc=loc, obs_scale=scale)


def fit_null_distribution(frames: Sequence[CirFrame], window: int) -> tuple[float, float]:
    """Location and scale of ``ln O`` for the unchanged state, measured by
    sliding a ``window``-frame runtime window over the calibration frames
    themselves."""
    calib = CirCalibration.from_frames(frames)
    R = np.stack([f.energies for f in frames])
    logs = []
    for i in range(window, len(R) + 1):
        w = R[i - window:i]
        o = kld_observation(calib.mean, calib.var, w.mean(axis=0), w.var(axis=0, ddof=1), calib.floor)
        logs.append(np.log(np.maximum(o, 0.0) + OBS_EPS))
    if not logs:
        raise ValueError("not enough calibration frames to fit the null distribution")
    v = np.concatenate(logs)
    return float(v.mean()), float(max(v.std(), SCALE_FLOOR))


class HmmUwb:
    """Streaming HMM-UWB: each new frame yields the posterior vector ``alpha``
    computed from the last ``window`` frames against the calibration.

    With ``sliding=True`` the calibration is replaced by the ``n_calib``
    frames that immediately precede the runtime window.
    """

    def __init__(self, calibration: CirCalibration | None, params: HmmParams, window: int = 5,
                 sliding: bool = False, n_calib: int = 20):
        if calibration is None and not sliding:
            raise ValueError("HMM-UWB requires calibration frames")
        self.calibration = calibration
        self.params = params
        self.window = window
        self.sliding = sliding
        self.n_calib = n_calib
        self._buf: deque = deque(maxlen=window + (n_calib if sliding else 0))
        self.last_observation: np.ndarray | None = None

    def observation(self) -> np.ndarray | None:
        if len(self._buf) < self.window + (self.n_calib if self.sliding else 0):
            return None
        R = np.stack(self._buf)
        cur = R[-self.window:]
        if self.sliding:
            ref = CirCalibration.from_frames([CirFrame(0.0, r) for r in R[:-self.window]])
        else:
            ref = self.calibration
        return kld_observation(ref.mean, ref.var, cur.mean(axis=0), cur.var(axis=0, ddof=1), ref.floor)

    def observe(self, frame: CirFrame) -> np.ndarray | None:
        """Add a frame; returns the KL observation vector once available."""
        self._buf.append(frame.energies)
        obs = self.observation()
        if obs is not None:
            self.last_observation = obs
        return obs

    def push(self, frame: CirFrame) -> np.ndarray | None:
        obs = self.observe(frame)
        return None if obs is None else forward_backward(obs, self.params)


# -- variance-based alternative ------------------------------------------------

def vb_alpha(window, normalizer, floor: float = OBS_EPS) -> np.ndarray:
    """Short-term variance of each bin over ``window`` (frames x bins),
    divided by the running-mean normalizer."""
    W = np.asarray(window, dtype=float)
    if W.shape[0] < 2:
        raise ValueError("need at least 2 frames for a sample variance")
    return W.var(axis=0, ddof=1) / np.maximum(np.asarray(normalizer, dtype=float), floor)


class VbUwb:
    """Streaming VB-UWB. ``g`` is a first-order IIR mean of each bin, seeded
    with the first frame; ``alpha`` is available once ``window`` frames exist."""

    def __init__(self, window: int = 5, beta: float | None = None, floor: float = OBS_EPS):
        self.window = window
        self.beta = 1.0 / window if beta is None else beta
        self.floor = floor
        self.g = None
        self._buf: deque = deque(maxlen=window)

    def push(self, frame: CirFrame) -> np.ndarray | None:
        r = frame.energies
        if self.g is None:
            self.g = r.copy()
        else:
            self.g = self.g * (1.0 - self.beta) + r * self.beta
        self.g = np.maximum(self.g, self.floor)
        self._buf.append(r)
        if len(self._buf) < self.window:
            return None
        return vb_alpha(np.stack(self._buf), self.g, self.floor)


def uwb_image(alpha, delay_bins) -> np.ndarray:
    """Per-voxel positive increment of ``alpha`` at the voxel's delay bin.

    ``delay_bins`` holds 1-based bins; ``alpha_0`` is taken as 0 and bins
    beyond the end of ``alpha`` give 0.
    """
    a = np.concatenate([[0.0], np.asarray(alpha, dtype=float)])
    k = np.asarray(delay_bins, dtype=int)
    M = len(a) - 1
    out = np.zeros(k.shape)
    ok = (k >= 1) & (k <= M)
    out[ok] = np.maximum(a[k[ok]] - a[k[ok] - 1], 0.0)
    return out
