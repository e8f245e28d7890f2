"""Batch localization pipeline: RSS and CIR traces in, tracked estimates out.

Stages: RSS rounds -> RTI images; CIR frames -> UWB alpha and image; pair
each UWB frame with the latest RTI image; fuse; track.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .config import Config, ConfigError
from .fusion import (
    JointInversion,
    PositionEstimate,
    fuse_product,
    fuse_x_from_y,
    rti_only,
    synchronize,
    uwb_weight_matrix,
)
from .geometry import Deployment, build_grid, delay_map, make_links
from .rti import CalibrationError, RssSample, RtiModel, RtiStream, calibrate, rti_frames
from .tracking import Tracker
from .uwb import (
    CirCalibration,
    CirFrame,
    HmmParams,
    HmmUwb,
    VbUwb,
    baum_welch_update,
    estimate_k_star,
    fit_null_distribution,
    forward_backward,
    uwb_image,
)

log = logging.getLogger(__name__)


class DataError(ValueError):
    pass


@dataclass
class FrameResult:
    estimate: PositionEstimate
    track: tuple[float, float] | None
    k_star: int | None = None


@dataclass
class RunResult:
    method: str
    frames: list[FrameResult] = field(default_factory=list)
    events: list[dict] = field(default_factory=list)

    def tracked(self) -> tuple[np.ndarray, np.ndarray]:
        """Timestamps and tracker output of frames that formed a valid estimate
        while a confirmed track existed."""
        rows = [(f.estimate.t, *f.track) for f in self.frames if f.track is not None and f.estimate.valid]
        if not rows:
            return np.zeros(0), np.zeros((0, 2))
        a = np.array(rows, dtype=float)
        return a[:, 0], a[:, 1:]

    def raw(self) -> tuple[np.ndarray, np.ndarray]:
        rows = [(f.estimate.t, f.estimate.x, f.estimate.y) for f in self.frames if f.estimate.valid]
        if not rows:
            return np.zeros(0), np.zeros((0, 2))
        a = np.array(rows, dtype=float)
        return a[:, 0], a[:, 1:]

    def records(self) -> list[dict]:
        out = []
        for f in self.frames:
            e = f.estimate
            out.append({
                "t": e.t, "method": self.method, "valid": e.valid, "flag": e.flag,
                "voxel": e.voxel, "x": e.x, "y": e.y,
                "track_x": None if f.track is None else f.track[0],
                "track_y": None if f.track is None else f.track[1],
                "k_star": f.k_star,
            })
        return out


def detect_los_bin(frames: Sequence[CirFrame]) -> int:
    """Strongest mean bin (1-based); the direct path dominates the CIR."""
    R = np.stack([f.energies for f in frames])
    return int(np.argmax(R.mean(axis=0))) + 1


class Localizer:
    """Precomputed geometry and projections for one deployment and config.

    ``nodes`` restricts the RSS network to a subset of sensors.
    """

    def __init__(self, config: Config, deployment: Deployment | None = None,
                 nodes: Sequence[int] | None = None):
        self.config = config
        self.deployment = deployment or config.build_deployment()
        self.grid = build_grid(self.deployment, config.voxel_width)
        self.links = make_links(self.deployment, nodes)
        self.rti_model = RtiModel.build(self.links, self.deployment.rss_nodes, self.grid, config.rti_params)
        self._joint: dict = {}

    def joint(self, n_bins: int, los_bin: int) -> JointInversion:
        key = (n_bins, los_bin)
        if key not in self._joint:
            c = self.config
            WU = uwb_weight_matrix(self.delays(los_bin), n_bins)
            self._joint[key] = JointInversion(self.rti_model.W, WU, self.grid, c.sigma_n, c.sigma_x2,
                                              c.delta_c, c.joint_uwb_weight, c.joint_normalize)
        return self._joint[key]

    def delays(self, los_bin: int) -> np.ndarray:
        return delay_map(self.grid, self.deployment, self.config.sampling_period, los_bin)

    # -- stages ---------------------------------------------------------------

    def rti_stage(self, config: Config, samples: Sequence[RssSample]):
        channels = sorted({s.channel for s in samples})
        link_set = set(self.links.links)
        if config.rti == "ab":
            calib = [s for s in samples if s.t < config.calibration_s and tuple(s.link) in link_set]
            if not calib:
                raise CalibrationError("AB-RTI needs an empty-room calibration segment (calibration_s > 0)")
            table = calibrate(calib, self.links.links, channels)
            stream = RtiStream(self.links.links, channels, "ab", config.rti_params, table)
            run = [s for s in samples if s.t >= config.calibration_s]
        else:
            stream = RtiStream(self.links.links, channels, "vb", config.rti_params)
            run = samples
        return rti_frames(run, stream)

    def uwb_stage(self, config: Config, frames: Sequence[CirFrame]):
        """Returns (times, alphas, los_bin)."""
        if not frames:
            raise DataError("UWB method selected but the trace has no CIR frames")
        calib = [f for f in frames if f.t < config.calibration_s]
        los = config.los_bin or detect_los_bin(calib or frames[:50])
        times, alphas = [], []
        n_bins = len(frames[0].energies)
        if config.uwb == "vb":
            vb = VbUwb(config.uwb_window, config.beta)
            for f in frames:
                a = vb.push(f)
                if a is not None:
                    times.append(f.t)
                    alphas.append(a)
            return times, alphas, los
        h = config.hmm
        if len(calib) < 2 and not h.sliding_calibration:
            raise CalibrationError("HMM-UWB needs an empty-room calibration segment (calibration_s > 0)")
        loc, scale = list(h.obs_loc), list(h.obs_scale)
        if h.fit_null and len(calib) > config.uwb_window:
            loc[0], scale[0] = fit_null_distribution(calib, config.uwb_window)
        params = HmmParams.default(n_bins, h.change_rate, loc, scale)
        det = HmmUwb(CirCalibration.from_frames(calib) if len(calib) >= 2 else None, params,
                     config.uwb_window, h.sliding_calibration, h.sliding_frames)
        run = [f for f in frames if f.t >= config.calibration_s] if not h.sliding_calibration else frames
        history = []
        for f in run:
            obs = det.observe(f)
            if obs is None:
                continue
            history.append(obs)
            if h.baum_welch_every and len(history) % h.baum_welch_every == 0:
                det.params = baum_welch_update(history[-h.baum_welch_history:], det.params)
            times.append(f.t)
            alphas.append(forward_backward(obs, det.params))
        return times, alphas, los

    # -- full run ----------------------------------------------------------------

    def run(self, samples: Sequence[RssSample], frames: Sequence[CirFrame] = (),
            config: Config | None = None) -> RunResult:
        c = config or self.config
        rti = self.rti_stage(c, samples)
        tracker = Tracker(c.tracker_params)
        result = RunResult(c.method_name)
        grid = self.grid
        if c.uwb == "none":
            for fr in rti:
                est = rti_only(self.rti_model.image(fr.y), grid, c.empty_threshold, fr.t, result.method)
                tracker.update(est)
                result.frames.append(FrameResult(est, tracker.current_position()))
            result.events = tracker.events
            return result

        times, alphas, los = self.uwb_stage(c, frames)
        delays = self.delays(los)
        rti_images = [None] * len(rti)
        threshold = c.vb_k_threshold if c.uwb == "vb" else 0.5
        for iu, ir in synchronize([f.t for f in rti], times):
            t = times[iu]
            alpha = alphas[iu]
            if rti_images[ir] is None:
                rti_images[ir] = self.rti_model.image(rti[ir].y)
            lr = rti_images[ir]
            lu = uwb_image(alpha, delays)
            if c.fusion == "product":
                _, est = fuse_product(lr, lu, grid, c.empty_threshold, t, rti[ir].t)
            elif c.fusion == "joint":
                _, est = self.joint(len(alpha), los).fuse(rti[ir].y, alpha, t, rti[ir].t)
            else:
                est = fuse_x_from_y(lr, lu, grid, c.empty_threshold, t)
            est.method = result.method
            tracker.update(est)
            result.frames.append(FrameResult(est, tracker.current_position(), estimate_k_star(alpha, threshold)))
        result.events = tracker.events
        return result


def run_pipeline(config: Config, samples, frames=(), deployment: Deployment | None = None,
                 nodes=None) -> RunResult:
    try:
        loc = Localizer(config, deployment, nodes)
    except ValueError as exc:
        if isinstance(exc, (ConfigError, CalibrationError, DataError)):
            raise
        raise ConfigError(str(exc)) from exc
    return loc.run(samples, frames)
