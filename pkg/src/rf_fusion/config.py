"""Run configuration and method selection."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import Deployment
from .rti import RtiParams
from .tracking import TrackerParams

RTI_METHODS = ("ab", "vb")
UWB_METHODS = ("hmm", "vb", "none")
FUSION_METHODS = ("product", "joint", "xfromy")


class ConfigError(ValueError):
    pass


@dataclass
class HmmConfig:
    change_rate: float | None = None  # None: 1 / n_bins
    obs_loc: list[float] = field(default_factory=lambda: [-1.0, 4.0])
    obs_scale: list[float] = field(default_factory=lambda: [1.0, 2.0])
    fit_null: bool = True
    baum_welch_every: int = 0  # frames between re-estimations; 0 disables
    baum_welch_history: int = 100
    sliding_calibration: bool = False
    sliding_frames: int = 20


@dataclass
class Config:
    deployment: dict | None = None
    # RTI
    voxel_width: float = 0.15
    ellipse_excess: float = 0.02
    sigma_x2: float = 0.05
    sigma_n: float = 1.0
    delta_c: float = 4.0
    n_channels: int = 3
    n_short: int = 5
    n_long: int = 50
    # fusion and tracking
    empty_threshold: float = 0.05
    h_app: int = 8
    track_window: int = 15
    gate_radius: float = 1.2
    joint_uwb_weight: float = 1.0
    joint_normalize: bool = False
    # UWB
    sampling_period: float = 1.0
    uwb_window: int = 5
    beta: float | None = None  # None: 1 / uwb_window
    los_bin: int | None = None  # None: strongest mean bin
    vb_k_threshold: float = 0.5
    hmm: HmmConfig = field(default_factory=HmmConfig)
    # run
    rti: str = "ab"
    uwb: str = "hmm"
    fusion: str = "product"
    calibration_s: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.hmm, dict):
            self.hmm = _build(HmmConfig, self.hmm, "hmm")
        if self.rti not in RTI_METHODS:
            raise ConfigError(f"rti must be one of {RTI_METHODS}, got {self.rti!r}")
        if self.uwb not in UWB_METHODS:
            raise ConfigError(f"uwb must be one of {UWB_METHODS}, got {self.uwb!r}")
        if self.fusion not in FUSION_METHODS:
            raise ConfigError(f"fusion must be one of {FUSION_METHODS}, got {self.fusion!r}")
        try:
            self.rti_params
            self.tracker_params
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    @property
    def rti_params(self) -> RtiParams:
        return RtiParams(self.voxel_width, self.ellipse_excess, self.sigma_x2, self.sigma_n,
                         self.delta_c, self.n_channels, self.n_short, self.n_long)

    @property
    def tracker_params(self) -> TrackerParams:
        return TrackerParams(self.gate_radius, self.h_app, self.track_window)

    @property
    def method_name(self) -> str:
        if self.uwb == "none":
            return f"{self.rti}-rti"
        return f"{self.rti}-rti+{self.uwb}-uwb/{self.fusion}"

    def build_deployment(self) -> Deployment:
        if self.deployment is None:
            raise ConfigError("config has no deployment")
        d = self.deployment
        try:
            return Deployment(d["room_bounds"], np.array(d["rss_nodes"]), np.array(d["uwb_tx"]),
                              np.array(d["uwb_rx"]), tuple(d.get("node_sides", ())))
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"bad deployment: {exc}") from exc

    def replace(self, **changes) -> "Config":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "Config":
        return _build(cls, d, "config")

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def save(self, path) -> None:
        Path(path).write_text(self.dumps() + "\n")

    @classmethod
    def load(cls, path) -> "Config":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(data)


def _build(cls, d: dict, what: str):
    if not isinstance(d, dict):
        raise ConfigError(f"{what} must be a JSON object")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(d) - known)
    if unknown:
        raise ConfigError(f"unknown {what} keys: {unknown}")
    try:
        return cls(**d)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def deployment_dict(dep: Deployment) -> dict:
    return {
        "room_bounds": list(dep.room_bounds),
        "rss_nodes": dep.rss_nodes.tolist(),
        "uwb_tx": dep.uwb_tx.tolist(),
        "uwb_rx": dep.uwb_rx.tolist(),
        "node_sides": list(dep.node_sides),
    }
