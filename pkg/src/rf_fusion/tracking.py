"""Gated track association with m-of-n confirmation.

One call to :meth:`Tracker.update` per formed combined image. Every live
track records whether it was updated in that frame; a candidate whose
creation counts as its first update is confirmed once ``h_app`` of its
frames carry an update, and deleted as soon as its first ``H`` frames can
no longer reach ``h_app``. Confirmed tracks are never deleted but go stale
after ``H`` frames without an update.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

from .fusion import PositionEstimate

CANDIDATE = "candidate"
CONFIRMED = "confirmed"


@dataclass
class Track:
    id: int
    position: tuple[float, float]
    history: deque
    state: str = CANDIDATE
    age: int = 1
    last_update: float | None = None
    last_update_frame: int = 0
    stale: bool = False

    @property
    def updates(self) -> int:
        return sum(self.history)


@dataclass
class TrackerParams:
    gate_radius: float = 1.2
    h_app: int = 8
    window: int = 15

    def __post_init__(self):
        if not 1 <= self.h_app <= self.window:
            raise ValueError("need 1 <= h_app <= window")
        if not self.gate_radius > 0:
            raise ValueError("gate radius must be positive")


@dataclass
class Tracker:
    params: TrackerParams = field(default_factory=TrackerParams)
    tracks: list[Track] = field(default_factory=list)
    frame: int = 0
    events: list[dict] = field(default_factory=list)
    _next_id: int = 0

    @property
    def candidates(self) -> list[Track]:
        return [t for t in self.tracks if t.state == CANDIDATE]

    @property
    def confirmed(self) -> list[Track]:
        return [t for t in self.tracks if t.state == CONFIRMED]

    def _event(self, kind: str, track: Track, t):
        self.events.append({
            "t": t, "frame": self.frame, "event": kind, "track": track.id,
            "state": track.state, "x": track.position[0], "y": track.position[1],
        })

    def _new_track(self, pos, t) -> Track:
        tr = Track(self._next_id, pos, deque([True], maxlen=self.params.window),
                   last_update=t, last_update_frame=self.frame)
        self._next_id += 1
        self.tracks.append(tr)
        self._event("created", tr, t)
        return tr

    def _associate(self, pos) -> Track | None:
        gated = []
        for tr in self.tracks:
            d = math.dist(tr.position, pos)
            if d <= self.params.gate_radius:
                gated.append((d, tr.id, tr))
        for state in (CONFIRMED, CANDIDATE):
            pool = [g for g in gated if g[2].state == state]
            if pool:
                return min(pool, key=lambda g: (g[0], g[1]))[2]
        return None

    def update(self, estimate: PositionEstimate) -> Track | None:
        """Advance one frame. Returns the track the estimate was assigned to,
        or ``None`` for an invalid estimate."""
        self.frame += 1
        t = estimate.t
        target = created = None
        if estimate.valid:
            pos = (float(estimate.x), float(estimate.y))
            target = self._associate(pos) if self.tracks else None
            if target is None:
                target = created = self._new_track(pos, t)
            else:
                target.position = pos
                target.last_update = t
                target.last_update_frame = self.frame
                target.stale = False
                self._event("updated", target, t)
        p = self.params
        for tr in list(self.tracks):
            if tr is not created:
                tr.history.append(tr is target)
                tr.age += 1
            if tr.state == CANDIDATE:
                if tr.updates >= p.h_app:
                    tr.state = CONFIRMED
                    self._event("confirmed", tr, t)
                elif tr.updates + max(p.window - tr.age, 0) < p.h_app:
                    self.tracks.remove(tr)
                    self._event("deleted", tr, t)
            elif not tr.stale and self.frame - tr.last_update_frame >= p.window:
                tr.stale = True
                self._event("stale", tr, t)
        return target

    def current_position(self) -> tuple[float, float] | None:
        """Position of the most recently updated confirmed track."""
        conf = self.confirmed
        if not conf:
            return None
        best = max(conf, key=lambda tr: (tr.last_update_frame, -tr.id))
        return best.position
