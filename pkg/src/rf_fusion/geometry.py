"""Room geometry, voxel grids, RSS links and UWB bistatic delay bins.

Everything here is planar. Coordinates are meters, delays are integer
sample bins (1-based, matching the CIR bin numbering used in ``uwb``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

SPEED_OF_LIGHT = 0.299792458  # m/ns


@dataclass(frozen=True, eq=False)
class Deployment:
    """Sensor deployment around a rectangular room.

    Parameters
    ----------
    room_bounds : (xmin, ymin, xmax, ymax)
        Inner dimensions of the monitored room, meters.
    rss_nodes : array_like, shape (K, 2)
        RSS sensor positions.
    uwb_tx, uwb_rx : array_like, shape (2,)
        UWB radio positions.
    node_sides : sequence of int, optional
        Side label per RSS node (0 = low-x wall, 1 = high-x wall). Inferred
        from the node's x coordinate relative to the room center if omitted.
    """

    room_bounds: tuple[float, float, float, float]
    rss_nodes: np.ndarray
    uwb_tx: np.ndarray
    uwb_rx: np.ndarray
    node_sides: tuple[int, ...] = field(default=())
    speed_of_light: float = SPEED_OF_LIGHT

    def __post_init__(self):
        nodes = np.asarray(self.rss_nodes, dtype=float).reshape(-1, 2)
        tx = np.asarray(self.uwb_tx, dtype=float).reshape(2)
        rx = np.asarray(self.uwb_rx, dtype=float).reshape(2)
        bounds = tuple(float(b) for b in self.room_bounds)
        if len(bounds) != 4:
            raise ValueError("room_bounds must be (xmin, ymin, xmax, ymax)")
        if len(nodes) < 2:
            raise ValueError("a deployment needs at least 2 RSS nodes")
        if not (np.isfinite(nodes).all() and np.isfinite(tx).all() and np.isfinite(rx).all()):
            raise ValueError("all positions must be finite")
        if np.allclose(tx, rx):
            raise ValueError("uwb_tx and uwb_rx must differ")
        sides = tuple(int(s) for s in self.node_sides)
        if not sides:
            xc = 0.5 * (bounds[0] + bounds[2])
            sides = tuple(int(x > xc) for x in nodes[:, 0])
        elif len(sides) != len(nodes):
            raise ValueError("node_sides must have one entry per RSS node")
        object.__setattr__(self, "room_bounds", bounds)
        object.__setattr__(self, "rss_nodes", nodes)
        object.__setattr__(self, "uwb_tx", tx)
        object.__setattr__(self, "uwb_rx", rx)
        object.__setattr__(self, "node_sides", sides)

    @property
    def room_width(self) -> float:
        return self.room_bounds[2] - self.room_bounds[0]

    @property
    def room_height(self) -> float:
        return self.room_bounds[3] - self.room_bounds[1]

    @property
    def room_area(self) -> float:
        return self.room_width * self.room_height

    def with_nodes(self, indices: Sequence[int]) -> "Deployment":
        """Deployment restricted to a subset of the RSS nodes."""
        idx = list(indices)
        return Deployment(
            self.room_bounds,
            self.rss_nodes[idx],
            self.uwb_tx,
            self.uwb_rx,
            tuple(self.node_sides[i] for i in idx),
            self.speed_of_light,
        )

    def translated(self, offset) -> "Deployment":
        dx, dy = (float(v) for v in offset)
        xmin, ymin, xmax, ymax = self.room_bounds
        shift = np.array([dx, dy])
        return Deployment(
            (xmin + dx, ymin + dy, xmax + dx, ymax + dy),
            self.rss_nodes + shift,
            self.uwb_tx + shift,
            self.uwb_rx + shift,
            self.node_sides,
            self.speed_of_light,
        )


@dataclass(frozen=True)
class VoxelGrid:
    """Regular square-voxel grid. Voxel ``n = iy * nx + ix`` so that a fixed
    ``iy`` is one image row (constant y)."""

    origin: tuple[float, float]
    voxel_width: float
    nx: int
    ny: int

    @property
    def n_voxels(self) -> int:
        return self.nx * self.ny

    def index(self, ix, iy):
        ix = np.asarray(ix)
        iy = np.asarray(iy)
        if np.any((ix < 0) | (ix >= self.nx) | (iy < 0) | (iy >= self.ny)):
            raise IndexError("voxel coordinates outside grid")
        return iy * self.nx + ix

    def unravel(self, n):
        n = np.asarray(n)
        if np.any((n < 0) | (n >= self.n_voxels)):
            raise IndexError("voxel index outside grid")
        return n % self.nx, n // self.nx

    def centers(self) -> np.ndarray:
        """Voxel centers, shape (N, 2), in index order."""
        ix, iy = self.unravel(np.arange(self.n_voxels))
        return np.column_stack(
            [
                self.origin[0] + (ix + 0.5) * self.voxel_width,
                self.origin[1] + (iy + 0.5) * self.voxel_width,
            ]
        )

    def center(self, n: int) -> tuple[float, float]:
        ix, iy = self.unravel(n)
        p = self.voxel_width
        return (self.origin[0] + (int(ix) + 0.5) * p, self.origin[1] + (int(iy) + 0.5) * p)

    def voxel_of(self, point) -> int:
        """Index of the voxel containing ``point`` (clipped to the grid)."""
        x, y = point
        ix = int(np.clip(math.floor((x - self.origin[0]) / self.voxel_width), 0, self.nx - 1))
        iy = int(np.clip(math.floor((y - self.origin[1]) / self.voxel_width), 0, self.ny - 1))
        return iy * self.nx + ix

    def row(self, iy: int) -> np.ndarray:
        return iy * self.nx + np.arange(self.nx)


@dataclass(frozen=True, eq=False)
class LinkSet:
    links: tuple[tuple[int, int], ...]
    lengths: np.ndarray

    def __len__(self):
        return len(self.links)

    def index(self) -> dict[tuple[int, int], int]:
        return {link: i for i, link in enumerate(self.links)}


def _cells(extent: float, p: float) -> int:
    # guard against 0.3 / 0.15 = 2.0000000000000004
    return int(math.ceil(extent / p - 1e-9))


def build_grid(deployment: Deployment, voxel_width: float) -> VoxelGrid:
    """Grid covering the room plus one extra voxel ring on every edge."""
    if not voxel_width > 0:
        raise ValueError(f"voxel width must be positive, got {voxel_width}")
    xmin, ymin, xmax, ymax = deployment.room_bounds
    if not (xmax > xmin and ymax > ymin):
        raise ValueError("room bounds have zero area")
    nx = _cells(xmax - xmin, voxel_width) + 2
    ny = _cells(ymax - ymin, voxel_width) + 2
    return VoxelGrid((xmin - voxel_width, ymin - voxel_width), float(voxel_width), nx, ny)


def make_links(deployment: Deployment, nodes: Sequence[int] | None = None) -> LinkSet:
    """All unordered pairs of the given RSS nodes (default: every node)."""
    nodes = sorted(range(len(deployment.rss_nodes)) if nodes is None else nodes)
    links = tuple((a, b) for i, a in enumerate(nodes) for b in nodes[i + 1:])
    pos = deployment.rss_nodes
    lengths = np.array([np.linalg.norm(pos[a] - pos[b]) for a, b in links])
    if np.any(lengths <= 0):
        raise ValueError("zero-length link: two RSS nodes share a position")
    return LinkSet(links, lengths)


def round_half_up(x):
    return np.floor(np.asarray(x) + 0.5).astype(int)


def excess_path(points, tx, rx) -> np.ndarray:
    """Bistatic path length beyond the direct tx-rx path, clamped at 0."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    tx = np.asarray(tx, dtype=float)
    rx = np.asarray(rx, dtype=float)
    d = (
        np.linalg.norm(pts - tx, axis=1)
        + np.linalg.norm(pts - rx, axis=1)
        - np.linalg.norm(tx - rx)
    )
    return np.maximum(d, 0.0)


def delay_bin_of_point(point, deployment: Deployment, sampling_period: float, los_bin: int) -> int:
    ex = excess_path(point, deployment.uwb_tx, deployment.uwb_rx)[0]
    return int(los_bin + round_half_up(ex / (deployment.speed_of_light * sampling_period)))


def bistatic_delay_bin(grid: VoxelGrid, deployment: Deployment, voxel_index: int,
                       sampling_period: float, los_bin: int) -> int:
    """Delay bin of the tx -> voxel center -> rx path."""
    if not sampling_period > 0:
        raise ValueError("sampling period must be positive")
    if not 0 <= voxel_index < grid.n_voxels:
        raise IndexError("voxel index outside grid")
    return delay_bin_of_point(grid.center(voxel_index), deployment, sampling_period, los_bin)


def delay_map(grid: VoxelGrid, deployment: Deployment, sampling_period: float,
              los_bin: int) -> np.ndarray:
    """``bistatic_delay_bin`` for every voxel at once, shape (N,)."""
    if not sampling_period > 0:
        raise ValueError("sampling period must be positive")
    ex = excess_path(grid.centers(), deployment.uwb_tx, deployment.uwb_rx)
    return los_bin + round_half_up(ex / (deployment.speed_of_light * sampling_period))
