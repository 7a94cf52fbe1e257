"""Scene geometry: positions, rectangular obstacles, topology, and LoS blockage."""

from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np


@dataclass(frozen=True)
class Position:
    x: float
    y: float
    z: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x, self.y, self.z)):
            raise ValueError(f"position coordinates must be finite, got {self}")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)

    def distance_to(self, other: "Position") -> float:
        return float(np.linalg.norm(self.as_array() - other.as_array()))


@dataclass(frozen=True)
class Obstacle:
    """Axis-aligned box; degenerate extents (walls, segments) are allowed."""

    corner_min: Position
    corner_max: Position

    def __post_init__(self):
        lo, hi = self.corner_min.as_array(), self.corner_max.as_array()
        if np.any(lo > hi):
            raise ValueError("corner_min must be <= corner_max componentwise")

    def contains_interior(self, p: Position) -> bool:
        lo, hi = self.corner_min.as_array(), self.corner_max.as_array()
        q = p.as_array()
        return bool(np.all(q > lo) & np.all(q < hi))

    def intersects_segment(self, a: Position, b: Position) -> bool:
        """Closed segment vs closed box (slab test); touching the boundary counts."""
        p = a.as_array()
        d = b.as_array() - p
        lo, hi = self.corner_min.as_array(), self.corner_max.as_array()
        t_lo, t_hi = 0.0, 1.0
        for i in range(3):
            if d[i] == 0.0:
                if p[i] < lo[i] or p[i] > hi[i]:
                    return False
            else:
                t1 = (lo[i] - p[i]) / d[i]
                t2 = (hi[i] - p[i]) / d[i]
                if t1 > t2:
                    t1, t2 = t2, t1
                t_lo = max(t_lo, t1)
                t_hi = min(t_hi, t2)
                if t_lo > t_hi:
                    return False
        return t_lo <= t_hi


# Links that the blockage test is applied to. The RIS is assumed deployed with
# clear views of both the BS and the service area, so only the direct link is
# blocked by default; override via Topology.blocked_links.
LINK_DIRECT = "direct"
LINK_BS_RIS = "bs_ris"
LINK_RIS_DEV = "ris_dev"


@dataclass(frozen=True)
class Topology:
    bs_list: tuple[tuple[Position, int], ...]
    ris: tuple[Position, int]
    devices: tuple[Position, ...]
    targets: tuple[Position, ...] = ()
    obstacles: tuple[Obstacle, ...] = ()
    blocked_links: frozenset[str] = frozenset({LINK_DIRECT})

    def __post_init__(self):
        # Tolerate lists in scenario-built configs.
        object.__setattr__(self, "bs_list", tuple((p, int(a)) for p, a in self.bs_list))
        object.__setattr__(self, "devices", tuple(self.devices))
        object.__setattr__(self, "targets", tuple(self.targets))
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        object.__setattr__(self, "blocked_links", frozenset(self.blocked_links))
        for _, n_ant in self.bs_list:
            if n_ant < 1:
                raise ValueError("antenna_count must be >= 1")
        if self.ris[1] < 1:
            raise ValueError("RIS element_count must be >= 1")
        bad = self.blocked_links - {LINK_DIRECT, LINK_BS_RIS, LINK_RIS_DEV}
        if bad:
            raise ValueError(f"unknown link classes in blocked_links: {sorted(bad)}")
        for dev in self.devices:
            for obs in self.obstacles:
                if obs.contains_interior(dev):
                    raise ValueError(f"device at {dev} lies inside an obstacle")

    @property
    def n_ris_elements(self) -> int:
        return self.ris[1]


def los_blocked(topology: Topology, a: Position, b: Position) -> bool:
    """True iff the segment from a to b touches or crosses any obstacle."""
    if a == b:
        raise ValueError("los_blocked requires two distinct endpoints")
    return any(obs.intersects_segment(a, b) for obs in topology.obstacles)
