"""Case 1: multi-robot motion on an obstacle map with RIS-aided downlink.

The BS superposes one stream per robot (NOMA with SIC, or OMA bandwidth
splitting as the baseline). A global agent picks the RIS configuration and the
decoding order; each robot's local agent picks a heading and a transmit power
level. Rewards follow the sum-rate (global) and rate/time/goal (local) shaping.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .channel import ChannelSet, LinkParams, dbm_to_watts, effective_channel, sample_device_channels
from .geometry import Obstacle, Position, Topology
from .ris import RisConfig, config_from_indices

# 8-connected compass headings plus STAY, as (dx, dy) unit vectors.
_DIAG = 1.0 / math.sqrt(2.0)
HEADINGS: tuple[tuple[float, float], ...] = (
    (0.0, 1.0),        # N
    (_DIAG, _DIAG),    # NE
    (1.0, 0.0),        # E
    (_DIAG, -_DIAG),   # SE
    (0.0, -1.0),       # S
    (-_DIAG, -_DIAG),  # SW
    (-1.0, 0.0),       # W
    (-_DIAG, _DIAG),   # NW
    (0.0, 0.0),        # STAY
)
STAY = 8


@dataclass(frozen=True)
class RewardWeights:
    rate_w: float
    time_penalty_w: float
    goal_bonus: float


@dataclass
class Case1Config:
    topology: Topology
    link: LinkParams
    destinations: tuple[Position, ...]
    deadline: int
    speed: float
    decision_interval: float
    power_levels: tuple[float, ...]
    max_power_dbm: float
    access_mode: str = "NOMA"
    motion_power: float = 1.0
    circuit_power: float = 0.5
    reward_weights: RewardWeights = field(default_factory=lambda: RewardWeights(1.0, 0.1, 10.0))
    ris_bit_depth: int = 2
    arrival_radius: Optional[float] = None  # default: half a step length

    def __post_init__(self):
        self.destinations = tuple(self.destinations)
        self.power_levels = tuple(float(p) for p in self.power_levels)
        if self.access_mode not in ("NOMA", "OMA"):
            raise ValueError("access_mode must be NOMA or OMA")
        if self.speed <= 0 or self.decision_interval <= 0 or self.deadline < 1:
            raise ValueError("speed, decision_interval, and deadline must be positive")
        if len(self.destinations) != self.n_robots:
            raise ValueError("one destination per robot is required")
        budget = self.power_budget_watts
        if any(p < 0 or p > budget + 1e-12 for p in self.power_levels):
            raise ValueError("power levels must lie in [0, budget]")
        if self.arrival_radius is None:
            self.arrival_radius = 0.5 * self.step_length

    @property
    def n_robots(self) -> int:
        return len(self.topology.devices)

    @property
    def power_budget_watts(self) -> float:
        return dbm_to_watts(self.max_power_dbm)

    @property
    def step_length(self) -> float:
        return self.speed * self.decision_interval


@dataclass
class RobotState:
    position: Position
    destination: Position
    arrived: bool = False
    cumulative_bits: float = 0.0
    cumulative_energy: float = 0.0
    elapsed: int = 0


@dataclass(frozen=True)
class GlobalAction:
    ris_phase_indices: np.ndarray  # (N,) codebook indices
    decoding_order: tuple[int, ...]  # permutation of 0..K-1

    def __post_init__(self):
        object.__setattr__(self, "ris_phase_indices",
                           np.asarray(self.ris_phase_indices, dtype=int))
        object.__setattr__(self, "decoding_order", tuple(self.decoding_order))
        if sorted(self.decoding_order) != list(range(len(self.decoding_order))):
            raise ValueError("decoding_order must be a permutation of 0..K-1")


@dataclass(frozen=True)
class LocalAction:
    heading: int  # index into HEADINGS
    power_index: int

    def __post_init__(self):
        if not 0 <= self.heading < len(HEADINGS):
            raise ValueError("invalid heading")


def sum_rate_noma(gains: Sequence[float], powers: Sequence[float],
                  order: Sequence[int], noise: float) -> np.ndarray:
    """Downlink NOMA with SIC: the robot at order position i is decoded against
    interference from robots decoded after it only.

    rate_k = log2(1 + p_k g_k / (sum_{j later} p_j g_k + noise)), bits/s/Hz.
    """
    gains = np.asarray(gains, dtype=float)
    powers = np.asarray(powers, dtype=float)
    if sorted(order) != list(range(len(gains))):
        raise ValueError("order must be a permutation of 0..K-1")
    rates = np.zeros(len(gains))
    for pos, k in enumerate(order):
        later = list(order[pos + 1:])
        interference = gains[k] * powers[later].sum() if later else 0.0
        rates[k] = np.log2(1.0 + powers[k] * gains[k] / (interference + noise))
    return rates


def sum_rate_oma(gains: Sequence[float], powers: Sequence[float],
                 noise: float) -> np.ndarray:
    """Equal orthogonal shares: rate_k = (1/K) log2(1 + p_k g_k / (noise/K))."""
    gains = np.asarray(gains, dtype=float)
    powers = np.asarray(powers, dtype=float)
    k = len(gains)
    share = 1.0 / k
    return share * np.log2(1.0 + powers * gains / (share * noise))


def energy_efficiency(bits: float, joules: float) -> float:
    if joules <= 0:
        raise ValueError("energy must be positive to define efficiency")
    return bits / joules


def global_reward(rates: Sequence[float]) -> float:
    return float(np.sum(rates))


def local_reward(rate_k: float, arrived_now: bool, weights: RewardWeights) -> float:
    return (weights.rate_w * rate_k - weights.time_penalty_w
            + (weights.goal_bonus if arrived_now else 0.0))


class Case1Env:
    """Markov environment over robot positions and RIS-aided channels.

    Single-threaded per instance; owns the generator handed to reset().
    """

    def __init__(self, cfg: Case1Config):
        self.cfg = cfg
        self.rng: Optional[np.random.Generator] = None
        self.robots: list[RobotState] = []
        self.channels: list[ChannelSet] = []
        self.elapsed = 0
        self.done = True
        self.last_rates = np.zeros(cfg.n_robots)

    # -- state vectors ------------------------------------------------------

    def _global_state(self) -> np.ndarray:
        parts = []
        for robot in self.robots:
            parts.append([robot.position.x, robot.position.y])
        for cs in self.channels:
            parts.append(np.concatenate([cs.h_direct.real, cs.h_direct.imag,
                                         cs.h_ris_dev.real, cs.h_ris_dev.imag]))
        shared = self.channels[0].g_bs_ris
        parts.append(np.concatenate([shared.real.ravel(), shared.imag.ravel()]))
        return np.concatenate([np.asarray(p, dtype=float).ravel() for p in parts])

    def _local_state(self, k: int) -> np.ndarray:
        robot = self.robots[k]
        cs = self.channels[k]
        return np.concatenate([
            [robot.position.x, robot.position.y,
             robot.destination.x, robot.destination.y],
            cs.h_direct.real, cs.h_direct.imag,
        ])

    # -- lifecycle ----------------------------------------------------------

    def reset(self, rng: np.random.Generator) -> tuple[np.ndarray, list[np.ndarray]]:
        cfg = self.cfg
        for start in cfg.topology.devices:
            for obs in cfg.topology.obstacles:
                if obs.contains_interior(start):
                    raise ValueError(f"start position {start} lies inside an obstacle")
        self.rng = rng
        self.robots = [RobotState(position=start, destination=dest)
                       for start, dest in zip(cfg.topology.devices, cfg.destinations)]
        self.channels = self._sample_channels()
        self.elapsed = 0
        self.done = False
        self.last_rates = np.zeros(cfg.n_robots)
        return self._global_state(), [self._local_state(k) for k in range(cfg.n_robots)]

    def _sample_channels(self) -> list[ChannelSet]:
        # Blocked moves keep robots outside obstacle interiors, so the moved
        # topology always satisfies the Topology invariants.
        topo = self.cfg.topology
        moved = Topology(bs_list=topo.bs_list, ris=topo.ris,
                         devices=tuple(r.position for r in self.robots),
                         targets=topo.targets, obstacles=topo.obstacles,
                         blocked_links=topo.blocked_links)
        return sample_device_channels(self.rng, moved, self.cfg.link)

    def _try_move(self, robot: RobotState, heading: int) -> tuple[Position, bool, bool]:
        """Returns (new position, attempted, blocked)."""
        if heading == STAY:
            return robot.position, False, False
        dx, dy = HEADINGS[heading]
        step = self.cfg.step_length
        target = Position(robot.position.x + dx * step,
                          robot.position.y + dy * step,
                          robot.position.z)
        for obs in self.cfg.topology.obstacles:
            if obs.intersects_segment(robot.position, target):
                return robot.position, True, True
        return target, True, False

    def step(self, ga: GlobalAction, las: Sequence[LocalAction]):
        """Advance one decision interval.

        Returns (global_state, local_states, global_reward, local_rewards, done).
        """
        cfg = self.cfg
        if self.done:
            raise RuntimeError("step() called on a finished episode")
        if len(las) != cfg.n_robots:
            raise ValueError("one local action per robot is required")

        arrived_now = [False] * cfg.n_robots
        attempted = [False] * cfg.n_robots
        for k, (robot, action) in enumerate(zip(self.robots, las)):
            if robot.arrived:
                continue
            new_pos, attempted[k], _ = self._try_move(robot, action.heading)
            robot.position = new_pos
            if robot.position.distance_to(robot.destination) <= cfg.arrival_radius:
                robot.arrived = True
                arrived_now[k] = True

        # Channels are resampled from the new geometry every interval.
        self.channels = self._sample_channels()
        ris = config_from_indices(ga.ris_phase_indices, cfg.ris_bit_depth)
        gains = np.array([np.linalg.norm(effective_channel(cs, ris)) ** 2
                          for cs in self.channels])

        powers = np.zeros(cfg.n_robots)
        for k, (robot, action) in enumerate(zip(self.robots, las)):
            if not robot.arrived or arrived_now[k]:
                powers[k] = cfg.power_levels[action.power_index]
        # Robots that arrived before this step are excluded from transmission.
        active = np.array([not r.arrived or arrived_now[k]
                           for k, r in enumerate(self.robots)])
        powers[~active] = 0.0
        budget = cfg.power_budget_watts
        total = powers.sum()
        if total > budget:
            powers *= budget / total

        noise = cfg.link.noise_power_watts
        rates = np.zeros(cfg.n_robots)
        idx = np.flatnonzero(active)
        if idx.size:
            if cfg.access_mode == "NOMA":
                sub_order = [k for k in ga.decoding_order if active[k]]
                remap = {k: i for i, k in enumerate(idx)}
                rates[idx] = sum_rate_noma(gains[idx], powers[idx],
                                           [remap[k] for k in sub_order], noise)
            else:
                rates[idx] = sum_rate_oma(gains[idx], powers[idx], noise)

        interval = cfg.decision_interval
        local_rewards = []
        for k, robot in enumerate(self.robots):
            if active[k]:
                robot.cumulative_bits += rates[k] * interval  # 1 Hz reference bandwidth
                energy = (cfg.circuit_power + powers[k]) * interval
                if attempted[k]:
                    energy += cfg.motion_power * interval
                robot.cumulative_energy += energy
                local_rewards.append(local_reward(rates[k], arrived_now[k],
                                                  cfg.reward_weights))
            else:
                local_rewards.append(0.0)
            robot.elapsed += 1

        self.last_rates = rates
        self.elapsed += 1
        self.done = all(r.arrived for r in self.robots) or self.elapsed >= cfg.deadline
        g_reward = global_reward(rates)
        return (self._global_state(), [self._local_state(k) for k in range(cfg.n_robots)],
                g_reward, local_rewards, self.done)

    # -- discrete action catalogues for the trainers ------------------------

    def global_action_count(self) -> int:
        n, b = self.cfg.topology.n_ris_elements, self.cfg.ris_bit_depth
        return (2 ** (n * b)) * math.factorial(self.cfg.n_robots)

    def global_action_from_index(self, index: int) -> GlobalAction:
        n, b = self.cfg.topology.n_ris_elements, self.cfg.ris_bit_depth
        levels = 2 ** b
        n_orders = math.factorial(self.cfg.n_robots)
        ris_rank, order_rank = divmod(index, n_orders)
        order = list(itertools.permutations(range(self.cfg.n_robots)))[order_rank]
        indices = (ris_rank // levels ** np.arange(n - 1, -1, -1)) % levels
        return GlobalAction(indices, order)

    def local_action_count(self) -> int:
        return len(HEADINGS) * len(self.cfg.power_levels)

    def local_action_from_index(self, index: int) -> LocalAction:
        heading, power_index = divmod(index, len(self.cfg.power_levels))
        return LocalAction(heading, power_index)

    def arrival_rate(self) -> float:
        return float(np.mean([r.arrived for r in self.robots]))

    def episode_energy_efficiency(self) -> float:
        bits = sum(r.cumulative_bits for r in self.robots)
        joules = sum(r.cumulative_energy for r in self.robots)
        return energy_efficiency(bits, joules) if joules > 0 else 0.0
