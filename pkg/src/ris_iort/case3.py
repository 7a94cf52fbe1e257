"""Case 3: downlink energy beamforming charges the robots, which then transmit
simultaneously for over-the-air aggregation of a sum of unit-variance symbols.

Channels age between frames (Gauss-Markov, coefficient rho); agents only ever
observe noisy CSI estimates while the realized MSE uses the true channels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .channel import (
    AgingParams,
    ChannelSet,
    CsiModel,
    LinkParams,
    _cn_sample,
    dbm_to_watts,
    effective_channel,
    sample_device_channels,
)
from .geometry import Topology
from .ris import RisConfig, TWO_PI, codebook, random_config


@dataclass
class Case3Config:
    topology: Topology
    link: LinkParams
    tau_downlink: float
    tau_uplink: float
    eh_efficiency: float
    aging: AgingParams
    csi: CsiModel
    bs_power_budget: float          # watts
    penalty_weight: float = 10.0
    episode_steps: int = 1000
    noise_power_dbm: float = -100.0
    # Raw-action mapping ranges for the learned agents.
    b_scale: float = 1.0
    eta_log10_range: tuple[float, float] = (-6.0, 2.0)

    def __post_init__(self):
        if self.tau_downlink <= 0 or self.tau_uplink <= 0:
            raise ValueError("frame durations must be positive")
        if not 0 < self.eh_efficiency <= 1:
            raise ValueError("eh_efficiency must lie in (0, 1]")
        if self.bs_power_budget <= 0 or self.episode_steps < 1:
            raise ValueError("power budget and episode length must be positive")

    @property
    def n_robots(self) -> int:
        return len(self.topology.devices)

    @property
    def n_antennas(self) -> int:
        return self.topology.bs_list[0][1]

    @property
    def n_elements(self) -> int:
        return self.topology.n_ris_elements

    @property
    def noise_watts(self) -> float:
        return dbm_to_watts(self.noise_power_dbm)


@dataclass(frozen=True)
class Agent1Action:
    ris_downlink: RisConfig
    ris_uplink: RisConfig


@dataclass(frozen=True)
class Agent2Action:
    w_downlink: np.ndarray   # (A,) complex energy beam
    b: np.ndarray            # (K,) complex per-robot transmit scalars
    a: np.ndarray            # (A,) complex receive combiner
    eta: float               # denoising factor > 0

    def __post_init__(self):
        object.__setattr__(self, "w_downlink", np.asarray(self.w_downlink, dtype=complex))
        object.__setattr__(self, "b", np.asarray(self.b, dtype=complex))
        object.__setattr__(self, "a", np.asarray(self.a, dtype=complex))
        if self.eta <= 0:
            raise ValueError("eta must be positive")


@dataclass(frozen=True)
class AgentActions:
    agent1: Agent1Action
    agent2: Agent2Action


@dataclass(frozen=True)
class EnvState:
    previous_mse: float
    estimated_csi: np.ndarray

    def __post_init__(self):
        if self.previous_mse < 0:
            raise ValueError("previous_mse must be >= 0")

    def as_vector(self) -> np.ndarray:
        return np.concatenate([[self.previous_mse], self.estimated_csi])


def harvested_energy(w_dl: np.ndarray, effective_dl_channels: np.ndarray,
                     zeta: float, tau_d: float) -> np.ndarray:
    """Linear harvest: E_k = zeta * tau_d * |g_k^H w|^2, in joules."""
    channels = np.atleast_2d(np.asarray(effective_dl_channels, dtype=complex))
    return zeta * tau_d * np.abs(channels.conj() @ np.asarray(w_dl, dtype=complex)) ** 2


def aircomp_mse(true_ul_channels: np.ndarray, b: np.ndarray, a: np.ndarray,
                eta: float, sigma2: float) -> float:
    """MSE of the over-the-air sum of unit-variance symbols:

    sum_k |a^H h_k b_k / sqrt(eta) - 1|^2 + sigma^2 ||a||^2 / eta.
    """
    if eta <= 0:
        raise ValueError("eta must be positive")
    channels = np.atleast_2d(np.asarray(true_ul_channels, dtype=complex))
    a = np.asarray(a, dtype=complex)
    alignment = (channels.conj() @ a).conj() * np.asarray(b, dtype=complex) / math.sqrt(eta)
    misalignment = float(np.sum(np.abs(alignment - 1.0) ** 2))
    noise = sigma2 * float(np.linalg.norm(a) ** 2) / eta
    return misalignment + noise


class Case3Env:
    """Single-threaded per instance; owns the generator handed to reset()."""

    def __init__(self, cfg: Case3Config):
        self.cfg = cfg
        self.rng: Optional[np.random.Generator] = None
        self.channels: list[ChannelSet] = []
        self.elapsed = 0
        self.done = True

    # -- observation --------------------------------------------------------

    def _estimated_state(self, previous_mse: float) -> EnvState:
        err = self.cfg.csi.error_variance
        shared_g = self.channels[0].g_bs_ris
        est_g = shared_g if err == 0 else shared_g + _cn_sample(self.rng, shared_g.shape, err)
        parts = []
        for cs in self.channels:
            est_hd = cs.h_direct if err == 0 else cs.h_direct + _cn_sample(self.rng, cs.h_direct.shape, err)
            est_hr = cs.h_ris_dev if err == 0 else cs.h_ris_dev + _cn_sample(self.rng, cs.h_ris_dev.shape, err)
            parts.extend([est_hd.real, est_hd.imag, est_hr.real, est_hr.imag])
        parts.extend([est_g.real.ravel(), est_g.imag.ravel()])
        return EnvState(previous_mse, np.concatenate(parts))

    def state_dim(self) -> int:
        cfg = self.cfg
        k, a, n = cfg.n_robots, cfg.n_antennas, cfg.n_elements
        return 1 + 2 * (k * a + k * n + n * a)

    # -- lifecycle ----------------------------------------------------------

    def reset(self, rng: np.random.Generator) -> EnvState:
        self.rng = rng
        self.channels = sample_device_channels(rng, self.cfg.topology, self.cfg.link)
        self.elapsed = 0
        self.done = False
        return self._estimated_state(0.0)

    def _age_channels(self) -> None:
        rho = self.cfg.aging.rho
        if rho == 1.0:
            return
        innov = math.sqrt(1.0 - rho * rho)
        shared = self.channels[0]
        new_g = rho * shared.g_bs_ris + innov * _cn_sample(
            self.rng, shared.g_bs_ris.shape, shared.power_bs_ris)
        for cs in self.channels:
            cs.h_direct = rho * cs.h_direct + innov * _cn_sample(
                self.rng, cs.h_direct.shape, cs.power_direct)
            cs.h_ris_dev = rho * cs.h_ris_dev + innov * _cn_sample(
                self.rng, cs.h_ris_dev.shape, cs.power_ris_dev)
            cs.g_bs_ris = new_g.copy()

    def step(self, actions: AgentActions) -> tuple[EnvState, float, float, bool]:
        """Returns (next state, realized mse, reward, done)."""
        cfg = self.cfg
        if self.done:
            raise RuntimeError("step() called on a finished episode")
        a2 = actions.agent2
        for arr in (a2.w_downlink, a2.b, a2.a):
            if not np.all(np.isfinite(arr)):
                raise ValueError("non-finite action entries")
        if not math.isfinite(a2.eta):
            raise ValueError("non-finite action entries")

        self._age_channels()

        w = a2.w_downlink
        w_power = float(np.linalg.norm(w) ** 2)
        if w_power > cfg.bs_power_budget:
            w = w * math.sqrt(cfg.bs_power_budget / w_power)

        dl = np.array([effective_channel(cs, actions.agent1.ris_downlink)
                       for cs in self.channels])
        energy = harvested_energy(w, dl, cfg.eh_efficiency, cfg.tau_downlink)

        # Energy causality: |b_k|^2 * tau_u <= E_k; excess is clipped and penalized.
        caps = energy / cfg.tau_uplink
        requested = np.abs(a2.b) ** 2
        excess = np.maximum(0.0, requested - caps)
        scale = np.sqrt(np.where(requested > caps, caps / np.maximum(requested, 1e-300), 1.0))
        b_clipped = a2.b * scale

        ul = np.array([effective_channel(cs, actions.agent1.ris_uplink)
                       for cs in self.channels])
        mse = aircomp_mse(ul, b_clipped, a2.a, a2.eta, cfg.noise_watts)
        reward = -mse - cfg.penalty_weight * float(excess.sum())

        self.elapsed += 1
        self.done = self.elapsed >= cfg.episode_steps
        return self._estimated_state(mse), mse, reward, self.done

    # -- raw-action mapping for the trainers --------------------------------

    def agent1_dim(self) -> int:
        return 2 * self.cfg.n_elements

    def agent2_dim(self) -> int:
        return 2 * (2 * self.cfg.n_antennas) + 2 * self.cfg.n_robots + 1

    def agent1_from_raw(self, raw: np.ndarray) -> Agent1Action:
        """raw in [-1, 1]^(2N) -> continuous RIS phases for downlink and uplink."""
        n = self.cfg.n_elements
        phases = (np.asarray(raw, dtype=float) + 1.0) * np.pi  # [0, 2pi]
        return Agent1Action(RisConfig(phases[:n]), RisConfig(phases[n:]))

    def agent1_from_discrete(self, index: int, bit_depth: int = 1) -> Agent1Action:
        """Joint codebook index over downlink+uplink b-bit configurations."""
        n = self.cfg.n_elements
        levels = 2 ** bit_depth
        digits = (index // levels ** np.arange(2 * n - 1, -1, -1)) % levels
        phases = codebook(bit_depth)[digits]
        return Agent1Action(RisConfig(phases[:n], bit_depth),
                            RisConfig(phases[n:], bit_depth))

    def n_discrete_agent1_actions(self, bit_depth: int = 1) -> int:
        return (2 ** bit_depth) ** (2 * self.cfg.n_elements)

    def agent2_from_raw(self, raw: np.ndarray) -> Agent2Action:
        """raw in [-1, 1]^d2 -> (w, b, a, eta) inside their declared ranges."""
        cfg = self.cfg
        a_dim, k = cfg.n_antennas, cfg.n_robots
        raw = np.asarray(raw, dtype=float)
        parts = np.split(raw, [2 * a_dim, 2 * a_dim + 2 * k, 4 * a_dim + 2 * k])
        w_raw, b_raw, a_raw, eta_raw = parts
        w = w_raw[:a_dim] + 1j * w_raw[a_dim:]
        norm = np.linalg.norm(w)
        w = w * math.sqrt(cfg.bs_power_budget) / max(norm, 1.0)
        b = cfg.b_scale * (b_raw[:k] + 1j * b_raw[k:])
        a_vec = a_raw[:a_dim] + 1j * a_raw[a_dim:]
        lo, hi = cfg.eta_log10_range
        eta = 10.0 ** (lo + (float(eta_raw[0]) + 1.0) / 2.0 * (hi - lo))
        return Agent2Action(w, b, a_vec, eta)

    def random_actions(self, rng: np.random.Generator) -> AgentActions:
        a1 = Agent1Action(random_config(rng, self.cfg.n_elements),
                          random_config(rng, self.cfg.n_elements))
        a2 = self.agent2_from_raw(rng.uniform(-1.0, 1.0, size=self.agent2_dim()))
        return AgentActions(a1, a2)


# -- exhaustive/grid oracle ---------------------------------------------------

def _mixing_candidates(vectors: np.ndarray, resolution: int) -> np.ndarray:
    """Unit-norm mixtures (1-t) v1_hat + t v2_hat on a nested t-grid."""
    units = vectors / np.linalg.norm(vectors, axis=1, keepdims=True)
    if units.shape[0] == 1:
        return units
    ts = np.linspace(0.0, 1.0, resolution + 1)
    mixes = (1.0 - ts)[:, None] * units[0] + ts[:, None] * units[1]
    norms = np.linalg.norm(mixes, axis=1, keepdims=True)
    keep = norms[:, 0] > 1e-12
    return mixes[keep] / norms[keep]


def grid_oracle_mse(cfg: Case3Config, frozen_channels: Sequence[ChannelSet],
                    grid_resolution: int = 4) -> tuple[AgentActions, float]:
    """Exhaustive search over 1-bit RIS pairs with structured transceiver
    candidates on nested grids; per candidate, the transmit scalars are set to
    the energy-feasible alignment optimum in closed form.

    Doubling grid_resolution refines every grid in place, so the returned MSE
    is monotone non-increasing along resolutions 2, 4, 8, ...
    """
    k, n = cfg.n_robots, cfg.n_elements
    if k > 2 or n > 4:
        raise ValueError(f"oracle guard: K <= 2 and N <= 4 required, got K={k}, N={n}")
    if grid_resolution < 1:
        raise ValueError("grid_resolution must be >= 1")
    sigma2 = cfg.noise_watts
    phases_1bit = codebook(1)

    ris_configs = []
    for rank in range(2 ** n):
        digits = (rank // 2 ** np.arange(n - 1, -1, -1)) % 2
        ris_configs.append(RisConfig(phases_1bit[digits], bit_depth=1))

    # Downlink candidates: (ris_dl, w) pairs with their per-robot energy caps.
    downlink = []
    for ris in ris_configs:
        g = np.array([effective_channel(cs, ris) for cs in frozen_channels])
        for w_hat in _mixing_candidates(g, grid_resolution):
            w = math.sqrt(cfg.bs_power_budget) * w_hat
            caps = harvested_energy(w, g, cfg.eh_efficiency, cfg.tau_downlink) / cfg.tau_uplink
            downlink.append((ris, w, caps))

    # Uplink candidates: (ris_ul, a) pairs with the per-robot projections.
    uplink = []
    for ris in ris_configs:
        h = np.array([effective_channel(cs, ris) for cs in frozen_channels])
        for a_vec in _mixing_candidates(h, grid_resolution):
            proj = np.abs(h.conj() @ a_vec)  # |a^H h_k|, with ||a|| = 1
            uplink.append((ris, a_vec, proj, h))

    best_mse = np.inf
    best_actions: Optional[AgentActions] = None
    for ris_dl, w, caps in downlink:
        for ris_ul, a_vec, proj, h in uplink:
            anchor = float(np.min(caps * proj ** 2))
            if anchor <= 0:
                etas = np.array([1.0])
            else:
                lo, hi = math.log10(anchor) - 1.0, math.log10(anchor) + 2.0
                etas = np.concatenate([[anchor],
                                       10.0 ** np.linspace(lo, hi, grid_resolution + 1)])
            for eta in etas:
                mags = np.minimum(np.sqrt(caps), math.sqrt(eta) / np.maximum(proj, 1e-300))
                misalign = float(np.sum((1.0 - proj * mags / math.sqrt(eta)) ** 2))
                mse = misalign + sigma2 / eta
                if mse < best_mse:
                    best_mse = mse
                    # b_k phase cancels arg(a^H h_k) = -arg(h_k^H a).
                    phase = np.exp(1j * np.angle(h.conj() @ a_vec))
                    b = mags * phase
                    best_actions = AgentActions(
                        Agent1Action(ris_dl, ris_ul),
                        Agent2Action(w, b, a_vec, float(eta)))
    return best_actions, float(best_mse)
