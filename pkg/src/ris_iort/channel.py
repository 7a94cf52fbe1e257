"""Large/small-scale fading, cascaded RIS channels, channel aging, and CSI error.

All channel entries are linear complex amplitudes (voltage gain); powers are
linear watts unless a name says dB/dBm. Every random draw goes through a
caller-supplied numpy Generator, so simulations are reproducible and instances
can run concurrently with independent generators.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import (
    LINK_BS_RIS,
    LINK_DIRECT,
    LINK_RIS_DEV,
    Position,
    Topology,
    los_blocked,
)

# Far-field validity guard: distances below this are clamped before the power law.
D_MIN_METERS = 0.5

# Rician K at or above this is treated as a pure LoS (deterministic) link.
K_LOS_ONLY = 1e6


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class PerLinkClass:
    """One float per link class (BS-device, BS-RIS, RIS-device)."""

    direct: float
    bs_ris: float
    ris_dev: float

    def get(self, link_class: str) -> float:
        try:
            return {LINK_DIRECT: self.direct, LINK_BS_RIS: self.bs_ris,
                    LINK_RIS_DEV: self.ris_dev}[link_class]
        except KeyError:
            raise ValueError(f"unknown link class {link_class!r}") from None


@dataclass(frozen=True)
class LinkParams:
    ref_loss_db: float
    exponent: PerLinkClass
    rician_k: PerLinkClass
    noise_power_dbm: float

    def __post_init__(self):
        if min(self.exponent.direct, self.exponent.bs_ris, self.exponent.ris_dev) <= 0:
            raise ValueError("path loss exponents must be > 0")
        if min(self.rician_k.direct, self.rician_k.bs_ris, self.rician_k.ris_dev) < 0:
            raise ValueError("Rician K factors must be >= 0")

    @classmethod
    def uniform(cls, ref_loss_db: float, exponent: float, rician_k: float,
                noise_power_dbm: float) -> "LinkParams":
        return cls(
            ref_loss_db=ref_loss_db,
            exponent=PerLinkClass(exponent, exponent, exponent),
            rician_k=PerLinkClass(rician_k, rician_k, rician_k),
            noise_power_dbm=noise_power_dbm,
        )

    @property
    def noise_power_watts(self) -> float:
        return dbm_to_watts(self.noise_power_dbm)


@dataclass
class ChannelSet:
    """Direct, BS->RIS, and RIS->device blocks for one BS-device link.

    power_* hold each block's large-scale (path loss) power; aging needs them
    to keep the stationary marginal power of every entry unchanged.
    """

    h_direct: np.ndarray    # (A,) complex
    g_bs_ris: np.ndarray    # (N, A) complex
    h_ris_dev: np.ndarray   # (N,) complex
    power_direct: float = 1.0
    power_bs_ris: float = 1.0
    power_ris_dev: float = 1.0

    def __post_init__(self):
        self.h_direct = np.asarray(self.h_direct, dtype=complex)
        self.g_bs_ris = np.asarray(self.g_bs_ris, dtype=complex)
        self.h_ris_dev = np.asarray(self.h_ris_dev, dtype=complex)
        n, a = self.g_bs_ris.shape
        if self.h_direct.shape != (a,) or self.h_ris_dev.shape != (n,):
            raise ValueError("channel block dimensions are inconsistent")
        for block in (self.h_direct, self.g_bs_ris, self.h_ris_dev):
            if not np.all(np.isfinite(block)):
                raise ValueError("channel entries must be finite")

    @property
    def n_antennas(self) -> int:
        return self.h_direct.shape[0]

    @property
    def n_elements(self) -> int:
        return self.h_ris_dev.shape[0]

    def copy(self) -> "ChannelSet":
        return ChannelSet(self.h_direct.copy(), self.g_bs_ris.copy(),
                          self.h_ris_dev.copy(), self.power_direct,
                          self.power_bs_ris, self.power_ris_dev)


@dataclass(frozen=True)
class AgingParams:
    """First-order Gauss-Markov temporal correlation; rho=1 freezes the channel.

    The paired robot velocity (1 m/s at rho=0.99, 0 m/s at rho=1) is
    documentation metadata only; rho is what the model consumes.
    """

    rho: float

    def __post_init__(self):
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError("rho must lie in [0, 1]")


@dataclass(frozen=True)
class CsiModel:
    """Additive circularly-symmetric complex Gaussian estimation error per entry."""

    error_variance: float

    def __post_init__(self):
        if self.error_variance < 0:
            raise ValueError("error_variance must be >= 0")


def path_loss(d: float, lp: LinkParams, link_class: str = LINK_DIRECT) -> float:
    """Linear power gain 10^(-(ref_loss_db + 10*n*log10(d))/10), d clamped to D_MIN."""
    d = max(float(d), D_MIN_METERS)
    exponent = lp.exponent.get(link_class)
    loss_db = lp.ref_loss_db + 10.0 * exponent * np.log10(d)
    return float(db_to_linear(-loss_db))


def _cn_sample(rng: np.random.Generator, shape, variance: float = 1.0) -> np.ndarray:
    """CN(0, variance) entries: independent circularly-symmetric complex Gaussians."""
    scale = np.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def _ula_ramp(n: int, from_pos: Position, to_pos: Position) -> np.ndarray:
    """Unit-modulus phase ramp of a half-wavelength ULA at from_pos facing to_pos."""
    theta = np.arctan2(to_pos.y - from_pos.y, to_pos.x - from_pos.x)
    return np.exp(1j * np.pi * np.arange(n) * np.sin(theta))


def _rician_block(rng: np.random.Generator, los: np.ndarray, pl: float,
                  k_factor: float, blocked: bool) -> np.ndarray:
    """sqrt(pl) * (sqrt(K/(K+1)) * LoS + sqrt(1/(K+1)) * CN(0,1)).

    A blocked link loses its LoS component and falls back to pure Rayleigh
    (K treated as 0), which keeps the mean per-entry power equal to pl.
    """
    k = 0.0 if blocked else float(k_factor)
    if k >= K_LOS_ONLY:
        return np.sqrt(pl) * los
    scatter = _cn_sample(rng, los.shape)
    return np.sqrt(pl) * (np.sqrt(k / (k + 1.0)) * los + np.sqrt(1.0 / (k + 1.0)) * scatter)


def sample_channel(rng: np.random.Generator, topology: Topology, lp: LinkParams,
                   bs_index: int = 0, device_index: int = 0) -> ChannelSet:
    """Draw a fresh ChannelSet for one BS-device link.

    Expected per-entry power of every block equals that block's path loss.
    """
    bs_pos, n_ant = topology.bs_list[bs_index]
    ris_pos, n_elem = topology.ris
    dev_pos = topology.devices[device_index]

    pl_direct = path_loss(bs_pos.distance_to(dev_pos), lp, LINK_DIRECT)
    pl_bs_ris = path_loss(bs_pos.distance_to(ris_pos), lp, LINK_BS_RIS)
    pl_ris_dev = path_loss(ris_pos.distance_to(dev_pos), lp, LINK_RIS_DEV)

    def is_blocked(link_class: str, a: Position, b: Position) -> bool:
        return link_class in topology.blocked_links and los_blocked(topology, a, b)

    los_direct = _ula_ramp(n_ant, bs_pos, dev_pos)
    # Rank-1 outer ramp: RIS arrival ramp times BS departure ramp.
    los_bs_ris = np.outer(_ula_ramp(n_elem, ris_pos, bs_pos), _ula_ramp(n_ant, bs_pos, ris_pos))
    los_ris_dev = _ula_ramp(n_elem, ris_pos, dev_pos)

    h_direct = _rician_block(rng, los_direct, pl_direct, lp.rician_k.direct,
                             is_blocked(LINK_DIRECT, bs_pos, dev_pos))
    g_bs_ris = _rician_block(rng, los_bs_ris, pl_bs_ris, lp.rician_k.bs_ris,
                             is_blocked(LINK_BS_RIS, bs_pos, ris_pos))
    h_ris_dev = _rician_block(rng, los_ris_dev, pl_ris_dev, lp.rician_k.ris_dev,
                              is_blocked(LINK_RIS_DEV, ris_pos, dev_pos))
    return ChannelSet(h_direct, g_bs_ris, h_ris_dev,
                      pl_direct, pl_bs_ris, pl_ris_dev)


def sample_device_channels(rng: np.random.Generator, topology: Topology,
                           lp: LinkParams, bs_index: int = 0) -> list[ChannelSet]:
    """ChannelSets for every device of one BS, sharing a single BS->RIS draw."""
    sets = [sample_channel(rng, topology, lp, bs_index, k)
            for k in range(len(topology.devices))]
    for cs in sets[1:]:
        cs.g_bs_ris = sets[0].g_bs_ris.copy()
        cs.power_bs_ris = sets[0].power_bs_ris
    return sets


def effective_channel(cs: ChannelSet, ris) -> np.ndarray:
    """h_eff = h_direct + g_bs_ris^H diag(e^{j theta}) h_ris_dev.

    The conjugate-transpose convention on the BS->RIS block is fixed
    project-wide; callers must not re-conjugate.
    """
    phases = np.asarray(ris.phases, dtype=float)
    if phases.shape[0] != cs.n_elements:
        raise ValueError(
            f"RIS has {phases.shape[0]} elements but channel expects {cs.n_elements}")
    reflect = np.exp(1j * phases)
    return cs.h_direct + cs.g_bs_ris.conj().T @ (reflect * cs.h_ris_dev)


def cascade_matrix(cs: ChannelSet) -> np.ndarray:
    """(N, A) matrix V with effective_channel = h_direct + e^{j theta} @ V."""
    return cs.g_bs_ris.conj() * cs.h_ris_dev[:, None]


def age_channel(rng: np.random.Generator, cs: ChannelSet, ap: AgingParams) -> ChannelSet:
    """One Gauss-Markov step: h' = rho*h + sqrt(1-rho^2)*CN(0, large-scale power)."""
    rho = ap.rho
    innov = np.sqrt(max(0.0, 1.0 - rho * rho))
    if rho == 1.0:
        return cs.copy()

    def step(block: np.ndarray, power: float) -> np.ndarray:
        return rho * block + innov * _cn_sample(rng, block.shape, power)

    return ChannelSet(step(cs.h_direct, cs.power_direct),
                      step(cs.g_bs_ris, cs.power_bs_ris),
                      step(cs.h_ris_dev, cs.power_ris_dev),
                      cs.power_direct, cs.power_bs_ris, cs.power_ris_dev)


def estimate_csi(rng: np.random.Generator, cs: ChannelSet, cm: CsiModel) -> ChannelSet:
    """Estimated channels: true entries plus independent CN(0, error_variance)."""
    if cm.error_variance == 0.0:
        return cs.copy()
    return ChannelSet(cs.h_direct + _cn_sample(rng, cs.h_direct.shape, cm.error_variance),
                      cs.g_bs_ris + _cn_sample(rng, cs.g_bs_ris.shape, cm.error_variance),
                      cs.h_ris_dev + _cn_sample(rng, cs.h_ris_dev.shape, cm.error_variance),
                      cs.power_direct, cs.power_bs_ris, cs.power_ris_dev)
