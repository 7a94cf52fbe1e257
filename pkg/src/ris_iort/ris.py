"""RIS configurations: quantized phase codebooks, random draws, and the
exhaustive-search oracle used by the acceptance checks."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .channel import ChannelSet, cascade_matrix

TWO_PI = 2.0 * np.pi

# 2^(N*b) configurations at most; beyond this the oracle refuses.
ENUMERATION_GUARD_BITS = 20


@dataclass(frozen=True)
class RisConfig:
    """Per-element phase shifts in [0, 2pi), unit amplitude.

    bit_depth=b constrains every phase to the codebook {2*pi*k / 2^b}.
    """

    phases: np.ndarray
    bit_depth: Optional[int] = None

    def __post_init__(self):
        phases = np.mod(np.asarray(self.phases, dtype=float), TWO_PI)
        object.__setattr__(self, "phases", phases)
        if self.bit_depth is not None:
            if self.bit_depth < 1:
                raise ValueError("bit_depth must be >= 1")
            k = phases * (2 ** self.bit_depth) / TWO_PI
            if not np.allclose(k, np.round(k), atol=1e-12):
                raise ValueError("phases are not on the declared codebook")

    @property
    def element_count(self) -> int:
        return self.phases.shape[0]

    def reflection(self) -> np.ndarray:
        return np.exp(1j * self.phases)


def codebook(b: int) -> np.ndarray:
    """The 2^b uniform codebook phases {2*pi*k / 2^b, k = 0..2^b-1}."""
    return TWO_PI * np.arange(2 ** b) / (2 ** b)


def quantize_phases(continuous: RisConfig, b: int) -> RisConfig:
    """Map each phase to the nearest codebook point (circularly); ties go to
    the smaller codebook index of the two candidates."""
    if b < 1:
        raise ValueError("bit depth must be >= 1")
    levels = 2 ** b
    x = np.mod(continuous.phases, TWO_PI) * levels / TWO_PI
    frac = x - np.floor(x)
    k = np.where(frac == 0.5, np.floor(x), np.floor(x + 0.5)).astype(int) % levels
    return RisConfig(TWO_PI * k / levels, bit_depth=b)


def random_config(rng: np.random.Generator, n: int, b: Optional[int] = None) -> RisConfig:
    """Uniform over the codebook when b is set, else uniform over [0, 2pi)^n."""
    if b is None:
        return RisConfig(rng.uniform(0.0, TWO_PI, size=n))
    k = rng.integers(0, 2 ** b, size=n)
    return RisConfig(TWO_PI * k / (2 ** b), bit_depth=b)


def config_from_indices(indices: np.ndarray, b: int) -> RisConfig:
    return RisConfig(TWO_PI * np.asarray(indices, dtype=int) / (2 ** b), bit_depth=b)


def brute_force_best_config(
    cs: ChannelSet,
    b: int,
    objective: Callable[[np.ndarray], float],
) -> tuple[RisConfig, float]:
    """Enumerate all 2^(N*b) codebook configurations and return the argmax of
    objective(effective channel) plus its value.

    Ties keep the first configuration found in lexicographic codebook-index
    order, so the result is deterministic. Refuses when N*b exceeds the
    enumeration guard.
    """
    n = cs.n_elements
    if n * b > ENUMERATION_GUARD_BITS:
        raise ValueError(
            f"enumeration guard exceeded: N*b = {n * b} > {ENUMERATION_GUARD_BITS}")
    levels = 2 ** b
    phasors = np.exp(1j * codebook(b))
    cascade = cascade_matrix(cs)  # (N, A)
    place_value = levels ** np.arange(n - 1, -1, -1)

    total = levels ** n
    best_value = -np.inf
    best_rank = 0
    chunk = 1 << 16
    for start in range(0, total, chunk):
        ranks = np.arange(start, min(start + chunk, total))
        # Base-`levels` digits, most significant first: lexicographic order.
        digits = (ranks[:, None] // place_value) % levels
        h_eff_rows = phasors[digits] @ cascade + cs.h_direct
        for offset, h_eff in enumerate(h_eff_rows):
            value = float(objective(h_eff))
            if value > best_value:
                best_value = value
                best_rank = start + offset
    best_indices = (best_rank // place_value) % levels
    return config_from_indices(best_indices, b), best_value


def aligned_config(cs: ChannelSet, b: Optional[int] = None) -> RisConfig:
    """Per-element phase alignment heuristic against the first BS antenna:
    theta_n = arg(h_direct[0]) - arg(cascade coefficient n), optionally quantized.

    Exact for N=1 single-antenna channels; a strong baseline otherwise.
    """
    cascade = cascade_matrix(cs)[:, 0]
    target = np.angle(cs.h_direct[0]) if np.abs(cs.h_direct[0]) > 0 else 0.0
    cfg = RisConfig(np.mod(target - np.angle(cascade), TWO_PI))
    return cfg if b is None else quantize_phases(cfg, b)
