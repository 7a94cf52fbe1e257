"""Case 2: coordinated multi-BS ISAC beamforming.

Two objectives — communication sum rate and sensing beampattern matching
error — are scalarized with a weighted Tchebycheff transform and minimized by
projected gradient descent with restarts. Sweeping the weights traces the
Pareto front.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .channel import dbm_to_watts

LN2 = float(np.log(2.0))


class SolverFailure(RuntimeError):
    def __init__(self, message: str, iteration: int):
        super().__init__(f"{message} (iteration {iteration})")
        self.iteration = iteration


@dataclass(frozen=True)
class ObjectivePair:
    sum_rate: float     # bits/s/Hz
    pattern_error: float

    def __post_init__(self):
        if self.pattern_error < 0:
            raise ValueError("pattern_error must be >= 0")

    def dominates(self, other: "ObjectivePair") -> bool:
        ge = self.sum_rate >= other.sum_rate and self.pattern_error <= other.pattern_error
        strict = self.sum_rate > other.sum_rate or self.pattern_error < other.pattern_error
        return ge and strict


@dataclass
class IsacConfig:
    n_bs: int
    antennas_per_bs: int
    k_users: int
    target_angles: np.ndarray          # radians
    user_channels: np.ndarray          # (K, M, A) complex, effective per BS-user pair
    angle_grid: np.ndarray             # radians
    desired_pattern: np.ndarray        # per-grid-point desired power
    power_budget_dbm: float            # per BS
    noise_power_dbm: float
    n_sensing_streams: Optional[int] = None

    def __post_init__(self):
        self.target_angles = np.asarray(self.target_angles, dtype=float)
        self.angle_grid = np.asarray(self.angle_grid, dtype=float)
        self.desired_pattern = np.asarray(self.desired_pattern, dtype=float)
        self.user_channels = np.asarray(self.user_channels, dtype=complex)
        if self.user_channels.shape != (self.k_users, self.n_bs, self.antennas_per_bs):
            raise ValueError("user_channels must have shape (K, M, A)")
        if self.angle_grid.shape != self.desired_pattern.shape:
            raise ValueError("angle grid and desired pattern lengths differ")
        if self.angle_grid.size == 0:
            raise ValueError("angle grid must be non-empty")
        span = 1e-9 + (self.angle_grid.max() - self.angle_grid.min())
        for angle in self.target_angles:
            if angle < self.angle_grid.min() - span * 0.01 or angle > self.angle_grid.max() + span * 0.01:
                raise ValueError("grid does not cover all target angles")
        if self.n_sensing_streams is None:
            self.n_sensing_streams = max(1, self.antennas_per_bs - self.k_users)

    @property
    def n_streams(self) -> int:
        return self.k_users + self.n_sensing_streams

    @property
    def budget_watts(self) -> float:
        return dbm_to_watts(self.power_budget_dbm)

    @property
    def noise_watts(self) -> float:
        return dbm_to_watts(self.noise_power_dbm)

    def stacked_channels(self) -> np.ndarray:
        """(M*A, K) matrix whose column k is user k's stacked channel."""
        k, m, a = self.user_channels.shape
        return self.user_channels.reshape(k, m * a).T


@dataclass
class BeamformerSet:
    """Per-BS precoding matrices W_m of shape (A, K + sensing streams)."""

    ws: tuple[np.ndarray, ...]
    budget_watts: float

    def __post_init__(self):
        self.ws = tuple(np.asarray(w, dtype=complex) for w in self.ws)
        for w in self.ws:
            power = float(np.linalg.norm(w) ** 2)
            if power > self.budget_watts * (1.0 + 1e-9):
                raise ValueError(f"per-BS power {power} exceeds budget {self.budget_watts}")

    def stacked(self) -> np.ndarray:
        return np.vstack(self.ws)

    def per_bs_power(self) -> np.ndarray:
        return np.array([float(np.linalg.norm(w) ** 2) for w in self.ws])


def steering_vector(angle: float, n_antennas: int) -> np.ndarray:
    """Half-wavelength ULA response: element i = exp(j*pi*i*sin(angle))."""
    return np.exp(1j * np.pi * np.arange(n_antennas) * np.sin(angle))


def make_angle_grid(step_deg: float = 1.0) -> np.ndarray:
    return np.deg2rad(np.arange(-90.0, 90.0 + step_deg / 2, step_deg))


def make_desired_pattern(angle_grid: np.ndarray, target_angles: Sequence[float],
                         mainlobe_halfwidth_deg: float = 5.0) -> np.ndarray:
    """Unit-height mainlobes around each target angle, zero elsewhere."""
    grid = np.asarray(angle_grid, dtype=float)
    desired = np.zeros_like(grid)
    half = np.deg2rad(mainlobe_halfwidth_deg)
    for angle in target_angles:
        desired[np.abs(grid - angle) <= half + 1e-12] = 1.0
    return desired


# -- objectives -------------------------------------------------------------

def _stream_products(cfg: IsacConfig, w_stacked: np.ndarray) -> np.ndarray:
    """S[k, c] = h_k^H w_c over stacked channels/beams."""
    return cfg.stacked_channels().conj().T @ w_stacked


def sum_rate(cfg: IsacConfig, bf: BeamformerSet) -> float:
    """Coherent joint transmission with sensing-stream leakage as interference."""
    s = _stream_products(cfg, bf.stacked())
    signal = np.abs(np.diagonal(s[:, :cfg.k_users])) ** 2
    total = np.sum(np.abs(s) ** 2, axis=1) + cfg.noise_watts
    interference = total - signal - cfg.noise_watts
    sinr = signal / (interference + cfg.noise_watts)
    return float(np.sum(np.log2(1.0 + sinr)))


def _grid_steering(cfg: IsacConfig) -> np.ndarray:
    """(A, G) steering matrix over the angle grid."""
    return np.exp(1j * np.pi * np.outer(np.arange(cfg.antennas_per_bs),
                                        np.sin(cfg.angle_grid)))


def achieved_pattern(cfg: IsacConfig, bf: BeamformerSet) -> np.ndarray:
    """P(theta) = sum_m a(theta)^H W_m W_m^H a(theta) over the grid."""
    a_grid = _grid_steering(cfg)
    pattern = np.zeros(cfg.angle_grid.size)
    for w in bf.ws:
        pattern += np.sum(np.abs(a_grid.conj().T @ w) ** 2, axis=1)
    return pattern


def _ls_scale(desired: np.ndarray, achieved: np.ndarray) -> float:
    denom = float(np.dot(desired, desired))
    return float(np.dot(desired, achieved) / denom) if denom > 0 else 0.0


def beampattern_error(cfg: IsacConfig, bf: BeamformerSet) -> float:
    """Mean squared gap between the least-squares-scaled desired pattern and
    the achieved transmit beampattern."""
    achieved = achieved_pattern(cfg, bf)
    alpha = _ls_scale(cfg.desired_pattern, achieved)
    gap = alpha * cfg.desired_pattern - achieved
    return float(np.mean(gap ** 2))


def evaluate(cfg: IsacConfig, bf: BeamformerSet) -> ObjectivePair:
    return ObjectivePair(sum_rate(cfg, bf), beampattern_error(cfg, bf))


# -- scalarization ----------------------------------------------------------

@dataclass(frozen=True)
class IdealPoint:
    rate_star: float
    error_star: float
    rate_norm: float
    error_norm: float


def tchebycheff_scalarize(f: ObjectivePair, weights: tuple[float, float],
                          ideal: tuple[float, float],
                          norms: tuple[float, float]) -> float:
    """max of the weighted, normalized gaps to the ideal point (minimize)."""
    w_r, w_e = weights
    if w_r < 0 or w_e < 0:
        raise ValueError("weights must be non-negative")
    if norms[0] <= 0 or norms[1] <= 0:
        raise ValueError("norms must be positive")
    rate_term = w_r * (ideal[0] - f.sum_rate) / norms[0]
    error_term = w_e * (f.pattern_error - ideal[1]) / norms[1]
    return max(rate_term, error_term)


# -- solver -----------------------------------------------------------------

@dataclass(frozen=True)
class SolverParams:
    step_size: float = 0.1
    iterations: int = 300
    restarts: int = 5
    temperature: float = 0.02

    def __post_init__(self):
        if min(self.step_size, self.iterations, self.restarts, self.temperature) <= 0:
            raise ValueError("solver parameters must be positive")


def _rate_gradient(cfg: IsacConfig, w_stacked: np.ndarray) -> np.ndarray:
    """Packaged-complex gradient of sum_rate at the stacked beamformer."""
    h = cfg.stacked_channels()                       # (MA, K)
    s = h.conj().T @ w_stacked                       # (K, C)
    power = np.abs(s) ** 2
    signal = np.diagonal(power[:, :cfg.k_users])
    total = power.sum(axis=1) + cfg.noise_watts
    denom = total - signal                           # interference + noise
    coeff = (2.0 / LN2) * (1.0 / total)[:, None] * np.ones_like(power)
    coeff -= (2.0 / LN2) / denom[:, None]
    np.fill_diagonal(coeff[:, :cfg.k_users], (2.0 / LN2) / total)
    return h @ (coeff * s)


def _pattern_error_gradient(cfg: IsacConfig, ws: Sequence[np.ndarray]) -> list[np.ndarray]:
    a_grid = _grid_steering(cfg)                     # (A, G)
    qs = [a_grid.conj().T @ w for w in ws]           # (G, C) each
    achieved = sum(np.sum(np.abs(q) ** 2, axis=1) for q in qs)
    alpha = _ls_scale(cfg.desired_pattern, achieved)
    # d error / d P(theta); the alpha dependence vanishes at the LS optimum.
    residual = -(2.0 / cfg.angle_grid.size) * (alpha * cfg.desired_pattern - achieved)
    return [a_grid @ (2.0 * residual[:, None] * q) for q in qs]


def _split(cfg: IsacConfig, stacked: np.ndarray) -> list[np.ndarray]:
    a = cfg.antennas_per_bs
    return [stacked[m * a:(m + 1) * a] for m in range(cfg.n_bs)]


def _project(cfg: IsacConfig, ws: list[np.ndarray]) -> list[np.ndarray]:
    budget = cfg.budget_watts
    out = []
    for w in ws:
        power = float(np.linalg.norm(w) ** 2)
        out.append(w * np.sqrt(budget / power) if power > budget else w)
    return out


def _random_feasible(rng: np.random.Generator, cfg: IsacConfig) -> list[np.ndarray]:
    shape = (cfg.antennas_per_bs, cfg.n_streams)
    ws = []
    for _ in range(cfg.n_bs):
        w = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        ws.append(w * np.sqrt(cfg.budget_watts) / np.linalg.norm(w))
    return ws


def _smoothed_objective_and_grad(cfg: IsacConfig, ws: list[np.ndarray],
                                 weights, ideal: IdealPoint, temperature: float):
    """Log-sum-exp smoothing of the Tchebycheff max over the active terms."""
    w_r, w_e = weights
    stacked = np.vstack(ws)
    terms, grads = [], []
    if w_r > 0:
        rate = sum_rate(cfg, BeamformerSet(tuple(ws), cfg.budget_watts))
        terms.append(w_r * (ideal.rate_star - rate) / ideal.rate_norm)
        grads.append([-w_r / ideal.rate_norm * g
                      for g in _split(cfg, _rate_gradient(cfg, stacked))])
    if w_e > 0:
        err = beampattern_error(cfg, BeamformerSet(tuple(ws), cfg.budget_watts))
        terms.append(w_e * (err - ideal.error_star) / ideal.error_norm)
        grads.append([w_e / ideal.error_norm * g
                      for g in _pattern_error_gradient(cfg, ws)])
    terms = np.asarray(terms)
    peak = terms.max()
    z = np.exp((terms - peak) / temperature)
    value = peak + temperature * np.log(z.sum())
    probs = z / z.sum()
    total_grad = [np.zeros_like(ws[0]) for _ in ws]
    for p, grad in zip(probs, grads):
        for m in range(len(ws)):
            total_grad[m] = total_grad[m] + p * grad[m]
    return float(value), total_grad


_PLACEHOLDER_IDEAL = IdealPoint(0.0, 0.0, 1.0, 1.0)


def solve_scalarized(rng: np.random.Generator, cfg: IsacConfig,
                     weights: tuple[float, float], solver: SolverParams,
                     ideal: Optional[IdealPoint] = None) -> tuple[BeamformerSet, ObjectivePair]:
    """Projected gradient descent on the smoothed scalarization, best of restarts.

    The returned beamformers always satisfy the per-BS power budgets.
    """
    w_r, w_e = weights
    if w_r < 0 or w_e < 0:
        raise ValueError("weights must be non-negative")
    if w_r == 0 and w_e == 0:
        raise ValueError("at least one weight must be positive")
    if ideal is None:
        # Degenerate weights need no ideal point; mixed weights compute one.
        if w_r > 0 and w_e > 0:
            ideal = compute_ideal(rng, cfg, solver)
        else:
            ideal = _PLACEHOLDER_IDEAL

    best_ws: Optional[list[np.ndarray]] = None
    best_value = np.inf
    for _ in range(solver.restarts):
        ws = _project(cfg, _random_feasible(rng, cfg))
        value, grad = _smoothed_objective_and_grad(cfg, ws, weights, ideal,
                                                   solver.temperature)
        step = solver.step_size
        for iteration in range(solver.iterations):
            if not np.isfinite(value):
                raise SolverFailure("non-finite objective during descent", iteration)
            candidate = _project(cfg, [w - step * g for w, g in zip(ws, grad)])
            cand_value, cand_grad = _smoothed_objective_and_grad(
                cfg, candidate, weights, ideal, solver.temperature)
            if cand_value <= value:
                ws, value, grad = candidate, cand_value, cand_grad
                step *= 1.2
            else:
                step *= 0.5
                if step < 1e-12:
                    break
        if value < best_value:
            best_value = value
            best_ws = ws
    bf = BeamformerSet(tuple(best_ws), cfg.budget_watts)
    return bf, evaluate(cfg, bf)


def compute_ideal(rng: np.random.Generator, cfg: IsacConfig,
                  solver: SolverParams) -> IdealPoint:
    """Run the two single-objective extremes once to anchor the scalarization."""
    rng_rate, rng_err = rng.spawn(2)
    _, at_rate = solve_scalarized(rng_rate, cfg, (1.0, 0.0), solver,
                                  ideal=_PLACEHOLDER_IDEAL)
    _, at_err = solve_scalarized(rng_err, cfg, (0.0, 1.0), solver,
                                 ideal=_PLACEHOLDER_IDEAL)
    rate_norm = max(abs(at_rate.sum_rate - at_err.sum_rate), 1e-6)
    error_norm = max(abs(at_rate.pattern_error - at_err.pattern_error), 1e-6)
    return IdealPoint(at_rate.sum_rate, at_err.pattern_error, rate_norm, error_norm)


def non_dominated_filter(points: Sequence[ObjectivePair]) -> list[ObjectivePair]:
    """Drop dominated points and exact duplicates (first occurrence kept)."""
    kept = []
    seen = set()
    for p in points:
        if any(q.dominates(p) for q in points):
            continue
        key = (p.sum_rate, p.pattern_error)
        if key in seen:
            continue
        seen.add(key)
        kept.append(p)
    return kept


def pareto_sweep(rng: np.random.Generator, cfg: IsacConfig,
                 weight_list: Sequence[tuple[float, float]],
                 solver: Optional[SolverParams] = None) -> list[ObjectivePair]:
    """Solve every weight, keep the non-dominated points, sort by sum rate."""
    records = pareto_sweep_records(rng, cfg, weight_list, solver)
    kept = non_dominated_filter([r[1] for r in records])
    return sorted(kept, key=lambda p: p.sum_rate)


def pareto_sweep_records(rng: np.random.Generator, cfg: IsacConfig,
                         weight_list: Sequence[tuple[float, float]],
                         solver: Optional[SolverParams] = None,
                         ) -> list[tuple[tuple[float, float], ObjectivePair]]:
    """All sweep entries in weight order (for reporting), unfiltered."""
    if len(weight_list) < 2:
        raise ValueError("a sweep needs at least two weights")
    solver = solver or SolverParams()
    rngs = rng.spawn(len(weight_list) + 1)
    ideal = compute_ideal(rngs[-1], cfg, solver)
    records = []
    for child, weights in zip(rngs, weight_list):
        try:
            _, pair = solve_scalarized(child, cfg, weights, solver, ideal=ideal)
        except SolverFailure as exc:
            raise SolverFailure(f"weight {weights}: {exc}", exc.iteration) from exc
        records.append((tuple(weights), pair))
    return records


def solve_per_bs_independent(rng: np.random.Generator, cfg: IsacConfig,
                             weights: tuple[float, float], solver: SolverParams,
                             ideal: Optional[IdealPoint] = None,
                             ) -> tuple[BeamformerSet, ObjectivePair]:
    """Uncoordinated benchmark: each BS designs its own beams in isolation,
    then the set is evaluated under joint transmission."""
    ws = []
    for m, child in enumerate(rng.spawn(cfg.n_bs)):
        sub = IsacConfig(
            n_bs=1,
            antennas_per_bs=cfg.antennas_per_bs,
            k_users=cfg.k_users,
            target_angles=cfg.target_angles,
            user_channels=cfg.user_channels[:, m:m + 1, :],
            angle_grid=cfg.angle_grid,
            desired_pattern=cfg.desired_pattern,
            power_budget_dbm=cfg.power_budget_dbm,
            noise_power_dbm=cfg.noise_power_dbm,
            n_sensing_streams=cfg.n_sensing_streams,
        )
        bf_m, _ = solve_scalarized(child, sub, weights, solver)
        ws.append(bf_m.ws[0])
    bf = BeamformerSet(tuple(ws), cfg.budget_watts)
    return bf, evaluate(cfg, bf)
