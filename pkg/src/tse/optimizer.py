"""Box-constrained saliency energy and its solvers.

The objective over per-region saliency ``s`` in [0, 1]^N is

    E(s) = sum_i s_i * (-(alpha*ln c_i + beta*ln f_i))
         + gamma * sum_i (1 - s_i) * (-ln t_i)
         + sum_i sum_j (s_i - s_j)^2 * w_ij

subject to the box and to s_i = 0 on pinned (known-background) regions.
The pairwise double sum counts every pair twice, so its gradient carries a
factor 4.  Maps are floored at ``eps_log`` before taking logs.

``solve`` is projected gradient descent with a halving/doubling line
search; ``brute_force_solve`` is an independent grid-search oracle for
tiny instances.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .anatomy import SKIN, AnatomyLabeling
from .errors import ContractError
from .maps import UnaryMaps
from .superpixel import RegionGraph

_ACCEPT_SLACK = 1e-12
_FULL_GRID_LIMIT = 2_097_152
_COARSE_STEP = 0.05


@dataclass(frozen=True)
class EnergyParams:
    alpha: float = 10.0
    beta: float = 51.0
    gamma: float = 6.0
    sigma1_sq: float = 0.5
    sigma2_sq: float = 0.5
    eps_log: float = 1e-6
    step: float = 1e-3
    max_iters: int = 500
    tol: float = 1e-4

    def __post_init__(self):
        if min(self.alpha, self.beta, self.gamma) < 0:
            raise ContractError("energy weights must be non-negative")
        if self.sigma1_sq <= 0 or self.sigma2_sq <= 0:
            raise ContractError("kernel bandwidths must be positive")
        if self.eps_log <= 0 or self.step <= 0 or self.max_iters < 1 or self.tol <= 0:
            raise ContractError("invalid solver parameters")


@dataclass
class SolveResult:
    s: np.ndarray
    energies: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False


def pairwise_weights(
    graph: RegionGraph,
    params: EnergyParams = EnergyParams(),
    adjacency_only: bool = False,
) -> np.ndarray:
    """Symmetric pair weights: intensity similarity times spatial proximity."""
    intensity = graph.intensity
    r = np.exp(-np.abs(intensity[:, None] - intensity[None, :]) / params.sigma1_sq)
    delta = graph.center[:, None, :] - graph.center[None, :, :]
    d = np.exp(-np.linalg.norm(delta, axis=2) / params.sigma2_sq)
    w = r * d
    np.fill_diagonal(w, 0.0)
    if adjacency_only:
        mask = np.zeros_like(w, dtype=bool)
        for i, nb in enumerate(graph.neighbors):
            mask[i, nb] = True
        w = np.where(mask, w, 0.0)
    return w


def build_constraint(nsa: AnatomyLabeling) -> np.ndarray:
    """Pin skin-layer regions to zero saliency; no pins if that would pin
    everything."""
    pinned = nsa.layer_of == SKIN
    if pinned.all():
        return np.zeros_like(pinned)
    return pinned


def _log_terms(maps: UnaryMaps, params: EnergyParams):
    c = np.maximum(maps.center, params.eps_log)
    f = np.maximum(maps.foreground, params.eps_log)
    t = np.maximum(maps.background, params.eps_log)
    unary = -(params.alpha * np.log(c) + params.beta * np.log(f))
    bg_cost = -np.log(t)
    return unary, bg_cost


def _check_feasible(s: np.ndarray, pinned: np.ndarray) -> None:
    if s.min() < -1e-9 or s.max() > 1.0 + 1e-9:
        raise ContractError("saliency vector leaves the [0, 1] box")
    if pinned.any() and np.abs(s[pinned]).max() > 0:
        raise ContractError("saliency vector violates the pinned-zero constraint")


def _pair_energy(s: np.ndarray, w: np.ndarray, degree: np.ndarray) -> float:
    return 2.0 * (float(s @ (degree * s)) - float(s @ (w @ s)))


def energy(
    s: np.ndarray,
    maps: UnaryMaps,
    w: np.ndarray,
    pinned: np.ndarray,
    params: EnergyParams = EnergyParams(),
) -> float:
    """Objective value at a feasible saliency vector."""
    s = np.asarray(s, dtype=np.float64)
    _check_feasible(s, pinned)
    unary, bg_cost = _log_terms(maps, params)
    degree = w.sum(axis=1)
    return (
        float(s @ unary)
        + params.gamma * float((1.0 - s) @ bg_cost)
        + _pair_energy(s, w, degree)
    )


def energy_gradient(
    s: np.ndarray,
    maps: UnaryMaps,
    w: np.ndarray,
    pinned: np.ndarray,
    params: EnergyParams = EnergyParams(),
) -> np.ndarray:
    """Analytic gradient of the objective (pins not masked)."""
    s = np.asarray(s, dtype=np.float64)
    unary, bg_cost = _log_terms(maps, params)
    degree = w.sum(axis=1)
    return unary - params.gamma * bg_cost + 4.0 * (degree * s - w @ s)


def solve(
    maps: UnaryMaps,
    w: np.ndarray,
    pinned: np.ndarray,
    params: EnergyParams = EnergyParams(),
) -> SolveResult:
    """Projected gradient descent from the foreground map.

    Each iteration backtracks (halving) until the energy does not
    increase, then doubles the step while it keeps strictly improving, so
    accepted energies are non-increasing and linear directions reach the
    box boundary exactly.  Stops when the largest coordinate change drops
    below ``tol`` or after ``max_iters`` iterations.
    """
    pinned = np.asarray(pinned, dtype=bool)
    if pinned.all():
        raise ContractError("at least one region must stay free")
    unary, bg_cost = _log_terms(maps, params)
    degree = w.sum(axis=1)

    def evaluate(vec: np.ndarray) -> float:
        return (
            float(vec @ unary)
            + params.gamma * float((1.0 - vec) @ bg_cost)
            + _pair_energy(vec, w, degree)
        )

    def project(vec: np.ndarray) -> np.ndarray:
        out = np.clip(vec, 0.0, 1.0)
        out[pinned] = 0.0
        return out

    s = project(np.asarray(maps.foreground, dtype=np.float64).copy())
    current = evaluate(s)
    if not np.isfinite(current):
        raise ContractError("energy is not finite at the initial point")
    result = SolveResult(s=s, energies=[current])
    eta = params.step

    for iteration in range(params.max_iters):
        grad = unary - params.gamma * bg_cost + 4.0 * (degree * s - w @ s)
        slack = _ACCEPT_SLACK * max(1.0, abs(current))
        candidate = None
        trial_eta = eta
        for _ in range(60):
            trial = project(s - trial_eta * grad)
            value = evaluate(trial)
            if value <= current + slack:
                candidate = (trial, value, trial_eta)
                break
            trial_eta /= 2.0
        if candidate is None:
            result.converged = True
            break
        trial, value, trial_eta = candidate
        for _ in range(60):
            wider = project(s - 2.0 * trial_eta * grad)
            wider_value = evaluate(wider)
            if wider_value < value:
                trial, value, trial_eta = wider, wider_value, 2.0 * trial_eta
            else:
                break
        delta = float(np.max(np.abs(trial - s))) if trial.size else 0.0
        s = trial
        current = min(value, current)
        eta = trial_eta
        result.energies.append(value)
        result.iterations = iteration + 1
        if delta < params.tol:
            result.converged = True
            break

    result.s = s
    return result


def _grid_values(grid_step: float) -> np.ndarray:
    count = int(round(1.0 / grid_step))
    return np.linspace(0.0, 1.0, count + 1)


def _enumerate_minimum(
    free: np.ndarray,
    axis_values: list,
    n: int,
    unary: np.ndarray,
    bg_cost: np.ndarray,
    w: np.ndarray,
    gamma: float,
) -> np.ndarray:
    """Exhaustive minimum over the cartesian grid of per-axis value lists."""
    grids = np.meshgrid(*axis_values, indexing="ij")
    points = np.stack([g.ravel() for g in grids], axis=1)
    full = np.zeros((points.shape[0], n), dtype=np.float64)
    full[:, free] = points
    values = full @ unary + gamma * ((1.0 - full) @ bg_cost)
    for i in range(n):
        for j in range(i + 1, n):
            if w[i, j] != 0.0:
                values += 2.0 * w[i, j] * (full[:, i] - full[:, j]) ** 2
    best = int(np.argmin(values))
    return full[best]


def brute_force_solve(
    maps: UnaryMaps,
    w: np.ndarray,
    pinned: np.ndarray,
    params: EnergyParams = EnergyParams(),
    grid_step: float = 0.01,
) -> np.ndarray:
    """Grid-search oracle over feasible saliency vectors, N <= 5.

    Pinned coordinates stay 0; free coordinates range over the grid.  When
    the full grid would exceed ~2M points the search runs coarse-to-fine
    (full enumeration at 0.05, then full enumeration at ``grid_step``
    within two coarse cells of the coarse minimizer), which is exact for
    the convex energies produced by this model.
    """
    pinned = np.asarray(pinned, dtype=bool)
    n = pinned.size
    if n > 5:
        raise ContractError("brute force oracle is limited to N <= 5")
    if not any(np.isclose(grid_step, allowed) for allowed in (0.01, 0.05)):
        raise ContractError("grid_step must be 0.01 or 0.05")
    free = np.nonzero(~pinned)[0]
    if free.size == 0:
        raise ContractError("at least one region must stay free")

    unary, bg_cost = _log_terms(maps, params)
    values = _grid_values(grid_step)

    if values.size ** free.size <= _FULL_GRID_LIMIT:
        return _enumerate_minimum(
            free, [values] * free.size, n, unary, bg_cost, w, params.gamma
        )

    coarse_values = _grid_values(_COARSE_STEP)
    coarse = _enumerate_minimum(
        free, [coarse_values] * free.size, n, unary, bg_cost, w, params.gamma
    )
    window = 2.0 * _COARSE_STEP
    axis_values = []
    for i in free:
        lo = max(0.0, coarse[i] - window)
        hi = min(1.0, coarse[i] + window)
        axis_values.append(values[(values >= lo - 1e-12) & (values <= hi + 1e-12)])
    return _enumerate_minimum(free, axis_values, n, unary, bg_cost, w, params.gamma)
