"""Brute-force reference solvers for tiny instances.

Every row of the channel is enumerated on a barycentric simplex grid, the best
feasible grid points are polished with SLSQP, and the winner is re-evaluated
exactly. Only meant for checking the convex solvers.
"""

from dataclasses import dataclass
import itertools
import logging
from typing import Callable

import numpy as np
from scipy import optimize, special

from infopriv import info_metrics
from infopriv import prob_core
from infopriv.exceptions import InfeasibleBudgetError, OracleDimensionError
from infopriv.problem import ProblemInstance
from infopriv.prob_core import Channel
from infopriv.settings import OracleSettings


logger = logging.getLogger(__name__)

LN2 = info_metrics.LN2
MAX_FREE_PARAMETERS = 6
MIN_RESOLUTION = 10
GRID_FEASIBILITY_TOL = 1e-12
POLISH_FEASIBILITY_TOL = 1e-9
REPAIR_WEIGHTS = (0.0, 1e-6, 1e-4, 1e-2, 1.0)


@dataclass(frozen=True)
class OracleConfig:
    grid_resolution: int | None = None
    """Steps per simplex edge; chosen from the settings by dimension when unset."""
    refine: bool = True
    refine_starts: int = 10

    def __post_init__(self) -> None:
        if self.grid_resolution is not None and self.grid_resolution < MIN_RESOLUTION:
            raise ValueError(f"grid resolution must be >= {MIN_RESOLUTION}, got {self.grid_resolution}")

    @classmethod
    def from_settings(cls, settings: OracleSettings) -> "OracleConfig":
        return cls(refine=settings.refine, refine_starts=settings.refine_starts)

    def resolution(self, free_parameters: int, settings: OracleSettings | None = None) -> int:
        if self.grid_resolution is not None:
            return self.grid_resolution
        settings = settings or OracleSettings()
        return settings.resolution_small if free_parameters <= 2 else settings.resolution_large


def simplex_grid(dim: int, resolution: int) -> np.ndarray:
    """All points of the simplex in ``dim`` coordinates with entries in multiples of 1/resolution."""
    points = []
    for bars in itertools.combinations(range(resolution + dim - 1), dim - 1):
        edges = (-1,) + bars + (resolution + dim - 1,)
        points.append([edges[i + 1] - edges[i] - 1 for i in range(dim)])
    return np.array(points, dtype=float) / resolution


def _joints(instance: ProblemInstance, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    design = instance.design
    return (np.einsum("sr,bru->bsu", design.a, x), np.einsum("yr,bru->byu", design.b, x))


def _distortions(instance: ProblemInstance, p_yu: np.ndarray) -> np.ndarray:
    return np.stack([np.sum(p_yu * d.matrix, axis=(1, 2)) for d in instance.distortions], axis=1)


def _average_leakage(instance: ProblemInstance, p_su: np.ndarray) -> np.ndarray:
    p_s = instance.prior_s.probs
    p_u = p_su.sum(axis=1)
    return np.sum(special.rel_entr(p_su, p_s[None, :, None] * p_u[:, None, :]), axis=(1, 2)) / LN2


def _max_leakage(instance: ProblemInstance, p_su: np.ndarray) -> np.ndarray:
    p_u = p_su.sum(axis=1)
    supported = p_u >= prob_core.SUPPORT_THRESHOLD
    posterior = np.divide(p_su, p_u[:, None, :], out=np.zeros_like(p_su), where=supported[:, None, :])
    h = np.sum(special.entr(posterior), axis=1) / LN2 + np.einsum("s,bsu->bu", instance.class_entropy_bits, posterior)
    leak = np.where(supported, instance.prior_entropy_bits() - h, -np.inf)
    return np.maximum(np.max(leak, axis=1), 0.0)


Objective = Callable[[ProblemInstance, np.ndarray], np.ndarray]


def _grid_search(instance: ProblemInstance, objective: Objective, resolution: int,
                 keep: int) -> tuple[np.ndarray, np.ndarray]:
    """The ``keep`` best feasible grid channels and their values, best first."""
    rows, u_size = instance.design.rows.size, instance.u_size
    grid = simplex_grid(u_size, resolution)
    g = grid.shape[0]
    budgets = np.array(instance.budgets)
    tail = min(rows, 2)
    tail_index = np.array(list(itertools.product(range(g), repeat=tail)))
    best_x = np.zeros((0, rows, u_size))
    best_v = np.zeros(0)
    evaluated = 0
    for head in itertools.product(range(g), repeat=rows - tail):
        x = np.empty((tail_index.shape[0], rows, u_size))
        for r, i in enumerate(head):
            x[:, r] = grid[i]
        for r in range(tail):
            x[:, rows - tail + r] = grid[tail_index[:, r]]
        p_su, p_yu = _joints(instance, x)
        feasible = np.all(_distortions(instance, p_yu) <= budgets + GRID_FEASIBILITY_TOL, axis=1) \
            if budgets.size else np.ones(x.shape[0], dtype=bool)
        evaluated += x.shape[0]
        if not np.any(feasible):
            continue
        values = objective(instance, x[feasible])
        best_x = np.concatenate([best_x, x[feasible]])
        best_v = np.concatenate([best_v, values])
        order = np.argsort(best_v, kind="stable")[:keep]
        best_x, best_v = best_x[order], best_v[order]
    logger.debug(f"Oracle grid: {evaluated} channels at resolution {resolution}, best {best_v[:1]}")
    return best_x, best_v


def _row_sum_constraint(rows: int, u_size: int) -> dict:
    return {"type": "eq", "fun": lambda v: v[:rows * u_size].reshape(rows, u_size).sum(axis=1) - 1.0}


def _budget_constraint(instance: ProblemInstance, rows: int, u_size: int) -> dict:
    budgets = np.array(instance.budgets)

    def slack(v: np.ndarray) -> np.ndarray:
        x = np.clip(v[:rows * u_size].reshape(1, rows, u_size), 0.0, 1.0)
        return budgets - _distortions(instance, _joints(instance, x)[1])[0]

    return {"type": "ineq", "fun": slack}


def _polish_average(instance: ProblemInstance, start: np.ndarray) -> np.ndarray:
    rows, u_size = start.shape

    def objective(v: np.ndarray) -> float:
        x = np.clip(v.reshape(1, rows, u_size), 0.0, 1.0)
        return float(_average_leakage(instance, _joints(instance, x)[0])[0])

    constraints = [_row_sum_constraint(rows, u_size)]
    if instance.distortions:
        constraints.append(_budget_constraint(instance, rows, u_size))
    result = optimize.minimize(objective, start.ravel(), method="SLSQP", bounds=[(0.0, 1.0)] * start.size,
                               constraints=constraints, options={"maxiter": 500, "ftol": 1e-12})
    return result.x.reshape(rows, u_size)


def _cap_constraint(instance: ProblemInstance, rows: int, u_size: int, cap: Callable[[np.ndarray], float]) -> dict:
    """p_U(u) (H(S) - H(S|U=u) - cap) <= 0 for every u, so unsupported outputs never bind."""
    n = rows * u_size
    h_prior = instance.prior_entropy_bits()
    classes = instance.class_entropy_bits

    def caps(v: np.ndarray) -> np.ndarray:
        x = np.clip(v[:n].reshape(1, rows, u_size), 0.0, 1.0)
        p_su = _joints(instance, x)[0][0]
        p_u = p_su.sum(axis=0)
        weighted_h = (np.sum(special.entr(p_su), axis=0) - special.entr(p_u)) / LN2 + classes @ p_su
        return p_u * (cap(v) - h_prior) + weighted_h

    return {"type": "ineq", "fun": caps}


def _polish_minmax(instance: ProblemInstance, start: np.ndarray, start_value: float) -> np.ndarray:
    """Epigraph form: min t under the cap t on every output."""
    rows, u_size = start.shape
    n = rows * u_size
    constraints = [_row_sum_constraint(rows, u_size), _cap_constraint(instance, rows, u_size, lambda v: v[n])]
    if instance.distortions:
        constraints.append(_budget_constraint(instance, rows, u_size))
    result = optimize.minimize(lambda v: v[n], np.append(start.ravel(), start_value), method="SLSQP",
                               bounds=[(0.0, 1.0)] * n + [(0.0, None)], constraints=constraints,
                               options={"maxiter": 500, "ftol": 1e-12})
    return result.x[:n].reshape(rows, u_size)


def _polish_min_distortion(instance: ProblemInstance, start: np.ndarray, matrix: np.ndarray,
                           epsilon_bits: float) -> np.ndarray:
    rows, u_size = start.shape

    def objective(v: np.ndarray) -> float:
        x = np.clip(v.reshape(1, rows, u_size), 0.0, 1.0)
        return float(np.sum(_joints(instance, x)[1][0] * matrix))

    constraints = [_row_sum_constraint(rows, u_size),
                   _cap_constraint(instance, rows, u_size, lambda v: epsilon_bits),
                   _budget_constraint(instance, rows, u_size)]
    result = optimize.minimize(objective, start.ravel(), method="SLSQP", bounds=[(0.0, 1.0)] * start.size,
                               constraints=constraints, options={"maxiter": 500, "ftol": 1e-12})
    return result.x.reshape(rows, u_size)


def _search(instance: ProblemInstance, delta: float | None, cfg: OracleConfig | None,
            objective: Objective, polish: Callable[[ProblemInstance, np.ndarray, float], np.ndarray],
            settings: OracleSettings | None) -> tuple[float, Channel]:
    cfg = cfg or OracleConfig.from_settings(settings or OracleSettings())
    if delta is not None:
        instance = instance.with_budgets([delta] + instance.budgets[1:])
    rows, u_size = instance.design.rows.size, instance.u_size
    free = rows * (u_size - 1)
    if free > MAX_FREE_PARAMETERS:
        raise OracleDimensionError(f"{free} free parameters exceed the oracle limit of {MAX_FREE_PARAMETERS}")

    resolution = cfg.resolution(free, settings)
    keep = cfg.refine_starts if cfg.refine else 1
    candidates, values = _grid_search(instance, objective, resolution, max(keep, 1))
    if not values.size:
        raise InfeasibleBudgetError("No grid channel meets the budgets", instance.min_distortions(),
                                    instance.budgets)
    best_x, best_v = candidates[0], float(values[0])

    if cfg.refine:
        budgets = np.array(instance.budgets)
        for start, start_value in zip(candidates, values):
            x = np.clip(polish(instance, start, float(start_value)), 0.0, None)
            x = x / x.sum(axis=1, keepdims=True)
            p_su, p_yu = _joints(instance, x[None])
            if budgets.size and np.any(_distortions(instance, p_yu)[0] > budgets + POLISH_FEASIBILITY_TOL):
                continue
            value = float(objective(instance, x[None])[0])
            if value < best_v:
                best_x, best_v = x, value
    logger.info(f"Oracle value {best_v:.10g} (grid {float(values[0]):.10g}, resolution {resolution})")
    return best_v, Channel(instance.design.rows, instance.u_alphabet, best_x)


def brute_force_min_leakage(instance: ProblemInstance, delta: float | None = None, cfg: OracleConfig | None = None,
                            settings: OracleSettings | None = None) -> tuple[float, Channel]:
    """Smallest I(S;U) in bits over grid channels meeting the budgets, polished locally.

    ``delta`` replaces the first budget when given.
    """
    return _search(instance, delta, cfg, lambda inst, x: _average_leakage(inst, _joints(inst, x)[0]),
                   lambda inst, start, value: _polish_average(inst, start), settings)


def brute_force_minmax(instance: ProblemInstance, delta: float | None = None, cfg: OracleConfig | None = None,
                       settings: OracleSettings | None = None) -> tuple[float, Channel]:
    """Smallest max_u H(S) - H(S|U=u) over supported outputs, same search as the average version."""
    return _search(instance, delta, cfg, lambda inst, x: _max_leakage(inst, _joints(inst, x)[0]),
                   _polish_minmax, settings)


def brute_force_min_distortion(instance: ProblemInstance, epsilon_bits: float, cfg: OracleConfig | None = None,
                               settings: OracleSettings | None = None) -> tuple[float, Channel]:
    """Least E[d] (first distortion) over channels whose max leakage is within ``epsilon_bits``.

    The cap is checked to 1e-9 bits. A zero cap is an exact independence
    condition, so it is answered from the grid alone.
    """
    cfg = cfg or OracleConfig.from_settings(settings or OracleSettings())
    rows, u_size = instance.design.rows.size, instance.u_size
    free = rows * (u_size - 1)
    if free > MAX_FREE_PARAMETERS:
        raise OracleDimensionError(f"{free} free parameters exceed the oracle limit of {MAX_FREE_PARAMETERS}")
    relaxed = _relaxed_first(instance)
    first = instance.distortions[0].matrix

    def distortion(inst: ProblemInstance, x: np.ndarray) -> np.ndarray:
        return np.sum(_joints(inst, x)[1] * first, axis=(1, 2))

    def objective(inst: ProblemInstance, x: np.ndarray) -> np.ndarray:
        over = _max_leakage(inst, _joints(inst, x)[0]) > epsilon_bits + POLISH_FEASIBILITY_TOL
        return np.where(over, np.inf, distortion(inst, x))

    refine = cfg.refine and epsilon_bits > 0
    candidates, values = _grid_search(relaxed, objective, cfg.resolution(free, settings),
                                      cfg.refine_starts if refine else 1)
    if not values.size or not np.isfinite(values[0]):
        raise InfeasibleBudgetError("No grid channel meets the leakage cap", [], [])
    best_x, best_v = candidates[0], float(values[0])

    if refine:
        budgets = np.array(relaxed.budgets)
        for start, start_value in zip(candidates, values):
            if not np.isfinite(start_value):
                continue
            x = np.clip(_polish_min_distortion(relaxed, start, first, epsilon_bits), 0.0, None)
            x = x / x.sum(axis=1, keepdims=True)
            # SLSQP may overshoot the cap slightly; walk back towards the feasible start
            for weight in REPAIR_WEIGHTS:
                mixed = (1 - weight) * x + weight * start
                if np.all(_distortions(relaxed, _joints(relaxed, mixed[None])[1])[0]
                          <= budgets + POLISH_FEASIBILITY_TOL) and np.isfinite(objective(relaxed, mixed[None])[0]):
                    x = mixed
                    break
            value = float(objective(relaxed, x[None])[0])
            if value < best_v:
                best_x, best_v = x, value
    logger.info(f"Oracle distortion {best_v:.10g} under cap {epsilon_bits:.10g} (grid {float(values[0]):.10g})")
    return best_v, Channel(instance.design.rows, instance.u_alphabet, best_x)


def _relaxed_first(instance: ProblemInstance) -> ProblemInstance:
    """The first distortion becomes the objective, so its budget must not filter the grid."""
    worst = float(np.max(instance.distortions[0].matrix))
    return instance.with_budgets([worst] + instance.budgets[1:])
