"""Convex minimization over channels.

The decision variable is a row-stochastic matrix X (one probability simplex per
row). Programs minimize a smooth convex objective subject to smooth convex
inequality constraints ``g_i(X) <= 0``.

Algorithm
---------
- Inner loop: entropic mirror descent, i.e. multiplicative updates
  ``X_r <- X_r * exp(-eta * G_r / w_r)`` carried out on row logits, so rows stay
  exactly on the simplex. ``w_r`` are optional row weights (usually the input
  marginal) that turn the Bregman divergence into a weighted sum of row KLs.
  The step ``eta`` is found by backtracking on the relative-smoothness
  condition ``L(X+) <= L(X) + <G, X+ - X> + KL_w(X+||X) / eta`` and grown again
  after every accepted step, which keeps the merit value monotone.
- Outer loop: augmented Lagrangian for the inequality constraints,
  ``L(X) = f(X) + sum_i (max(0, lam_i + rho g_i)^2 - lam_i^2) / (2 rho)``, with
  a multiplier update after every inner solve and a penalty increase when the
  violation does not shrink fast enough.
- Logits are kept within ``LOGIT_SPAN`` of the row maximum, so no entry is ever
  exactly zero unless ``support_mask`` rules it out.

``certify`` measures the KKT residual of a candidate with multipliers fitted by
non-negative least squares, and cross-checks it with random feasible
perturbations.
"""

import csv
from dataclasses import dataclass, field
import logging
import math
from typing import Callable

import numpy as np
from scipy import optimize, special

from infopriv.exceptions import InfeasibleCandidateError, InvalidDistributionError
from infopriv.prob_core import Alphabet, Channel
from infopriv.settings import SolverSettings


logger = logging.getLogger(__name__)

INIT_FLOOR = 1e-6
LOG_FLOOR = 1e-12
LOGIT_SPAN = 40.0
DUAL_ZERO = 1e-9
ACTIVE_TOL = 1e-6

ETA_INIT = 1.0
ETA_MAX = 1e8
ETA_MIN = 1e-20

STALL_WINDOW = 10
PERTURBATIONS = 32
PERTURBATION_SIZE = 1e-3
PERTURBATION_GAIN = 1e-6


Matrix = np.ndarray


@dataclass(frozen=True)
class ConstraintSet:
    """Vector of constraints ``values(X) <= 0`` with Jacobian of shape (m, rows, cols)."""

    names: tuple[str, ...]
    values: Callable[[Matrix], np.ndarray]
    jacobian: Callable[[Matrix], np.ndarray]

    @property
    def size(self) -> int:
        return len(self.names)

    @classmethod
    def linear(cls, names: tuple[str, ...], coefficients: list[Matrix], bounds: np.ndarray) -> "ConstraintSet":
        """``sum(X * coefficients[i]) <= bounds[i]``."""
        stacked = np.stack(coefficients) if coefficients else np.zeros((0, 0, 0))
        bounds = np.asarray(bounds, dtype=float)
        return cls(names,
                   lambda x: np.tensordot(stacked, x, axes=([1, 2], [0, 1])) - bounds,
                   lambda x: stacked)


def stack_constraints(*sets: ConstraintSet | None) -> ConstraintSet | None:
    present = [s for s in sets if s is not None and s.size]
    if not present:
        return None
    if len(present) == 1:
        return present[0]
    return ConstraintSet(
        names=tuple(name for s in present for name in s.names),
        values=lambda x: np.concatenate([s.values(x) for s in present]),
        jacobian=lambda x: np.concatenate([s.jacobian(x) for s in present]),
    )


@dataclass
class ChannelProgram:
    objective: Callable[[Matrix], float]
    gradient: Callable[[Matrix], Matrix]
    input_alphabet: Alphabet
    output_alphabet: Alphabet
    constraints: ConstraintSet | None = None
    row_weights: np.ndarray | None = None
    support_mask: np.ndarray | None = None
    """Entries allowed to be positive; ``None`` allows all of them."""
    restore: Callable[[Matrix], Matrix] | None = None
    """Feasibility restoration applied to the final iterate."""
    log_floor_active: Callable[[Matrix], bool] | None = None
    settings: SolverSettings = field(default_factory=SolverSettings)

    def __post_init__(self) -> None:
        shape = (self.input_alphabet.size, self.output_alphabet.size)
        if self.support_mask is None:
            self.support_mask = np.ones(shape, dtype=bool)
        if self.support_mask.shape != shape:
            raise InvalidDistributionError(f"support mask has shape {self.support_mask.shape}, expected {shape}")
        if not np.all(self.support_mask.any(axis=1)):
            raise InvalidDistributionError("support mask leaves a row without any allowed output")
        weights = np.ones(shape[0]) if self.row_weights is None else np.asarray(self.row_weights, dtype=float)
        weights = weights / max(float(np.max(weights)), 1e-300)
        self.row_weights = np.maximum(weights, 1e-12)

    @property
    def shape(self) -> tuple[int, int]:
        return self.input_alphabet.size, self.output_alphabet.size

    def constraint_values(self, x: Matrix) -> np.ndarray:
        if self.constraints is None:
            return np.zeros(0)
        return np.asarray(self.constraints.values(x), dtype=float)

    def constraint_jacobian(self, x: Matrix) -> np.ndarray:
        if self.constraints is None:
            return np.zeros((0,) + self.shape)
        return np.asarray(self.constraints.jacobian(x), dtype=float)


@dataclass(frozen=True)
class TracePoint:
    iteration: int
    objective: float
    max_residual: float


@dataclass(frozen=True, eq=False)
class SolverResult:
    channel: Channel
    objective_value: float
    constraint_residuals: np.ndarray
    kkt_residual: float
    iterations: int
    converged: bool
    multipliers: np.ndarray = field(default_factory=lambda: np.zeros(0))
    floor_active: bool = False
    trace: tuple[TracePoint, ...] = ()
    auxiliary: dict[str, Channel] = field(default_factory=dict)
    """Derived channels, e.g. ``p_U|S`` and ``p_U|Y`` for Direct designs."""


def _stationarity(x: Matrix, grad: Matrix, mask: np.ndarray) -> float:
    """max over rows of the complementarity and dual-feasibility violations."""
    grad = np.where(mask, grad, 0.0)
    nu = np.sum(x * grad, axis=1, keepdims=True)
    dev = grad - nu
    comp = float(np.max(np.abs(x * dev)))
    near_zero = mask & (x < DUAL_ZERO)
    dual = float(np.max(np.where(near_zero, np.maximum(-dev, 0.0), 0.0)))
    return max(comp, dual)


def _normalized_logits(theta: Matrix, mask: np.ndarray) -> Matrix:
    """Log of the row-normalized channel, clipped to ``LOGIT_SPAN`` below each row max."""
    allowed = np.where(mask, theta, -np.inf)
    allowed = allowed - np.max(allowed, axis=1, keepdims=True)
    allowed = np.where(mask, np.maximum(allowed, -LOGIT_SPAN), -np.inf)
    return allowed - special.logsumexp(allowed, axis=1, keepdims=True)


class _AugmentedLagrangian:
    def __init__(self, program: ChannelProgram, lam: np.ndarray, rho: float):
        self.program = program
        self.lam = lam
        self.rho = rho

    def value(self, x: Matrix) -> tuple[float, float, np.ndarray]:
        f = float(self.program.objective(x))
        g = self.program.constraint_values(x)
        if g.size == 0:
            return f, f, g
        shifted = np.maximum(0.0, self.lam + self.rho * g)
        merit = f + (float(shifted @ shifted) - float(self.lam @ self.lam)) / (2.0 * self.rho)
        return merit, f, g

    def gradient(self, x: Matrix, g: np.ndarray) -> Matrix:
        grad = np.asarray(self.program.gradient(x), dtype=float)
        if g.size:
            shifted = np.maximum(0.0, self.lam + self.rho * g)
            if np.any(shifted > 0):
                grad = grad + np.tensordot(shifted, self.program.constraint_jacobian(x), axes=1)
        return np.where(self.program.support_mask, grad, 0.0)


@dataclass
class _InnerState:
    log_x: Matrix
    eta: float
    iterations: int = 0
    stationarity: float = math.inf
    stalled: bool = False


def _inner_solve(program: ChannelProgram, merit_fn: _AugmentedLagrangian, state: _InnerState,
                 tol: float, budget: int, trace: list[TracePoint]) -> None:
    mask = program.support_mask
    weights = program.row_weights[:, None]
    settings = program.settings
    x = np.exp(state.log_x)
    merit, f, g = merit_fn.value(x)
    grad = merit_fn.gradient(x, g)
    small_changes = 0
    state.stalled = False

    for _ in range(budget):
        state.stationarity = _stationarity(x, grad, mask)
        if state.stationarity <= tol:
            return

        eta = state.eta
        while True:
            log_new = _normalized_logits(state.log_x - eta * grad / weights, mask)
            x_new = np.exp(log_new)
            merit_new, f_new, g_new = merit_fn.value(x_new)
            linear = float(np.sum(grad * (x_new - x)))
            with np.errstate(invalid="ignore"):
                divergence = np.where(mask, x_new * (log_new - state.log_x), 0.0)
            bregman = float(np.sum(weights * divergence))
            if merit_new <= merit and merit_new <= merit + linear + bregman / eta:
                break
            eta /= 2.0
            if eta < ETA_MIN:
                # Numerical floor: no representable descent step left
                state.stalled = True
                return

        change = abs(merit - merit_new)
        small_changes = small_changes + 1 if change <= settings.objective_tol * max(1.0, abs(merit)) else 0
        state.log_x, x, merit, f, g = log_new, x_new, merit_new, f_new, g_new
        grad = merit_fn.gradient(x, g)
        state.eta = min(2.0 * eta, ETA_MAX)
        state.iterations += 1
        trace.append(TracePoint(state.iterations, f, float(np.max(g, initial=0.0))))

        if small_changes >= STALL_WINDOW and _stationarity(x, grad, mask) <= max(tol, settings.kkt_tol / 10):
            state.stationarity = _stationarity(x, grad, mask)
            return


def minimize(program: ChannelProgram, init: Channel) -> SolverResult:
    """Minimize ``program`` starting from ``init``; never raises on non-convergence."""
    settings = program.settings
    mask = program.support_mask
    x0 = np.where(mask, init.smoothed(INIT_FLOOR).rows, 0.0)
    x0 = x0 / x0.sum(axis=1, keepdims=True)
    with np.errstate(divide="ignore"):
        state = _InnerState(log_x=_normalized_logits(np.log(x0), mask), eta=ETA_INIT)

    m = program.constraints.size if program.constraints is not None else 0
    lam = np.zeros(m)
    rho = settings.initial_penalty
    final_tol = settings.kkt_tol / 100
    trace: list[TracePoint] = []
    prev_violation = math.inf
    al_converged = False

    outer_rounds = settings.max_outer_iters if m else 1
    for outer in range(outer_rounds):
        tol = final_tol if not m else max(final_tol, 1e-3 * 0.1 ** outer)
        budget = settings.max_iters - state.iterations
        if budget <= 0:
            break
        merit_fn = _AugmentedLagrangian(program, lam, rho)
        _inner_solve(program, merit_fn, state, tol, budget, trace)
        inner_done = state.stationarity <= max(tol, settings.kkt_tol / 10) or state.stalled

        x = np.exp(state.log_x)
        g = program.constraint_values(x)
        if not m:
            al_converged = inner_done
            break

        violation = float(np.max(g, initial=0.0))
        new_lam = np.maximum(0.0, lam + rho * g)
        complementarity = float(np.max(np.abs(new_lam * g)))
        logger.debug(f"Outer {outer}: iters={state.iterations} violation={violation:.3g} "
                     f"stationarity={state.stationarity:.3g} rho={rho:.3g} lam={new_lam}")
        lam = new_lam
        if (inner_done and tol <= final_tol and violation <= settings.feasibility_tol
                and complementarity <= settings.feasibility_tol):
            al_converged = True
            break
        if violation > 0.25 * prev_violation:
            rho = min(rho * 10.0, settings.max_penalty)
        prev_violation = violation

    if not al_converged:
        logger.debug(f"Augmented Lagrangian stopped early after {state.iterations} iterations")
    x = np.exp(state.log_x)
    if program.restore is not None:
        x = program.restore(x)
    channel = Channel(program.input_alphabet, program.output_alphabet, x)
    return evaluate(program, channel, iterations=state.iterations, multipliers=lam, trace=tuple(trace))


def evaluate(program: ChannelProgram, channel: Channel, iterations: int = 0,
             multipliers: np.ndarray | None = None, trace: tuple[TracePoint, ...] = ()) -> SolverResult:
    """Package ``channel`` as a result of ``program``, certificate included."""
    settings = program.settings
    x = channel.rows
    residuals = np.maximum(program.constraint_values(x), 0.0)
    try:
        kkt = certify(program, channel)
    except InfeasibleCandidateError as exc:
        logger.warning(f"Solver output is infeasible: {exc}")
        kkt = math.inf

    converged = bool(np.all(residuals <= settings.feasibility_tol)) and kkt <= settings.kkt_tol
    floor_active = bool(program.log_floor_active(x)) if program.log_floor_active else False
    if floor_active:
        logger.info("The log floor is active at the solution")
    result = SolverResult(
        channel=channel,
        objective_value=float(program.objective(x)),
        constraint_residuals=residuals,
        kkt_residual=kkt,
        iterations=iterations,
        converged=converged,
        multipliers=np.zeros(residuals.size) if multipliers is None else multipliers,
        floor_active=floor_active,
        trace=trace,
    )
    log = logger.info if converged else logger.warning
    log(f"Solver {'converged' if converged else 'did not converge'}: objective={result.objective_value:.10g} "
        f"kkt={kkt:.3g} max_residual={float(np.max(residuals, initial=0.0)):.3g} iterations={iterations}")
    return result


def _projected(x: Matrix, grad: Matrix, mask: np.ndarray) -> np.ndarray:
    grad = np.where(mask, grad, 0.0)
    nu = np.sum(x * grad, axis=1, keepdims=True)
    return (x * (grad - nu)).ravel()


def certify(program: ChannelProgram, candidate: Channel, seed: int = 0) -> float:
    """KKT residual of ``candidate``; zero at an optimum.

    Multipliers of the (nearly) active constraints are fitted by non-negative
    least squares. The residual is raised to the best objective gain found by
    random feasible perturbations of size 1e-3 when that gain exceeds 1e-6.
    """
    settings = program.settings
    mask = program.support_mask
    x = candidate.rows
    if np.any((x > 0) & ~mask):
        raise InfeasibleCandidateError("Candidate puts mass outside the allowed support")
    g = program.constraint_values(x)
    if np.any(g > settings.feasibility_tol):
        raise InfeasibleCandidateError(f"Constraint violation {float(np.max(g)):.3g} exceeds "
                                       f"{settings.feasibility_tol:.3g}")

    grad = np.asarray(program.gradient(x), dtype=float)
    if g.size:
        jac = program.constraint_jacobian(x)
        active = np.flatnonzero(g >= -ACTIVE_TOL)
        if active.size:
            columns = np.stack([_projected(x, jac[i], mask) for i in active], axis=1)
            mu, _ = optimize.nnls(columns, -_projected(x, grad, mask))
            grad = grad + np.tensordot(mu, jac[active], axes=1)
    residual = _stationarity(x, grad, mask)

    f0 = float(program.objective(x))
    allowed_violation = np.maximum(g, 0.0)
    rng = np.random.default_rng(seed)
    best_gain = 0.0
    for _ in range(PERTURBATIONS):
        step = np.where(mask, rng.normal(size=x.shape), 0.0)
        step -= np.where(mask, step.sum(axis=1, keepdims=True) / mask.sum(axis=1, keepdims=True), 0.0)
        step *= PERTURBATION_SIZE / max(float(np.max(np.abs(step))), 1e-300)
        y = np.maximum(x + step, 0.0)
        y = y / y.sum(axis=1, keepdims=True)
        if np.any(program.constraint_values(y) > allowed_violation):
            continue
        best_gain = max(best_gain, f0 - float(program.objective(y)))
    if best_gain > PERTURBATION_GAIN:
        logger.debug(f"Random perturbation improves the objective by {best_gain:.3g}")
        residual = max(residual, best_gain)
    return residual


def write_trace_csv(result: SolverResult, path: str) -> None:
    """Dump the iteration trace as ``iter,objective,max_residual``."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["iter", "objective", "max_residual"])
        for point in result.trace:
            writer.writerow([point.iteration, f"{point.objective:.12g}", f"{point.max_residual:.12g}"])
