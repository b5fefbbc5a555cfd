"""Release mappings with the least average information leakage I(S;U) under distortion budgets."""

from dataclasses import dataclass, replace
import logging
from typing import Sequence

import numpy as np
from scipy import special

from infopriv import info_metrics
from infopriv import solver_core
from infopriv import utils
from infopriv.exceptions import AuditInvariantError, InfeasibleBudgetError, InvalidBudgetError
from infopriv.problem import ProblemInstance
from infopriv.prob_core import Channel
from infopriv.settings import SolverSettings
from infopriv.solver_core import ChannelProgram, ConstraintSet, SolverResult


logger = logging.getLogger(__name__)

LN2 = info_metrics.LN2
# Allowed rise or bulge of a tradeoff curve, in bits.
CURVE_SHAPE_TOL = 1e-6


def _log_ratio(p_su: np.ndarray) -> np.ndarray:
    """log2 p(s,u) / (p(s) p(u)) with the ratio floored at ``LOG_FLOOR``."""
    product = np.outer(p_su.sum(axis=1), p_su.sum(axis=0))
    ratio = np.divide(p_su, product, out=np.ones_like(p_su), where=product > 0)
    return np.log2(np.maximum(ratio, solver_core.LOG_FLOOR))


def leakage_program(instance: ProblemInstance, settings: SolverSettings | None = None) -> ChannelProgram:
    """I(S;U) over the instance design, one inequality per distortion budget.

    Budgets at their minimum are turned into a support restriction instead of
    an inequality, since such a constraint has no strictly feasible point.
    """
    settings = settings or SolverSettings()
    design = instance.design
    mask = instance.support_mask(settings.feasibility_tol)
    tight = instance.tight_constraints(settings.feasibility_tol)
    active = [d for d, t in zip(instance.distortions, tight) if not t]

    def objective(x: np.ndarray) -> float:
        p_su = instance.joint_su(x)
        product = np.outer(p_su.sum(axis=1), p_su.sum(axis=0))
        return float(np.sum(special.rel_entr(p_su, product))) / LN2

    def gradient(x: np.ndarray) -> np.ndarray:
        return design.a.T @ _log_ratio(instance.joint_su(x))

    def floor_active(x: np.ndarray) -> bool:
        p_su = instance.joint_su(x)
        product = np.outer(p_su.sum(axis=1), p_su.sum(axis=0))
        tiny = (p_su > 0) & (p_su < solver_core.LOG_FLOOR * product)
        return bool(np.any(tiny))

    constraints = None
    if active:
        names = tuple(f"distortion[{i}]" for i, t in enumerate(tight) if not t)
        constraints = ConstraintSet.linear(names, [design.b.T @ d.matrix for d in active],
                                           np.array([d.budget for d in active]))

    return ChannelProgram(
        objective=objective,
        gradient=gradient,
        input_alphabet=design.rows,
        output_alphabet=instance.u_alphabet,
        constraints=constraints,
        row_weights=design.row_weights,
        support_mask=mask,
        restore=_distortion_restorer(instance, mask),
        log_floor_active=floor_active,
        settings=settings,
    )


def _distortion_restorer(instance: ProblemInstance, mask: np.ndarray | None):
    """Mix a slightly infeasible iterate with the most feasible channel.

    The mixing weight is the smallest one that brings every budget back within
    tolerance; the objective is convex, so mixing costs at most that weight
    times the leakage gap.
    """
    def restore(x: np.ndarray) -> np.ndarray:
        excess = instance.expected_distortions(x) - np.array(instance.budgets)
        if not excess.size or np.all(excess <= 0):
            return x
        anchor_y, _ = instance.most_feasible()
        anchor = instance.lift(anchor_y)
        if mask is not None:
            anchor = np.where(mask, anchor, 0.0)
            anchor = anchor / anchor.sum(axis=1, keepdims=True)
        anchor_excess = instance.expected_distortions(anchor) - np.array(instance.budgets)
        weight = 0.0
        for e, a in zip(excess, anchor_excess):
            if e > 0 and e - a > 0:
                weight = max(weight, e / (e - a))
        weight = min(weight, 1.0)
        logger.debug(f"Restoring distortion feasibility with mixing weight {weight:.3g}")
        return (1.0 - weight) * x + weight * anchor

    return restore


def _with_auxiliary(instance: ProblemInstance, result: SolverResult) -> SolverResult:
    p_us, p_uy = instance.induced(result.channel.rows)
    return replace(result, auxiliary={"p_U|S": p_us, "p_U|Y": p_uy})


def _constant_output(instance: ProblemInstance, tol: float) -> int | None:
    """Cheapest output whose constant release meets every budget, if any."""
    if not instance.distortions:
        return 0
    costs = np.array([instance.p_y.probs @ d.matrix for d in instance.distortions])
    meets = np.all(costs <= np.array(instance.budgets)[:, None] + tol, axis=0)
    if not np.any(meets):
        return None
    return int(np.argmin(np.where(meets, costs[0], np.inf)))


def _constant_channel(instance: ProblemInstance, program: ChannelProgram, u: int) -> Channel:
    x = np.zeros(program.shape)
    x[:, u] = 1.0
    # rows without input mass may have u masked out; any allowed output does for them
    stray = ~program.support_mask[:, u]
    if np.any(stray):
        x[stray] = 0.0
        x[stray, np.argmax(program.support_mask[stray], axis=1)] = 1.0
    return Channel(program.input_alphabet, program.output_alphabet, x)


def solve_min_avg_leakage(instance: ProblemInstance, settings: SolverSettings | None = None,
                          init: Channel | None = None) -> SolverResult:
    """Channel minimizing I(S;U) (bits) subject to every distortion budget.

    When a single output meets every budget the constant release is optimal
    (zero leakage) and is returned without iterating.
    Raises ``InfeasibleBudgetError`` when the budgets cannot be met.
    """
    settings = settings or SolverSettings()
    instance.check_feasible(settings.feasibility_tol)
    program = leakage_program(instance, settings)
    u = _constant_output(instance, settings.feasibility_tol)
    if u is not None:
        logger.info(f"Constant release of {instance.u_alphabet.labels[u]} meets every budget")
        result = solver_core.evaluate(program, _constant_channel(instance, program, u))
        return _with_auxiliary(instance, result)
    if init is None or init.input_alphabet != program.input_alphabet:
        init = Channel.uniform(program.input_alphabet, program.output_alphabet)
    result = solver_core.minimize(program, init)
    return _with_auxiliary(instance, result)


@dataclass(frozen=True, eq=False)
class CurvePoint:
    delta: float
    leakage_bits: float | None
    result: SolverResult | None = None
    error: str | None = None
    """Reason the point could not be solved, e.g. an infeasible budget."""

    @property
    def feasible(self) -> bool:
        return self.result is not None


def _curve_point(job: tuple[ProblemInstance, float, SolverSettings, Channel | None]) -> CurvePoint:
    instance, delta, settings, init = job
    budgets = [delta] + instance.budgets[1:]
    try:
        result = solve_min_avg_leakage(instance.with_budgets(budgets), settings, init)
    except InfeasibleBudgetError as exc:
        logger.warning(f"Curve point delta={delta:.12g} is infeasible: {exc}")
        return CurvePoint(delta, None, error=str(exc))
    return CurvePoint(delta, result.objective_value, result)


def tradeoff_curve(instance: ProblemInstance, deltas: Sequence[float], settings: SolverSettings | None = None,
                   jobs: int = 1) -> list[CurvePoint]:
    """Leakage over a grid of budgets for the first distortion constraint.

    Points are solved in order with warm starts. With ``jobs > 1`` they are
    solved independently in worker processes instead. Either way the converged
    points must form a non-increasing convex curve.
    """
    settings = settings or SolverSettings()
    deltas = [float(d) for d in deltas]
    if any(b < a for a, b in zip(deltas, deltas[1:])):
        raise InvalidBudgetError("Budget grid must be sorted ascending")
    if not instance.distortions:
        raise InfeasibleBudgetError("A tradeoff curve needs a distortion constraint", [], [])

    if jobs > 1:
        points = utils.parallel_map(_curve_point, [(instance, d, settings, None) for d in deltas], jobs)
    else:
        points = []
        init = None
        for delta in deltas:
            point = _curve_point((instance, delta, settings, init))
            if point.result is not None:
                init = point.result.channel
            points.append(point)
    check_curve_shape(points)
    return points


def check_curve_shape(points: Sequence[CurvePoint], tol: float = CURVE_SHAPE_TOL) -> None:
    """Raise ``AuditInvariantError`` unless converged points are non-increasing and convex in the budget."""
    solved = [(p.delta, p.leakage_bits) for p in points if p.result is not None and p.result.converged]
    for (_, before), (_, after) in zip(solved, solved[1:]):
        if after > before + tol:
            raise AuditInvariantError(f"Leakage increased along the curve: {before:.10g} -> {after:.10g}")
    for (d1, v1), (d2, v2), (d3, v3) in zip(solved, solved[1:], solved[2:]):
        if d3 == d1:
            continue
        chord = v1 + (v3 - v1) * (d2 - d1) / (d3 - d1)
        if v2 > chord + tol:
            raise AuditInvariantError(f"Curve is not convex at delta={d2:.10g}: {v2:.10g} above chord {chord:.10g}")

