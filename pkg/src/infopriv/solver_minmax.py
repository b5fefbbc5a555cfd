"""Least-distortion release mappings under a cap on the maximum information leakage.

The cap ``max_u H(S) - H(S|U=u) <= eps`` is written per output as

    delta * p_U(u) + sum_s p(s,u) log2 p(s,u) / p_U(u) - sum_s p(s,u) c(s) <= 0,

with ``delta = H(S) - eps`` and ``c`` the within-class entropy. Each left-hand
side is a perspective of a convex function, so the program is convex, and
outputs without mass satisfy it trivially. A budget on the distortion is then
met by bisection over eps, since the least distortion decreases with eps.

When Y is a deterministic function of S the same cap reads
``D(p_{Y|U=u} || zeta) <= log2 Z - delta`` with ``zeta(y) = 2^{H(S|Y=y)} / Z``.
"""

from dataclasses import dataclass, replace
import logging
import math
from typing import Callable

import numpy as np
from scipy import optimize, special

from infopriv import info_metrics
from infopriv import prob_core
from infopriv import solver_core
from infopriv import utils
from infopriv.exceptions import InfeasibleBudgetError, InfoprivError, InvalidEpsilonError, NotDeterministicError
from infopriv.problem import DesignMode, ProblemInstance
from infopriv.prob_core import Channel, Pmf
from infopriv.settings import SolverSettings
from infopriv.solver_core import ChannelProgram, ConstraintSet, SolverResult


logger = logging.getLogger(__name__)

LN2 = info_metrics.LN2
EPSILON_SLACK = 1e-9
ENTROPY_MARGIN = 1e-12
RESTORE_STEPS = 60


@dataclass(frozen=True, eq=False)
class MinmaxResult:
    channel: Channel
    distortion: float
    epsilon_bits: float
    """The leakage cap the channel was designed for."""
    per_output_entropy: np.ndarray
    """H(S|U=u) in bits; the prior entropy for outputs without mass."""
    delta_param: float
    p_u: np.ndarray
    achieved_leakage_bits: float
    solver: SolverResult
    line_search_steps: int = 0

    @property
    def converged(self) -> bool:
        return self.solver.converged


def _primary(instance: ProblemInstance) -> ProblemInstance:
    if not instance.distortions:
        raise InfoprivError("A minmax design needs at least one distortion")
    return instance


def _side(instance: ProblemInstance) -> ProblemInstance:
    """The instance without its first distortion, which becomes the objective."""
    return replace(instance, distortions=instance.distortions[1:])


def _validated_epsilon(instance: ProblemInstance, epsilon_bits: float) -> float:
    h_prior = instance.prior_entropy_bits()
    if not math.isfinite(epsilon_bits) or epsilon_bits < 0 or epsilon_bits > h_prior + EPSILON_SLACK:
        raise InvalidEpsilonError(f"epsilon must lie in [0, H(S)] = [0, {h_prior:.12g}] bits, got {epsilon_bits}")
    return min(float(epsilon_bits), h_prior)


def entropy_constraints(instance: ProblemInstance, delta: float) -> ConstraintSet:
    """One constraint per output: p_U(u) (delta - H(S|U=u)) <= 0."""
    a = instance.design.a
    classes = instance.class_entropy_bits
    log_prior = np.log2(np.maximum(instance.prior_s.probs, solver_core.LOG_FLOOR))
    u_size = instance.u_size

    def values(x: np.ndarray) -> np.ndarray:
        p_su = a @ x
        p_u = p_su.sum(axis=0)
        plogp = (special.entr(p_u) - np.sum(special.entr(p_su), axis=0)) / LN2
        return delta * p_u + plogp - classes @ p_su

    def jacobian(x: np.ndarray) -> np.ndarray:
        p_su = a @ x
        p_u = p_su.sum(axis=0)
        with np.errstate(divide="ignore", invalid="ignore"):
            log_post = np.log2(np.maximum(p_su / p_u, solver_core.LOG_FLOOR))
        log_post = np.where(p_u > 0, log_post, log_prior[:, None])
        columns = a.T @ (delta + log_post - classes[:, None])
        jac = np.zeros((u_size,) + x.shape)
        for u in range(u_size):
            jac[u, :, u] = columns[:, u]
        return jac

    return ConstraintSet(tuple(f"leakage[{label}]" for label in instance.output_labels), values, jacobian)


def zeta_constraints(instance: ProblemInstance, zeta: np.ndarray, threshold: float) -> ConstraintSet:
    """One constraint per output: p_U(u) (D(p_{Y|U=u} || zeta) - threshold) <= 0."""
    b = instance.design.b
    u_size = instance.u_size

    def values(x: np.ndarray) -> np.ndarray:
        p_yu = b @ x
        p_u = p_yu.sum(axis=0)
        return np.sum(special.rel_entr(p_yu, np.outer(zeta, p_u)), axis=0) / LN2 - threshold * p_u

    def jacobian(x: np.ndarray) -> np.ndarray:
        p_yu = b @ x
        reference = np.outer(zeta, p_yu.sum(axis=0))
        ratio = np.divide(p_yu, reference, out=np.ones_like(p_yu), where=reference > 0)
        columns = b.T @ (np.log2(np.maximum(ratio, solver_core.LOG_FLOOR)) - threshold)
        jac = np.zeros((u_size,) + x.shape)
        for u in range(u_size):
            jac[u, :, u] = columns[:, u]
        return jac

    return ConstraintSet(tuple(f"zeta[{label}]" for label in instance.output_labels), values, jacobian)


def _entropy_restorer(instance: ProblemInstance, delta: float, mask: np.ndarray | None) -> Callable:
    """Lift outputs whose posterior entropy is below ``delta``.

    Every input sends a share ``c`` of its mass to the offending output ``u``.
    Other posteriors are unchanged and the posterior of ``u`` moves towards
    the prior, which has the largest entropy of all achievable ones.
    """
    prior = instance.prior_s.probs
    classes = instance.class_entropy_bits
    h_prior = instance.prior_entropy_bits()
    target = min(delta + ENTROPY_MARGIN, h_prior)

    def mixed_entropy(posterior: np.ndarray, theta: float) -> float:
        mixed = (1.0 - theta) * posterior + theta * prior
        return float(info_metrics.entropy_rows(mixed) + mixed @ classes)

    def restore(x: np.ndarray) -> np.ndarray:
        x = x.copy()
        for u in range(instance.u_size):
            p_su = instance.joint_su(x)
            p_u = float(p_su[:, u].sum())
            if p_u < prob_core.SUPPORT_THRESHOLD:
                continue
            posterior = p_su[:, u] / p_u
            h = mixed_entropy(posterior, 0.0)
            if h >= delta or h_prior - h <= 0:
                continue
            if mask is not None and not np.all(mask[:, u]):
                logger.warning(f"Cannot restore output {instance.output_labels[u]}: restricted support")
                continue
            # concavity: the mixture entropy is at least the mixture of entropies
            lo, hi = 0.0, min(1.0, (target - h) / (h_prior - h))
            for _ in range(RESTORE_STEPS):
                mid = (lo + hi) / 2
                if mixed_entropy(posterior, mid) >= target:
                    hi = mid
                else:
                    lo = mid
            share = hi * p_u / (1.0 - hi + hi * p_u)
            logger.debug(f"Output {instance.output_labels[u]}: entropy {h:.10g} < {delta:.10g}, "
                         f"moving share {share:.3g} of every row")
            x *= 1.0 - share
            x[:, u] += share
        return x

    return restore


def _program(instance: ProblemInstance, leakage: ConstraintSet, delta: float,
             settings: SolverSettings) -> ChannelProgram:
    design = instance.design
    cost = design.b.T @ instance.distortions[0].matrix
    side = _side(instance)
    mask = side.support_mask(settings.feasibility_tol)
    tight = side.tight_constraints(settings.feasibility_tol)
    loose = [d for d, t in zip(side.distortions, tight) if not t]
    side_constraints = None
    if loose:
        side_constraints = ConstraintSet.linear(
            tuple(f"distortion[{i + 1}]" for i, t in enumerate(tight) if not t),
            [design.b.T @ d.matrix for d in loose], np.array([d.budget for d in loose]))
    return ChannelProgram(
        objective=lambda x: float(np.sum(x * cost)),
        gradient=lambda x: cost,
        input_alphabet=design.rows,
        output_alphabet=instance.u_alphabet,
        constraints=solver_core.stack_constraints(leakage, side_constraints),
        row_weights=design.row_weights,
        support_mask=mask,
        restore=_entropy_restorer(instance, delta, mask),
        settings=settings,
    )


def minmax_program(instance: ProblemInstance, epsilon_bits: float,
                   settings: SolverSettings | None = None) -> ChannelProgram:
    """The distortion program with every output's leakage capped at ``epsilon_bits``."""
    settings = settings or SolverSettings()
    instance = _primary(instance)
    delta = instance.prior_entropy_bits() - _validated_epsilon(instance, epsilon_bits)
    return _program(instance, entropy_constraints(instance, delta), delta, settings)


def _zero_leakage(instance: ProblemInstance, settings: SolverSettings) -> SolverResult:
    """Least distortion with U independent of S, solved exactly as a linear program.

    Independence is linear in the decision matrix: (A X)[s, u] = p_S(s) (1' A X)[u].
    """
    design = instance.design
    a, b = design.a, design.b
    rows, u_size = a.shape[1], instance.u_size
    n = rows * u_size
    cost = (b.T @ instance.distortions[0].matrix).ravel()
    coupling = a - np.outer(instance.prior_s.probs, a.sum(axis=0))

    a_eq = [np.kron(np.eye(rows)[r], np.ones(u_size)) for r in range(rows)]
    # the last S symbol's equations follow from the others
    for s in range(a.shape[0] - 1):
        for u in range(u_size):
            row = np.zeros((rows, u_size))
            row[:, u] = coupling[s]
            a_eq.append(row.ravel())
    b_eq = np.concatenate([np.ones(rows), np.zeros(len(a_eq) - rows)])
    side = _side(instance).distortions
    a_ub = np.array([(b.T @ d.matrix).ravel() for d in side]) if side else None
    b_ub = np.array([d.budget for d in side]) if side else None
    result = optimize.linprog(cost, A_ub=a_ub, b_ub=b_ub, A_eq=np.array(a_eq), b_eq=b_eq,
                              bounds=[(0, None)] * n, method="highs")
    if result.status != 0:
        raise InfeasibleBudgetError(f"No zero-leakage channel meets the side budgets: {result.message}",
                                    instance.min_distortions(), instance.budgets)

    reduced = cost - np.array(a_eq).T @ result.eqlin.marginals
    if a_ub is not None:
        reduced -= a_ub.T @ result.ineqlin.marginals
    x = np.maximum(result.x, 0.0)
    kkt = max(float(np.max(-reduced, initial=0.0)), float(np.max(np.abs(x * reduced), initial=0.0)))
    x = x.reshape(rows, u_size)
    x = x / x.sum(axis=1, keepdims=True)

    h_prior = instance.prior_entropy_bits()
    program = _program(instance, entropy_constraints(instance, h_prior), h_prior, settings)
    values = program.constraint_values(x)
    residuals = np.maximum(values, 0.0)
    converged = bool(np.all(residuals <= settings.feasibility_tol)) and kkt <= settings.kkt_tol
    logger.info(f"Zero-leakage LP: distortion={float(result.fun):.10g} reduced-cost residual={kkt:.3g}")
    return SolverResult(
        channel=Channel(design.rows, instance.u_alphabet, x),
        objective_value=float(program.objective(x)),
        constraint_residuals=residuals,
        kkt_residual=kkt,
        iterations=int(result.nit),
        converged=converged,
    )


def _package(instance: ProblemInstance, epsilon: float, result: SolverResult, steps: int = 0) -> MinmaxResult:
    x = result.channel.rows
    p_u, h = instance.output_entropies(x)
    supported = p_u >= prob_core.SUPPORT_THRESHOLD
    h_prior = instance.prior_entropy_bits()
    achieved = float(np.max(h_prior - h[supported])) if np.any(supported) else 0.0
    p_us, p_uy = instance.induced(x)
    result = replace(result, auxiliary={"p_U|S": p_us, "p_U|Y": p_uy})
    return MinmaxResult(
        channel=result.channel,
        distortion=float(instance.expected_distortions(x)[0]),
        epsilon_bits=epsilon,
        per_output_entropy=h,
        delta_param=h_prior - epsilon,
        p_u=p_u,
        achieved_leakage_bits=max(achieved, 0.0),
        solver=result,
        line_search_steps=steps,
    )


def _solve_at(instance: ProblemInstance, epsilon: float, settings: SolverSettings,
              init: Channel | None, zeta: np.ndarray | None = None) -> MinmaxResult:
    h_prior = instance.prior_entropy_bits()
    if epsilon <= 0.0:
        return _package(instance, 0.0, _zero_leakage(instance, settings))
    delta = h_prior - epsilon
    if zeta is None:
        leakage = entropy_constraints(instance, delta)
    else:
        log_z = _log_partition(instance)
        leakage = zeta_constraints(instance, zeta, log_z - delta)
    program = _program(instance, leakage, delta, settings)
    if init is None or init.input_alphabet != program.input_alphabet:
        init = Channel.uniform(program.input_alphabet, program.output_alphabet)
    return _package(instance, epsilon, solver_core.minimize(program, init))


def min_distortion_given_maxleak(instance: ProblemInstance, epsilon_bits: float,
                                 settings: SolverSettings | None = None,
                                 init: Channel | None = None) -> MinmaxResult:
    """Least expected distortion (first distortion matrix) with every output leaking at most eps bits.

    Further distortions of the instance act as side budgets.
    """
    settings = settings or SolverSettings()
    instance = _primary(instance)
    epsilon = _validated_epsilon(instance, epsilon_bits)
    _side(instance).check_feasible(settings.feasibility_tol)
    return _solve_at(instance, epsilon, settings, init)


def _grid_job(job: tuple[ProblemInstance, float, SolverSettings, np.ndarray | None]) -> MinmaxResult:
    instance, epsilon, settings, zeta = job
    return _solve_at(instance, epsilon, settings, None, zeta)


def _line_search(instance: ProblemInstance, delta_budget: float, settings: SolverSettings,
                 zeta: np.ndarray | None, grid_points: int | None, jobs: int) -> MinmaxResult:
    instance = _primary(instance)
    _side(instance).check_feasible(settings.feasibility_tol)
    tol = settings.feasibility_tol
    h_prior = instance.prior_entropy_bits()

    def meets(result: MinmaxResult) -> bool:
        return result.distortion <= delta_budget + tol

    best = _solve_at(instance, 0.0, settings, None, zeta)
    if meets(best):
        logger.info("Full privacy fits the distortion budget")
        return best
    lo, hi = 0.0, h_prior

    if grid_points and grid_points > 2:
        grid = np.linspace(0.0, h_prior, grid_points)[1:]
        results = utils.parallel_map(_grid_job, [(instance, float(e), settings, zeta) for e in grid], jobs)
        feasible = [i for i, r in enumerate(results) if meets(r)]
        if not feasible:
            raise InfeasibleBudgetError(
                f"Budget {delta_budget:.12g} is below the least achievable distortion "
                f"{results[-1].distortion:.12g}", [results[-1].distortion], [delta_budget])
        first = feasible[0]
        hi, best = float(grid[first]), results[first]
        lo = float(grid[first - 1]) if first > 0 else 0.0
    else:
        top = _solve_at(instance, h_prior, settings, None, zeta)
        if not meets(top):
            raise InfeasibleBudgetError(
                f"Budget {delta_budget:.12g} is below the least achievable distortion {top.distortion:.12g}",
                [top.distortion], [delta_budget])
        best = top

    steps = 0
    while hi - lo > settings.line_search_tol and steps < settings.line_search_max_iters:
        mid = (lo + hi) / 2
        result = _solve_at(instance, mid, settings, best.channel, zeta)
        steps += 1
        logger.debug(f"Line search step {steps}: eps={mid:.6f} distortion={result.distortion:.10g}")
        if meets(result):
            hi, best = mid, result
        else:
            lo = mid
    logger.info(f"Line search: eps={hi:.6f} bits after {steps} steps, distortion={best.distortion:.10g}")
    return replace(best, line_search_steps=steps)


def solve_minmax_leakage(instance: ProblemInstance, delta_budget: float, settings: SolverSettings | None = None,
                         grid_points: int | None = None, jobs: int = 1) -> MinmaxResult:
    """Smallest leakage cap whose least distortion fits ``delta_budget``.

    Bisection on eps to ``line_search_tol`` bits; with ``grid_points`` an
    eps grid is solved first (in parallel for ``jobs > 1``) to bracket the
    answer. Raises ``InfeasibleBudgetError`` with the least achievable
    distortion when even eps = H(S) does not fit.
    """
    return _line_search(instance, delta_budget, settings or SolverSettings(), None, grid_points, jobs)


def _class_entropies(instance: ProblemInstance) -> tuple[np.ndarray, np.ndarray]:
    """H(S|Y=y) in bits and the support of p_Y, after checking Y = f(S)."""
    joint = instance.joint.probs
    for s, row in enumerate(joint):
        columns = np.flatnonzero(row > 0)
        if columns.size > 1:
            raise NotDeterministicError(instance.s_alphabet.labels[s], instance.y_alphabet.labels[columns[1]])
    p_y = instance.p_y.probs
    supported = p_y > 0
    posterior = np.divide(joint, p_y, out=np.zeros_like(joint), where=supported)
    entropies = info_metrics.entropy_rows(posterior.T) + posterior.T @ instance.class_entropy_bits
    return np.where(supported, entropies, 0.0), supported


def _log_partition(instance: ProblemInstance) -> float:
    entropies, supported = _class_entropies(instance)
    return float(special.logsumexp(entropies[supported] * LN2) / LN2)


def zeta_distribution(instance: ProblemInstance) -> Pmf:
    """zeta(y) proportional to 2^{H(S|Y=y)} over the values Y takes.

    Values of Y with no mass get zeta(y) = 0, which keeps
    H(S|U=u) = log2 Z - D(p_{Y|U=u} || zeta) exact.
    Raises ``NotDeterministicError`` unless Y is a function of S.
    """
    entropies, supported = _class_entropies(instance)
    logits = np.where(supported, entropies * LN2, -np.inf)
    return Pmf(instance.y_alphabet, special.softmax(logits))


def zeta_divergences(instance: ProblemInstance, channel: Channel) -> tuple[np.ndarray, float]:
    """D(p_{Y|U=u} || zeta) in bits per output and log2 Z."""
    zeta = zeta_distribution(instance).probs
    p_yu = instance.joint_yu(channel.rows)
    p_u = p_yu.sum(axis=0)
    posterior = np.divide(p_yu, p_u, out=np.tile(instance.p_y.probs[:, None], (1, p_u.size)), where=p_u > 0)
    return np.sum(special.rel_entr(posterior, zeta[:, None]), axis=0) / LN2, _log_partition(instance)


def minmax_via_zeta(instance: ProblemInstance, delta_budget: float, settings: SolverSettings | None = None,
                    grid_points: int | None = None, jobs: int = 1) -> MinmaxResult:
    """Same design as ``solve_minmax_leakage``, with the cap written as a divergence from zeta.

    Only defined for release mappings of Y, so Direct instances are solved
    over p_{U|Y}.
    """
    zeta = zeta_distribution(instance).probs
    if instance.mode is not DesignMode.FROM_Y:
        logger.info("The zeta form releases from Y only; solving over p_U|Y")
        instance = instance.with_mode(DesignMode.FROM_Y)
    return _line_search(instance, delta_budget, settings or SolverSettings(), zeta, grid_points, jobs)
