"""Special cases of the average-leakage design.

- When Y is a deterministic function of S, I(S;U) = I(Y;U) and the design is
  a rate-distortion problem over the source p_Y.
- Restricting releases to U = Y + Z with a difference distortion d(Y - U)
  turns it into choosing the noise Z of largest entropy within the budget.
"""

from dataclasses import dataclass
import logging
import math
from typing import Sequence

import numpy as np
from scipy import optimize, special

from infopriv import info_metrics
from infopriv import prob_core
from infopriv import solver_avg
from infopriv.exceptions import InfeasibleBudgetError, InvalidDistributionError
from infopriv.problem import ProblemInstance, build_instance
from infopriv.prob_core import Alphabet, Channel, JointPmf, Pmf
from infopriv.settings import SolverSettings
from infopriv.solver_core import SolverResult


logger = logging.getLogger(__name__)

LAMBDA_BRACKET = (0.0, 1e4)
LAMBDA_XTOL = 1e-14


def rate_distortion_instance(source: Pmf, d: np.ndarray, delta: float) -> ProblemInstance:
    """Average-leakage instance with S = Y."""
    joint = JointPmf(source.alphabet, source.alphabet, np.diag(source.probs))
    d = np.asarray(d, dtype=float)
    return build_instance(joint, [(d, delta)], u_size=d.shape[1])


def rate_distortion(source: Pmf, d: np.ndarray, delta: float, settings: SolverSettings | None = None) -> SolverResult:
    """R(delta) = min I(Y;U) subject to E[d(Y,U)] <= delta, in bits."""
    return solver_avg.solve_min_avg_leakage(rate_distortion_instance(source, d, delta), settings)


@dataclass(frozen=True, eq=False)
class RateDistortionPoint:
    channel: Channel
    rate_bits: float
    distortion: float
    output_marginal: np.ndarray
    iterations: int


def blahut_arimoto(source: Pmf, d: np.ndarray, slope: float, tol: float = 1e-12,
                   max_iters: int = 100000) -> RateDistortionPoint:
    """One point of R(D) by alternating minimization at Lagrange slope ``-slope``.

    Iterates ``W(u|y) ∝ q(u) exp(-slope d(y,u))`` and ``q = p_Y W`` in the log
    domain until the output marginal moves by less than ``tol``.
    """
    d = np.asarray(d, dtype=float)
    p = source.probs
    u_size = d.shape[1]
    log_q = np.full(u_size, -math.log(u_size))
    iterations = 0
    for iterations in range(1, max_iters + 1):
        log_w = log_q[None, :] - slope * d
        log_w -= special.logsumexp(log_w, axis=1, keepdims=True)
        q = p @ np.exp(log_w)
        with np.errstate(divide="ignore"):
            new_log_q = np.log(q)
        change = float(np.max(np.abs(np.exp(new_log_q) - np.exp(log_q))))
        log_q = new_log_q
        if change < tol:
            break
    else:
        logger.warning(f"Blahut-Arimoto did not settle within {max_iters} iterations")

    log_w = log_q[None, :] - slope * d
    log_w -= special.logsumexp(log_w, axis=1, keepdims=True)
    outputs = Alphabet.of_size(u_size, "u")
    channel = Channel(source.alphabet, outputs, np.exp(log_w))
    rate = info_metrics.mutual_information(prob_core.induced_joint(source, channel))
    return RateDistortionPoint(
        channel=channel,
        rate_bits=rate,
        distortion=float(p @ np.sum(channel.rows * d, axis=1)),
        output_marginal=np.exp(log_q),
        iterations=iterations,
    )


@dataclass(frozen=True, eq=False)
class NoiseProblem:
    offsets: tuple[int, ...]
    d_z: np.ndarray
    budget: float

    def __post_init__(self) -> None:
        offsets = tuple(int(z) for z in self.offsets)
        if len(set(offsets)) != len(offsets) or not offsets:
            raise InvalidDistributionError("Noise offsets must be distinct and non-empty")
        d_z = prob_core.as_float_array(self.d_z, "d_z")
        if d_z.shape != (len(offsets),) or not np.all(np.isfinite(d_z)) or np.any(d_z < 0):
            raise InvalidDistributionError("d_z needs one finite, non-negative value per offset")
        d_z.flags.writeable = False
        object.__setattr__(self, "offsets", offsets)
        object.__setattr__(self, "d_z", d_z)
        object.__setattr__(self, "budget", float(self.budget))

    @classmethod
    def symmetric(cls, radius: int, budget: float, power: float = 1.0) -> "NoiseProblem":
        """Offsets -radius..radius with d_z = |z|^power."""
        offsets = tuple(range(-radius, radius + 1))
        return cls(offsets, np.abs(np.array(offsets, dtype=float)) ** power, budget)

    @property
    def alphabet(self) -> Alphabet:
        return Alphabet(tuple(str(z) for z in self.offsets))


@dataclass(frozen=True, eq=False)
class NoiseSolution:
    pmf: Pmf
    lam: float
    """Gibbs parameter; ``inf`` for the budget at the smallest distortion."""
    entropy_bits: float
    distortion: float


def _gibbs(d_z: np.ndarray, lam: float) -> np.ndarray:
    return special.softmax(-lam * d_z)


def max_entropy_noise(problem: NoiseProblem) -> NoiseSolution:
    """Noise of largest entropy with E[d_z(Z)] <= budget.

    The maximizer has the form p(z) ∝ exp(-lam d_z(z)); lam is 0 when the
    uniform noise fits the budget and otherwise solves E_lam[d_z] = budget.
    """
    d_z = problem.d_z
    budget = problem.budget
    low = float(np.min(d_z))
    if budget < low:
        raise InfeasibleBudgetError(f"Budget {budget:.12g} is below the smallest noise distortion {low:.12g}",
                                    [low], [budget])

    if float(np.mean(d_z)) <= budget:
        lam = 0.0
        probs = np.full(d_z.size, 1.0 / d_z.size)
    else:
        def excess(lam: float) -> float:
            return float(_gibbs(d_z, lam) @ d_z) - budget

        if budget <= low or excess(LAMBDA_BRACKET[1]) >= 0:
            # the budget sits at the smallest distortion: uniform on its minimizers
            lam = math.inf
            probs = (d_z == low).astype(float)
            probs /= probs.sum()
        else:
            lam = optimize.brentq(excess, *LAMBDA_BRACKET, xtol=LAMBDA_XTOL)
            probs = _gibbs(d_z, lam)

    pmf = Pmf(problem.alphabet, probs)
    solution = NoiseSolution(pmf=pmf, lam=lam, entropy_bits=info_metrics.entropy(pmf),
                             distortion=float(pmf.probs @ d_z))
    logger.debug(f"Max-entropy noise: lam={lam:.10g} H={solution.entropy_bits:.10g} E[d]={solution.distortion:.10g}")
    return solution


def additive_noise_channel(noise: Pmf, offsets: Sequence[int], y_values: Sequence[int]) -> Channel:
    """U = Y + Z on the Y grid, saturating at the smallest and largest value."""
    y_values = [int(y) for y in y_values]
    alphabet = Alphabet(tuple(str(y) for y in y_values))
    lo, hi = y_values[0], y_values[-1]
    index = {y: i for i, y in enumerate(y_values)}
    rows = np.zeros((len(y_values), len(y_values)))
    for i, y in enumerate(y_values):
        for z, p in zip(offsets, noise.probs):
            u = min(max(y + int(z), lo), hi)
            if u not in index:
                raise InvalidDistributionError(f"Y grid {y_values} is not closed under adding {z}")
            rows[i, index[u]] += p
    return Channel(alphabet, alphabet, rows)


def additive_edge_discrepancy(source: Pmf, noise: Pmf, offsets: Sequence[int]) -> float:
    """H(Y|U) - H(Z) in bits for the saturating embedding of U = Y + Z.

    Zero for the unbounded additive model; the finite grid makes it differ at
    the edges, and this measures by how much.
    """
    y_values = [int(label) for label in source.alphabet.labels]
    channel = additive_noise_channel(noise, offsets, y_values)
    source = Pmf(channel.input_alphabet, source.probs)
    mutual = info_metrics.mutual_information(prob_core.induced_joint(source, channel))
    return info_metrics.entropy(source) - mutual - info_metrics.entropy(noise)
