"""Counting-query instances and the Laplace mechanism.

A database of n binary records is never materialized: the count Y is a
sufficient statistic, and given Y = y every database with that count is
equally likely, so H(S^n | Y = y) = log2 C(n, y). The instance is expressed as
a ProblemInstance over Y with that entropy attached to each class.

The Laplace mechanism releases U = Y + N, N ~ Lap(1/eps), quantized to bins of
width ``quantization_bin`` centred on multiples of the bin width. Outputs more
than ``tail_bins`` bins beyond [0, n] are censored into the two edge bins.
"""

from dataclasses import dataclass
import logging
import math

import numpy as np
from scipy import special, stats

from infopriv import privacy_audit
from infopriv import utils
from infopriv.exceptions import AuditInvariantError, InvalidCountingParametersError, InvalidEpsilonError
from infopriv.problem import DesignMode, ProblemInstance, absolute, build_instance, hamming
from infopriv.prob_core import Alphabet, Channel, JointPmf, Pmf
from infopriv.settings import MonteCarloSettings


logger = logging.getLogger(__name__)

TAIL_NATS = 20.0
MIN_SAMPLES = 10_000


@dataclass(frozen=True)
class IidBernoulli:
    """Records independent, each in the counted set with probability ``p``."""

    p: float


@dataclass(frozen=True)
class Spiked:
    """Counts spread uniformly over the multiples of ``k``."""

    k: int


PriorKind = IidBernoulli | Spiked


def _log2_binomial(n: int, y: np.ndarray) -> np.ndarray:
    return (special.gammaln(n + 1) - special.gammaln(y + 1) - special.gammaln(n - y + 1)) / math.log(2)


@dataclass(frozen=True, eq=False)
class CountingInstance:
    n: int
    prior_kind: PriorKind
    p_y: Pmf
    conditional_entropy_bits: np.ndarray
    """H(S^n | Y = y) in bits."""

    def problem(self, budget: float, distortion: str = "absolute", u_size: int | None = None) -> ProblemInstance:
        """Release problem over the count, with |y - u| or Hamming distortion."""
        y_size = self.n + 1
        u_size = y_size if u_size is None else u_size
        if distortion == "absolute":
            matrix = absolute(range(y_size), range(u_size))
        elif distortion == "hamming":
            if u_size != y_size:
                raise InvalidCountingParametersError("Hamming distortion needs as many outputs as counts")
            matrix = hamming(y_size)
        else:
            raise InvalidCountingParametersError(f"Unknown distortion {distortion!r}")
        classes = Alphabet(tuple(f"class{y}" for y in range(y_size)))
        joint = JointPmf(classes, self.p_y.alphabet, np.diag(self.p_y.probs))
        return build_instance(joint, [(matrix, budget)], u_size=u_size, mode=DesignMode.FROM_Y,
                              class_entropy_bits=self.conditional_entropy_bits,
                              output_labels=[str(u) for u in range(u_size)])


def build_counting_instance(n: int, prior_kind: PriorKind) -> CountingInstance:
    if n < 1:
        raise InvalidCountingParametersError(f"n must be >= 1, got {n}")
    y = np.arange(n + 1)
    if isinstance(prior_kind, IidBernoulli):
        if not 0.0 <= prior_kind.p <= 1.0:
            raise InvalidCountingParametersError(f"p must lie in [0, 1], got {prior_kind.p}")
        probs = stats.binom.pmf(y, n, prior_kind.p)
    elif isinstance(prior_kind, Spiked):
        k = prior_kind.k
        if k < 1 or n % k:
            raise InvalidCountingParametersError(f"n={n} must be a positive multiple of k={k}")
        probs = np.where(y % k == 0, 1.0 / (1 + n // k), 0.0)
    else:
        raise InvalidCountingParametersError(f"Unknown prior {prior_kind!r}")
    p_y = Pmf(Alphabet(tuple(str(v) for v in y)), probs / probs.sum())
    return CountingInstance(n=n, prior_kind=prior_kind, p_y=p_y, conditional_entropy_bits=_log2_binomial(n, y))


def _check_epsilon(epsilon: float) -> None:
    if not (epsilon > 0 and math.isfinite(epsilon)):
        raise InvalidEpsilonError(f"epsilon must be positive and finite, got {epsilon}")


def map_correctness_alpha(k: int, epsilon: float) -> float:
    """Chance that rounding U to the nearest multiple of k recovers Y, edges ignored."""
    if k < 1:
        raise InvalidCountingParametersError(f"k must be >= 1, got {k}")
    _check_epsilon(epsilon)
    return float(-math.expm1(-k * epsilon / 2))


def leakage_lower_bound(n: int, k: int, epsilon: float) -> float:
    """Bits the Laplace mechanism leaks at least on the spiked prior; negative means vacuous."""
    if k < 1 or n < 1 or n % k:
        raise InvalidCountingParametersError(f"n={n} must be a positive multiple of k={k}")
    return map_correctness_alpha(k, epsilon) * math.log2(1 + n / k) - 1


@dataclass(frozen=True)
class LaplaceMechanism:
    epsilon: float
    quantization_bin: float = 1.0

    def __post_init__(self) -> None:
        _check_epsilon(self.epsilon)
        b = self.quantization_bin
        if not b > 0 or abs(round(1 / b) * b - 1) > 1e-9:
            raise InvalidCountingParametersError(
                f"quantization bin {b} must be 1/m for a positive integer m so the bins subdivide the integer grid")

    @property
    def bins_per_unit(self) -> int:
        return int(round(1 / self.quantization_bin))

    @property
    def tail_bins(self) -> int:
        return math.ceil(TAIL_NATS / (self.epsilon * self.quantization_bin))

    @property
    def noise(self):
        return stats.laplace(scale=1.0 / self.epsilon)

    @property
    def truncated_mass(self) -> float:
        """Noise mass beyond ``tail_bins`` bins on either side."""
        return float(2 * self.noise.sf((self.tail_bins + 0.5) * self.quantization_bin))

    def grid(self, n: int) -> np.ndarray:
        """Output bin indices; bin i is centred on i * quantization_bin."""
        return np.arange(-self.tail_bins, n * self.bins_per_unit + self.tail_bins + 1)

    def bin_mass(self, offsets: np.ndarray) -> np.ndarray:
        """P(N in the bin ``offsets`` bins away from the input), tails not censored."""
        b = self.quantization_bin
        lower = (np.asarray(offsets) - 0.5) * b
        upper = lower + b
        noise = self.noise
        # subtract on the side where the masses are not close to 1
        return np.where(lower >= 0, noise.sf(lower) - noise.sf(upper), noise.cdf(upper) - noise.cdf(lower))

    def likelihood(self, n: int, y: np.ndarray, u: np.ndarray) -> np.ndarray:
        """p(u | y) for bin indices u on the censored grid of ``grid(n)``."""
        b = self.quantization_bin
        y = np.asarray(y)
        u = np.asarray(u)
        offsets = u - y * self.bins_per_unit
        mass = self.bin_mass(offsets)
        first, last = -self.tail_bins, n * self.bins_per_unit + self.tail_bins
        left = self.noise.cdf((offsets + 0.5) * b)
        right = self.noise.sf((offsets - 0.5) * b)
        return np.where(u == first, left, np.where(u == last, right, mass))

    def discretized_channel(self, n: int) -> Channel:
        grid = self.grid(n)
        y = np.arange(n + 1)
        rows = self.likelihood(n, y[:, None], grid[None, :])
        inputs = Alphabet(tuple(str(v) for v in y))
        outputs = Alphabet(tuple(f"{i * self.quantization_bin:.12g}" for i in grid))
        return Channel(inputs, outputs, rows / rows.sum(axis=1, keepdims=True))

    def output_marginal(self, n: int, p_y: np.ndarray) -> np.ndarray:
        """p_U over ``grid(n)``, interior bins by convolution with the bin masses."""
        m = self.bins_per_unit
        t = self.tail_bins
        span = n * m + t
        kernel = self.bin_mass(np.arange(-span, span + 1))
        upsampled = np.zeros(n * m + 1)
        upsampled[::m] = p_y
        full = np.convolve(upsampled, kernel)
        # full[i + span] is the mass of bin i
        grid = self.grid(n)
        p_u = full[grid + span]
        y = np.arange(n + 1)
        p_u[0] = float(p_y @ self.likelihood(n, y, np.full(n + 1, grid[0])))
        p_u[-1] = float(p_y @ self.likelihood(n, y, np.full(n + 1, grid[-1])))
        return p_u

    def quantize(self, values: np.ndarray, n: int) -> np.ndarray:
        grid = self.grid(n)
        bins = np.floor(values / self.quantization_bin + 0.5).astype(np.int64)
        return np.clip(bins, grid[0], grid[-1])


def laplace_dp_check(mech: LaplaceMechanism, n: int) -> float:
    """Audited DP epsilon of the quantized mechanism over counts 0..n (unit-step adjacency).

    Rows are translates of one another, so a window of ``2 * tail_bins + 2``
    counts already contains every adjacent-pair ratio of the full channel.
    """
    window = min(n, 2 * mech.tail_bins + 2)
    audited = privacy_audit.dp_epsilon(mech.discretized_channel(window),
                                       privacy_audit.AdjacencyRelation.unit_step())
    logger.info(f"Laplace eps={mech.epsilon:.6g}: audited {audited:.10g}, slack {audited - mech.epsilon:.3g}, "
                f"continuous bound exp(eps)={math.exp(mech.epsilon):.10g}, truncated mass {mech.truncated_mass:.3g}")
    return audited


def _seed_blocks(samples: int, seed: int, block_size: int) -> list[tuple[np.random.SeedSequence, int]]:
    sizes = [block_size] * (samples // block_size)
    if samples % block_size:
        sizes.append(samples % block_size)
    return list(zip(np.random.SeedSequence(seed).spawn(len(sizes)), sizes))


def _sample(rng: np.random.Generator, p_y: np.ndarray, mech: LaplaceMechanism, size: int) -> tuple[np.ndarray, np.ndarray]:
    n = p_y.size - 1
    y = rng.choice(n + 1, size=size, p=p_y)
    u = mech.quantize(y + rng.laplace(0.0, 1.0 / mech.epsilon, size=size), n)
    return y, u


def _leakage_block(job: tuple[np.ndarray, LaplaceMechanism, np.ndarray, np.random.SeedSequence, int]
                   ) -> tuple[float, float, int]:
    p_y, mech, p_u, seed, size = job
    n = p_y.size - 1
    y, u = _sample(np.random.default_rng(seed), p_y, mech, size)
    offset = mech.tail_bins
    values = np.log2(mech.likelihood(n, y, u)) - np.log2(p_u[u + offset])
    return float(values.sum()), float(values @ values), size


def _mean_stderr(blocks: list[tuple[float, float, int]]) -> tuple[float, float]:
    total = sum(b[0] for b in blocks)
    squares = sum(b[1] for b in blocks)
    count = sum(b[2] for b in blocks)
    mean = total / count
    variance = max(squares - count * mean * mean, 0.0) / max(count - 1, 1)
    return mean, math.sqrt(variance / count)


def _check_lower_bound(instance: CountingInstance, mech: LaplaceMechanism, estimate: float, stderr: float) -> None:
    if not isinstance(instance.prior_kind, Spiked):
        return
    bound = leakage_lower_bound(instance.n, instance.prior_kind.k, mech.epsilon)
    if bound > 0 and estimate < bound - 3 * stderr:
        raise AuditInvariantError(f"Leakage estimate {estimate:.6f} ± {stderr:.6f} bits is below the "
                                  f"lower bound {bound:.6f} bits")


def estimate_laplace_leakage(instance: CountingInstance, mech: LaplaceMechanism, samples: int, seed: int,
                             jobs: int = 1, settings: MonteCarloSettings | None = None) -> tuple[float, float]:
    """Monte-Carlo estimate of I(Y;U) in bits for the quantized release, with its standard error.

    Averages log2 p(u|y) / p(u) over samples (y, u), using the exact quantized
    likelihood and output marginal. Blocks are seeded from ``seed`` and merged
    in order, so the result does not depend on ``jobs``.
    """
    if samples < MIN_SAMPLES:
        raise InvalidCountingParametersError(f"At least {MIN_SAMPLES} samples are needed, got {samples}")
    settings = settings or MonteCarloSettings()
    p_y = instance.p_y.probs
    p_u = mech.output_marginal(instance.n, p_y)
    blocks = utils.parallel_map(_leakage_block, [(p_y, mech, p_u, s, size) for s, size in
                                                 _seed_blocks(samples, seed, settings.block_size)], jobs)
    estimate, stderr = _mean_stderr(blocks)
    logger.info(f"MC leakage n={instance.n} eps={mech.epsilon:.6g}: {estimate:.6f} ± {stderr:.6f} bits")
    _check_lower_bound(instance, mech, estimate, stderr)
    return estimate, stderr


def _correctness_block(job: tuple[np.ndarray, LaplaceMechanism, np.random.SeedSequence, int]
                       ) -> tuple[float, float, int]:
    p_y, mech, seed, size = job
    y, u = _sample(np.random.default_rng(seed), p_y, mech, size)
    support = np.flatnonzero(p_y > 0)
    values = u * mech.quantization_bin
    right = np.clip(np.searchsorted(support, values), 0, support.size - 1)
    left = np.clip(right - 1, 0, support.size - 1)
    # ties go to the smaller count
    guess = np.where(np.abs(support[left] - values) <= np.abs(support[right] - values),
                     support[left], support[right])
    hits = (guess == y).astype(float)
    return float(hits.sum()), float(hits.sum()), size


def estimate_map_correctness(instance: CountingInstance, mech: LaplaceMechanism, samples: int, seed: int,
                             jobs: int = 1, settings: MonteCarloSettings | None = None) -> tuple[float, float]:
    """Empirical chance that decoding U to the nearest possible count recovers Y."""
    if samples < MIN_SAMPLES:
        raise InvalidCountingParametersError(f"At least {MIN_SAMPLES} samples are needed, got {samples}")
    settings = settings or MonteCarloSettings()
    blocks = utils.parallel_map(_correctness_block, [(instance.p_y.probs, mech, s, size) for s, size in
                                                     _seed_blocks(samples, seed, settings.block_size)], jobs)
    return _mean_stderr(blocks)


@dataclass(frozen=True)
class DpLeakReport:
    n: int
    k: int
    epsilon: float
    audited_dp_epsilon: float
    bound_bits: float
    estimate_bits: float | None = None
    stderr_bits: float | None = None

    @property
    def vacuous(self) -> bool:
        return self.bound_bits <= 0

    def as_dict(self) -> dict:
        return {
            "n": self.n,
            "k": self.k,
            "epsilon": self.epsilon,
            "audited_dp_epsilon": self.audited_dp_epsilon,
            "bound_bits": self.bound_bits,
            "estimate_bits": self.estimate_bits,
            "stderr_bits": self.stderr_bits,
            "vacuous": self.vacuous,
        }


def dp_leak_report(n: int, k: int, epsilon: float, samples: int | None = None, seed: int = 0,
                   jobs: int = 1, settings: MonteCarloSettings | None = None) -> DpLeakReport:
    """A Laplace release of the count that is eps-DP yet leaks at least ``bound_bits`` on the spiked prior.

    The Monte-Carlo estimate is skipped when ``samples`` is None.
    """
    bound = leakage_lower_bound(n, k, epsilon)
    mech = LaplaceMechanism(epsilon)
    audited = laplace_dp_check(mech, n)
    estimate = stderr = None
    if samples is not None:
        instance = build_counting_instance(n, Spiked(k))
        estimate, stderr = estimate_laplace_leakage(instance, mech, samples, seed, jobs, settings)
    if bound <= 0:
        logger.warning(f"Leakage bound {bound:.6g} bits is vacuous for n={n}, k={k}, eps={epsilon:.6g}")
    return DpLeakReport(n, k, epsilon, audited, bound, estimate, stderr)
