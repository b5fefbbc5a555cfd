"""Differential privacy, information privacy and leakage audits of finite mechanisms.

Privacy parameters are reported in natural-log units, matching ``exp(ε)`` in
both definitions; leakage is reported in bits. ε-information privacy implies
2ε-differential privacy and an average leakage of at most ε/ln 2 bits, and
``audit`` checks both implications on every report it produces.

Differential privacy quantifies over output events B ⊆ U. For finite outputs
the worst event is a single output: a ratio of sums of positive terms never
exceeds the largest termwise ratio, so ``dp_epsilon`` only looks at singletons.
"""

from dataclasses import dataclass, field
import enum
import logging
import math
from typing import Iterable, Sequence

import numpy as np

from infopriv import info_metrics
from infopriv import prob_core
from infopriv import utils
from infopriv.exceptions import AlphabetMismatchError, AuditInvariantError, InfoprivError
from infopriv.prob_core import Alphabet, Channel, Pmf


logger = logging.getLogger(__name__)

IMPLICATION_TOL = 1e-9


class AdjacencyKind(enum.Enum):
    ORDERED_UNIT_STEP = "unit-step"
    EXPLICIT_PAIRS = "pairs"


@dataclass(frozen=True)
class AdjacencyRelation:
    """Which inputs count as neighbouring databases.

    ``ORDERED_UNIT_STEP`` treats the input alphabet as the ordered values of a
    counting query, so inputs ``i`` and ``i+1`` are adjacent. Explicit pairs are
    stored unordered, which makes the relation symmetric by construction.
    """

    kind: AdjacencyKind
    pairs: tuple[tuple[str, str], ...] = field(default=())

    @classmethod
    def unit_step(cls) -> "AdjacencyRelation":
        return cls(AdjacencyKind.ORDERED_UNIT_STEP)

    @classmethod
    def explicit(cls, pairs: Iterable[Sequence[str]]) -> "AdjacencyRelation":
        unordered = set()
        for pair in pairs:
            if len(pair) != 2:
                raise InfoprivError(f"Adjacency pairs need exactly two symbols, got {pair!r}")
            first, second = str(pair[0]), str(pair[1])
            if first == second:
                raise InfoprivError(f"Symbol {first!r} cannot be adjacent to itself")
            unordered.add(tuple(sorted((first, second))))
        return cls(AdjacencyKind.EXPLICIT_PAIRS, tuple(sorted(unordered)))

    def index_pairs(self, alphabet: Alphabet) -> list[tuple[int, int]]:
        if self.kind is AdjacencyKind.ORDERED_UNIT_STEP:
            return [(i, i + 1) for i in range(alphabet.size - 1)]
        return [(alphabet.index(a), alphabet.index(b)) for a, b in self.pairs]


@dataclass(frozen=True)
class AuditReport:
    dp_epsilon: float
    info_privacy_epsilon: float
    avg_leakage_bits: float
    max_leakage_bits: float

    def as_dict(self) -> dict[str, float]:
        return {
            "dp_epsilon": self.dp_epsilon,
            "info_privacy_epsilon": self.info_privacy_epsilon,
            "avg_leakage_bits": self.avg_leakage_bits,
            "max_leakage_bits": self.max_leakage_bits,
        }


def _max_abs_log_ratio(first: np.ndarray, second: np.ndarray) -> float:
    both_zero = (first == 0) & (second == 0)
    if np.any((first == 0) != (second == 0)):
        return math.inf
    keep = ~both_zero
    if not np.any(keep):
        return 0.0
    return float(np.max(np.abs(np.log(first[keep]) - np.log(second[keep]))))


def dp_epsilon(mechanism: Channel, adjacency: AdjacencyRelation) -> float:
    """Smallest ε for which the mechanism is ε-differentially private."""
    pairs = adjacency.index_pairs(mechanism.input_alphabet)
    if not pairs:
        raise InfoprivError("Differential privacy needs at least one adjacent pair")
    rows = mechanism.rows
    return max(_max_abs_log_ratio(rows[i], rows[j]) for i, j in pairs)


def info_privacy_epsilon(prior_s: Pmf, mechanism: Channel) -> float:
    """Smallest ε for which the mechanism is ε-information private under ``prior_s``.

    Only inputs with positive prior mass and supported outputs take part.
    """
    post = prob_core.posterior(prior_s, mechanism)
    positive = prior_s.probs > 0
    backward = post.backward.rows[post.supported][:, positive]
    if backward.size == 0:
        return 0.0
    if np.any(backward == 0):
        return math.inf
    ratios = np.log(backward) - np.log(prior_s.probs[positive])[None, :]
    return float(np.max(np.abs(ratios)))


def audit(prior_s: Pmf, mechanism: Channel, adjacency: AdjacencyRelation) -> AuditReport:
    """Audit a mechanism under all four measures."""
    if prior_s.alphabet != mechanism.input_alphabet:
        raise AlphabetMismatchError(f"Prior over {prior_s.alphabet.labels} does not match "
                                    f"mechanism inputs {mechanism.input_alphabet.labels}")
    leakage = info_metrics.cost_gain(prior_s, mechanism, info_metrics.CostFunction.LOG_LOSS)
    report = AuditReport(
        dp_epsilon=dp_epsilon(mechanism, adjacency),
        info_privacy_epsilon=info_privacy_epsilon(prior_s, mechanism),
        avg_leakage_bits=leakage.avg_gain,
        max_leakage_bits=leakage.max_gain,
    )
    _check_implications(report)
    logger.debug("Audit: %s", report)
    return report


def _check_implications(report: AuditReport) -> None:
    ip = report.info_privacy_epsilon
    if math.isinf(ip):
        return
    if report.dp_epsilon > 2 * ip + IMPLICATION_TOL:
        raise AuditInvariantError(f"dp_epsilon {report.dp_epsilon} exceeds twice the "
                                  f"information privacy epsilon {ip}")
    if report.avg_leakage_bits > ip / info_metrics.LN2 + IMPLICATION_TOL:
        raise AuditInvariantError(f"average leakage {report.avg_leakage_bits} bits exceeds "
                                  f"{ip / info_metrics.LN2} bits")


def _audit_job(job: tuple[Pmf, Channel, AdjacencyRelation]) -> AuditReport:
    return audit(*job)


def audit_batch(prior_s: Pmf, mechanisms: Sequence[Channel], adjacency: AdjacencyRelation,
                jobs: int = 1) -> list[AuditReport]:
    """Audit many mechanisms, optionally in worker processes; order is preserved."""
    return utils.parallel_map(_audit_job, [(prior_s, m, adjacency) for m in mechanisms], jobs)


def randomized_response(alphabet: Alphabet, epsilon: float) -> Channel:
    """k-ary randomized response: keep the input with probability e^ε / (e^ε + k - 1)."""
    k = alphabet.size
    keep = math.exp(epsilon) / (math.exp(epsilon) + k - 1)
    rows = np.full((k, k), (1.0 - keep) / (k - 1) if k > 1 else 0.0)
    np.fill_diagonal(rows, keep)
    return Channel(alphabet, alphabet, rows)
