"""Entropies, divergences and the adversary's cost gains.

Internal arithmetic is done in nats with ``scipy.special`` (``entr``,
``rel_entr``) and converted to bits once, on the way out.
"""

import enum
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from infopriv import prob_core
from infopriv.exceptions import AlphabetMismatchError
from infopriv.prob_core import Channel, JointPmf, Pmf


logger = logging.getLogger(__name__)

LN2 = math.log(2.0)


class CostFunction(enum.Enum):
    """Adversary cost C(s, q) for reporting belief ``q`` when the truth is ``s``."""

    LOG_LOSS = "log_loss"
    ZERO_ONE = "zero_one"

    def evaluate(self, symbol: int, belief: Pmf) -> float:
        if self is CostFunction.LOG_LOSS:
            q = belief.probs[symbol]
            return math.inf if q == 0 else -math.log2(q)
        # argmax returns the lowest index among ties
        return 0.0 if int(np.argmax(belief.probs)) == symbol else 1.0


@dataclass(frozen=True, eq=False)
class LeakageReport:
    """Cost gains of the Bayes-optimal adversary.

    Gains are in bits for ``LOG_LOSS`` and in probability of a correct guess
    for ``ZERO_ONE``.
    """

    avg_gain: float
    max_gain: float
    per_output_gain: np.ndarray
    supported: np.ndarray
    cost: CostFunction


def _entropy_nats(probs: np.ndarray) -> float:
    return float(np.sum(special.entr(probs)))


def entropy(p: Pmf) -> float:
    """Shannon entropy in bits."""
    return _entropy_nats(p.probs) / LN2


def entropy_rows(matrix: np.ndarray) -> np.ndarray:
    """Entropy in bits of each row of a row-stochastic array."""
    return np.sum(special.entr(matrix), axis=-1) / LN2


def binary_entropy(p: float) -> float:
    return float(special.entr(p) + special.entr(1.0 - p)) / LN2


def kl_divergence(p: Pmf, q: Pmf) -> float:
    """D(p||q) in bits; ``inf`` when p is not absolutely continuous w.r.t. q."""
    if p.alphabet != q.alphabet:
        raise AlphabetMismatchError(f"KL divergence over different alphabets: "
                                    f"{p.alphabet.labels} != {q.alphabet.labels}")
    return float(np.sum(special.rel_entr(p.probs, q.probs))) / LN2


def mutual_information(joint: JointPmf) -> float:
    """I(S;Y) in bits for a joint over (rows=S, columns=Y)."""
    p_s = joint.probs.sum(axis=1)
    p_y = joint.probs.sum(axis=0)
    value = float(np.sum(special.rel_entr(joint.probs, np.outer(p_s, p_y)))) / LN2
    # rounding can leave a -1e-17 for independent joints
    return max(value, 0.0)


def output_divergences(prior: Pmf, channel: Channel) -> tuple[np.ndarray, np.ndarray]:
    """Per-output D(p_{S|U=u} || p_S) in bits and the support mask."""
    post = prob_core.posterior(prior, channel)
    divergences = np.sum(special.rel_entr(post.backward.rows, prior.probs[None, :]), axis=1) / LN2
    return divergences, post.supported


def expected_posterior_divergence(prior: Pmf, channel: Channel) -> float:
    """E_U[D(p_{S|U} || p_S)], equal to I(S;U)."""
    post = prob_core.posterior(prior, channel)
    divergences, _ = output_divergences(prior, channel)
    return float(np.dot(post.marginal.probs, divergences))


def cost_gain(prior_s: Pmf, p_us: Channel, cost: CostFunction = CostFunction.LOG_LOSS,
              class_entropy_bits: np.ndarray | None = None) -> LeakageReport:
    """ΔC and ΔC* of an adversary observing U = p_us(S).

    ``class_entropy_bits`` adds the within-class entropy of each S symbol when
    S symbols stand for classes of raw values (counting queries); it shifts
    per-output log-loss gains but leaves the average unchanged.
    """
    post = prob_core.posterior(prior_s, p_us)
    p_u = post.marginal.probs
    backward = post.backward.rows
    supported = post.supported

    if cost is CostFunction.LOG_LOSS:
        h_prior = entropy(prior_s)
        h_post = entropy_rows(backward)
        if class_entropy_bits is not None:
            h_prior += float(np.dot(prior_s.probs, class_entropy_bits))
            h_post = h_post + backward @ class_entropy_bits
        per_output = h_prior - h_post
        # the average is computed as I(S;U) to avoid cancellation in H(S) - H(S|U)
        avg = mutual_information(prob_core.induced_joint(prior_s, p_us))
    else:
        prior_best = float(np.max(prior_s.probs))
        per_output = np.max(backward, axis=1) - prior_best
        avg = max(float(np.dot(p_u, np.max(backward, axis=1))) - prior_best, 0.0)

    per_output = np.where(supported, per_output, 0.0)
    max_gain = float(np.max(per_output[supported])) if np.any(supported) else 0.0
    return LeakageReport(
        avg_gain=avg,
        max_gain=max_gain,
        per_output_gain=per_output,
        supported=supported,
        cost=cost,
    )
