import math

import numpy as np
import pytest

from infopriv import info_metrics
from infopriv import prob_core
from infopriv.exceptions import AlphabetMismatchError
from infopriv.info_metrics import CostFunction
from infopriv.prob_core import Alphabet, Channel, JointPmf, Pmf


def test_entropy_values():
    four = Alphabet.of_size(4)
    assert info_metrics.entropy(Pmf.uniform(four)) == pytest.approx(2.0, abs=1e-12)
    assert info_metrics.entropy(Pmf.point_mass(four, 2)) == 0.0
    assert info_metrics.entropy(Pmf(Alphabet.of_size(2), [0.75, 0.25])) == pytest.approx(0.811278, abs=1e-6)


def test_binary_entropy_matches_entropy():
    assert info_metrics.binary_entropy(0.11) == pytest.approx(
        info_metrics.entropy(Pmf(Alphabet.of_size(2), [0.11, 0.89])), abs=1e-12)
    assert info_metrics.binary_entropy(0.0) == 0.0


def test_kl_divergence(binary):
    p = Pmf(binary, [0.5, 0.5])
    q = Pmf(binary, [0.25, 0.75])
    expected = 0.5 * math.log2(2) + 0.5 * math.log2(0.5 / 0.75)
    assert info_metrics.kl_divergence(p, q) == pytest.approx(expected, abs=1e-12)
    assert info_metrics.kl_divergence(p, Pmf.point_mass(binary, 0)) == math.inf
    with pytest.raises(AlphabetMismatchError):
        info_metrics.kl_divergence(p, Pmf.uniform(Alphabet(("x", "y"))))


def test_mutual_information(binary):
    assert info_metrics.mutual_information(JointPmf(binary, binary, [[0.25, 0.25], [0.25, 0.25]])) == 0.0
    assert info_metrics.mutual_information(JointPmf(binary, binary, [[0.5, 0], [0, 0.5]])) == pytest.approx(1.0)
    flip = 0.11
    bsc = JointPmf(binary, binary, [[(1 - flip) / 2, flip / 2], [flip / 2, (1 - flip) / 2]])
    assert info_metrics.mutual_information(bsc) == pytest.approx(1 - info_metrics.binary_entropy(flip), abs=1e-12)
    assert info_metrics.mutual_information(bsc) == pytest.approx(0.5, abs=1e-3)


def test_cost_gain_identity(uniform_binary, binary):
    report = info_metrics.cost_gain(uniform_binary, Channel.identity(binary))
    assert report.avg_gain == pytest.approx(1.0)
    assert report.max_gain == pytest.approx(1.0)


@pytest.mark.parametrize("cost", list(CostFunction))
def test_cost_gain_constant_channel(binary, cost):
    report = info_metrics.cost_gain(Pmf(binary, [0.2, 0.8]), Channel.constant(binary, binary, 0), cost)
    assert report.avg_gain == pytest.approx(0.0, abs=1e-12)
    assert report.max_gain == pytest.approx(0.0, abs=1e-12)


def test_cost_gain_log_loss_is_mutual_information(uniform_binary, binary):
    channel = Channel(binary, binary, [[0.9, 0.1], [0.2, 0.8]])
    report = info_metrics.cost_gain(uniform_binary, channel)
    mi = info_metrics.mutual_information(prob_core.induced_joint(uniform_binary, channel))
    assert report.avg_gain == pytest.approx(mi, abs=1e-12)
    assert report.avg_gain == pytest.approx(0.398, abs=1e-3)
    assert report.max_gain >= report.avg_gain


def test_cost_gain_zero_one(uniform_binary, binary):
    report = info_metrics.cost_gain(uniform_binary, Channel.identity(binary), CostFunction.ZERO_ONE)
    assert report.avg_gain == pytest.approx(0.5)
    assert report.max_gain == pytest.approx(0.5)


def test_expected_posterior_divergence_is_mutual_information(rng):
    alphabet = Alphabet.of_size(3)
    prior = Pmf(alphabet, rng.dirichlet(np.ones(3)))
    channel = Channel(alphabet, Alphabet.of_size(4, "u"), rng.dirichlet(np.ones(4), size=3))
    mi = info_metrics.mutual_information(prob_core.induced_joint(prior, channel))
    assert info_metrics.expected_posterior_divergence(prior, channel) == pytest.approx(mi, abs=1e-12)


def test_class_entropy_shifts_per_output_not_average(uniform_binary, binary):
    channel = Channel(binary, binary, [[0.9, 0.1], [0.2, 0.8]])
    plain = info_metrics.cost_gain(uniform_binary, channel)
    shifted = info_metrics.cost_gain(uniform_binary, channel, class_entropy_bits=np.array([0.0, 1.0]))
    assert shifted.avg_gain == pytest.approx(plain.avg_gain)
    assert not np.allclose(shifted.per_output_gain, plain.per_output_gain)


def test_cost_evaluate(binary):
    belief = Pmf(binary, [0.25, 0.75])
    assert CostFunction.LOG_LOSS.evaluate(0, belief) == pytest.approx(2.0)
    assert CostFunction.ZERO_ONE.evaluate(1, belief) == 0.0
    assert CostFunction.LOG_LOSS.evaluate(0, Pmf.point_mass(binary, 1)) == math.inf


def test_entropy_is_concave(rng):
    alphabet = Alphabet.of_size(5)
    for _ in range(50):
        p = Pmf(alphabet, rng.dirichlet(np.full(5, 0.5)))
        q = Pmf(alphabet, rng.dirichlet(np.full(5, 0.5)))
        lam = rng.uniform()
        mixture = Pmf(alphabet, lam * p.probs + (1 - lam) * q.probs)
        bound = lam * info_metrics.entropy(p) + (1 - lam) * info_metrics.entropy(q)
        assert info_metrics.entropy(mixture) >= bound - 1e-9
