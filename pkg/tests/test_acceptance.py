"""End to end checks against the brute-force oracle and closed forms; deselect with ``-m "not slow"``."""

import math

import numpy as np
import pytest

from infopriv import counting_query
from infopriv import info_metrics
from infopriv import oracle
from infopriv import privacy_audit
from infopriv import prob_core
from infopriv import solver_avg
from infopriv import solver_minmax
from infopriv.counting_query import LaplaceMechanism, Spiked
from infopriv.problem import build_instance, hamming
from infopriv.prob_core import Alphabet, Channel, JointPmf, Pmf


pytestmark = pytest.mark.slow


def random_instance(rng, size):
    alphabet = Alphabet.of_size(size)
    joint = JointPmf(alphabet, alphabet, rng.dirichlet(np.full(size * size, 2.0)).reshape(size, size))
    d = hamming(size)
    constant = float(np.min(prob_core.marginals(joint)[1].probs @ d))
    return build_instance(joint, [(d, rng.uniform(0.2, 0.8) * constant)])


@pytest.mark.parametrize("size, count", [(2, 20), (3, 5)])
def test_average_leakage_matches_oracle(rng, size, count):
    for _ in range(count):
        instance = random_instance(rng, size)
        result = solver_avg.solve_min_avg_leakage(instance)
        value, _ = oracle.brute_force_min_leakage(instance)
        assert result.objective_value == pytest.approx(value, abs=1e-3)
        assert result.objective_value <= value + 1e-5


@pytest.mark.parametrize("size, count", [(2, 20), (3, 5)])
def test_minmax_matches_oracle(rng, size, count):
    for _ in range(count):
        instance = random_instance(rng, size)
        budget = instance.budgets[0]
        result = solver_minmax.solve_minmax_leakage(instance, budget)
        value, _ = oracle.brute_force_minmax(instance, delta=budget)
        assert result.epsilon_bits == pytest.approx(value, abs=2e-3)
        assert result.achieved_leakage_bits <= result.epsilon_bits + 1e-6
        least = solver_minmax.min_distortion_given_maxleak(instance, result.epsilon_bits)
        distortion, _ = oracle.brute_force_min_distortion(instance, result.epsilon_bits)
        assert least.distortion == pytest.approx(distortion, abs=1e-3)


def test_curve_reaches_zero(rng):
    instance = random_instance(rng, 3)
    constant = float(np.min(instance.p_y.probs @ instance.distortions[0].matrix))
    deltas = np.linspace(0.0, constant, 6).tolist() + [constant + 0.05]
    values = [p.leakage_bits for p in solver_avg.tradeoff_curve(instance, deltas)]
    assert all(b <= a + 1e-6 for a, b in zip(values, values[1:]))
    assert all(values[i] <= (values[i - 1] + values[i + 1]) / 2 + 1e-6 for i in range(1, len(values) - 1))
    assert values[-2] == pytest.approx(0.0, abs=1e-12)
    assert values[-1] == pytest.approx(0.0, abs=1e-12)


def test_information_privacy_implications(rng):
    alphabet = Alphabet.of_size(4)
    outputs = Alphabet.of_size(5, "u")
    unit = privacy_audit.AdjacencyRelation.unit_step()
    for _ in range(200):
        prior = Pmf(alphabet, rng.dirichlet(np.ones(4)))
        mechanism = Channel(alphabet, outputs, rng.dirichlet(np.ones(5), size=4))
        report = privacy_audit.audit(prior, mechanism, unit)
        ip = report.info_privacy_epsilon
        assert report.dp_epsilon <= 2 * ip + 1e-9
        assert report.avg_leakage_bits <= ip / math.log(2) + 1e-9
        divergences, supported = info_metrics.output_divergences(prior, mechanism)
        assert np.all(divergences[supported] <= ip / math.log(2) + 1e-9)


def test_dp_counting_query_leaks():
    n, k, epsilon = 10240, 10, 1.0
    bound = counting_query.leakage_lower_bound(n, k, epsilon)
    assert bound == pytest.approx(8.93, abs=1e-2)
    mech = LaplaceMechanism(epsilon)
    assert counting_query.laplace_dp_check(mech, n) <= 1.05
    instance = counting_query.build_counting_instance(n, Spiked(k))
    estimate, stderr = counting_query.estimate_laplace_leakage(instance, mech, 1_000_000, seed=2024)
    assert estimate >= bound - 3 * stderr
