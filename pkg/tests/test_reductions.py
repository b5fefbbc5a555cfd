import math

import numpy as np
import pytest

from infopriv import info_metrics
from infopriv import reductions
from infopriv import solver_avg
from infopriv.exceptions import InfeasibleBudgetError, InvalidDistributionError
from infopriv.problem import absolute, build_instance, hamming
from infopriv.prob_core import Alphabet, JointPmf, Pmf
from infopriv.reductions import NoiseProblem


@pytest.mark.parametrize("delta", [0.05, 0.11, 0.25])
def test_binary_rate_distortion(uniform_binary, delta):
    result = reductions.rate_distortion(uniform_binary, hamming(2), delta)
    assert result.converged
    assert result.objective_value == pytest.approx(1 - info_metrics.binary_entropy(delta), abs=1e-4)


def test_blahut_arimoto_binary_point(uniform_binary):
    # slope ln 9 puts the test channel at crossover 1 / (1 + 9)
    point = reductions.blahut_arimoto(uniform_binary, hamming(2), math.log(9))
    assert point.distortion == pytest.approx(0.1, abs=1e-9)
    assert point.rate_bits == pytest.approx(1 - info_metrics.binary_entropy(0.1), abs=1e-9)
    np.testing.assert_allclose(point.output_marginal, [0.5, 0.5], atol=1e-12)


def test_blahut_arimoto_agrees_with_solver():
    source = Pmf(Alphabet.of_size(3), [0.5, 0.3, 0.2])
    d = absolute([0, 1, 2], [0, 1, 2])
    point = reductions.blahut_arimoto(source, d, 2.0)
    result = reductions.rate_distortion(source, d, point.distortion)
    assert result.objective_value == pytest.approx(point.rate_bits, abs=1e-4)


def test_gibbs_noise_hits_budget():
    solution = reductions.max_entropy_noise(NoiseProblem.symmetric(1, 0.5))
    np.testing.assert_allclose(solution.pmf.probs, [0.25, 0.5, 0.25], atol=1e-10)
    assert solution.lam == pytest.approx(math.log(2), abs=1e-10)
    assert solution.entropy_bits == pytest.approx(1.5, abs=1e-9)
    assert solution.distortion == pytest.approx(0.5, abs=1e-10)


def test_uniform_noise_when_mean_fits():
    solution = reductions.max_entropy_noise(NoiseProblem.symmetric(2, 1.5))
    assert solution.lam == 0.0
    np.testing.assert_allclose(solution.pmf.probs, np.full(5, 0.2))


def test_zero_budget_gives_point_mass():
    solution = reductions.max_entropy_noise(NoiseProblem.symmetric(2, 0.0))
    assert solution.lam == math.inf
    np.testing.assert_array_equal(solution.pmf.probs, [0, 0, 1, 0, 0])
    assert solution.entropy_bits == 0.0


def test_budget_below_smallest_distortion():
    with pytest.raises(InfeasibleBudgetError):
        reductions.max_entropy_noise(NoiseProblem((1, 2), [1.0, 2.0], 0.5))


def test_noise_problem_validation():
    with pytest.raises(InvalidDistributionError):
        NoiseProblem((0, 0), [0.0, 1.0], 1.0)
    with pytest.raises(InvalidDistributionError):
        NoiseProblem((0, 1), [0.0, -1.0], 1.0)


def test_solution_has_gibbs_form():
    problem = NoiseProblem.symmetric(3, 1.0, power=2.0)
    solution = reductions.max_entropy_noise(problem)
    assert 0 < solution.lam < math.inf
    assert solution.distortion == pytest.approx(1.0, abs=1e-10)
    potential = np.log(solution.pmf.probs) + solution.lam * problem.d_z
    assert np.ptp(potential) <= 1e-8


def test_gibbs_noise_beats_other_feasible_noise(rng):
    problem = NoiseProblem.symmetric(2, 0.8)
    best = reductions.max_entropy_noise(problem).entropy_bits
    for _ in range(20):
        probs = rng.dirichlet(np.ones(5))
        if probs @ problem.d_z <= problem.budget:
            assert info_metrics.entropy(Pmf(problem.alphabet, probs)) <= best + 1e-9


def test_additive_edge_discrepancy():
    source = Pmf.uniform(Alphabet(tuple(str(y) for y in range(5))))
    noise = Pmf(Alphabet(("-1", "0", "1")), [0.25, 0.5, 0.25])
    # interior counts keep H(Z) = 1.5 bits of uncertainty, the two edges only h(1/4)
    expected = (3 * 1.5 + 2 * info_metrics.binary_entropy(0.25)) / 5 - 1.5
    assert reductions.additive_edge_discrepancy(source, noise, (-1, 0, 1)) == pytest.approx(expected, abs=1e-9)
    silent = Pmf(Alphabet(("0",)), [1.0])
    assert reductions.additive_edge_discrepancy(source, silent, (0,)) == pytest.approx(0.0, abs=1e-12)


def test_additive_channel_needs_closed_grid():
    noise = Pmf(Alphabet(("0", "1")), [0.5, 0.5])
    with pytest.raises(InvalidDistributionError):
        reductions.additive_noise_channel(noise, (0, 1), [0, 2])


def test_deterministic_y_reduces_to_rate_distortion(uniform_binary):
    # four equally likely records whose first bit is released: I(S;U) = I(Y;U)
    records = Alphabet(("00", "01", "10", "11"))
    joint = JointPmf(records, Alphabet(("0", "1")), [[0.25, 0], [0.25, 0], [0, 0.25], [0, 0.25]])
    embedded = solver_avg.solve_min_avg_leakage(build_instance(joint, [(hamming(2), 0.11)]))
    direct = reductions.rate_distortion(uniform_binary, hamming(2), 0.11)
    assert embedded.objective_value == pytest.approx(direct.objective_value, abs=1e-6)
    assert embedded.objective_value == pytest.approx(1 - info_metrics.binary_entropy(0.11), abs=1e-4)


def test_rate_distortion_is_non_increasing_and_convex(uniform_binary):
    deltas = np.linspace(0.05, 0.5, 10)
    rates = [reductions.rate_distortion(uniform_binary, hamming(2), float(delta)).objective_value for delta in deltas]
    assert all(b <= a + 1e-6 for a, b in zip(rates, rates[1:]))
    assert all(rates[i] <= (rates[i - 1] + rates[i + 1]) / 2 + 1e-4 for i in range(1, len(rates) - 1))
    assert rates[-1] == pytest.approx(0.0, abs=1e-6)
