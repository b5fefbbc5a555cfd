import numpy as np
import pytest
from scipy import optimize

from infopriv import solver_core
from infopriv.exceptions import InfeasibleCandidateError, InvalidDistributionError
from infopriv.prob_core import Alphabet, Channel
from infopriv.solver_core import ChannelProgram, ConstraintSet


TARGET = np.array([[0.7, 0.3], [0.2, 0.8]])
BINARY = Alphabet.of_size(2)
OUTPUTS = Alphabet.of_size(2, "u")


def squared_distance_program(**kwargs) -> ChannelProgram:
    return ChannelProgram(
        objective=lambda x: float(np.sum((x - TARGET) ** 2)),
        gradient=lambda x: 2 * (x - TARGET),
        input_alphabet=BINARY,
        output_alphabet=OUTPUTS,
        **kwargs,
    )


def test_recovers_unconstrained_minimizer():
    result = solver_core.minimize(squared_distance_program(), Channel.uniform(BINARY, OUTPUTS))
    assert result.converged
    np.testing.assert_allclose(result.channel.rows, TARGET, atol=1e-6)
    assert result.kkt_residual <= 1e-6


def test_linear_objective_reaches_vertex():
    cost = np.array([[0.3, 0.1, 0.5]])
    one = Alphabet.of_size(1)
    outputs = Alphabet.of_size(3, "u")
    program = ChannelProgram(objective=lambda x: float(np.sum(x * cost)), gradient=lambda x: cost,
                             input_alphabet=one, output_alphabet=outputs)
    result = solver_core.minimize(program, Channel.uniform(one, outputs))
    assert result.converged
    np.testing.assert_allclose(result.channel.rows, [[0.0, 1.0, 0.0]], atol=1e-6)


def test_entropy_maximization_gives_uniform_row():
    one = Alphabet.of_size(1)

    def negative_entropy(x):
        return float(np.sum(x * np.log(x)))

    program = ChannelProgram(objective=negative_entropy, gradient=lambda x: np.log(x) + 1.0,
                             input_alphabet=one, output_alphabet=OUTPUTS)
    result = solver_core.minimize(program, Channel(one, OUTPUTS, [[0.9, 0.1]]))
    assert result.converged
    np.testing.assert_allclose(result.channel.rows, [[0.5, 0.5]], atol=1e-6)


def test_linear_constraint_is_active():
    # the unconstrained optimum puts 0.7 on u0 for input 0; cap it at 0.5
    cap = np.zeros((2, 2))
    cap[0, 0] = 1.0
    constraints = ConstraintSet.linear(("cap",), [cap], np.array([0.5]))
    result = solver_core.minimize(squared_distance_program(constraints=constraints),
                                  Channel.uniform(BINARY, OUTPUTS))
    assert result.converged
    assert result.channel.rows[0, 0] == pytest.approx(0.5, abs=1e-5)
    assert result.channel.rows[1] == pytest.approx(TARGET[1], abs=1e-5)
    assert result.multipliers[0] > 0


def test_support_mask_is_respected():
    mask = np.array([[True, False], [True, True]])
    result = solver_core.minimize(squared_distance_program(support_mask=mask), Channel.uniform(BINARY, OUTPUTS))
    assert result.channel.rows[0, 1] == 0.0
    assert result.converged


def test_mask_must_leave_an_output():
    with pytest.raises(InvalidDistributionError):
        squared_distance_program(support_mask=np.array([[False, False], [True, True]]))


def test_certify_perturbed_optimum():
    program = squared_distance_program()
    assert solver_core.certify(program, Channel(BINARY, OUTPUTS, TARGET)) <= 1e-6
    shifted = TARGET.copy()
    shifted[0] = [0.75, 0.25]
    assert solver_core.certify(program, Channel(BINARY, OUTPUTS, shifted)) > 1e-4


def test_certify_rejects_infeasible():
    cap = np.zeros((2, 2))
    cap[0, 0] = 1.0
    program = squared_distance_program(constraints=ConstraintSet.linear(("cap",), [cap], np.array([0.5])))
    with pytest.raises(InfeasibleCandidateError):
        solver_core.certify(program, Channel(BINARY, OUTPUTS, TARGET))


def test_iteration_budget_gives_unconverged_result(fast_settings):
    settings = fast_settings.model_copy(update={"max_iters": 1})
    result = solver_core.minimize(squared_distance_program(settings=settings), Channel.uniform(BINARY, OUTPUTS))
    assert not result.converged
    assert result.iterations <= 1


def test_trace_csv(tmp_path):
    result = solver_core.minimize(squared_distance_program(), Channel.uniform(BINARY, OUTPUTS))
    path = tmp_path / "trace.csv"
    solver_core.write_trace_csv(result, str(path))
    lines = path.read_text().splitlines()
    assert lines[0] == "iter,objective,max_residual"
    assert len(lines) == len(result.trace) + 1


def test_stack_constraints():
    first = ConstraintSet.linear(("a",), [np.ones((2, 2))], np.array([3.0]))
    second = ConstraintSet.linear(("b",), [np.eye(2)], np.array([1.0]))
    stacked = solver_core.stack_constraints(first, None, second)
    assert stacked.names == ("a", "b")
    np.testing.assert_allclose(stacked.values(np.eye(2)), [-1.0, 1.0])
    assert stacked.jacobian(np.eye(2)).shape == (2, 2, 2)
    assert solver_core.stack_constraints(None) is None


def test_minimize_is_deterministic():
    cap = np.zeros((2, 2))
    cap[0, 0] = 1.0
    constraints = ConstraintSet.linear(("cap",), [cap], np.array([0.5]))
    first = solver_core.minimize(squared_distance_program(constraints=constraints), Channel.uniform(BINARY, OUTPUTS))
    second = solver_core.minimize(squared_distance_program(constraints=constraints), Channel.uniform(BINARY, OUTPUTS))
    assert first.iterations == second.iterations
    assert first.objective_value == second.objective_value
    assert first.kkt_residual == second.kkt_residual
    np.testing.assert_array_equal(first.channel.rows, second.channel.rows)


def test_random_quadratics_match_bounded_reference(rng):
    for _ in range(10):
        m = rng.normal(size=(4, 4))
        b = rng.normal(size=4)

        def objective(x, m=m, b=b):
            r = m @ x.ravel() - b
            return float(r @ r)

        def gradient(x, m=m, b=b):
            return (2 * m.T @ (m @ x.ravel() - b)).reshape(x.shape)

        def reduced(v):
            return objective(np.array([[v[0], 1 - v[0]], [v[1], 1 - v[1]]]))

        def reduced_gradient(v):
            g = gradient(np.array([[v[0], 1 - v[0]], [v[1], 1 - v[1]]]))
            return np.array([g[0, 0] - g[0, 1], g[1, 0] - g[1, 1]])

        reference = optimize.minimize(reduced, np.array([0.5, 0.5]), jac=reduced_gradient, method="L-BFGS-B",
                                      bounds=[(0.0, 1.0)] * 2, options={"ftol": 1e-15, "gtol": 1e-12})
        program = ChannelProgram(objective=objective, gradient=gradient, input_alphabet=BINARY, output_alphabet=OUTPUTS)
        result = solver_core.minimize(program, Channel.uniform(BINARY, OUTPUTS))
        assert result.objective_value == pytest.approx(reference.fun, abs=1e-4)
        assert result.objective_value >= reference.fun - 1e-6
