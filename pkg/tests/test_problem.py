import numpy as np
import pytest

from infopriv.exceptions import InfeasibleBudgetError, InvalidDistributionError
from infopriv.problem import DesignMode, Distortion, absolute, build_instance, hamming
from infopriv.prob_core import Alphabet, JointPmf


def test_distortion_validation():
    with pytest.raises(InvalidDistributionError):
        Distortion(np.array([[-1.0, 0.0]]), 0.1)
    with pytest.raises(InvalidDistributionError):
        Distortion(hamming(2), -0.1)


def test_distortion_shape_must_match(symmetric_joint):
    with pytest.raises(InvalidDistributionError):
        build_instance(symmetric_joint, [(hamming(3), 0.1)])


def test_absolute_distortion():
    np.testing.assert_allclose(absolute([0, 1, 2], [0, 2]), [[0, 2], [1, 1], [2, 0]])


def test_from_y_design(symmetric_instance):
    design = symmetric_instance.design
    x = np.array([[0.9, 0.1], [0.3, 0.7]])
    np.testing.assert_allclose(symmetric_instance.joint_su(x), symmetric_instance.joint.probs @ x)
    np.testing.assert_allclose(symmetric_instance.joint_yu(x), np.diag([0.5, 0.5]) @ x)
    assert design.rows.labels == ("0", "1")


def test_direct_design_rows(symmetric_instance):
    direct = symmetric_instance.with_mode(DesignMode.DIRECT)
    design = direct.design
    assert design.rows.labels == ("0|0", "0|1", "1|0", "1|1")
    # a release that ignores S reproduces the p_U|Y joints
    from_y = np.array([[0.9, 0.1], [0.3, 0.7]])
    x = direct.lift(from_y)
    np.testing.assert_allclose(direct.joint_su(x), symmetric_instance.joint_su(from_y))
    np.testing.assert_allclose(direct.joint_yu(x), symmetric_instance.joint_yu(from_y))


def test_min_distortions_and_support_mask(symmetric_joint):
    instance = build_instance(symmetric_joint, [(hamming(2), 0.0)])
    assert instance.min_distortions() == [0.0]
    np.testing.assert_array_equal(instance.support_mask(1e-8), np.eye(2, dtype=bool))
    assert instance.tight_constraints(1e-8) == [True]


def test_budget_below_minimum_is_infeasible(symmetric_joint):
    far = np.array([[0.3, 0.5], [0.5, 0.3]])
    instance = build_instance(symmetric_joint, [(far, 0.1)])
    with pytest.raises(InfeasibleBudgetError) as info:
        instance.check_feasible(1e-8)
    assert info.value.min_distortion == [pytest.approx(0.3)]


def test_jointly_infeasible_budgets(symmetric_joint):
    # each budget alone is met by a constant output, but not both together
    first = np.array([[0.0, 1.0], [0.0, 1.0]])
    second = np.array([[1.0, 0.0], [1.0, 0.0]])
    instance = build_instance(symmetric_joint, [(first, 0.1), (second, 0.1)])
    with pytest.raises(InfeasibleBudgetError):
        instance.check_feasible(1e-8)


def test_most_feasible_slack(symmetric_instance):
    x, slack = symmetric_instance.most_feasible()
    np.testing.assert_allclose(x.sum(axis=1), 1.0)
    assert slack == pytest.approx(0.25, abs=1e-9)


def test_output_entropies_with_classes():
    classes = Alphabet(("a", "b"))
    joint = JointPmf(classes, Alphabet(("0", "1")), [[0.5, 0.0], [0.0, 0.5]])
    instance = build_instance(joint, [(hamming(2), 0.5)], class_entropy_bits=[1.0, 3.0])
    assert instance.prior_entropy_bits() == pytest.approx(1.0 + 2.0)
    p_u, h = instance.output_entropies(np.eye(2))
    np.testing.assert_allclose(p_u, [0.5, 0.5])
    np.testing.assert_allclose(h, [1.0, 3.0])


def test_output_labels_count(symmetric_joint):
    with pytest.raises(InvalidDistributionError):
        build_instance(symmetric_joint, [(hamming(2), 0.1)], output_labels=["only"])
