import json
import math

import numpy as np
import pytest

from infopriv import serialization
from infopriv import solver_avg
from infopriv import solver_minmax
from infopriv.exceptions import InvalidDistributionError
from infopriv.problem import DesignMode
from infopriv.prob_core import Alphabet
from infopriv.solver_avg import CurvePoint


def test_parse_instance(symmetric_document):
    instance = serialization.parse_instance(symmetric_document)
    assert instance.s_alphabet.labels == ("0", "1")
    assert instance.u_size == 2
    assert instance.budgets == [0.25]
    assert instance.mode is DesignMode.FROM_Y


@pytest.mark.parametrize("change", [
    {"p_SY": [[0.5, 0.5], [0.5, 0.5]]},
    {"p_SY": [[-0.1, 0.6], [0.1, 0.4]]},
    {"U_size": 0},
    {"mode": "sideways"},
    {"extra": 1},
    {"distortions": [{"matrix": [[0, 1, 1], [1, 0, 1]], "delta": 0.2}]},
])
def test_invalid_instances(symmetric_document, change):
    with pytest.raises(InvalidDistributionError):
        serialization.parse_instance({**symmetric_document, **change})


def test_instance_document_round_trip(symmetric_document):
    instance = serialization.parse_instance({**symmetric_document, "mode": "direct"})
    document = serialization.InstanceFile.from_instance(instance).model_dump(by_alias=True)
    assert document["mode"] == "direct"
    assert document["S"] == ["0", "1"]
    assert serialization.parse_instance(document).mode is DesignMode.DIRECT


def test_parse_mechanism():
    inputs = Alphabet(("0", "1"))
    mechanism = serialization.parse_mechanism({"rows": [[0.75, 0.25], [0.25, 0.75]]}, inputs)
    assert mechanism.output_alphabet.labels == ("u0", "u1")
    named = serialization.parse_mechanism({"rows": [[1, 0], [0, 1]], "outputs": ["no", "yes"]}, inputs)
    assert named.output_alphabet.labels == ("no", "yes")
    with pytest.raises(InvalidDistributionError):
        serialization.parse_mechanism({"rows": [[1.0, 0.0]]}, inputs)
    with pytest.raises(InvalidDistributionError):
        serialization.parse_mechanism({"rows": [[0.7, 0.7], [0.5, 0.5]]}, inputs)


def test_parse_adjacency(tmp_path):
    alphabet = Alphabet(("a", "b", "c"))
    assert serialization.parse_adjacency("unit-step").index_pairs(alphabet) == [(0, 1), (1, 2)]
    assert serialization.parse_adjacency([["a", "c"]]).index_pairs(alphabet) == [(0, 2)]
    path = tmp_path / "adjacency.json"
    path.write_text(json.dumps([["b", "a"]]))
    assert serialization.parse_adjacency(str(path)).index_pairs(alphabet) == [(0, 1)]
    path.write_text(json.dumps({"a": "b"}))
    with pytest.raises(InvalidDistributionError):
        serialization.parse_adjacency(str(path))


def test_rounded():
    document = {"x": 1 / 3, "big": math.inf, "small": -math.inf, "zero": -0.0, "flag": np.bool_(True),
                "count": np.int64(4), "rows": np.array([[0.1 + 0.2, 1.0]])}
    assert serialization.rounded(document) == {
        "x": 0.333333333333, "big": "inf", "small": "-inf", "zero": 0.0, "flag": True,
        "count": 4, "rows": [[0.3, 1.0]],
    }
    assert serialization.decode_float("inf") == math.inf


def test_dumps_is_stable():
    document = {"b": [1e-13, 2.0], "a": 0.1 + 0.2}
    assert serialization.dumps(document) == serialization.dumps(json.loads(serialization.dumps(document)))
    assert serialization.dumps(document).endswith("}\n")


def test_curve_csv():
    points = [CurvePoint(0.1, None, error="infeasible"), CurvePoint(0.25, 1 / 3)]
    assert serialization.curve_csv(points) == "delta,leakage_bits\n0.1,nan\n0.25,0.333333333333\n"


def test_avg_document_recertifies(symmetric_instance):
    result = solver_avg.solve_min_avg_leakage(symmetric_instance)
    document = json.loads(serialization.dumps(serialization.avg_result_document(symmetric_instance, result)))
    assert document["kind"] == "avg"
    assert document["converged"] is True
    assert document["channel"]["inputs"] == ["0", "1"]
    assert serialization.recertify(symmetric_instance, document) <= 1e-6


def test_direct_document_recertifies(symmetric_instance):
    instance = symmetric_instance.with_mode(DesignMode.DIRECT)
    result = solver_avg.solve_min_avg_leakage(instance)
    document = json.loads(serialization.dumps(serialization.avg_result_document(instance, result)))
    assert set(document["auxiliary"]) == {"p_U|S", "p_U|Y"}
    # the stored mode wins over the instance's
    assert serialization.recertify(symmetric_instance, document) <= 1e-6


def test_minmax_documents_recertify(symmetric_instance):
    capped = solver_minmax.min_distortion_given_maxleak(symmetric_instance, 0.1)
    document = json.loads(serialization.dumps(serialization.minmax_result_document(symmetric_instance, capped)))
    assert document["kind"] == "minmax"
    assert document["epsilon_bits"] == pytest.approx(0.1)
    assert serialization.recertify(symmetric_instance, document) <= 1e-6

    private = solver_minmax.min_distortion_given_maxleak(symmetric_instance, 0.0)
    document = json.loads(serialization.dumps(serialization.minmax_result_document(symmetric_instance, private)))
    assert serialization.recertify(symmetric_instance, document) == pytest.approx(private.solver.kkt_residual,
                                                                                   abs=1e-12)


def test_recertify_rejects_foreign_channel(symmetric_instance):
    result = solver_avg.solve_min_avg_leakage(symmetric_instance)
    document = json.loads(serialization.dumps(serialization.avg_result_document(symmetric_instance, result)))
    document["channel"]["inputs"] = ["x", "y"]
    with pytest.raises(InvalidDistributionError):
        serialization.recertify(symmetric_instance, document)
