"""JSON and CSV documents read and written by the CLI and the MCP tools.

Floats are written with 12 significant digits and infinities as the strings
``"inf"``/``"-inf"``, so repeated runs produce byte-identical files.
"""

import csv
import io
import json
import logging
import math
from typing import Any, Literal, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from infopriv import solver_avg
from infopriv import solver_core
from infopriv import solver_minmax
from infopriv.exceptions import InvalidDistributionError
from infopriv.privacy_audit import AdjacencyRelation, AuditReport
from infopriv.problem import DesignMode, ProblemInstance, build_instance
from infopriv.prob_core import Alphabet, Channel, JointPmf
from infopriv.settings import SolverSettings
from infopriv.solver_avg import CurvePoint
from infopriv.solver_core import SolverResult
from infopriv.solver_minmax import MinmaxResult


logger = logging.getLogger(__name__)

SIGNIFICANT_DIGITS = 12


class DistortionEntry(BaseModel):
    matrix: list[list[float]]
    delta: float


class InstanceFile(BaseModel):
    """On-disk problem instance; shapes are checked when the instance is built."""

    model_config = ConfigDict(populate_by_name=True, extra="forbid")

    s_labels: list[str] = Field(alias="S")
    y_labels: list[str] = Field(alias="Y")
    u_size: int = Field(alias="U_size", ge=1)
    p_sy: list[list[float]] = Field(alias="p_SY")
    distortions: list[DistortionEntry] = Field(default_factory=list)
    mode: Literal["from_y", "direct"] = "from_y"

    def to_instance(self) -> ProblemInstance:
        joint = JointPmf(Alphabet(tuple(self.s_labels)), Alphabet(tuple(self.y_labels)), self.p_sy)
        return build_instance(joint, [(d.matrix, d.delta) for d in self.distortions], u_size=self.u_size,
                              mode=DesignMode(self.mode))

    @classmethod
    def from_instance(cls, instance: ProblemInstance) -> "InstanceFile":
        return cls(
            S=list(instance.s_alphabet.labels),
            Y=list(instance.y_alphabet.labels),
            U_size=instance.u_size,
            p_SY=instance.joint.probs.tolist(),
            distortions=[DistortionEntry(matrix=d.matrix.tolist(), delta=d.budget) for d in instance.distortions],
            mode=instance.mode.value,
        )


class MechanismFile(BaseModel):
    model_config = ConfigDict(extra="forbid")

    rows: list[list[float]]
    outputs: list[str] | None = None


def _read_json(path: str) -> Any:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except OSError as exc:
        raise InvalidDistributionError(f"Cannot read {path}: {exc}") from exc
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise InvalidDistributionError(f"{path} is not valid JSON: {exc}") from exc


def _validated(model: type[BaseModel], data: Any, what: str) -> Any:
    try:
        return model.model_validate(data)
    except ValidationError as exc:
        raise InvalidDistributionError(f"Invalid {what}: {exc}") from exc


def parse_instance(data: Any) -> ProblemInstance:
    return _validated(InstanceFile, data, "instance").to_instance()


def load_instance(path: str) -> ProblemInstance:
    return parse_instance(_read_json(path))


def parse_mechanism(data: Any, inputs: Alphabet) -> Channel:
    """A p_{U|S} mechanism over the instance's S alphabet."""
    mechanism = _validated(MechanismFile, data, "mechanism")
    width = len(mechanism.rows[0]) if mechanism.rows else 0
    outputs = Alphabet(tuple(mechanism.outputs)) if mechanism.outputs is not None \
        else Alphabet.of_size(width, "u")
    if len(mechanism.rows) != inputs.size:
        raise InvalidDistributionError(f"Mechanism has {len(mechanism.rows)} rows for {inputs.size} inputs")
    return Channel(inputs, outputs, mechanism.rows)


def load_mechanism(path: str, inputs: Alphabet) -> Channel:
    return parse_mechanism(_read_json(path), inputs)


def parse_adjacency(source: str | Sequence[Sequence[str]]) -> AdjacencyRelation:
    """``"unit-step"``, a JSON file of label pairs, or the pairs themselves."""
    if isinstance(source, str):
        if source == "unit-step":
            return AdjacencyRelation.unit_step()
        source = _read_json(source)
    if not isinstance(source, list):
        raise InvalidDistributionError("Adjacency must be a list of label pairs")
    return AdjacencyRelation.explicit(source)


def rounded(value: Any) -> Any:
    """Recursively round floats to 12 significant digits and encode infinities as strings."""
    if isinstance(value, dict):
        return {k: rounded(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [rounded(v) for v in value]
    if isinstance(value, np.ndarray):
        return rounded(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        value = float(f"{value:.{SIGNIFICANT_DIGITS}g}")
        return 0.0 if value == 0 else value
    return value


def dumps(document: dict) -> str:
    return json.dumps(rounded(document), indent=2, ensure_ascii=False) + "\n"


def write_json(document: dict, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(dumps(document))


def decode_float(value: float | str) -> float:
    return float(value)


def channel_document(channel: Channel) -> dict:
    return {
        "inputs": list(channel.input_alphabet.labels),
        "outputs": list(channel.output_alphabet.labels),
        "rows": channel.rows,
    }


def channel_from_document(document: dict) -> Channel:
    rows = np.array([[decode_float(v) for v in row] for row in document["rows"]])
    rows = np.maximum(rows, 0.0)
    rows = rows / rows.sum(axis=1, keepdims=True)
    return Channel(Alphabet(tuple(document["inputs"])), Alphabet(tuple(document["outputs"])), rows)


def _solver_fields(instance: ProblemInstance, result: SolverResult) -> dict:
    return {
        "mode": instance.mode.value,
        "converged": result.converged,
        "kkt_residual": result.kkt_residual,
        "iterations": result.iterations,
        "constraint_residuals": result.constraint_residuals,
        "floor_active": result.floor_active,
        "expected_distortions": instance.expected_distortions(result.channel.rows),
        "channel": channel_document(result.channel),
        "auxiliary": {name: channel_document(c) for name, c in result.auxiliary.items()},
    }


def avg_result_document(instance: ProblemInstance, result: SolverResult) -> dict:
    return {"kind": "avg", "leakage_bits": result.objective_value, **_solver_fields(instance, result)}


def minmax_result_document(instance: ProblemInstance, result: MinmaxResult) -> dict:
    return {
        "kind": "minmax",
        "epsilon_bits": result.epsilon_bits,
        "leakage_bits": result.achieved_leakage_bits,
        "distortion": result.distortion,
        "delta_param": result.delta_param,
        "per_output_entropy": result.per_output_entropy,
        "p_u": result.p_u,
        "line_search_steps": result.line_search_steps,
        **_solver_fields(instance, result.solver),
    }


def audit_document(report: AuditReport) -> dict:
    return report.as_dict()


def recertify(instance: ProblemInstance, document: dict, settings: SolverSettings | None = None) -> float:
    """KKT residual of a reloaded result document against its instance.

    Zero-leakage minmax results are checked for independence of S and U only,
    and report the residual stored with them.
    """
    settings = settings or SolverSettings()
    instance = instance.with_mode(DesignMode(document.get("mode", instance.mode.value)))
    channel = channel_from_document(document["channel"])
    if channel.input_alphabet != instance.design.rows:
        raise InvalidDistributionError("Result channel rows do not match the instance design")
    if document["kind"] == "avg":
        return solver_core.certify(solver_avg.leakage_program(instance, settings), channel)

    epsilon = decode_float(document["epsilon_bits"])
    if epsilon > 0:
        return solver_core.certify(solver_minmax.minmax_program(instance, epsilon, settings), channel)
    p_u, h = instance.output_entropies(channel.rows)
    leak = instance.prior_entropy_bits() - h[p_u > 0]
    if leak.size and float(np.max(leak)) > settings.feasibility_tol:
        raise InvalidDistributionError(f"Zero-leakage result leaks {float(np.max(leak)):.3g} bits")
    return decode_float(document["kkt_residual"])


def curve_csv(points: Sequence[CurvePoint]) -> str:
    """``delta,leakage_bits`` rows; infeasible budgets get ``nan``."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["delta", "leakage_bits"])
    for point in points:
        leakage = "nan" if point.leakage_bits is None else f"{point.leakage_bits:.{SIGNIFICANT_DIGITS}g}"
        writer.writerow([f"{point.delta:.{SIGNIFICANT_DIGITS}g}", leakage])
    return buffer.getvalue()


def write_curve_csv(points: Sequence[CurvePoint], path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(curve_csv(points))
