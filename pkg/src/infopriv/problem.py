"""Privacy-utility problem instances and their linear design maps.

A design is the matrix of decision variables the solvers optimize over:

- ``FROM_Y``: rows indexed by y, the release mapping p_{U|Y}.
- ``DIRECT``: rows indexed by the pairs (y, s), the mapping p_{U|Y,S} for a
  releaser that also observes S. Row labels read ``"y|s"``.

In both cases the joints the objectives need are linear in the decision
matrix X: ``P_SU = A @ X`` and ``P_YU = B @ X``.
"""

from dataclasses import dataclass, replace
import enum
from functools import cached_property
import logging
from typing import Sequence

import numpy as np
from scipy import optimize

from infopriv import info_metrics
from infopriv import prob_core
from infopriv.exceptions import InfeasibleBudgetError, InvalidDistributionError
from infopriv.prob_core import Alphabet, Channel, JointPmf, Pmf


logger = logging.getLogger(__name__)

# Rows with (numerically) no input mass keep a tiny weight in the mirror step.
MIN_ROW_WEIGHT = 1e-12
ARGMIN_TOL = 1e-12


class DesignMode(enum.Enum):
    FROM_Y = "from_y"
    DIRECT = "direct"


@dataclass(frozen=True, eq=False)
class Distortion:
    """Expected-distortion budget ``E[d(Y, U)] <= budget``."""

    matrix: np.ndarray
    budget: float

    def __post_init__(self) -> None:
        matrix = prob_core.as_float_array(self.matrix, "distortion matrix")
        if matrix.ndim != 2:
            raise InvalidDistributionError(f"distortion matrix must be 2-D, got shape {matrix.shape}")
        if not np.all(np.isfinite(matrix)) or np.any(matrix < 0):
            raise InvalidDistributionError("distortion entries must be finite and non-negative")
        budget = float(self.budget)
        if not np.isfinite(budget) or budget < 0:
            raise InvalidDistributionError(f"distortion budget must be finite and >= 0, got {self.budget}")
        matrix.flags.writeable = False
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "budget", budget)


def hamming(size: int) -> np.ndarray:
    return 1.0 - np.eye(size)


def absolute(y_values: Sequence[float], u_values: Sequence[float]) -> np.ndarray:
    return np.abs(np.subtract.outer(np.asarray(y_values, dtype=float), np.asarray(u_values, dtype=float)))


@dataclass(frozen=True, eq=False)
class Design:
    rows: Alphabet
    a: np.ndarray
    """S x rows, ``P_SU = a @ X``."""
    b: np.ndarray
    """Y x rows, ``P_YU = b @ X``."""
    row_weights: np.ndarray
    y_of_row: np.ndarray


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    joint: JointPmf
    distortions: tuple[Distortion, ...]
    u_size: int | None = None
    mode: DesignMode = DesignMode.FROM_Y
    class_entropy_bits: np.ndarray | None = None
    """Entropy of the raw values each S symbol stands for (zero by default)."""
    output_labels: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        y_size = self.joint.col_alphabet.size
        u_size = y_size if self.u_size is None else int(self.u_size)
        if u_size < 1:
            raise InvalidDistributionError(f"u_size must be >= 1, got {u_size}")
        object.__setattr__(self, "u_size", u_size)
        object.__setattr__(self, "distortions", tuple(self.distortions))
        for i, distortion in enumerate(self.distortions):
            if distortion.matrix.shape != (y_size, u_size):
                raise InvalidDistributionError(f"distortion {i} has shape {distortion.matrix.shape}, "
                                               f"expected {(y_size, u_size)}")
        classes = np.zeros(self.joint.row_alphabet.size) if self.class_entropy_bits is None \
            else np.array(self.class_entropy_bits, dtype=float)
        if classes.shape != (self.joint.row_alphabet.size,) or np.any(classes < 0):
            raise InvalidDistributionError("class entropies must be one non-negative value per S symbol")
        classes.flags.writeable = False
        object.__setattr__(self, "class_entropy_bits", classes)
        labels = self.output_labels or tuple(f"u{i}" for i in range(u_size))
        object.__setattr__(self, "output_labels", tuple(labels))
        if len(self.output_labels) != u_size:
            raise InvalidDistributionError(f"{len(self.output_labels)} output labels for u_size {u_size}")

    @property
    def s_alphabet(self) -> Alphabet:
        return self.joint.row_alphabet

    @property
    def y_alphabet(self) -> Alphabet:
        return self.joint.col_alphabet

    @cached_property
    def u_alphabet(self) -> Alphabet:
        return Alphabet(self.output_labels)

    @cached_property
    def prior_s(self) -> Pmf:
        return prob_core.marginals(self.joint)[0]

    @cached_property
    def p_y(self) -> Pmf:
        return prob_core.marginals(self.joint)[1]

    @property
    def budgets(self) -> list[float]:
        return [d.budget for d in self.distortions]

    def with_budgets(self, budgets: Sequence[float]) -> "ProblemInstance":
        if len(budgets) != len(self.distortions):
            raise InvalidDistributionError(f"{len(budgets)} budgets for {len(self.distortions)} distortions")
        return replace(self, distortions=tuple(Distortion(d.matrix, b) for d, b in zip(self.distortions, budgets)))

    def with_mode(self, mode: DesignMode) -> "ProblemInstance":
        return replace(self, mode=mode)

    def prior_entropy_bits(self) -> float:
        """H(S), including the within-class entropy."""
        return info_metrics.entropy(self.prior_s) + float(self.prior_s.probs @ self.class_entropy_bits)

    @cached_property
    def design(self) -> Design:
        j = self.joint.probs
        s_size, y_size = j.shape
        if self.mode is DesignMode.FROM_Y:
            return Design(rows=self.y_alphabet, a=j.copy(), b=np.diag(self.p_y.probs),
                          row_weights=np.maximum(self.p_y.probs, MIN_ROW_WEIGHT),
                          y_of_row=np.arange(y_size))
        labels = tuple(f"{y}|{s}" for y in self.y_alphabet.labels for s in self.s_alphabet.labels)
        a = np.zeros((s_size, y_size * s_size))
        b = np.zeros((y_size, y_size * s_size))
        weights = np.zeros(y_size * s_size)
        y_of_row = np.zeros(y_size * s_size, dtype=int)
        for y in range(y_size):
            for s in range(s_size):
                r = y * s_size + s
                a[s, r] = b[y, r] = weights[r] = j[s, y]
                y_of_row[r] = y
        return Design(rows=Alphabet(labels), a=a, b=b,
                      row_weights=np.maximum(weights, MIN_ROW_WEIGHT), y_of_row=y_of_row)

    def joint_su(self, x: np.ndarray) -> np.ndarray:
        return self.design.a @ x

    def joint_yu(self, x: np.ndarray) -> np.ndarray:
        return self.design.b @ x

    def channel(self, x: np.ndarray) -> Channel:
        return Channel(self.design.rows, self.u_alphabet, x)

    def lift(self, from_y: np.ndarray) -> np.ndarray:
        """Decision matrix of the current mode that releases ``from_y`` (a p_{U|Y} matrix)."""
        return np.asarray(from_y, dtype=float)[self.design.y_of_row]

    def expected_distortions(self, x: np.ndarray) -> np.ndarray:
        p_yu = self.joint_yu(x)
        return np.array([float(np.sum(p_yu * d.matrix)) for d in self.distortions])

    def min_distortions(self) -> list[float]:
        """Smallest achievable E[d] for each constraint on its own."""
        return [float(self.p_y.probs @ d.matrix.min(axis=1)) for d in self.distortions]

    def output_entropies(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(p_U, H(S|U=u) in bits); unsupported outputs get the prior entropy."""
        p_su = self.joint_su(x)
        p_u = p_su.sum(axis=0)
        supported = p_u >= prob_core.SUPPORT_THRESHOLD
        backward = np.tile(self.prior_s.probs[:, None], (1, p_u.size))
        backward[:, supported] = p_su[:, supported] / p_u[supported]
        h = info_metrics.entropy_rows(backward.T) + backward.T @ self.class_entropy_bits
        return p_u, h

    def induced(self, x: np.ndarray) -> tuple[Channel, Channel]:
        """The p_{U|S} and p_{U|Y} a decision matrix induces."""
        p_su = self.joint_su(x)
        p_yu = self.joint_yu(x)

        def conditional(joint: np.ndarray, alphabet: Alphabet) -> Channel:
            mass = joint.sum(axis=1, keepdims=True)
            rows = np.where(mass > 0, joint / np.where(mass > 0, mass, 1.0), 1.0 / self.u_size)
            return Channel(alphabet, self.u_alphabet, rows)

        return conditional(p_su, self.s_alphabet), conditional(p_yu, self.y_alphabet)

    def support_mask(self, feasibility_tol: float) -> np.ndarray | None:
        """Restrict rows to their cheapest outputs for budgets at the minimum.

        A budget equal to the smallest achievable distortion only admits
        channels supported on each row's argmin set, so the constraint is
        replaced by that support restriction.
        """
        mask = None
        for d, minimum in zip(self.distortions, self.min_distortions()):
            if d.budget > minimum + feasibility_tol:
                continue
            rows = d.matrix <= d.matrix.min(axis=1, keepdims=True) + ARGMIN_TOL
            mask = rows if mask is None else mask & rows
        if mask is None:
            return None
        if not np.all(mask.any(axis=1)):
            raise InfeasibleBudgetError("Tight budgets admit no common output", self.min_distortions(),
                                        self.budgets)
        return self.lift(mask).astype(bool)

    def tight_constraints(self, feasibility_tol: float) -> list[bool]:
        return [d.budget <= m + feasibility_tol for d, m in zip(self.distortions, self.min_distortions())]

    def most_feasible(self) -> tuple[np.ndarray, float]:
        """p_{U|Y} maximizing the smallest slack over all budgets, and that slack."""
        y_size, u_size = self.y_alphabet.size, self.u_size
        n = y_size * u_size
        if not self.distortions:
            return np.full((y_size, u_size), 1.0 / u_size), np.inf
        # variables: X flattened row-major, then the common slack t
        c = np.zeros(n + 1)
        c[-1] = -1.0
        a_ub = np.array([np.append((self.p_y.probs[:, None] * d.matrix).ravel(), 1.0) for d in self.distortions])
        b_ub = np.array(self.budgets)
        a_eq = np.zeros((y_size, n + 1))
        for y in range(y_size):
            a_eq[y, y * u_size:(y + 1) * u_size] = 1.0
        bounds = [(0, None)] * n + [(None, 1.0)]
        result = optimize.linprog(c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=np.ones(y_size),
                                  bounds=bounds, method="highs")
        if result.status != 0:
            raise InfeasibleBudgetError(f"Distortion LP failed: {result.message}", self.min_distortions(),
                                        self.budgets)
        x = np.maximum(result.x[:n].reshape(y_size, u_size), 0.0)
        return x / x.sum(axis=1, keepdims=True), float(result.x[-1])

    def check_feasible(self, feasibility_tol: float) -> None:
        """Raise ``InfeasibleBudgetError`` when no channel meets every budget."""
        minimum = self.min_distortions()
        for d, m in zip(self.distortions, minimum):
            if d.budget < m - feasibility_tol:
                raise InfeasibleBudgetError(f"Budget {d.budget:.12g} is below the minimal achievable "
                                            f"distortion {m:.12g}", minimum, self.budgets)
        if len(self.distortions) > 1:
            _, slack = self.most_feasible()
            if slack < -feasibility_tol:
                raise InfeasibleBudgetError(f"Budgets cannot be met together (worst slack {slack:.3g})",
                                            minimum, self.budgets)


def build_instance(joint: JointPmf, distortions: Sequence[tuple[np.ndarray, float]],
                   u_size: int | None = None, mode: DesignMode = DesignMode.FROM_Y,
                   class_entropy_bits: Sequence[float] | None = None,
                   output_labels: Sequence[str] | None = None) -> ProblemInstance:
    return ProblemInstance(
        joint=joint,
        distortions=tuple(Distortion(matrix, budget) for matrix, budget in distortions),
        u_size=u_size,
        mode=mode,
        class_entropy_bits=None if class_entropy_bits is None else np.asarray(class_entropy_bits, dtype=float),
        output_labels=None if output_labels is None else tuple(output_labels),
    )
