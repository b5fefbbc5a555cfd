"""Finite-alphabet probability value types.

Every type here is an immutable value: constructors validate their input,
renormalize to an exact sum of one and freeze the underlying numpy arrays, so
instances can be shared freely between threads and worker processes.

Conventions used across the package:
- 0·log 0 = 0.
- An output ``u`` is *supported* when ``p_U(u) >= SUPPORT_THRESHOLD``. The
  posterior row of an unsupported output is defined as the prior and the output
  is flagged, never returned as NaN.
"""

from dataclasses import dataclass
import logging

import numpy as np

from infopriv.exceptions import AlphabetMismatchError, InvalidDistributionError


logger = logging.getLogger(__name__)

# Accepted deviation from an exact sum of one on input.
NORMALIZATION_TOL = 1e-9
# η: below this output mass an output is considered structurally absent.
SUPPORT_THRESHOLD = 1e-12


def _frozen(array: np.ndarray) -> np.ndarray:
    array.flags.writeable = False
    return array


def as_float_array(values, what: str) -> np.ndarray:
    """A fresh float array; ragged or non-numeric input is an invalid distribution."""
    try:
        return np.array(values, dtype=float)
    except (TypeError, ValueError) as exc:
        raise InvalidDistributionError(f"{what} is not a numeric array: {exc}") from exc


def _validated(values, shape: tuple[int, ...], what: str) -> np.ndarray:
    array = as_float_array(values, what)
    if array.shape != shape:
        raise InvalidDistributionError(f"{what} has shape {array.shape}, expected {shape}")
    if not np.all(np.isfinite(array)):
        raise InvalidDistributionError(f"{what} has non-finite entries")
    if np.any(array < 0):
        raise InvalidDistributionError(f"{what} has negative entries")
    return array


def _normalized(array: np.ndarray, what: str) -> np.ndarray:
    """Normalize along the last axis after checking the tolerance."""
    totals = array.sum(axis=-1, keepdims=True)
    if np.any(np.abs(totals - 1.0) > NORMALIZATION_TOL):
        worst = float(np.max(np.abs(totals - 1.0)))
        raise InvalidDistributionError(f"{what} does not sum to 1 (off by {worst:.3g})")
    return array / totals


@dataclass(frozen=True)
class Alphabet:
    labels: tuple[str, ...]

    def __post_init__(self) -> None:
        labels = tuple(str(label) for label in self.labels)
        if not labels:
            raise InvalidDistributionError("An alphabet needs at least one symbol")
        if len(set(labels)) != len(labels):
            raise InvalidDistributionError(f"Alphabet labels must be distinct: {labels}")
        object.__setattr__(self, "labels", labels)

    @classmethod
    def of_size(cls, size: int, prefix: str = "") -> "Alphabet":
        return cls(tuple(f"{prefix}{i}" for i in range(size)))

    @property
    def size(self) -> int:
        return len(self.labels)

    def __len__(self) -> int:
        return len(self.labels)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(str(label))
        except ValueError:
            raise InvalidDistributionError(f"Unknown symbol {label!r}") from None


@dataclass(frozen=True, eq=False)
class Pmf:
    alphabet: Alphabet
    probs: np.ndarray

    def __post_init__(self) -> None:
        probs = _validated(self.probs, (self.alphabet.size,), "pmf")
        object.__setattr__(self, "probs", _frozen(_normalized(probs, "pmf")))

    @classmethod
    def uniform(cls, alphabet: Alphabet) -> "Pmf":
        return cls(alphabet, np.full(alphabet.size, 1.0 / alphabet.size))

    @classmethod
    def point_mass(cls, alphabet: Alphabet, index: int) -> "Pmf":
        probs = np.zeros(alphabet.size)
        probs[index] = 1.0
        return cls(alphabet, probs)

    def supported(self, threshold: float = SUPPORT_THRESHOLD) -> np.ndarray:
        return self.probs >= threshold


@dataclass(frozen=True, eq=False)
class JointPmf:
    """p(S, Y): rows indexed by the row alphabet, columns by the column alphabet."""

    row_alphabet: Alphabet
    col_alphabet: Alphabet
    probs: np.ndarray

    def __post_init__(self) -> None:
        shape = (self.row_alphabet.size, self.col_alphabet.size)
        probs = _validated(self.probs, shape, "joint pmf")
        total = probs.sum()
        if abs(total - 1.0) > NORMALIZATION_TOL:
            raise InvalidDistributionError(f"joint pmf does not sum to 1 (sum={total:.12g})")
        object.__setattr__(self, "probs", _frozen(probs / total))


@dataclass(frozen=True, eq=False)
class Channel:
    """Row-stochastic matrix: ``rows[i]`` is the output pmf for input ``i``."""

    input_alphabet: Alphabet
    output_alphabet: Alphabet
    rows: np.ndarray

    def __post_init__(self) -> None:
        shape = (self.input_alphabet.size, self.output_alphabet.size)
        rows = _validated(self.rows, shape, "channel")
        object.__setattr__(self, "rows", _frozen(_normalized(rows, "channel rows")))

    @classmethod
    def identity(cls, alphabet: Alphabet) -> "Channel":
        return cls(alphabet, alphabet, np.eye(alphabet.size))

    @classmethod
    def constant(cls, input_alphabet: Alphabet, output_alphabet: Alphabet, index: int) -> "Channel":
        rows = np.zeros((input_alphabet.size, output_alphabet.size))
        rows[:, index] = 1.0
        return cls(input_alphabet, output_alphabet, rows)

    @classmethod
    def uniform(cls, input_alphabet: Alphabet, output_alphabet: Alphabet) -> "Channel":
        rows = np.full((input_alphabet.size, output_alphabet.size), 1.0 / output_alphabet.size)
        return cls(input_alphabet, output_alphabet, rows)

    def smoothed(self, floor: float = 1e-6) -> "Channel":
        """Strictly interior copy: every entry at least ``floor`` before renormalizing."""
        rows = np.maximum(self.rows, floor)
        rows = rows / rows.sum(axis=1, keepdims=True)
        return Channel(self.input_alphabet, self.output_alphabet, rows)


@dataclass(frozen=True, eq=False)
class Posterior:
    marginal: Pmf
    """p_U."""
    backward: Channel
    """p_{S|U}; rows of unsupported outputs hold the prior."""
    supported: np.ndarray
    """Boolean mask, ``p_U(u) >= SUPPORT_THRESHOLD``."""


def _check_same(left: Alphabet, right: Alphabet, what: str) -> None:
    if left != right:
        raise AlphabetMismatchError(f"{what}: {left.labels} != {right.labels}")


def marginals(joint: JointPmf) -> tuple[Pmf, Pmf]:
    """Row and column marginals: (p_S, p_Y)."""
    return (Pmf(joint.row_alphabet, joint.probs.sum(axis=1)),
            Pmf(joint.col_alphabet, joint.probs.sum(axis=0)))


def chain(first: Channel, second: Channel) -> Channel:
    """Compose S→Y with Y→U into S→U."""
    _check_same(first.output_alphabet, second.input_alphabet, "Cannot chain channels")
    return Channel(first.input_alphabet, second.output_alphabet, first.rows @ second.rows)


def induced_joint(prior: Pmf, channel: Channel) -> JointPmf:
    """p(x, u) = p(x) p(u|x), rows over the channel input."""
    _check_same(prior.alphabet, channel.input_alphabet, "Prior does not match channel input")
    return JointPmf(channel.input_alphabet, channel.output_alphabet,
                    prior.probs[:, None] * channel.rows)


def posterior(prior: Pmf, channel: Channel) -> Posterior:
    """Bayes inversion of ``channel`` under ``prior``."""
    _check_same(prior.alphabet, channel.input_alphabet, "Prior does not match channel input")
    joint = prior.probs[:, None] * channel.rows
    p_u = joint.sum(axis=0)
    supported = p_u >= SUPPORT_THRESHOLD
    backward = np.tile(prior.probs, (channel.output_alphabet.size, 1))
    backward[supported] = (joint[:, supported] / p_u[supported]).T
    if not np.all(supported):
        logger.debug("Outputs without support: %s",
                     [label for label, ok in zip(channel.output_alphabet.labels, supported) if not ok])
    return Posterior(
        marginal=Pmf(channel.output_alphabet, p_u),
        backward=Channel(channel.output_alphabet, channel.input_alphabet, backward),
        supported=_frozen(supported),
    )

