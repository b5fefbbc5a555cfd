class InfoprivError(Exception):
    """Base class for every error raised by the toolkit."""


class InvalidDistributionError(InfoprivError, ValueError):
    """Negative entries, rows not normalized or inconsistent shapes."""


class AlphabetMismatchError(InfoprivError, ValueError):
    """Operands are defined over different alphabets."""


class InvalidEpsilonError(InfoprivError, ValueError):
    pass


class InvalidCountingParametersError(InfoprivError, ValueError):
    pass


class InfeasibleBudgetError(InfoprivError):
    """No channel meets the requested distortion budget(s)."""

    def __init__(self, message: str, min_distortion: list[float], budgets: list[float]):
        super().__init__(message)
        self.min_distortion = min_distortion
        self.budgets = budgets

    def __reduce__(self):
        return type(self), (self.args[0], self.min_distortion, self.budgets)


class NotDeterministicError(InfoprivError):
    """Y is not a deterministic function of S under the instance joint."""

    def __init__(self, s_label: str, y_label: str):
        super().__init__(f"Y is not a deterministic function of S: symbol {s_label!r} "
                         f"also maps to {y_label!r}")
        self.s_label = s_label
        self.y_label = y_label

    def __reduce__(self):
        return type(self), (self.s_label, self.y_label)


class InfeasibleCandidateError(InfoprivError):
    pass


class OracleDimensionError(InfoprivError):
    pass


class AuditInvariantError(InfoprivError, AssertionError):
    """The information-privacy implication inequalities did not hold."""


class InvalidBudgetError(InfoprivError, ValueError):
    """A budget grid that is not sorted ascending."""
