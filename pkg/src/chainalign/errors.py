"""Exception types shared across the package."""


class ChainAlignError(Exception):
    """Base class for all package errors."""


class ModelError(ChainAlignError):
    """A model failed validation. Carries the full list of violations."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(str(v) for v in self.violations))


class NonStochasticRow(ChainAlignError):
    pass


class Reducible(ChainAlignError):
    pass


class Periodic(ChainAlignError):
    pass


class GcdNotOne(Warning):
    """Lattice claimed but score gcd > 1; the model was rescaled."""


class ConvergenceFailure(ChainAlignError):
    pass


class DriftNotNegative(ChainAlignError):
    pass


class NoPositiveCycle(ChainAlignError):
    pass


class NotIID(ChainAlignError):
    pass


class SeedRequired(ChainAlignError):
    pass


class InsufficientReplicates(ChainAlignError):
    pass


class ConditionNotVerified(ChainAlignError):
    pass


class ModelFileError(ChainAlignError):
    """Model or sequence file could not be parsed."""
