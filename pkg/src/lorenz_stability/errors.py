"""Exception types raised across the package."""


class LorenzStabilityError(Exception):
    """Base class for all package errors."""


class InvalidConfig(LorenzStabilityError, ValueError):
    pass


class NonFiniteState(LorenzStabilityError, ArithmeticError):
    """Integration produced an overflowing or NaN state."""


class SequenceTooShort(LorenzStabilityError, ValueError):
    pass


class DegenerateFeature(LorenzStabilityError, ValueError):
    """A feature has zero spread within one system and cannot be standardized."""


class MissingStats(LorenzStabilityError, KeyError):
    pass


class NumericalDivergence(LorenzStabilityError, ArithmeticError):
    """Training loss became non-finite."""


class LengthMismatch(LorenzStabilityError, ValueError):
    pass


class AllUndefined(LorenzStabilityError, ValueError):
    pass


class PreprocessingMismatch(LorenzStabilityError, ValueError):
    """Evaluation preprocessing differs from what the model was trained with."""
