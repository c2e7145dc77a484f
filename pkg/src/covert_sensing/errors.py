"""Exception hierarchy shared by all modules.

The CLI maps these onto exit codes: parse problems exit 1, violated
modelling assumptions exit 2, and requests too large for exact
enumeration exit 3.
"""


class CovertSensingError(Exception):
    """Base class for library errors."""


class DimensionMismatch(CovertSensingError, ValueError):
    pass


class NonHermitian(CovertSensingError, ValueError):
    pass


class InvalidState(CovertSensingError, ValueError):
    """Matrix is not a density operator (trace, positivity or finiteness)."""


class SupportViolation(CovertSensingError, ValueError):
    pass


class UnknownParameter(CovertSensingError, KeyError):
    pass


class UnknownSymbol(CovertSensingError, KeyError):
    pass


class AssumptionViolated(CovertSensingError):
    """A modelling assumption required by the requested analysis fails."""


class NoZeroEquivalentPair(AssumptionViolated):
    pass


class IdentityUnitary(AssumptionViolated):
    pass


class NotClassical(AssumptionViolated):
    pass


class DegenerateAlpha(AssumptionViolated):
    pass


class ScaleExceeded(CovertSensingError):
    """Exact computation would exceed the configured size budget."""


class EmptyTypeBall(CovertSensingError):
    pass


class MNotFound(CovertSensingError):
    pass


class BlockTooLong(CovertSensingError):
    pass


class ScenarioParseError(CovertSensingError, ValueError):
    """Scenario document is malformed; ``where`` names the offending field."""

    def __init__(self, message, where=None):
        self.where = where
        super().__init__(f"{where}: {message}" if where else message)
