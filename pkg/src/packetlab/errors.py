"""Error taxonomy shared by all packetlab modules.

The split matters for the CLI exit-code contract: input-shaped problems
(bad values, violated preconditions) and genuine numerical failures are
reported differently.
"""


class PacketLabError(Exception):
    """Base class for all packetlab errors."""


class DomainError(PacketLabError, ValueError):
    """An argument lies outside the mathematical domain of the operation."""


class PreconditionError(PacketLabError, ValueError):
    """A documented input contract was violated (normalization, grids, tags)."""


class DegenerateInputError(PacketLabError, ValueError):
    """The operation annihilated its input (e.g. Pauli-excluded antisymmetrization)."""


class UnsupportedModelError(PacketLabError, ValueError):
    """The requested model has no defined law for this operation."""


class NumericalError(PacketLabError, RuntimeError):
    """A numerical procedure failed to converge within its budget."""


class AccuracyWarning(UserWarning):
    """Result returned, but an accuracy assumption is strained."""
