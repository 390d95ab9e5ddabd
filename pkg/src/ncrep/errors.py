"""Exception types.

Every failure mode has its own class so callers can react to the exact
condition.  All inherit from NcrepError.  InconsistencyDetected is special:
it signals that two independent computations of the same fact disagreed,
which is a numerical or logic fault of the artifact, never a property of
the input.
"""


class NcrepError(Exception):
    pass


# matrix substrate
class NotHermitian(NcrepError):
    pass


class NotPositiveDefinite(NcrepError):
    pass


class DimensionMismatch(NcrepError):
    pass


class EmptyInput(NcrepError):
    pass


# states and centralizers
class NotFaithful(NcrepError):
    pass


class InconsistencyDetected(NcrepError):
    pass


class DoesNotCommute(NcrepError):
    pass


# conditional expectations
class NotDCentral(NcrepError):
    pass


class GramSingular(NcrepError):
    pass


class DensityDoesNotCommute(NcrepError):
    pass


class NotNormalized(NcrepError):
    pass


class NotCentral(NcrepError):
    pass


class NotAnExtension(NcrepError):
    pass


class SupportNotCentral(NcrepError):
    pass


# representing-measure pipelines
class BadPartition(NcrepError):
    pass


class GSingular(NcrepError):
    pass


class ProjectionsNotPartition(NcrepError):
    pass


class NotCentralInD(NcrepError):
    pass


class NotAbelian(NcrepError):
    pass


class NotDense(NcrepError):
    pass


# geometric means and logmodularity
class NotTracial(NcrepError):
    pass


class NotInvertible(NcrepError):
    pass


class NotTriangularType(NcrepError):
    pass


class NotBoundedBelow(NcrepError):
    pass


# instance I/O
class ParseError(NcrepError):
    pass


class InvariantViolation(NcrepError):
    pass
