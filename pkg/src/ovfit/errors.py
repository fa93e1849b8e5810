"""Exception types raised by ovfit."""


class OvfitError(Exception):
    """Base class for all estimation errors."""


class PoleHit(OvfitError):
    """An evaluation point coincides with a model pole."""


class AllZero(OvfitError):
    """Polynomial with every coefficient equal to zero."""


class BadRange(OvfitError, ValueError):
    pass


class MapSingularity(OvfitError):
    """Point sits on the singularity s = alpha of the bilinear map."""


class PointAtInfinity(OvfitError):
    """q = -1 maps to s = infinity."""


class GainReferenceHit(OvfitError):
    pass


class DimensionMismatch(OvfitError, ValueError):
    pass


class BasisSingularity(OvfitError):
    """Evaluation point hits a basis pole."""


class BadPoint(OvfitError, ValueError):
    pass


class DegenerateDenominator(OvfitError):
    pass


class NodeSingularity(OvfitError):
    pass


class RankDeficient(OvfitError):
    """Compiled equality constraints lost rank (conflicting constraints)."""


class InfeasibleConstraints(OvfitError):
    pass


class SingularKKT(OvfitError):
    pass


class SolveFailure(OvfitError):
    pass


class SingularIVSystem(OvfitError):
    pass


class IllConditionedMap(UserWarning):
    """Coefficient map condition number above 1e12."""
