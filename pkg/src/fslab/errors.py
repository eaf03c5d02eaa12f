"""Exception types shared across the package."""


class FslabError(Exception):
    """Base class for all package-specific failures."""


class NoBracket(FslabError):
    """Shooting bracket does not straddle a sign change of the far-field mismatch."""


class NonConvergence(FslabError):
    """An iterative solve exceeded its iteration cap."""


class StationOutOfRange(FslabError):
    """Requested station lies outside the admissible range x >= 1."""


class InvalidBeta(FslabError):
    """Wedge parameter outside [0, 2)."""


class IncompatibleData(FslabError):
    """Initial perturbation violates the zeroth-order wall condition u_IN(0) = 0."""


class PicardDivergence(FslabError):
    """Picard linearization failed to contract within the iteration cap."""


class FlowReversal(FslabError):
    """Transport coefficient became negative; downstream marching is ill-posed."""


class InsufficientHistory(FslabError):
    """Not enough stored stations to form the requested x-derivative stencil."""


class DegenerateBackground(FslabError):
    """Background wall shear is non-positive; good unknowns are undefined."""


class OrderUnavailable(FslabError):
    """Requested derivative order is not held by the stack."""


class MissingOrder(FslabError):
    """Functional evaluation requested an order absent from the stack."""


class IllConditionedCorrection(FslabError):
    """Wall-corrector system for compatibility projection is numerically singular."""


class NonPositiveQuantity(FslabError):
    """Decay-rate fit received non-positive samples inside the fit window."""


class InsufficientStations(FslabError):
    """Too few stations for a discrete-in-x operation."""


class BadWeight(FslabError):
    """Nash weight fails its two-sided comparability bound."""
