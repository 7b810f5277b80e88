"""Exception types raised across the package."""


class ACSlamError(Exception):
    """Base class for all package errors."""


class PoseInObstacle(ACSlamError, ValueError):
    pass


class DimensionMismatch(ACSlamError, ValueError):
    pass


class OutOfBounds(ACSlamError, IndexError):
    pass


class DisconnectedGraph(ACSlamError, ValueError):
    pass


class TooLarge(ACSlamError, ValueError):
    pass


class Unreachable(ACSlamError):
    pass


class NoPath(Unreachable):
    pass


class StartInObstacle(ACSlamError, ValueError):
    pass


class NoCandidates(ACSlamError):
    """No selectable frontier is left for the requesting agent."""


class UnknownAgent(ACSlamError, KeyError):
    pass


class RoundIncomplete(ACSlamError):
    pass


class NoActiveGoal(ACSlamError):
    pass


class ScenarioInvalid(ACSlamError, ValueError):
    pass
