"""Exception hierarchy shared by all ballworld modules."""


class BallworldError(Exception):
    """Base class for all errors raised by this package."""


# geometry / meshing
class InvalidPolygon(BallworldError):
    pass


class DegenerateInput(BallworldError):
    pass


class NonManifoldInput(BallworldError):
    pass


class OutsideDomain(BallworldError):
    pass


class SingularFace(BallworldError):
    pass


class DegenerateTriangle(BallworldError):
    pass


# mapping pipelines
class SolverFailure(BallworldError):
    pass


class BeltramiOutOfRange(BallworldError):
    pass


class OverlappingTargets(BallworldError):
    pass


class BranchFailure(BallworldError):
    def __init__(self, message, stage=None):
        super().__init__(message)
        self.stage = stage


class DegeneratePolygon(BallworldError):
    pass


class ProbeInstability(BallworldError):
    pass


class CenterSingularity(BallworldError):
    pass


class NegativeBeta(BallworldError):
    pass


# control / transport
class Infeasible(BallworldError):
    pass


class MaxIterations(BallworldError):
    pass


class SingularJacobian(BallworldError):
    pass


class NoConvergence(BallworldError):
    pass


class UnsupportedModel(BallworldError):
    pass


# scenarios
class IKOutOfRange(BallworldError):
    pass
