"""Exception hierarchy for ppcm."""


class PPCMError(Exception):
    """Base class for all package errors."""


class ShapeMismatch(PPCMError, ValueError):
    pass


class InvalidDimensions(PPCMError, ValueError):
    pass


class DisconnectedTopology(PPCMError):
    pass


class TopologyUnsupported(PPCMError):
    pass


class RankDeficient(PPCMError, ArithmeticError):
    pass


class DegeneratePrediction(PPCMError, ArithmeticError):
    pass


class MaxItersExceeded(PPCMError):
    """Used as a status tag; solvers report non-convergence instead of raising."""


class SchemaMismatch(PPCMError, ValueError):
    pass


class LocalityViolation(PPCMError):
    """An agent tried to talk to (or read from) a non-neighbor."""


class _AgentError(PPCMError):
    def __init__(self, message, agent_id=None):
        super().__init__(message if agent_id is None else f"agent {agent_id}: {message}")
        self.agent_id = agent_id


class ScalingOverflow(_AgentError):
    pass


class InnerLoopStall(_AgentError):
    pass
