import math
from typing import Optional


class RlabError(Exception):
    """Base error. `exit_code` is what the command line returns for it."""

    exit_code = 3

    def __init__(self, message: str, detail: Optional[dict] = None):
        super().__init__(message)
        self.message = message
        self.detail = detail or {}

    def to_dict(self) -> dict:
        return {"error": type(self).__name__, "message": self.message, **self.detail}


class ConfigError(RlabError):
    exit_code = 2


class BadSpec(ConfigError):
    pass


class EmptyIntersection(RlabError):
    pass


class EmptyBall(RlabError):
    pass


class MissingNormals(RlabError):
    pass


class ResolutionExceeded(RlabError):
    pass


class PreconditionViolated(RlabError):
    pass


class HypothesisViolated(RlabError):
    pass


class NoEscapePoint(RlabError):
    pass


class SpanSeparationLost(NoEscapePoint):
    pass


class DegenerateNormal(RlabError):
    pass


class FlowDiverged(RlabError):
    pass


class DegeneratePair(RlabError):
    pass


class NotLipschitz(RlabError):
    pass


class NoNeighbors(RlabError):
    pass


class EpsilonExceeded(RlabError):
    exit_code = 4

    def __init__(self, achieved_eps: float, worst: Optional[dict] = None):
        super().__init__(
            f"achieved compatibility {achieved_eps:.6g} exceeds the target",
            {"achieved_eps": float(achieved_eps) if math.isfinite(achieved_eps) else None, "worst_pair": worst},
        )
        self.achieved_eps = float(achieved_eps)
        self.worst = worst


class Disconnected(RlabError):
    exit_code = 5

    def __init__(self, components: int, sizes: Optional[list] = None):
        super().__init__(
            f"sample graph has {components} connected components",
            {"components": int(components), "sizes": sizes or []},
        )
        self.components = int(components)


class InequalityViolated(RlabError):
    exit_code = 5
