"""Exception types raised across the package."""


class VortexLayersError(Exception):
    """Base class. ``code`` is what the CLI reports in its error JSON."""

    code = "Error"

    def to_dict(self):
        return {"error": self.code, "message": str(self)}


class AlphaOutOfRange(VortexLayersError):
    code = "AlphaOutOfRange"


class InfeasibleAtN(VortexLayersError):
    code = "InfeasibleAtN"


class QuadratureNonConvergent(VortexLayersError):
    code = "QuadratureNonConvergent"


class InsufficientPadding(VortexLayersError):
    code = "InsufficientPadding"


class UnderResolved(VortexLayersError):
    code = "UnderResolved"


class StepUnderflow(VortexLayersError):
    code = "StepUnderflow"


class HypothesisViolated(VortexLayersError):
    code = "HypothesisViolated"


class OutOfValidity(VortexLayersError):
    code = "OutOfValidity"


class TargetUnreachable(VortexLayersError):
    code = "TargetUnreachable"
