"""Exception types raised across the toolkit."""


class KamError(Exception):
    """Base class; ``step`` names the pipeline stage when known."""

    step: str | None = None

    def __init__(self, msg: str = "", step: str | None = None):
        super().__init__(msg)
        if step is not None:
            self.step = step


class DivisionByZeroInterval(KamError, ZeroDivisionError):
    pass


class DomainError(KamError, ValueError):
    pass


class PossiblySingular(KamError):
    pass


class ShapeMismatch(KamError, ValueError):
    pass


class IndexOutOfRange(KamError, IndexError):
    pass


class InvalidStrip(KamError, ValueError):
    pass


class NeumannFailure(KamError):
    pass


class ResonantInterval(KamError):
    def __init__(self, k, msg: str = ""):
        super().__init__(msg or f"k.omega may hit an integer for k={tuple(k)}")
        self.k = tuple(k)


class GammaTooLarge(KamError, ValueError):
    pass


class TailConditionViolated(KamError, ValueError):
    pass


class NearResonance(KamError):
    pass


class StrategyMismatch(KamError, ValueError):
    pass


class DegenerateTorsion(KamError):
    pass


class DegenerateFrame(KamError):
    pass


class DivergenceDetected(KamError):
    pass


class NoConvergence(KamError):
    pass


class TorsionDegenerate(KamError):
    pass


class InvalidError(KamError, ValueError):
    pass


class NoFixedPoint(KamError):
    pass


class TorusTooRough(KamError):
    pass
