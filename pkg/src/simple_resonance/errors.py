"""Exception types shared across the package."""


class ResonanceError(Exception):
    """Base class for domain errors raised by this package."""


class DimensionMismatch(ResonanceError, ValueError):
    pass


class NonZeroMean(ResonanceError, ValueError):
    pass


class DivisorTooSmall(ResonanceError):
    """A small divisor fell below its certified threshold."""


class SmallnessViolated(ResonanceError):
    """A smallness quantity required by an averaging step exceeded its limit."""

    def __init__(self, name: str, value: float, limit: float, detail: str = ""):
        self.name = name
        self.value = value
        self.limit = limit
        msg = f"{name} = {value:.6g} exceeds {limit:.6g}"
        super().__init__(f"{msg} ({detail})" if detail else msg)


class CoveringGap(ResonanceError):
    """A point belongs to none of the resonance zones."""


class ZeroCoefficient(ResonanceError, ValueError):
    pass


class CertificationFailed(ResonanceError):
    pass


class SupportTooLarge(ResonanceError):
    """An explicit bracket would exceed the configured pair budget."""


class ConfigError(ResonanceError, ValueError):
    pass
