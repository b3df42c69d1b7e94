"""Averaging at simple resonances for nearly-integrable Hamiltonians.

Submodules: ``lattice`` (integer frames), ``polynomial`` and ``fourier`` (the series
algebra), ``resonance`` (covering of frequency space), ``normal_form`` (Lie-series
averaging), ``effective`` (effective potentials and pendulum models), ``genericity``
(measure estimates) and ``cli``.
"""

from .effective import EffectiveConfig, complete_normal_form, pendulum_reduce
from .errors import (
    CertificationFailed,
    ConfigError,
    DivisorTooSmall,
    ResonanceError,
    SmallnessViolated,
    ZeroCoefficient,
)
from .fourier import FourierSeries
from .normal_form import AveragingConfig, averaging_at_simple_resonance, normal_form
from .polynomial import YPolynomial

__version__ = "0.1.0"

__all__ = [
    "AveragingConfig",
    "CertificationFailed",
    "ConfigError",
    "DivisorTooSmall",
    "EffectiveConfig",
    "FourierSeries",
    "ResonanceError",
    "SmallnessViolated",
    "YPolynomial",
    "ZeroCoefficient",
    "averaging_at_simple_resonance",
    "complete_normal_form",
    "normal_form",
    "pendulum_reduce",
]
