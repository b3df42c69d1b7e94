"""Named integrable parts and potentials used by the CLI and the acceptance runner."""

from __future__ import annotations

from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from .errors import ConfigError
from .fourier import FourierSeries
from .genericity import counterexample_potential
from .normal_form import AnalyticTail
from .polynomial import YPolynomial, quadratic_form


def _quartic(n: int) -> YPolynomial:
    base = quadratic_form(np.eye(n))
    deg = [0] * n
    deg[0] = 4
    return base + YPolynomial(n, {tuple(deg): 0.25})


def _shear(n: int) -> YPolynomial:
    return quadratic_form(np.eye(n) + 0.5 * (np.ones((n, n)) - np.eye(n)) / max(n - 1, 1))


HAMILTONIANS = {
    "quadratic": lambda n: quadratic_form(np.eye(n)),
    "anisotropic": lambda n: quadratic_form(np.diag(np.arange(1.0, n + 1.0))),
    "shear": _shear,
    "quartic": _quartic,
}


def hamiltonian(name: str, n: int) -> YPolynomial:
    try:
        return HAMILTONIANS[name](n)
    except KeyError:
        raise ConfigError(f"unknown hamiltonian {name!r}; choose from {sorted(HAMILTONIANS)}") from None


def example_potential(n: int, delta: float, s: float, cutoff: int) -> tuple[FourierSeries, AnalyticTail]:
    from .effective import example_potential as build

    return build(n, delta, s, cutoff)


def two_harmonic(n: int) -> FourierSeries:
    """``cos x_1 + cos 2 x_1``: two maxima and two minima in the first angle."""
    e1 = tuple([1] + [0] * (n - 1))
    e1x2 = tuple([2] + [0] * (n - 1))
    return FourierSeries.cosine(e1) + FourierSeries.cosine(e1x2)


def coupled_pendulum(n: int) -> FourierSeries:
    """``cos x_1 + cos(x_1 + x_2) + cos(x_2)/2``, padded with zeros beyond two angles."""
    if n < 2:
        raise ConfigError("the coupled pendulum needs at least two angles")
    pad = [0] * (n - 2)
    return (
        FourierSeries.cosine(tuple([1, 0] + pad))
        + FourierSeries.cosine(tuple([1, 1] + pad))
        + FourierSeries.cosine(tuple([0, 1] + pad), 0.5)
    )


POTENTIALS = ("example_potential", "two_harmonic", "coupled_pendulum", "cartan_counterexample")


def potential(name: str, n: int, delta: float, s: float, cutoff: int, r: float = 1.0) -> tuple[FourierSeries, AnalyticTail | None]:
    if name == "example_potential":
        return example_potential(n, delta, s, cutoff)
    if name == "two_harmonic":
        return two_harmonic(n), None
    if name == "coupled_pendulum":
        return coupled_pendulum(n), None
    if name == "cartan_counterexample":
        return counterexample_potential(n, r, s, cutoff), None
    raise ConfigError(f"unknown potential {name!r}; choose from {list(POTENTIALS)}")


def resonant_point(h: YPolynomial, k: Sequence[int], base: Sequence[float], span: float = 10.0) -> np.ndarray:
    """Point ``base + t k/|k|`` with ``omega.k = 0``, the root of smallest ``|t|`` found by bracketing."""
    kv = np.asarray(k, dtype=float)
    unit = kv / np.linalg.norm(kv)
    grad = h.gradient()
    b = np.asarray(base, dtype=float)

    def g(t: float) -> float:
        y = b + t * unit
        return float(sum(kv[i] * grad[i](y).real for i in range(h.n)))

    if g(0.0) == 0:
        return b
    grid = np.linspace(-span, span, 401)
    vals = [g(t) for t in grid]
    best = None
    for i in range(len(grid) - 1):
        if vals[i] * vals[i + 1] <= 0:
            root = brentq(g, grid[i], grid[i + 1], xtol=1e-15)
            if best is None or abs(root) < abs(best):
                best = root
    if best is None:
        raise ValueError(f"no resonant point for {tuple(k)} within {span} of the base point")
    return b + best * unit


def perpendicular_base(k: Sequence[int], distance: float) -> np.ndarray:
    """A point at ``distance`` from the origin orthogonal to ``k`` (first non-parallel axis, Gram-Schmidt)."""
    kv = np.asarray(k, dtype=float)
    unit = kv / np.linalg.norm(kv)
    if len(kv) == 2:
        return distance * np.array([-unit[1], unit[0]])
    for axis in range(len(kv)):
        e = np.zeros(len(kv))
        e[axis] = 1.0
        v = e - (e @ unit) * unit
        if np.linalg.norm(v) > 1e-8:
            return distance * v / np.linalg.norm(v)
    raise ValueError("degenerate direction")
