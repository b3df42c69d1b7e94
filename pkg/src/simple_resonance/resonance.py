"""Covering of frequency space into non-resonant, simply resonant and doubly resonant zones."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import CoveringGap, DimensionMismatch
from .fourier import FourierSeries
from .lattice import enumerate_modes, generators_up_to, on_line
from .polynomial import YPolynomial

Mode = tuple[int, ...]


@dataclass(frozen=True)
class CoveringParams:
    alpha: float
    K1: int
    K2: int
    M: float
    L: float = 1.0
    Lbar: float = 1.0
    nu: float = 0.0
    epsilon: float = 0.0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not (self.K2 >= self.K1 >= 2):
            raise ValueError("need K2 >= K1 >= 2")
        if self.M <= 0 or self.L <= 0 or self.Lbar <= 0:
            raise ValueError("M, L and Lbar must be positive")
        if self.epsilon < 0:
            raise ValueError("epsilon must be non-negative")

    @classmethod
    def from_epsilon(cls, epsilon: float, K1: int, K2: int, nu: float, M: float, L: float = 1.0, Lbar: float = 1.0):
        """Parameters with the threshold tied to the perturbation size, ``alpha = sqrt(eps) K2^nu``."""
        return cls(math.sqrt(epsilon) * K2**nu, K1, K2, M, L, Lbar, nu, epsilon)

    def theorem_level(self, n: int) -> list[str]:
        """Names of the averaging-theorem parameter constraints that fail."""
        failed = []
        if not self.K2 >= 3 * self.K1 >= 6:
            failed.append("K2 >= 3 K1 >= 6")
        if not self.nu >= n + 2:
            failed.append("nu >= n + 2")
        return failed

    def to_json(self) -> dict:
        return dict(self.__dict__)


class FrequencyMap:
    """Gradient of an integrable Hamiltonian as a vector of polynomials."""

    def __init__(self, components: Sequence[YPolynomial]):
        self.components = tuple(components)
        self.n = len(self.components)
        self._hessian = None

    def __call__(self, y) -> np.ndarray:
        y = np.asarray(y)
        vals = np.array([c(y) for c in self.components])
        return vals.real if np.isrealobj(y) else vals

    def evaluate_many(self, ys: np.ndarray) -> np.ndarray:
        ys = np.asarray(ys)
        out = np.stack([c.evaluate_many(ys) for c in self.components], axis=1)
        return out.real if np.isrealobj(ys) else out

    def hessian(self) -> tuple[tuple[YPolynomial, ...], ...]:
        if self._hessian is None:
            self._hessian = tuple(c.gradient() for c in self.components)
        return self._hessian

    def hessian_at(self, y) -> np.ndarray:
        return np.array([[entry(y).real for entry in row] for row in self.hessian()])


def omega_of(h: FourierSeries) -> FrequencyMap:
    """Exact polynomial gradient of an angle-independent Hamiltonian."""
    if any(any(k) for k in h):
        raise ValueError("the integrable part must not depend on the angles")
    coeff = h.mean()
    poly = coeff.polynomial() if not coeff.is_zero() else YPolynomial(h.n_actions)
    return FrequencyMap(poly.gradient())


# Zone membership


def _generator_array(n: int, K: int) -> np.ndarray:
    return np.array(generators_up_to(n, K), dtype=np.int64)


def perp_projection(w: np.ndarray, k: Sequence[int]) -> np.ndarray:
    """``w - (w.k) k / |k|^2`` applied row-wise."""
    w = np.asarray(w, dtype=float)
    kv = np.asarray(k, dtype=float)
    return w - np.outer(w @ kv, kv) / (kv @ kv) if w.ndim == 2 else w - (w @ kv) * kv / (kv @ kv)


@dataclass(frozen=True)
class Certificate:
    mode: Mode
    divisor: float
    threshold: float

    def to_json(self) -> dict:
        return {"mode": list(self.mode), "divisor": self.divisor, "threshold": self.threshold}


def in_omega0(w: Sequence[float], p: CoveringParams, n: int | None = None) -> tuple[bool, Certificate]:
    """Complete non-resonance: the smallest generator divisor exceeds ``alpha/2``."""
    w = np.asarray(w, dtype=float)
    n = len(w) if n is None else n
    if len(w) != n:
        raise DimensionMismatch("frequency has wrong dimension")
    gens = _generator_array(n, p.K1)
    divs = np.abs(gens @ w)
    i = int(np.argmin(divs))
    cert = Certificate(tuple(int(c) for c in gens[i]), float(divs[i]), p.alpha / 2)
    return bool(divs[i] > p.alpha / 2), cert


def in_omega1k(w: Sequence[float], k: Sequence[int], p: CoveringParams) -> tuple[bool, Certificate | None]:
    """Neighbourhood of the simple resonance ``w.k = 0``.

    The certificate records the generator ``l`` minimising ``|P_perp w . l|``
    against the threshold ``3 alpha K2 / |k|``.
    """
    w = np.asarray(w, dtype=float)
    k = tuple(int(c) for c in k)
    norm_k = math.sqrt(sum(c * c for c in k))
    if not abs(float(w @ np.asarray(k))) < p.alpha:
        return False, None
    pw = perp_projection(w, k)
    if not np.linalg.norm(pw) < p.M:
        return False, None
    gens = _generator_array(len(w), p.K2)
    gens = gens[~on_line(gens, k)]
    vals = np.abs(gens @ pw)
    threshold = 3 * p.alpha * p.K2 / norm_k
    i = int(np.argmin(vals))
    cert = Certificate(tuple(int(c) for c in gens[i]), float(vals[i]), threshold)
    return bool(vals[i] > threshold), cert


def in_omega2kl(w: Sequence[float], k: Sequence[int], ell: Sequence[int], p: CoveringParams) -> bool:
    w = np.asarray(w, dtype=float)
    norm_k = math.sqrt(sum(c * c for c in k))
    pw = perp_projection(w, k)
    return bool(
        abs(float(w @ np.asarray(k))) < p.alpha
        and np.linalg.norm(pw) < p.M
        and abs(float(pw @ np.asarray(ell))) <= 3 * p.alpha * p.K2 / norm_k
    )


@dataclass(frozen=True)
class ZoneReport:
    y: tuple[float, ...]
    omega: tuple[float, ...]
    in_d0: bool
    d1: tuple[Mode, ...]
    d2: tuple[tuple[Mode, Mode], ...]
    certificates: tuple[Certificate, ...] = field(default=())

    @property
    def memberships(self) -> tuple[str, ...]:
        out = []
        if self.in_d0:
            out.append("D0")
        out += [f"D1{list(k)}" for k in self.d1]
        if self.d2:
            out.append("D2")
        return tuple(out)

    @property
    def label(self) -> str:
        """Single raster label: the first zone in the order D0, D1, D2."""
        if self.in_d0:
            return "D0"
        if self.d1:
            return "D1"
        return "D2"

    def to_json(self) -> dict:
        return {
            "y": list(self.y),
            "omega": list(self.omega),
            "memberships": list(self.memberships),
            "d2_pairs": [[list(k), list(l)] for k, l in self.d2],
            "certificates": [c.to_json() for c in self.certificates],
        }


@dataclass(frozen=True)
class BatchZones:
    """Vectorised zone memberships for many frequencies."""

    omega: np.ndarray
    in_d0: np.ndarray  # (N,)
    gens1: np.ndarray  # (g1, n)
    in_d1: np.ndarray  # (N, g1)
    in_d2: np.ndarray  # (N,)
    in_ball: np.ndarray  # (N,)

    @property
    def covered(self) -> np.ndarray:
        return self.in_d0 | self.in_d1.any(axis=1) | self.in_d2


def classify_frequencies(ws: np.ndarray, p: CoveringParams, pair_detail: bool = False):
    """Zone memberships for each row of ``ws``.

    With ``pair_detail`` the boolean array of memberships in every double
    resonance neighbourhood ``(k, l)`` is returned as well.
    """
    ws = np.asarray(ws, dtype=float)
    n = ws.shape[1]
    gens1 = _generator_array(n, p.K1)
    gens2 = _generator_array(n, p.K2)
    divs1 = np.abs(ws @ gens1.T)
    in_d0 = divs1.min(axis=1) > p.alpha / 2
    in_d1 = np.zeros((len(ws), len(gens1)), dtype=bool)
    in_d2 = np.zeros(len(ws), dtype=bool)
    pairs: list[tuple[Mode, Mode]] = []
    pair_hits = []
    for j, k in enumerate(gens1):
        norm_k = float(np.sqrt(k @ k))
        pw = perp_projection(ws, k)
        near = (divs1[:, j] < p.alpha) & (np.linalg.norm(pw, axis=1) < p.M)
        others = gens2[~on_line(gens2, k)]
        vals = np.abs(pw @ others.T)
        threshold = 3 * p.alpha * p.K2 / norm_k
        in_d1[:, j] = near & (vals > threshold).all(axis=1)
        hits = near[:, None] & (vals <= threshold)
        in_d2 |= hits.any(axis=1)
        if pair_detail:
            for col, ell in enumerate(others):
                pairs.append((tuple(int(c) for c in k), tuple(int(c) for c in ell)))
                pair_hits.append(hits[:, col])
    batch = BatchZones(ws, in_d0, gens1, in_d1, in_d2, np.linalg.norm(ws, axis=1) < p.M)
    if pair_detail:
        hits_arr = np.stack(pair_hits, axis=1) if pair_hits else np.zeros((len(ws), 0), bool)
        return batch, pairs, hits_arr
    return batch


def classify(y: Sequence[float], omega: FrequencyMap, p: CoveringParams) -> ZoneReport:
    """Zone memberships of one action point; raises :class:`CoveringGap` if none applies."""
    y = np.asarray(y, dtype=float)
    w = omega(y)
    if not np.linalg.norm(w) < p.M:
        raise CoveringGap(f"frequency {w.tolist()} lies outside the ball of radius M={p.M}")
    batch, pairs, hits = classify_frequencies(w[None, :], p, pair_detail=True)
    certs = []
    ok0, cert0 = in_omega0(w, p)
    if ok0:
        certs.append(cert0)
    d1 = []
    for j, k in enumerate(batch.gens1):
        if batch.in_d1[0, j]:
            kt = tuple(int(c) for c in k)
            d1.append(kt)
            _, cert = in_omega1k(w, kt, p)
            certs.append(cert)
    d2 = tuple(pair for pair, hit in zip(pairs, hits[0]) if hit)
    report = ZoneReport(tuple(y.tolist()), tuple(w.tolist()), bool(batch.in_d0[0]), tuple(d1), d2, tuple(certs))
    if not report.memberships:
        raise CoveringGap(f"point {y.tolist()} belongs to no zone")
    return report


def verify_nonresonance(report: ZoneReport, p: CoveringParams) -> bool:
    """Re-check the non-resonance consequences of each membership by enumerating all modes."""
    w = np.asarray(report.omega, dtype=float)
    n = len(w)
    if report.in_d0:
        modes = np.array(enumerate_modes(n, p.K1)[1:], dtype=np.int64)
        if not (np.abs(modes @ w) >= p.alpha / 2).all():
            return False
    if report.d1:
        modes = np.array(enumerate_modes(n, p.K2)[1:], dtype=np.int64)
        for k in report.d1:
            rest = modes[~on_line(modes, k)]
            if not (np.abs(rest @ w) >= 2 * p.alpha * p.K2 / math.sqrt(sum(c * c for c in k))).all():
                return False
    return True


def verify_batch(batch: BatchZones, p: CoveringParams) -> np.ndarray:
    """Vectorised :func:`verify_nonresonance` for a whole batch; True where every claim holds."""
    ws = batch.omega
    n = ws.shape[1]
    ok = np.ones(len(ws), dtype=bool)
    modes1 = np.array(enumerate_modes(n, p.K1)[1:], dtype=np.int64)
    d0_ok = (np.abs(ws @ modes1.T) >= p.alpha / 2).all(axis=1)
    ok &= ~batch.in_d0 | d0_ok
    modes2 = np.array(enumerate_modes(n, p.K2)[1:], dtype=np.int64)
    for j, k in enumerate(batch.gens1):
        members = batch.in_d1[:, j]
        if not members.any():
            continue
        rest = modes2[~on_line(modes2, k)]
        bound = 2 * p.alpha * p.K2 / float(np.sqrt(k @ k))
        ok[members] &= (np.abs(ws[members] @ rest.T) >= bound).all(axis=1)
    return ok


# Double resonances


def dist_double_resonance(w: Sequence[float], k: Sequence[int], ell: Sequence[int]) -> float:
    """Length of the projection of ``w`` onto the plane spanned by ``k`` and ``l``."""
    w = np.asarray(w, dtype=float)
    kv = np.asarray(k, dtype=float)
    h = perp_projection(np.asarray(ell, dtype=float), k)
    if np.linalg.norm(h) == 0:
        raise ValueError("k and l must not be parallel")
    a = (w @ kv) / (kv @ kv)
    b = (w @ h) / (h @ h)
    return float(math.hypot(a * np.linalg.norm(kv), b * np.linalg.norm(h)))


def double_resonance_distance_bound(k: Sequence[int], ell: Sequence[int], p: CoveringParams) -> float:
    return math.sqrt(10) * p.alpha * p.K2 * math.sqrt(sum(c * c for c in k)) * math.sqrt(sum(c * c for c in ell))


def pair_measure_bound(n: int, k: Sequence[int], p: CoveringParams) -> float:
    """Per-pair measure bound ``3 2^n M^(n-2) alpha^2 K2 / |k|`` in frequency space."""
    return 3 * 2**n * p.M ** (n - 2) * p.alpha**2 * p.K2 / math.sqrt(sum(c * c for c in k))


def ball_volume(n: int, radius: float) -> float:
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1) * radius**n


def sample_ball(center: Sequence[float], radius: float, count: int, rng: np.random.Generator) -> np.ndarray:
    n = len(center)
    g = rng.standard_normal((count, n))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    rad = radius * rng.random(count) ** (1.0 / n)
    return np.asarray(center, dtype=float) + g * rad[:, None]


@dataclass(frozen=True)
class D2Estimate:
    fraction: float
    measure: float
    std_error: float
    samples: int
    pair_measures: tuple[tuple[Mode, Mode, float, float, float], ...]  # (k, l, estimate, stderr, bound)
    envelope: float
    scaling_ratio: float | None
    scaling_std_error: float | None

    @property
    def per_pair_ok(self) -> bool:
        return all(est <= bound + 3 * err for _, _, est, err, bound in self.pair_measures)

    def to_json(self) -> dict:
        return {
            "fraction": self.fraction,
            "measure": self.measure,
            "std_error": self.std_error,
            "samples": self.samples,
            "envelope": self.envelope,
            "scaling_ratio": self.scaling_ratio,
            "scaling_std_error": self.scaling_std_error,
            "pairs": [
                {"k": list(k), "l": list(l), "estimate": e, "std_error": s, "bound": b}
                for k, l, e, s, b in self.pair_measures
            ],
        }


def _d2_hits(ys, omega, p):
    ws = omega.evaluate_many(ys)
    batch, pairs, hits = classify_frequencies(ws, p, pair_detail=True)
    return batch.in_d2, pairs, hits


def measure_estimate_D2(
    omega: FrequencyMap,
    center: Sequence[float],
    radius: float,
    p: CoveringParams,
    n_samples: int,
    seed: int,
    scaling: bool = True,
) -> D2Estimate:
    """Monte-Carlo measure of the double-resonance zone inside a ball of actions.

    Per-pair estimates are compared with the frequency-space bound times
    ``Lbar^n`` (pull-back through the frequency map).  With ``scaling`` the
    same samples are reclassified at ``alpha/2`` and the ratio of the two
    estimates is returned.
    """
    if n_samples < 1000:
        raise ValueError("at least 1000 samples are required")
    n = len(center)
    rng = np.random.default_rng(seed)
    ys = sample_ball(center, radius, n_samples, rng)
    vol = ball_volume(n, radius)
    hit, pairs, pair_hits = _d2_hits(ys, omega, p)
    frac = float(hit.mean())
    err = math.sqrt(max(frac * (1 - frac), 1.0 / n_samples) / n_samples)
    pair_rows = []
    envelope = 0.0
    for (k, ell), col in zip(pairs, pair_hits.T):
        pf = float(col.mean())
        bound = p.Lbar**n * pair_measure_bound(n, k, p)
        envelope += bound
        pair_rows.append((k, ell, pf * vol, math.sqrt(max(pf * (1 - pf), 1.0 / n_samples) / n_samples) * vol, bound))
    ratio = ratio_err = None
    if scaling:
        half = CoveringParams(p.alpha / 2, p.K1, p.K2, p.M, p.L, p.Lbar, p.nu, p.epsilon)
        hit_half, _, _ = _d2_hits(ys, omega, half)
        big, small = int(hit.sum()), int(hit_half.sum())
        if small > 0:
            ratio = big / small
            # delta method with independent-count approximation (conservative for nested sets)
            ratio_err = ratio * math.sqrt(1.0 / max(big, 1) + 1.0 / small)
    return D2Estimate(frac, frac * vol, err * vol, n_samples, tuple(pair_rows), envelope, ratio, ratio_err)


def complex_widening_check(
    ys: np.ndarray,
    omega: FrequencyMap,
    modes: np.ndarray,
    threshold: float,
    r: float,
    L: float,
    seed: int = 0,
    per_point: int = 8,
) -> tuple[bool, float, float]:
    """Sampled check that real non-resonance at ``threshold`` survives complex widening.

    Each real point is perturbed by complex offsets of length below ``r`` and
    ``|omega(y + d).k|`` is compared with ``threshold - L r K``.  Returns
    ``(holds, smallest divisor seen, reduced threshold)``.  A non-positive
    reduced threshold means the widening is too large for the statement.
    """
    ys = np.asarray(ys, dtype=float)
    modes = np.asarray(modes, dtype=np.int64)
    K = int(np.abs(modes).sum(axis=1).max())
    reduced = threshold - L * r * K
    real_divs = np.abs(omega.evaluate_many(ys) @ modes.T)
    if not (real_divs >= threshold).all():
        raise ValueError("sample points are not non-resonant at the given threshold")
    if r == 0:
        return True, float(real_divs.min()), reduced
    rng = np.random.default_rng(seed)
    n = ys.shape[1]
    pts = np.repeat(ys, per_point, axis=0).astype(complex)
    d = rng.standard_normal((len(pts), n)) + 1j * rng.standard_normal((len(pts), n))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    d *= r * rng.random(len(pts))[:, None] ** (1.0 / (2 * n))
    divs = np.abs(omega.evaluate_many(pts + d) @ modes.T)
    smallest = float(divs.min())
    return bool(reduced > 0 and smallest >= reduced), smallest, reduced


def raster(omega: FrequencyMap, lower: Sequence[float], upper: Sequence[float], steps: int, p: CoveringParams):
    """Zone labels on a regular two-dimensional grid of actions."""
    if len(lower) != 2:
        raise DimensionMismatch("raster export is two-dimensional")
    g1 = np.linspace(lower[0], upper[0], steps)
    g2 = np.linspace(lower[1], upper[1], steps)
    ys = np.array([(a, b) for a in g1 for b in g2])
    ws = omega.evaluate_many(ys)
    batch = classify_frequencies(ws, p)
    labels = np.where(batch.in_d0, "D0", np.where(batch.in_d1.any(axis=1), "D1", np.where(batch.in_d2, "D2", "none")))
    labels = np.where(batch.in_ball, labels, "outside")
    return ys, labels
