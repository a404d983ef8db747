"""Gaussian model Y = X1 + X2 + S + Z: closed-form bounds and boundary tracing.

Encoder 1's input is parameterized by its correlation with X2 (``rho12``)
and with the state (``rho1s``), over the quarter disc
rho12 in [0, 1], rho1s in [-1, 0], rho12^2 + rho1s^2 <= 1.
Rates are in bits per channel use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dmbounds import DEFAULT_LAMBDAS, RateRegion, RegionPoint, scalarize

DISC_TOL = 1e-12
REFINE_WIDTH = 1e-10
MAX_SWEEPS = 60
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
R1_READINGS = ("rho1s", "rho2s-zero")


class GaussianError(ValueError):
    """Invalid powers, variances or correlation point."""


@dataclass(frozen=True)
class GaussianParams:
    p1: float
    p2: float
    q: float
    n0: float

    def __post_init__(self):
        for name in ("p1", "p2", "q", "n0"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise GaussianError(f"{name} must be finite")
        if self.p1 < 0 or self.p2 < 0 or self.q < 0:
            raise GaussianError("p1, p2 and q must be >= 0")
        if self.n0 <= 0:
            raise GaussianError("n0 must be > 0")

    def scaled(self, k: float) -> "GaussianParams":
        return GaussianParams(self.p1 * k, self.p2 * k, self.q * k, self.n0 * k)


@dataclass(frozen=True)
class CorrelationPoint:
    rho12: float
    rho1s: float

    def __post_init__(self):
        if not 0.0 <= self.rho12 <= 1.0:
            raise GaussianError(f"rho12={self.rho12!r} outside [0, 1]")
        if not -1.0 <= self.rho1s <= 0.0:
            raise GaussianError(f"rho1s={self.rho1s!r} outside [-1, 0]")
        if self.rho12 ** 2 + self.rho1s ** 2 > 1.0 + DISC_TOL:
            raise GaussianError("rho12^2 + rho1s^2 exceeds 1")


def _bounds(params: GaussianParams, rho12, rho1s, reading: str = "rho1s"):
    """Vectorized (r1, rsum); arguments broadcast."""
    p1, p2, q, n0 = params.p1, params.p2, params.q, params.n0
    rho12 = np.asarray(rho12, dtype=float)
    rho1s = np.asarray(rho1s, dtype=float)
    # residual power of X1 after its X2 and S components; clip disc round-off
    resid = np.maximum(1.0 - rho12 ** 2 - rho1s ** 2, 0.0)
    private = 0.5 * np.log2(1.0 + p1 * resid / n0)
    coherent = (math.sqrt(p2) + rho12 * math.sqrt(p1)) ** 2
    interference = p1 * resid + (math.sqrt(q) + rho1s * math.sqrt(p1)) ** 2 + n0
    rsum = 0.5 * np.log2(1.0 + coherent / interference) + private
    if reading == "rho1s":
        r1 = private
    elif reading == "rho2s-zero":
        r1 = 0.5 * np.log2(1.0 + p1 * np.maximum(1.0 - rho12 ** 2, 0.0) / n0)
    else:
        raise GaussianError(f"unknown R1 reading {reading!r}; use one of {R1_READINGS}")
    return r1, rsum


def gaussian_bounds_at(params: GaussianParams, corr: CorrelationPoint,
                       reading: str = "rho1s") -> tuple[float, float]:
    """(r1_bound, rsum_bound) at one correlation point.

    ``reading="rho2s-zero"`` evaluates the alternative reading of the R1 term
    in which the correlation there belongs to X2 and S (zero in this model).
    """
    r1, rsum = _bounds(params, corr.rho12, corr.rho1s, reading)
    return float(r1), float(rsum)


def _disc_grid(resolution: int) -> tuple[np.ndarray, np.ndarray]:
    """Feasible points of a resolution x resolution grid, row-major in (rho12, rho1s)."""
    a = np.linspace(0.0, 1.0, resolution)
    r12, r1s = np.meshgrid(a, -a, indexing="ij")
    r12, r1s = r12.ravel(), r1s.ravel()
    ok = r12 ** 2 + r1s ** 2 <= 1.0 + DISC_TOL
    return r12[ok], r1s[ok]


def _polar(r: float, t: float) -> tuple[float, float]:
    return min(r * math.cos(t), 1.0), max(-r * math.sin(t), -1.0) + 0.0


def _golden_max(f, lo: float, hi: float) -> tuple[float, float]:
    a, b = lo, hi
    c, d = b - GOLDEN * (b - a), a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while b - a > REFINE_WIDTH:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    return x, f(x)


def _maximize(objective, resolution: int) -> tuple[float, float, float]:
    """Grid search over the disc, then golden-section sweeps in polar coordinates.

    ``objective(rho12, rho1s)`` must accept arrays. Returns (value, rho12, rho1s).
    """
    if resolution < 2:
        raise GaussianError("grid_resolution must be >= 2")
    r12, r1s = _disc_grid(resolution)
    vals = objective(r12, r1s)
    i = int(np.argmax(vals))  # first maximum: smallest grid index wins ties
    best = (float(vals[i]), float(r12[i]), float(r1s[i]))
    # polar coordinates map the quarter disc onto a rectangle, so the arc is
    # reachable by moving one coordinate at a time
    r = math.hypot(best[1], best[2])
    t = math.atan2(-best[2], best[1]) if r > 0 else 0.0
    hr = 1.0 / (resolution - 1)
    ht = hr / max(r, hr)
    f = lambda rr, tt: float(objective(*_polar(rr, tt)))  # noqa: E731
    cur = f(r, t)
    for _ in range(MAX_SWEEPS):
        prev = cur
        r_new, v = _golden_max(lambda x: f(x, t), max(r - hr, 0.0), min(r + hr, 1.0))
        if v > cur:
            r, cur = r_new, v
        t_new, v = _golden_max(lambda x: f(r, x), max(t - ht, 0.0), min(t + ht, math.pi / 2))
        if v > cur:
            t, cur = t_new, v
        if cur - prev <= 1e-15:
            break
    if cur > best[0]:
        best = (cur, *_polar(r, t))
    return best


def gaussian_region(params: GaussianParams, grid_resolution: int = 101,
                    lambdas: Sequence[float] = DEFAULT_LAMBDAS,
                    reading: str = "rho1s") -> RateRegion:
    """Scalarized boundary of the Gaussian capacity region."""
    if reading not in R1_READINGS:
        raise GaussianError(f"unknown R1 reading {reading!r}")
    points = []
    for lam in sorted(float(l) for l in lambdas):
        if not 0.0 <= lam <= 1.0:
            raise GaussianError("lambdas must lie in [0, 1]")

        def obj(a, b, lam=lam):
            r1, rs = _bounds(params, a, b, reading)
            a1, b1 = np.maximum(r1, 0.0), np.maximum(rs, 0.0)
            if lam > 0.5:
                return lam * b1
            m = np.minimum(a1, b1)
            return lam * (b1 - m) + (1.0 - lam) * m

        val, rho12, rho1s = _maximize(obj, grid_resolution)
        corr = CorrelationPoint(rho12, rho1s)
        r1, rs = gaussian_bounds_at(params, corr, reading)
        value, pair = scalarize(lam, r1, rs)
        points.append(RegionPoint(lam, pair, value, r1, rs, corr))
    return RateRegion("capacity", tuple(points), False, {"grid_resolution": grid_resolution,
                                                        "reading": reading})


def gaussian_common_capacity(params: GaussianParams,
                             grid_resolution: int = 101) -> tuple[float, CorrelationPoint]:
    """Common-message capacity: the sum-rate expression maximized over the disc."""
    val, rho12, rho1s = _maximize(lambda a, b: _bounds(params, a, b)[1], grid_resolution)
    return val, CorrelationPoint(rho12, rho1s)


def region_rows(region: RateRegion) -> list[dict]:
    """CSV-ready rows: lambda, rc, r1, rho12, rho1s."""
    return [{"lambda": p.lam, "rc": p.pair.rc, "r1": p.pair.r1,
             "rho12": p.params.rho12, "rho1s": p.params.rho1s} for p in region.points]


__all__ = [
    "CorrelationPoint",
    "GaussianError",
    "GaussianParams",
    "gaussian_bounds_at",
    "gaussian_common_capacity",
    "gaussian_region",
    "region_rows",
]
