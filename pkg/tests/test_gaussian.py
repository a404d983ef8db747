import math

import numpy as np
import pytest

from macstate.gaussian import (
    CorrelationPoint,
    GaussianError,
    GaussianParams,
    _bounds,
    gaussian_bounds_at,
    gaussian_common_capacity,
    gaussian_region,
    region_rows,
)

UNIT = GaussianParams(1.0, 1.0, 1.0, 1.0)


def _logdet(c, idx):
    return np.linalg.slogdet(c[np.ix_(idx, idx)])[1] / math.log(2.0)


def _cmi(c, a, b, z=()):
    a, b, z = list(a), list(b), list(z)
    out = _logdet(c, a + z) + _logdet(c, b + z) - _logdet(c, a + b + z)
    return 0.5 * (out - (_logdet(c, z) if z else 0.0))


def covariance(params, rho12, rho1s):
    """Covariance of (X1, X2, S, Y) with X1 built from X2, S and fresh noise."""
    p1, p2, q, n0 = params.p1, params.p2, params.q, params.n0
    resid = max(1.0 - rho12 ** 2 - rho1s ** 2, 0.0)
    x1 = [rho12 * math.sqrt(p1), rho1s * math.sqrt(p1), math.sqrt(resid * p1), 0.0]
    x2 = [math.sqrt(p2), 0.0, 0.0, 0.0]
    s = [0.0, math.sqrt(q), 0.0, 0.0]
    z = [0.0, 0.0, 0.0, math.sqrt(n0)]
    m = np.array([x1, x2, s, np.add(np.add(x1, x2), np.add(s, z))])
    return m @ m.T


def oracle_bounds(params, rho12, rho1s):
    c = covariance(params, rho12, rho1s)
    r1 = _cmi(c, [0], [3], [2, 1])
    rsum = _cmi(c, [0, 1], [3], [2]) - _cmi(c, [1], [2], [3])
    return r1, rsum


def dense_oracle(params, n=2000):
    a = np.linspace(0.0, 1.0, n)
    r12, r1s = np.meshgrid(a, -a, indexing="ij")
    ok = r12 ** 2 + r1s ** 2 <= 1.0
    inside = _bounds(params, r12[ok], r1s[ok])[1].max()
    th = np.linspace(0.0, math.pi / 2, 20 * n)
    arc = _bounds(params, np.cos(th), -np.sin(th))[1].max()
    return float(max(inside, arc))


class TestClosedForms:
    @pytest.mark.parametrize("params", [UNIT, GaussianParams(1.3, 0.7, 2.0, 0.9), GaussianParams(4.0, 0.1, 0.5, 2.0)])
    def test_match_gaussian_vector_oracle(self, params, rng):
        for _ in range(20):
            r, t = math.sqrt(rng.random()), rng.random() * math.pi / 2
            corr = CorrelationPoint(r * math.cos(t), -r * math.sin(t))
            got = gaussian_bounds_at(params, corr)
            want = oracle_bounds(params, corr.rho12, corr.rho1s)
            np.testing.assert_allclose(got, want, atol=1e-10)

    def test_zero_p1(self):
        params = GaussianParams(0.0, 2.0, 1.0, 1.0)
        r1, rsum = gaussian_bounds_at(params, CorrelationPoint(0.0, 0.0))
        assert r1 == 0.0
        assert rsum == pytest.approx(0.5 * math.log2(1.0 + 2.0 / 2.0), abs=1e-15)
        cap, _ = gaussian_common_capacity(params)
        assert cap == pytest.approx(0.5, abs=1e-12)

    def test_validation(self):
        with pytest.raises(GaussianError):
            GaussianParams(-1.0, 1.0, 1.0, 1.0)
        with pytest.raises(GaussianError):
            GaussianParams(1.0, 1.0, 1.0, 0.0)
        with pytest.raises(GaussianError):
            CorrelationPoint(0.8, -0.8)
        with pytest.raises(GaussianError):
            CorrelationPoint(0.2, 0.1)
        with pytest.raises(GaussianError):
            gaussian_bounds_at(UNIT, CorrelationPoint(0.0, 0.0), reading="bogus")

    def test_reading_toggle(self):
        corr = CorrelationPoint(0.3, -0.6)
        r1a, sa = gaussian_bounds_at(UNIT, corr)
        r1b, sb = gaussian_bounds_at(UNIT, corr, reading="rho2s-zero")
        assert sa == sb
        assert r1b == pytest.approx(0.5 * math.log2(1.0 + 0.91), abs=1e-15)
        assert r1b > r1a


class TestCommonCapacity:
    @pytest.mark.parametrize("params", [UNIT, GaussianParams(2.0, 0.5, 3.0, 1.0), GaussianParams(0.3, 1.5, 0.2, 0.7)])
    def test_matches_dense_oracle(self, params):
        cap, corr = gaussian_common_capacity(params)
        assert cap == pytest.approx(dense_oracle(params), abs=1e-4)
        assert cap >= dense_oracle(params) - 1e-9
        assert cap == pytest.approx(gaussian_bounds_at(params, corr)[1], abs=1e-15)

    def test_scale_invariance(self):
        base, _ = gaussian_common_capacity(UNIT)
        for k in (1e-3, 0.5, 7.0, 1e4):
            assert gaussian_common_capacity(UNIT.scaled(k))[0] == pytest.approx(base, abs=1e-12)

    def test_decreasing_in_noise(self):
        caps = [gaussian_common_capacity(GaussianParams(1.0, 1.0, 1.0, n))[0] for n in (0.25, 0.5, 1.0, 2.0, 4.0)]
        assert all(b < a for a, b in zip(caps, caps[1:]))

    def test_no_state_no_cancellation(self):
        _, corr = gaussian_common_capacity(GaussianParams(1.0, 1.0, 0.0, 1.0))
        assert corr.rho1s == 0.0

    def test_deterministic(self):
        assert gaussian_common_capacity(UNIT) == gaussian_common_capacity(UNIT)


class TestRegion:
    def test_shape_and_consistency(self):
        lams = [0.0, 0.25, 0.5, 0.75, 1.0]
        reg = gaussian_region(UNIT, lambdas=lams)
        cap, _ = gaussian_common_capacity(UNIT)
        assert [p.lam for p in reg.points] == lams
        top = reg.points[-1]
        assert top.pair.r1 == 0.0
        assert top.pair.rc <= cap + 1e-9
        assert top.pair.rc == pytest.approx(cap, abs=1e-9)
        for p in reg.points:
            r1, rsum = gaussian_bounds_at(UNIT, p.params)
            assert p.pair.r1 <= max(r1, 0.0) + 1e-12
            assert p.pair.rc + p.pair.r1 <= max(rsum, 0.0) + 1e-12
        rows = region_rows(reg)
        assert list(rows[0]) == ["lambda", "rc", "r1", "rho12", "rho1s"]

    def test_lambda_zero_matches_oracle(self):
        reg = gaussian_region(UNIT, lambdas=[0.0])
        a = np.linspace(0.0, 1.0, 1500)
        r12, r1s = np.meshgrid(a, -a, indexing="ij")
        ok = r12 ** 2 + r1s ** 2 <= 1.0
        r1, rs = _bounds(UNIT, r12[ok], r1s[ok])
        best = np.max(np.minimum(np.maximum(r1, 0), np.maximum(rs, 0)))
        assert reg.points[0].pair.r1 == pytest.approx(best, abs=1e-4)

    def test_rejects_bad_input(self):
        with pytest.raises(GaussianError):
            gaussian_region(UNIT, lambdas=[1.5])
        with pytest.raises(GaussianError):
            gaussian_region(UNIT, grid_resolution=1)
