import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import weibull_min

from crackfusion.errors import ValidationError
from crackfusion.fracture import (
    INFINITE_WIDTH,
    CrackGrowthCurve,
    GeometrySpec,
    ParisParams,
    advance_many,
    crack_at_cycles,
    cycles_between,
    delta_k,
    fit_growth_distribution,
    fit_paris,
    fit_width,
    geometry_factor,
    growth_rate,
    integrate_growth,
    select_growth_curve,
    weibull_mle,
    weibull_quantile,
)
from crackfusion.loading import constant_amplitude, variable_amplitude

from conftest import paris_closed_form

DS = 95.44
CA = constant_amplitude()


def test_geometry_factor_oracles():
    assert geometry_factor(5.0) == 1.0
    assert geometry_factor(10.0, GeometrySpec(20.0)) == pytest.approx(2 ** 0.25)
    assert geometry_factor(0.0, GeometrySpec(20.0)) == 1.0
    with pytest.raises(ValidationError):
        geometry_factor(20.0, GeometrySpec(20.0))
    with pytest.raises(ValidationError):
        GeometrySpec(0.0)


def test_delta_k_and_rate_oracle():
    assert delta_k(1.0, 100.0) == pytest.approx(100 * math.sqrt(math.pi))
    p = ParisParams(1e-11, 3.0)
    assert growth_rate(4.0, p, 100.0) == pytest.approx(1e-11 * (100 * math.sqrt(4 * math.pi)) ** 3)
    assert growth_rate(4.0, ParisParams(0.0, 3.0), 100.0) == 0.0


def test_paris_params_validation():
    with pytest.raises(ValidationError):
        ParisParams(-1e-12, 3.0)
    with pytest.raises(ValidationError):
        ParisParams(float("nan"), 3.0)


def test_curve_validation():
    with pytest.raises(ValidationError):
        CrackGrowthCurve([0, 0], [1, 2])
    with pytest.raises(ValidationError):
        CrackGrowthCurve([0, 1], [1, -2])
    with pytest.raises(ValidationError):
        CrackGrowthCurve([0, 1, 2], [1, 2])


@pytest.mark.parametrize("m", [1.5, 2.0, 3.0, 4.0])
def test_integrate_matches_closed_form(m):
    C = 1e-5 / (DS * math.sqrt(math.pi)) ** m
    curve = integrate_growth(1.0, ParisParams(C, m), DS, INFINITE_WIDTH, 20_000)
    exact = paris_closed_form(1.0, C, m, DS, curve.cycles)
    np.testing.assert_allclose(curve.crack_mm, exact, rtol=1e-9)


def test_integrate_truncates_at_width():
    geom = GeometrySpec(10.0)
    curve = integrate_growth(5.0, ParisParams(1e-9, 3.0), DS, geom, 1e7)
    assert curve.truncated
    assert curve.crack_mm[-1] == pytest.approx(9.9)
    with pytest.raises(ValidationError):
        integrate_growth(0.0, ParisParams(1e-9, 3.0), DS, geom, 10)
    with pytest.raises(ValidationError):
        integrate_growth(10.0, ParisParams(1e-9, 3.0), DS, geom, 10)


def test_cycles_between_inverts_integration():
    p = ParisParams(8e-12, 3.0)
    geom = GeometrySpec(39.0)
    a, _ = crack_at_cycles(1.0, p, CA, geom, 0, [30_000])
    assert cycles_between(1.0, float(a[0]), p, DS, geom) == pytest.approx(30_000, rel=1e-7)
    assert cycles_between(2.0, 2.0, p, DS) == 0.0
    assert cycles_between(1.0, 2.0, ParisParams(0.0, 3.0), DS) == math.inf
    with pytest.raises(ValidationError):
        cycles_between(2.0, 1.0, p, DS)


def test_crack_at_cycles_forward_and_backward():
    p = ParisParams(8e-12, 3.0)
    geom = GeometrySpec(39.0)
    fwd, hit = crack_at_cycles(1.0, p, CA, geom, 0, [10_000, 5_000, 20_000])
    assert not hit and fwd[1] < fwd[0] < fwd[2]
    back, _ = crack_at_cycles(float(fwd[2]), p, CA, geom, 20_000, [0.0, 10_000])
    np.testing.assert_allclose(back, [1.0, fwd[0]], rtol=1e-8)


def test_crack_at_cycles_reports_cap():
    vals, hit = crack_at_cycles(1.0, ParisParams(8e-12, 3.0), CA, GeometrySpec(39.0), 0, [1e6])
    assert hit and vals[0] == pytest.approx(0.99 * 39.0)


def test_advance_many_matches_scalar_path():
    p = ParisParams(8e-12, 3.0)
    geom = GeometrySpec(39.0)
    va = variable_amplitude()
    a0 = np.array([1.0, 2.0, 5.0])
    out, hit = advance_many(a0, p, va, geom, 250.0, 7_750.0)
    ref = [crack_at_cycles(x, p, va, geom, 250.0, [7_750.0])[0][0] for x in a0]
    np.testing.assert_allclose(out, ref, rtol=1e-12)
    assert not hit.any()


def test_variable_amplitude_between_its_blocks():
    p = ParisParams(8e-12, 3.0)
    lo, _ = crack_at_cycles(1.0, p, 85.23, INFINITE_WIDTH, 0, [20_000])
    hi, _ = crack_at_cycles(1.0, p, DS, INFINITE_WIDTH, 0, [20_000])
    mid, _ = crack_at_cycles(1.0, p, variable_amplitude(), INFINITE_WIDTH, 0, [20_000])
    assert lo[0] < mid[0] < hi[0]


def _curve(p, geom=GeometrySpec(39.0), n=np.arange(0, 32_501, 2500.0)):
    a, _ = crack_at_cycles(1.0, p, CA, geom, 0, n)
    return CrackGrowthCurve(n, a)


def test_fit_paris_noiseless_recovery():
    truth = ParisParams(8e-12, 3.0)
    geom = GeometrySpec(39.0)
    fit = fit_paris(_curve(truth, geom), CA, geom)
    assert abs(math.log(fit.C / truth.C)) < 0.01
    assert abs(fit.m - truth.m) < 0.005 * truth.m


def test_fit_paris_fixed_m_and_last_anchor():
    truth = ParisParams(9e-12, 3.0)
    geom = GeometrySpec(39.0)
    curve = _curve(truth, geom)
    for anchor in ("first", "last"):
        fit = fit_paris(curve, CA, geom, fixed_m=3.0, anchor=anchor)
        assert fit.m == 3.0
        assert fit.C == pytest.approx(truth.C, rel=1e-4)
    with pytest.raises(ValidationError):
        fit_paris(curve, CA, geom, anchor="middle")
    with pytest.raises(ValidationError):
        fit_paris(curve, CA, geom, fixed_m=25.0)


def test_fit_paris_rejects_short_or_oversized_curves():
    with pytest.raises(ValidationError, match="insufficient"):
        fit_paris(CrackGrowthCurve([0, 1], [1, 2]), CA)
    with pytest.raises(ValidationError, match="validity"):
        fit_paris(CrackGrowthCurve([0, 1, 2], [1, 2, 30]), CA, GeometrySpec(20.0))


def test_fit_width_recovers_half_width():
    truth = ParisParams(8e-12, 3.0)
    geom = GeometrySpec(39.0)
    n = np.arange(0, 72_501, 2500.0)
    curves = [_curve(ParisParams(truth.C * f, 3.0), geom, n[: k]) for f, k in ((1.0, 16), (1.2, 14))]
    wf = fit_width(curves, CA)
    assert wf.geometry.half_width_b_mm == pytest.approx(39.0, rel=0.05)
    assert len(wf.per_curve_b_mm) == 2


def test_weibull_quantile_oracle():
    assert weibull_quantile(2.0, 1000.0, 1 - math.exp(-1)) == pytest.approx(1000.0)
    assert weibull_quantile(1.0, 10.0, 0.5) == pytest.approx(10 * math.log(2))


def test_weibull_mle_matches_scipy():
    x = weibull_min.rvs(2.5, scale=300.0, size=100, random_state=3)
    k, lam = weibull_mle(x)
    k_ref, _, lam_ref = weibull_min.fit(x, floc=0)
    assert k == pytest.approx(k_ref, rel=1e-4)
    assert lam == pytest.approx(lam_ref, rel=1e-4)


@given(st.integers(0, 10_000), st.floats(1e-2, 1e4))
def test_weibull_mle_scale_equivariance(seed, c):
    x = np.random.default_rng(seed).weibull(3.0, 30) + 0.05
    k1, l1 = weibull_mle(x)
    k2, l2 = weibull_mle(c * x)
    assert k2 == pytest.approx(k1, rel=1e-6)
    assert l2 == pytest.approx(c * l1, rel=1e-6)


def test_weibull_mle_degenerate_and_invalid():
    k, lam = weibull_mle([5.0, 5.0, 5.0])
    assert k == 200.0 and lam == pytest.approx(5.0)
    with pytest.raises(ValidationError):
        weibull_mle([1.0])
    with pytest.raises(ValidationError):
        weibull_mle([1.0, -2.0])


def test_distribution_quantile_order(growth_dist):
    d = growth_dist
    assert np.all(d.quantile_cycles["lower5"] < d.quantile_cycles["mean"])
    assert np.all(d.quantile_cycles["mean"] < d.quantile_cycles["upper95"])
    a = {k: d.crack_at(k, [20_000])[0] for k in ("lower5", "mean", "upper95")}
    assert a["lower5"] > a["mean"] > a["upper95"]
    with pytest.raises(ValidationError):
        d.crack_at("mean", [-1.0])


def test_distribution_needs_three_curves(growth_dist):
    c = CrackGrowthCurve([0, 1000, 2000], [1, 2, 3])
    with pytest.raises(ValidationError, match="at least 3"):
        fit_growth_distribution([c, c], CA, GeometrySpec(39.0))


def test_select_growth_curve(growth_dist):
    d = growth_dist
    n = np.array([0.0, 5000, 10_000])
    for name in ("lower5", "mean", "upper95"):
        est = list(zip(n, d.crack_at(name, n)))
        sel = select_growth_curve(d, est)
        assert sel.name == name
        assert sel.mean_abs_residual[name] == pytest.approx(0.0, abs=1e-12)
        assert sel.params == d.params(name)
    with pytest.raises(ValidationError):
        select_growth_curve(d, [])
