import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from distorder.asymptotics import (
    ContourParams, KernelMoments, check_limits, contour_integral, contour_P, contour_Q,
    eval_P, eval_Q, eval_V, predict_large_t, predict_small_t,
)
from distorder.fracweights import WeightDistribution


@pytest.mark.parametrize("alpha", [0.2, 0.5, 0.7, 0.9])
def test_hankel_reciprocal_gamma(alpha):
    mu = WeightDistribution.from_atoms([[alpha, 1.0]])
    assert contour_Q(1.0, mu) == pytest.approx(1 / math.gamma(alpha), rel=1e-8)
    assert contour_P(1.0, mu) == pytest.approx(1 / math.gamma(-alpha), rel=1e-8)


@settings(max_examples=15)
@given(st.floats(0.1, 0.9), st.floats(-4, 4))
def test_single_order_scaling_in_time(alpha, log10t):
    t = 10.0**log10t
    mu = WeightDistribution.from_atoms([[alpha, 2.0]])
    assert contour_Q(t, mu) == pytest.approx(t**alpha / (2 * math.gamma(alpha)), rel=1e-7)
    assert contour_P(t, mu) == pytest.approx(2 * t**-alpha / math.gamma(-alpha), rel=1e-7)


def test_entire_integrand_vanishes():
    mu = WeightDistribution.indicator(0.2, 0.8)
    for func in (np.ones_like, lambda p: p**2 + 3 * p):
        assert abs(contour_integral(func, mu, return_complex=True)) < 1e-12


@pytest.mark.parametrize("delta", [0.25, 0.5, 2.0])
def test_arc_radius_does_not_matter(delta):
    mu = WeightDistribution.indicator(0.3, 0.6)
    ref_q, ref_p = contour_Q(1e-3, mu), contour_P(1e3, mu)
    cp = ContourParams(delta=delta)
    assert contour_Q(1e-3, mu, cp) == pytest.approx(ref_q, rel=1e-8)
    assert contour_P(1e3, mu, cp) == pytest.approx(ref_p, rel=1e-8)


def test_ray_angle_does_not_matter():
    mu = WeightDistribution.indicator(0.1, 0.5)
    a = contour_Q(1e-2, mu, ContourParams(theta=1.8))
    b = contour_Q(1e-2, mu, ContourParams(theta=2.6))
    assert a == pytest.approx(b, rel=1e-8)
    with pytest.raises(ValueError):
        contour_Q(1e-2, WeightDistribution.indicator(0.1, 0.9), ContourParams(theta=2.0))


def test_contour_result_is_real():
    mu = WeightDistribution.indicator(0.15, 0.55)
    z = contour_Q(1e-3, mu, return_complex=True)
    assert abs(z.imag) < 1e-10 * abs(z.real)


def test_indicator_closed_form():
    mu = WeightDistribution.indicator(0.2, 0.7)
    km = KernelMoments(mu)
    for t in (1e-4, 1.0, 1e4):
        exact = (t**-0.2 - t**-0.7) / math.log(t) if t != 1.0 else 0.5
        assert km.P(t) == pytest.approx(exact, rel=1e-12)
        assert eval_P(t, mu) == pytest.approx(exact, rel=1e-12)
    p = np.array([0.3 + 1j, 2.0, 5 - 4j])
    assert np.allclose(eval_Q(1.0, p, mu), eval_V(p, mu), rtol=1e-14)
    assert np.allclose(eval_Q(4.0, p, mu), eval_V(p / 4.0, mu), rtol=1e-12)


def test_density_moments():
    mu = WeightDistribution.from_expr("6*alpha*(1-alpha)")
    x, w = np.polynomial.legendre.leggauss(80)
    a, w = (x + 1) / 2, w / 2
    for t in (1e-3, 10.0):
        ref = float(np.sum(w * 6 * a * (1 - a) * t**-a))
        assert eval_P(t, mu) == pytest.approx(ref, rel=1e-10)
        assert KernelMoments(mu).P(t) == pytest.approx(ref, rel=1e-10)


@settings(max_examples=30)
@given(st.floats(0.05, 0.45), st.floats(0.5, 0.95), st.floats(-6, 6))
def test_moment_sandwich(b1, b2, log10t):
    t = 10.0**log10t
    mu = WeightDistribution.indicator(b1, b2)
    P = eval_P(t, mu) / (b2 - b1)
    lo, hi = sorted((t**-b1, t**-b2))
    assert lo * (1 - 1e-12) <= P <= hi * (1 + 1e-12)


def test_branch_cut_and_time_guards():
    mu = WeightDistribution.indicator(0.2, 0.5)
    with pytest.raises(ValueError):
        eval_V(-1.0, mu)
    with pytest.raises(ValueError):
        eval_Q(0.0, 1.0, mu)
    with pytest.raises(ValueError):
        eval_P(-1.0, mu)
    with pytest.raises(ValueError):
        contour_Q(0.0, mu)


def test_predictions_scale_with_boundary_data():
    mu = WeightDistribution.from_atoms([[0.5, 1.0]])
    assert predict_small_t(1e-4, mu, 0.0) == 0.0
    assert predict_large_t(1e4, mu, 0.0) == 0.0
    # single order: t^-1 Qc(t) = t^{a-1}/Gamma(a)
    assert predict_small_t(1e-4, mu, 3.0) == pytest.approx(3 * 1e-4**-0.5 / math.gamma(0.5), rel=1e-7)
    assert predict_large_t(1e4, mu, 2.0) == pytest.approx(-2 * 1e4**-1.5 / math.gamma(-0.5), rel=1e-7)


@pytest.mark.parametrize("b", [0.05, 0.1, 0.3, 0.5, 0.9])
def test_limit_trends_match_expectation(b):
    mu = WeightDistribution.indicator(0.2, 0.6)
    out = check_limits(mu, b)
    assert out["consistent"], out
    assert out["large_expected"] == ("vanishing" if b < 0.2 else "diverging")
    assert out["small_expected"] == ("vanishing" if b < 0.6 else "diverging")


def test_limit_exponent_on_bound_rejected():
    with pytest.raises(ValueError):
        check_limits(WeightDistribution.indicator(0.2, 0.6), 0.6)
