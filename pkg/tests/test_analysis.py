import math
import statistics

import numpy as np
import pytest

from sgdvar import analysis, estimator
from sgdvar.analysis import (
    chi_square_quantile,
    confidence_ball,
    frobenius_error,
    ks_normal,
    normalize_average,
    normalize_iterate,
    sphere_references,
)
from sgdvar.problems import RandomSource
from sgdvar.schedule import StepParams


def test_sphere_references_closed_forms():
    refs = sphere_references(3)
    assert np.allclose(refs.hessian, (2.0 / 3.0) * np.eye(3), rtol=1e-15)
    refs = sphere_references(10)
    assert np.allclose(refs.average_covariance, (10.0 / 81.0) * np.eye(10), rtol=1e-15)
    assert np.allclose(refs.iterate_covariance, np.eye(10) / 18.0, rtol=1e-15)
    assert np.allclose(refs.gradient_covariance, np.eye(10) / 10.0, rtol=1e-15)
    with pytest.raises(ValueError):
        sphere_references(2)


@pytest.mark.parametrize("d", [3, 4, 10, 25])
def test_sphere_references_sandwich_identity(d):
    refs = sphere_references(d)
    inv_h = np.linalg.inv(refs.hessian)
    sandwich = inv_h @ refs.gradient_covariance @ inv_h
    rel = np.linalg.norm(sandwich - refs.average_covariance)
    rel /= np.linalg.norm(refs.average_covariance)
    assert rel < 1e-14


def test_normalize_iterate_values():
    params = StepParams()
    truth = np.zeros(10)
    point = truth.copy()
    point[0] = 0.01
    out = normalize_iterate(point, truth, 1000, 10, params)
    # sqrt(18) * 10 * 0.01, frozen from extended-precision arithmetic
    assert out[0] == pytest.approx(0.4242640687119285, rel=1e-14)
    assert not out[1:].any()
    assert not normalize_iterate(truth, truth, 1000, 10, params).any()
    # n -> 8n doubles the factor
    big = normalize_iterate(point, truth, 8000, 10, params)
    assert big[0] == pytest.approx(2.0 * out[0], rel=1e-12)


def test_normalize_iterate_refuses_other_schedules():
    with pytest.raises(ValueError):
        normalize_iterate(np.zeros(3), np.zeros(3), 10, 3, StepParams(alpha=0.75))
    with pytest.raises(ValueError):
        normalize_iterate(np.zeros(3), np.zeros(3), 10, 3, StepParams(c_gamma=2.0))


def test_normalize_average_values():
    truth = np.zeros(10)
    point = truth.copy()
    point[1] = 0.05
    out = normalize_average(point, truth, 400, 10)
    # 20 * (9/sqrt(10)) * 0.05, frozen from extended-precision arithmetic
    assert out[1] == pytest.approx(2.8460498941515414, rel=1e-14)
    quadrupled = normalize_average(point, truth, 1600, 10)
    assert quadrupled[1] == pytest.approx(2.0 * out[1], rel=1e-12)


def test_normalize_average_is_linear():
    gen = np.random.default_rng(4)
    a = gen.normal(size=5)
    b = gen.normal(size=5)
    truth = np.zeros(5)
    left = normalize_average(2.0 * a + b, truth, 123, 5)
    right = 2.0 * normalize_average(a, truth, 123, 5) + normalize_average(b, truth, 123, 5)
    assert np.allclose(left, right, rtol=1e-12)


def test_ks_single_point():
    result = ks_normal([0.0])
    assert result.statistic == pytest.approx(0.5, rel=1e-15)
    assert result.sample_size == 1


def test_ks_perfect_scores():
    n = 100
    scores = [statistics.NormalDist().inv_cdf((i - 0.5) / n) for i in range(1, n + 1)]
    result = ks_normal(scores)
    assert result.statistic == pytest.approx(0.5 / n, rel=1e-9)
    assert result.p_value > 0.999


def test_ks_statistic_bounds_and_shift_monotonicity():
    gen = np.random.default_rng(15)
    samples = gen.normal(size=200)
    base = ks_normal(samples)
    shifted = ks_normal(samples + 10.0)
    assert 0.0 <= base.statistic <= 1.0
    assert shifted.statistic > base.statistic
    assert shifted.statistic > 0.99
    assert shifted.p_value < 1e-10


def test_ks_errors():
    with pytest.raises(ValueError):
        ks_normal([])
    with pytest.raises(ValueError):
        ks_normal([np.nan])


def test_ks_p_value_calibrated_under_the_null():
    fails = 0
    for seed in range(100):
        draws = RandomSource(seed).normals(2000)
        if ks_normal(draws).p_value < 0.05:
            fails += 1
    assert fails <= 10


def test_kolmogorov_p_matches_reference_points():
    # frozen from an independent evaluation of the Kolmogorov distribution
    assert analysis._kolmogorov_p(1.0) == pytest.approx(0.26999967167735456, abs=1e-10)
    assert analysis._kolmogorov_p(0.5) == pytest.approx(0.9639452436648751, abs=1e-10)
    assert analysis._kolmogorov_p(2.0) == pytest.approx(0.0006709252557796953, abs=1e-12)
    assert analysis._kolmogorov_p(0.05) == 1.0


def test_frobenius_error_values():
    assert frobenius_error(np.eye(3), np.eye(3)) == 0.0
    assert frobenius_error(2 * np.eye(3), np.eye(3)) == pytest.approx(math.sqrt(3.0))
    est = np.array([[1.0, 2.0], [2.0, 1.0]])
    assert frobenius_error(est, np.zeros((2, 2))) == pytest.approx(math.sqrt(10.0))
    with pytest.raises(ValueError):
        frobenius_error(np.eye(2), np.eye(3))


def test_chi_square_quantile_against_table():
    # frozen from an independent high-accuracy quantile evaluation
    table = [
        (1, 0.95, 3.841458820694124),
        (2, 0.99, 9.21034037197618),
        (5, 0.95, 11.070497693516351),
        (10, 0.90, 15.987179172105265),
        (10, 0.99, 23.209251158954356),
        (5, 0.05, 1.1454762260617692),
        (1, 0.50, 0.454936423119572),
        (50, 0.975, 71.42019518750642),
    ]
    for dof, level, expected in table:
        assert chi_square_quantile(level, dof) == pytest.approx(expected, abs=1e-6)
    with pytest.raises(ValueError):
        chi_square_quantile(1.0, 3)
    with pytest.raises(ValueError):
        chi_square_quantile(0.95, 0)


def test_chi_square_quantile_inverts_the_cdf():
    for dof in (1, 4, 9, 30):
        for level in (0.01, 0.3, 0.5, 0.9, 0.999):
            x = chi_square_quantile(level, dof)
            assert analysis._reg_lower_gamma(dof / 2.0, x / 2.0) == pytest.approx(
                level, abs=1e-10)


def _state_with(sigma, average, n):
    state = estimator.init(np.zeros(len(average)), StepParams())
    state.covariance = np.array(sigma, dtype=float)
    state.average = np.array(average, dtype=float)
    state.n = n
    return state


def test_confidence_ball_unit_quadratic_form():
    n = 400
    state = _state_with(np.eye(3), [1.0, 2.0, 3.0], n)
    ball = confidence_ball(state, level=0.95, ridge=0.0)
    point = state.average + np.array([1.0, 0.0, 0.0]) / math.sqrt(n)
    assert ball.statistic(point) == pytest.approx(1.0, rel=1e-12)
    assert ball.test(state.average)
    assert ball.statistic(state.average) == 0.0
    assert ball.mahalanobis_radius == pytest.approx(
        math.sqrt(chi_square_quantile(0.95, 3) / n))


def test_confidence_ball_level_one_dim_quantile():
    state = _state_with([[1.0]], [0.0], 100)
    ball = confidence_ball(state, level=0.95, ridge=0.0)
    assert ball.quantile == pytest.approx(3.841459, abs=1e-6)


def test_confidence_ball_translation_invariance():
    gen = np.random.default_rng(8)
    sigma = np.eye(2) + 0.3 * np.ones((2, 2))
    state = _state_with(sigma, [0.5, -0.5], 250)
    ball = confidence_ball(state, level=0.9, ridge=0.0)
    shift = gen.normal(size=2)
    shifted_state = _state_with(sigma, state.average + shift, 250)
    shifted_ball = confidence_ball(shifted_state, level=0.9, ridge=0.0)
    for _ in range(20):
        point = gen.normal(size=2)
        assert ball.test(point) == shifted_ball.test(point + shift)


def test_confidence_ball_spherical_variant_is_conservative():
    sigma = np.diag([2.0, 0.5])
    state = _state_with(sigma, [0.0, 0.0], 100)
    ellipsoid = confidence_ball(state, level=0.95, ridge=0.0)
    sphere = confidence_ball(state, level=0.95, ridge=0.0, spherical=True)
    assert sphere.spherical_radius == pytest.approx(
        math.sqrt(ellipsoid.quantile * 2.0 / 100.0))
    gen = np.random.default_rng(17)
    for _ in range(100):
        point = 0.3 * gen.normal(size=2)
        if ellipsoid.test(point):
            assert sphere.test(point)


def test_confidence_ball_zero_sigma_requires_ridge():
    state = estimator.init(np.zeros(2), StepParams())
    with pytest.raises(ValueError):
        confidence_ball(state, ridge=0.0)
    ball = confidence_ball(state, ridge=1e-6)
    assert ball.test(np.zeros(2))
