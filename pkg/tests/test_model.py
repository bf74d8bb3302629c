import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from latentvar.errors import HistoryTooShort, OutOfImage
from latentvar.model import (
    GAMMA_MIN,
    ModelA,
    ModelB,
    SensorMapA,
    SensorMapB,
    VarCoefficients,
    eval_f,
    eval_f_prime,
    eval_v,
    eval_v_prime,
    invert_f,
    invert_v,
    lipschitz_of_r,
    predict_latent,
    predict_measurement_a,
    predict_series_a,
    predict_series_b,
    sigmoid,
)
from latentvar.training import init_identity_a

from conftest import random_map_a, random_map_b


def one_unit(alpha=1.0, w=1.0, k=0.0, b=0.0):
    return SensorMapA([alpha], [w], [k], b, b, b + alpha)


def _sig(x):
    return 1.0 / (1.0 + math.exp(-x))


# ---------------------------------------------------------------- eval_f


def test_eval_f_single_unit_at_zero():
    assert eval_f(one_unit(), 0.0) == pytest.approx(0.5, abs=1e-15)


def test_eval_f_flat_unit_is_constant():
    f = one_unit(w=0.0)
    assert np.all(eval_f(f, np.linspace(-50, 50, 11)) == 0.5)


def test_eval_f_two_units_formula():
    f = SensorMapA([1.0, 2.0], [1.0, 3.0], [0.0, 1.0], -1.0, -1.0, 2.0)
    expected = -1.0 + _sig(0.7) + 2.0 * _sig(3.0 * 0.7 - 1.0)
    assert eval_f(f, 0.7) == pytest.approx(expected, rel=1e-14)
    assert eval_f(f, 0.7) == pytest.approx(1.1687079833584015, rel=1e-14)


def test_sigmoid_extremes_are_finite():
    s = sigmoid(np.array([-800.0, 0.0, 800.0]))
    assert np.all(np.isfinite(s))
    assert s[0] == 0.0 and s[1] == 0.5 and s[2] == 1.0


# ---------------------------------------------------------------- eval_f_prime


def test_eval_f_prime_single_unit():
    assert eval_f_prime(one_unit(), 0.0) == pytest.approx(0.25, abs=1e-15)


def test_eval_f_prime_zero_slopes(rng):
    f = random_map_a(rng)
    flat = SensorMapA(f.alpha, np.zeros(f.units), f.k, f.b, f.z_lo, f.z_hi)
    assert np.all(eval_f_prime(flat, rng.normal(size=20)) == 0.0)


def test_eval_f_prime_matches_finite_difference():
    rng = np.random.default_rng(3)
    for _ in range(20):
        f = random_map_a(rng, m=6)
        h = 1e-5
        fd = (eval_f(f, 0.3 + h) - eval_f(f, 0.3 - h)) / (2 * h)
        assert eval_f_prime(f, 0.3) == pytest.approx(fd, rel=1e-6)


# ---------------------------------------------------------------- invert_f


def test_invert_identity_init_at_zero():
    f = init_identity_a(-1.0, 1.0, 10)
    assert abs(invert_f(f, 0.0)) <= 1e-6


def test_invert_single_unit_forward_oracle():
    f = one_unit()
    z = _sig(2.0)
    tol = 1e-10
    y = invert_f(f, z, tol)
    assert abs(eval_f(f, y) - z) <= tol
    # |y - 2| <= tol / f'(2)
    assert abs(y - 2.0) <= 1.01 * tol / (_sig(2.0) * (1 - _sig(2.0)))


@pytest.mark.parametrize("z", [1.0, -0.1, 1.5, 0.0])
def test_invert_out_of_image(z):
    with pytest.raises(OutOfImage):
        invert_f(one_unit(), z)


def test_invert_far_tail_brackets():
    f = one_unit()
    z = _sig(12.0)
    y = invert_f(f, z, 1e-12)
    assert abs(eval_f(f, y) - z) <= 1e-12
    assert y > 8.0


# ---------------------------------------------------------------- v map


def test_eval_v_linear_only():
    v = SensorMapB(np.zeros(3), np.ones(3), np.zeros(3), 0.0, 1.0)
    z = np.linspace(-3, 3, 13)
    np.testing.assert_allclose(eval_v(v, z), z, atol=1e-15)


def test_eval_v_prime_floor(rng):
    for _ in range(10):
        v = random_map_b(rng)
        z = rng.normal(scale=4, size=1000)
        assert np.all(eval_v_prime(v, z) >= v.gamma)


def test_eval_v_prime_finite_difference(rng):
    for _ in range(20):
        v = random_map_b(rng, m=5)
        h = 1e-5
        fd = (eval_v(v, -0.4 + h) - eval_v(v, -0.4 - h)) / (2 * h)
        assert eval_v_prime(v, -0.4) == pytest.approx(fd, rel=1e-6)


def test_invert_v_affine():
    v = SensorMapB(np.zeros(2), np.ones(2), np.zeros(2), 1.0, 2.0)
    assert invert_v(v, 5.0) == pytest.approx(2.0, abs=1e-10)


def test_invert_v_round_trip(rng):
    for _ in range(10):
        v = random_map_b(rng)
        z = rng.normal(scale=2, size=50)
        np.testing.assert_allclose(invert_v(v, eval_v(v, z)), z, atol=1e-8)


def _grid_refine_inverse(v, y):
    grid = np.linspace(-20, 20, 400001)
    vals = eval_v(v, grid)
    i = np.searchsorted(vals, y)
    lo, hi = grid[i - 1], grid[i]
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if eval_v(v, mid) < y:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def test_invert_v_one_sigmoid_grid_oracle():
    v = SensorMapB([3.0], [4.0], [1.0], -0.5, 0.2)
    for y in (-1.3, 0.0, 0.7, 2.9):
        assert invert_v(v, y) == pytest.approx(_grid_refine_inverse(v, y), abs=1e-6)


# ---------------------------------------------------------------- predictions


def test_predict_latent_examples():
    var = VarCoefficients(0.5 * np.eye(2)[:, :, None])
    np.testing.assert_array_equal(predict_latent(var, [np.array([2.0, -4.0])]), [1.0, -2.0])
    np.testing.assert_array_equal(predict_latent(VarCoefficients.zeros(3, 2), [np.ones(3)] * 2),
                                  np.zeros(3))


def test_predict_latent_triple_loop(rng):
    A = rng.normal(size=(3, 3, 2))
    hist = [rng.normal(size=3) for _ in range(2)]
    out = predict_latent(VarCoefficients(A), hist)
    ref = np.zeros(3)
    for i in range(3):
        for j in range(3):
            for p in range(2):
                ref[i] += A[i, j, p] * hist[p][j]
    np.testing.assert_allclose(out, ref, rtol=1e-14, atol=1e-15)


def test_predict_latent_short_history():
    with pytest.raises(HistoryTooShort):
        predict_latent(VarCoefficients.zeros(2, 3), [np.zeros(2)] * 2)


def test_predict_measurement_a_zero_var(rng):
    maps = [init_identity_a(-1.0, 2.0), init_identity_a(0.0, 5.0)]
    model = ModelA(VarCoefficients.zeros(2, 1), maps)
    out = predict_measurement_a(model, [np.array([0.3, 4.0])])
    np.testing.assert_allclose(out, [eval_f(f, 0.0) for f in maps], atol=1e-14)


def test_predict_measurement_a_identity_half():
    # the 10-unit canonical fit ripples by ~2e-3 around the identity, so the
    # composition f(0.5 g(z)) tracks 0.5 z to ~1.7e-3 in the core of the range
    f = init_identity_a(-1.0, 1.0, 10)
    model = ModelA(VarCoefficients(0.5 * np.eye(1)[:, :, None]), [f])
    for z in np.linspace(-0.8, 0.8, 33):
        out = predict_measurement_a(model, [np.array([z])])
        assert abs(out[0] - 0.5 * z) <= 2e-3


def test_predict_measurement_a_boundary_clamped():
    f = init_identity_a(-1.0, 1.0)
    model = ModelA(VarCoefficients(0.5 * np.eye(1)[:, :, None]), [f])
    for z in (-1.0, 1.0, 3.0):
        out = predict_measurement_a(model, [np.array([z])])
        assert np.isfinite(out[0]) and -1.0 < out[0] < 1.0


def test_series_prediction_matches_pointwise(rng):
    maps = [random_map_a(rng) for _ in range(2)]
    A = 0.3 * rng.normal(size=(2, 2, 2))
    model = ModelA(VarCoefficients(A), maps)
    Z = rng.uniform(-0.9, 0.9, size=(2, 12))
    S = predict_series_a(model, Z)
    for t in range(2, 12):
        pt = predict_measurement_a(model, [Z[:, t - 1], Z[:, t - 2]])
        np.testing.assert_allclose(S[:, t - 2], pt, atol=1e-9)


# ---------------------------------------------------------------- lipschitz


def test_lipschitz_affine():
    grid = np.linspace(-3, 3, 7)
    assert lipschitz_of_r(SensorMapB(np.zeros(1), np.ones(1), np.zeros(1), 0.0, 2.0), grid) == 0.5
    assert lipschitz_of_r(SensorMapB(np.zeros(1), np.ones(1), np.zeros(1), 0.0, 1.0), grid) == 1.0


def test_lipschitz_dense_grid_oracle():
    v = SensorMapB([2.0], [3.0], [0.5], 0.0, 0.1)
    grid = np.linspace(-3, 3, 301)
    dense = np.linspace(-3, 3, 1_000_000)
    ref = 1.0 / np.min(eval_v_prime(v, dense))
    assert lipschitz_of_r(v, grid) == pytest.approx(ref, rel=1e-3)
    assert lipschitz_of_r(v, grid) <= 1.0 / GAMMA_MIN


def test_constructors_validate():
    with pytest.raises(ValueError):
        VarCoefficients(np.zeros((2, 3, 1)))
    with pytest.raises(ValueError):
        SensorMapA([1.0], [1.0, 2.0], [0.0], 0.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        ModelB(VarCoefficients.zeros(2, 1), [random_map_b(np.random.default_rng(0))])


# ---------------------------------------------------------------- properties

seeds = st.integers(0, 2**31 - 1)


@given(seeds, st.floats(-6, 6), st.floats(0, 3))
def test_f_monotone(seed, y1, dy):
    f = random_map_a(np.random.default_rng(seed), m=5)
    assert eval_f(f, y1) <= eval_f(f, y1 + dy)


@given(seeds, st.floats(-30, 30))
def test_f_range(seed, y):
    f = random_map_a(np.random.default_rng(seed), z_lo=-2.0, z_hi=3.0)
    # at full saturation the sum lands on the bound up to rounding
    slack = 1e-12 * (f.z_hi - f.z_lo)
    assert f.z_lo - slack <= eval_f(f, y) <= f.z_hi + slack


@given(seeds, st.floats(0.001, 0.999))
def test_f_round_trip(seed, u):
    f = random_map_a(np.random.default_rng(seed))
    z = f.z_lo + u * (f.z_hi - f.z_lo)
    tol = 1e-10
    assert abs(eval_f(f, invert_f(f, z, tol)) - z) <= tol


@given(seeds, st.floats(-10, 10))
def test_v_round_trip(seed, z):
    v = random_map_b(np.random.default_rng(seed))
    tol = 1e-10
    y = eval_v(v, z)
    assert abs(eval_v(v, invert_v(v, y, tol)) - y) <= tol


@given(seeds, st.floats(-20, 20))
def test_v_derivative_floor(seed, z):
    v = random_map_b(np.random.default_rng(seed), gamma=GAMMA_MIN)
    assert eval_v_prime(v, z) >= GAMMA_MIN


@given(seeds)
def test_error_bound_property(seed):
    rng = np.random.default_rng(seed)
    N, P, T = 3, 2, 60
    maps = [random_map_b(rng, gamma=rng.uniform(0.05, 1.0)) for _ in range(N)]
    model = ModelB(VarCoefficients(0.3 * rng.normal(size=(N, N, P))), maps)
    Z = rng.normal(size=(N, T))
    V, Yhat, Zhat = predict_series_b(model, Z)
    meas = np.sum(np.mean((Zhat - Z[:, P:]) ** 2, axis=1))
    lat = np.sum(np.mean((Yhat - V) ** 2, axis=1))
    L = max(lipschitz_of_r(v, np.concatenate([np.linspace(min(Z[i].min(), Zhat[i].min()),
                                                          max(Z[i].max(), Zhat[i].max()), 2001),
                                              Z[i], Zhat[i]]))
            for i, v in enumerate(maps))
    assert meas <= L ** 2 * lat * (1 + 1e-9)
