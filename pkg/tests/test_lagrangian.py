import math

import cvxpy as cp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from lgflow import grid as gr
from lgflow import lagrangian as lg
from lgflow.errors import InvalidParam, NotDifferentiable

X0 = np.zeros(2)


def _weight(x):
    return 1.0 + 0.5 * np.sin(3 * x[..., 0]) ** 2


FAMILIES = {
    "tv": lg.total_variation(),
    "area": lg.area(),
    "weighted": lg.weighted_tv(_weight, 1.0, 1.5),
    "aniso": lg.anisotropic_tv([0.5, 2.0]),
    "reg_tv": lg.regularize(lg.total_variation(), 0.3),
    "reg_area": lg.regularize(lg.area(), 0.2),
    "reg_aniso": lg.regularize(lg.anisotropic_tv([0.5, 2.0]), 0.1),
}
SMOOTH = ["area", "reg_tv", "reg_area", "reg_aniso"]

vec2 = arrays(np.float64, 2, elements=st.floats(-50, 50))
point = arrays(np.float64, 2, elements=st.floats(-1, 1))


# ---------------------------------------------------------------- eval

def test_eval_tv_euclidean_norm():
    assert lg.evaluate(lg.total_variation(), X0, [3.0, 4.0]) == 5.0


def test_eval_regularized_at_zero_is_mu():
    assert lg.evaluate(lg.regularize(lg.total_variation(), 0.37), X0, [0.0, 0.0]) == pytest.approx(0.37, abs=1e-15)


def test_eval_area_at_zero():
    assert lg.evaluate(lg.area(), X0, [0.0, 0.0]) == 1.0


def test_eval_vectorized_shapes():
    xi = np.ones((4, 3, 2))
    assert lg.evaluate(lg.total_variation(), None, xi).shape == (4, 3)


# ---------------------------------------------------------------- recession

def test_recession_tv_unit():
    assert lg.recession(lg.total_variation(), X0, [0.0, 1.0]) == 1.0


@pytest.mark.parametrize("spec", [lg.area(), lg.regularize(lg.total_variation(), 0.5)])
def test_recession_matches_numerical_limit(spec):
    xi = np.array([3.0, 4.0]) if spec.kind is lg.Kind.AREA else np.array([1.0, 0.0])
    t = 1e-6
    limit = t * lg.evaluate(spec, X0, xi / t)
    assert lg.recession(spec, X0, xi) == pytest.approx(limit, rel=1e-10)
    assert lg.recession(spec, X0, xi) == pytest.approx(float(np.linalg.norm(xi)), rel=1e-14)


def test_recession_weighted_is_w_times_norm():
    x = np.array([0.3, 0.1])
    assert lg.recession(FAMILIES["weighted"], x, [3.0, 4.0]) == pytest.approx(5 * _weight(x), rel=1e-14)


@pytest.mark.parametrize("name", sorted(FAMILIES))
def test_recession_limit_monotone(name):
    spec = FAMILIES[name]
    rng = np.random.default_rng(1)
    for _ in range(10):
        x, xi = rng.uniform(-1, 1, 2), rng.normal(size=2) * 3
        errs = [abs(t * lg.evaluate(spec, x, xi / t) - lg.recession(spec, x, xi))
                for t in 10.0 ** -np.arange(7)]
        slack = 1e-14 * (1 + lg.evaluate(spec, x, xi))
        assert all(b <= a + slack for a, b in zip(errs, errs[1:]))
        assert errs[-1] <= 1e-5


@given(name=st.sampled_from(sorted(FAMILIES)), x=point, xi=vec2)
def test_recession_homogeneous_and_symmetric(name, x, xi):
    spec = FAMILIES[name]
    r = lg.recession(spec, x, xi)
    for s in (2.0, 10.0, 100.0):
        assert abs(lg.recession(spec, x, s * xi) - s * r) <= 1e-12 * s * max(1.0, r)
    assert lg.recession(spec, x, -xi) == r
    assert spec.lam * np.linalg.norm(xi) * (1 - 1e-14) <= r <= spec.big_lambda * np.linalg.norm(xi) * (1 + 1e-14)


@given(name=st.sampled_from(sorted(FAMILIES)), x=point,
       xi=arrays(np.float64, 2, elements=st.floats(-1e3, 1e3)))
def test_recession_gap_bounded(name, x, xi):
    spec = FAMILIES[name]
    d = lg.evaluate(spec, x, xi) - lg.recession(spec, x, xi)
    assert -1e-12 * (1 + np.linalg.norm(xi)) <= d <= spec.big_lambda + 1e-12


# ---------------------------------------------------------------- growth and convexity

@given(name=st.sampled_from(sorted(FAMILIES)), x=point, xi=vec2)
def test_linear_growth(name, x, xi):
    spec = FAMILIES[name]
    f = lg.evaluate(spec, x, xi)
    n = float(np.linalg.norm(xi))
    assert spec.lam * n <= f * (1 + 1e-14)
    assert f <= spec.big_lambda * (1 + n) * (1 + 1e-14)


@given(name=st.sampled_from(sorted(FAMILIES)), x=point, a=vec2, b=vec2)
def test_convex_midpoint(name, x, a, b):
    spec = FAMILIES[name]
    mid = lg.evaluate(spec, x, 0.5 * (a + b))
    assert mid <= 0.5 * (lg.evaluate(spec, x, a) + lg.evaluate(spec, x, b)) + 1e-12 * (1 + np.abs(a).max() + np.abs(b).max())


def test_weighted_bounds_checked_against_field():
    g = gr.GridSpec((4,), 0.25)
    w = gr.ScalarField(g, [1.0, 2.0, 1.5, 1.2])
    spec = lg.weighted_tv(w)
    assert (spec.lam, spec.big_lambda) == (1.0, 2.0)
    with pytest.raises(InvalidParam):
        lg.weighted_tv(w, lam=1.5)
    with pytest.raises(InvalidParam):
        lg.weighted_tv(_weight)


# ---------------------------------------------------------------- grad

def test_grad_tv():
    np.testing.assert_allclose(lg.grad(lg.total_variation(), X0, [3.0, 4.0]), [0.6, 0.8], rtol=1e-15)


def test_grad_tv_kink_raises():
    with pytest.raises(NotDifferentiable):
        lg.grad(lg.total_variation(), X0, [0.0, 0.0])


def test_grad_regularized_zero():
    np.testing.assert_array_equal(lg.grad(FAMILIES["reg_tv"], X0, [0.0, 0.0]), [0.0, 0.0])


def test_grad_regularized_formula(rng):
    mu = 0.3
    for _ in range(20):
        xi = rng.normal(size=2) * 2
        np.testing.assert_allclose(lg.grad(FAMILIES["reg_tv"], X0, xi),
                                   xi / math.sqrt(mu * mu + xi @ xi), rtol=1e-14)


def _central(spec, x, xi, h):
    out = np.zeros_like(xi)
    for i in range(xi.size):
        e = np.zeros_like(xi)
        e[i] = h
        out[i] = (lg.evaluate(spec, x, xi + e) - lg.evaluate(spec, x, xi - e)) / (2 * h)
    return out


@pytest.mark.parametrize("name", SMOOTH)
def test_grad_finite_differences(name, rng):
    spec = FAMILIES[name]
    for _ in range(30):
        x = rng.uniform(-1, 1, 2)
        xi = rng.normal(size=2)
        xi *= rng.uniform(0, 10) / np.linalg.norm(xi)
        np.testing.assert_allclose(lg.grad(spec, x, xi), _central(spec, x, xi, 1e-5), atol=1e-6)
        if name == "reg_tv":
            np.testing.assert_allclose(lg.grad(spec, x, xi), _central(spec, x, xi, 1e-6), atol=1e-8)


@given(name=st.sampled_from(SMOOTH), x=point, xi=vec2)
def test_grad_bounded_and_consistent(name, x, xi):
    spec = FAMILIES[name]
    z = lg.grad(spec, x, xi)
    assert np.linalg.norm(z) <= spec.big_lambda * (1 + 1e-12)
    assert lg.fenchel_gap(spec, x, xi, z) <= 1e-10 * (1 + np.linalg.norm(xi))


# ---------------------------------------------------------------- conjugate

def test_conjugate_tv_inside_and_outside():
    assert lg.conjugate(lg.total_variation(), X0, [0.7, 0.0]) == 0.0
    assert lg.conjugate(lg.total_variation(), X0, [0.0, 1.5]) == math.inf


def test_conjugate_weighted_ball():
    x = np.array([0.4, 0.0])
    w = _weight(x)
    assert lg.conjugate(FAMILIES["weighted"], x, [0.99 * w, 0.0]) == 0.0
    assert lg.conjugate(FAMILIES["weighted"], x, [1.01 * w, 0.0]) == math.inf


def test_conjugate_regularized_brute_force():
    spec = lg.regularize(lg.total_variation(), 1.0)
    # 1D: sup over a fine grid of xi up to radius 1e3
    xi = np.concatenate([np.linspace(-10, 10, 200001), np.linspace(-1e3, 1e3, 200001)])
    brute = np.max(-np.sqrt(1.0 + xi ** 2))
    assert lg.conjugate(spec, None, [0.0]) == pytest.approx(brute, abs=1e-4)
    # 2D
    s = np.linspace(-5, 5, 1001)
    X, Y = np.meshgrid(s, s)
    brute2 = np.max(-np.sqrt(1.0 + X ** 2 + Y ** 2))
    assert lg.conjugate(spec, X0, [0.0, 0.0]) == pytest.approx(-1.0, abs=1e-15)
    assert brute2 == pytest.approx(-1.0, abs=1e-4)


def _cvx_conjugate(m, a, z):
    xi = cp.Variable(len(z))
    obj = z @ xi - cp.norm(cp.hstack([cp.Constant(np.array([m])), cp.multiply(a, xi)]), 2)
    prob = cp.Problem(cp.Maximize(obj), [cp.norm(xi, "inf") <= 1e4])
    prob.solve(solver=cp.CLARABEL)
    return prob.value


@pytest.mark.parametrize("name", ["area", "reg_tv", "reg_aniso"])
def test_conjugate_against_convex_solver(name, rng):
    spec = FAMILIES[name]
    a = spec.axis_scale(X0, 2)
    for _ in range(4):
        z = rng.normal(size=2)
        z *= rng.uniform(0.05, 0.95) / np.linalg.norm(z / a)
        assert lg.conjugate(spec, X0, z) == pytest.approx(_cvx_conjugate(spec.m, a, z), abs=1e-6)


@given(name=st.sampled_from(sorted(FAMILIES)), x=point, xi=vec2,
       z=arrays(np.float64, 2, elements=st.floats(-3, 3)))
def test_fenchel_young(name, x, xi, z):
    spec = FAMILIES[name]
    gap = lg.fenchel_gap(spec, x, xi, z)
    if math.isfinite(lg.conjugate(spec, x, z)):
        assert gap >= -1e-12 * (1 + np.abs(xi).sum())
    else:
        assert gap == math.inf


# ---------------------------------------------------------------- fenchel gap

def test_fenchel_gap_examples():
    tv = lg.total_variation()
    assert lg.fenchel_gap(tv, X0, [3.0, 4.0], [0.6, 0.8]) == pytest.approx(0.0, abs=1e-15)
    assert lg.fenchel_gap(tv, X0, [1.0, 0.0], [0.0, 0.0]) == 1.0


def test_fenchel_gap_regularized_at_gradient(rng):
    spec = FAMILIES["reg_tv"]
    xi = rng.normal(size=(500, 2)) * 5
    assert np.max(np.abs(lg.fenchel_gap(spec, None, xi, lg.grad(spec, None, xi)))) <= 1e-10


# ---------------------------------------------------------------- regularize

def test_regularize_value_at_zero():
    assert lg.evaluate(lg.regularize(lg.total_variation(), 0.1), X0, [0, 0]) == pytest.approx(0.1, abs=1e-16)


@given(mu=st.floats(1e-3, 10), xi=vec2)
def test_regularize_dominates(mu, xi):
    f = lg.evaluate(lg.regularize(lg.total_variation(), mu), X0, xi)
    assert f >= max(mu, float(np.linalg.norm(xi))) * (1 - 1e-15)


def test_regularize_area_bounds_by_sampling(rng):
    mu = 0.5
    spec = lg.regularize(lg.area(), mu)
    xi = rng.normal(size=(20000, 2)) * np.logspace(-3, 3, 20000)[:, None]
    f = lg.evaluate(spec, None, xi)
    np.testing.assert_allclose(f, np.sqrt(mu ** 2 + 1 + np.sum(xi ** 2, axis=1)), rtol=1e-15)
    n = np.linalg.norm(xi, axis=1)
    lam_emp = np.min(f / n)
    big_emp = np.max(f / (1 + n))
    assert spec.lam <= lam_emp + 1e-12
    assert big_emp <= spec.big_lambda + 1e-12
    assert spec.big_lambda == pytest.approx(math.hypot(mu, 1.0))


@pytest.mark.parametrize("mu", [0.0, -1.0, math.inf, math.nan])
def test_regularize_rejects_bad_mu(mu):
    with pytest.raises(InvalidParam):
        lg.regularize(lg.total_variation(), mu)


def test_regularize_twice_rejected_and_with_mu():
    r = lg.regularize(lg.total_variation(), 0.1)
    with pytest.raises(InvalidParam):
        lg.regularize(r, 0.2)
    assert lg.with_mu(r, 0.2).mu == 0.2
    assert lg.with_mu(r, 0.0) is r


def test_sign0_zero():
    np.testing.assert_array_equal(lg.sign0(np.array([-2.0, 0.0, 3.0])), [-1.0, 0.0, 1.0])


def test_spec_from_dict_round_trip(tmp_path):
    g = gr.GridSpec((3,), 1 / 3)
    gr.write_field(tmp_path / "w.lgf", gr.ScalarField(g, [1.0, 2.0, 3.0]))
    for d in ({"kind": "tv"}, {"kind": "area", "mu": 0.1},
              {"kind": "anisotropic_tv", "axis_weights": [1.0, 2.0]},
              {"kind": "weighted_tv", "weights": "w.lgf"}):
        spec = lg.spec_from_dict(d, g, base_dir=str(tmp_path))
        out = spec.to_dict()
        for k, v in d.items():
            assert out[k] == v
    with pytest.raises(InvalidParam):
        lg.spec_from_dict({"kind": "nope"})
