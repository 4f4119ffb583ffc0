import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import solve_ivp

from riemsmp.geometry import (GeometryError, ManifoldModel, convexity_radius, ct_kappa, distance,
                              dsq_hessian, dsq_value_grad, exp_map, injectivity_radius, log_map,
                              log_map_batch, parallel_transport, radial_frame, random_point,
                              random_tangent)

from conftest import KAPPAS


def geodesic_ode(m, x, v, t=1.0):
    """Integrate x'' = -kappa <x', x'> x in the ambient space (Euclidean for kappa=0)."""
    n = x.size

    def rhs(_, y):
        p, w = y[:n], y[n:]
        return np.concatenate([w, -m.kappa * float(m.inner(w, w)) * p])

    sol = solve_ivp(rhs, (0, t), np.concatenate([x, v]), rtol=1e-12, atol=1e-12, method="DOP853")
    return sol.y[:n, -1]


def fd_hessian(m, x0, x, frame, h=1e-4):
    """Second derivatives of d^2/2 along geodesics, polarized."""
    f = lambda p: 0.5 * distance(m, x0, p) ** 2
    e = frame.vectors
    n = m.n
    H = np.empty((n, n))
    second = lambda v: (f(exp_map(m, x, h * v)) - 2 * f(x) + f(exp_map(m, x, -h * v))) / h ** 2
    for i in range(n):
        for j in range(i, n):
            if i == j:
                H[i, i] = second(e[i])
            else:
                s = second((e[i] + e[j]) / math.sqrt(2))
                d = second((e[i] - e[j]) / math.sqrt(2))
                H[i, j] = H[j, i] = 0.5 * (s - d)
    return H


def test_model_validation():
    with pytest.raises(GeometryError):
        ManifoldModel(0, 1.0)
    m = ManifoldModel(2, 1.0)
    with pytest.raises(GeometryError):
        m.check_point(np.array([2.0, 0, 0]))
    with pytest.raises(GeometryError):
        ManifoldModel(2, -1.0).check_point(np.array([-1.0, 0, 0]))


def test_radii():
    assert injectivity_radius(ManifoldModel(2, 1.0)) == pytest.approx(math.pi)
    assert convexity_radius(ManifoldModel(2, 4.0)) == pytest.approx(math.pi / 4)
    assert convexity_radius(ManifoldModel(2, -1.0)) == math.inf


def test_exp_matches_geodesic_ode(model, rng):
    for _ in range(20):
        x = random_point(model, rng, max_dist=1.0)
        v = random_tangent(model, x, rng, length=rng.uniform(0.1, 1.2))
        assert np.allclose(exp_map(model, x, v), geodesic_ode(model, x, v), atol=1e-9)


def test_exp_log_roundtrip(model, rng):
    for _ in range(100):
        x = random_point(model, rng, max_dist=1.0)
        v = random_tangent(model, x, rng, length=rng.uniform(0.0, 1.4))
        assert np.allclose(log_map(model, x, exp_map(model, x, v)), v, atol=1e-10)
        y = random_point(model, rng, max_dist=1.0)
        assert np.allclose(exp_map(model, x, log_map(model, x, y)), y, atol=1e-10)


def test_log_map_batch_agrees(model, rng):
    x = random_point(model, rng)
    ys = np.array([random_point(model, rng) for _ in range(30)])
    w, d = log_map_batch(model, x, ys)
    for k, y in enumerate(ys):
        assert np.allclose(w[k], log_map(model, x, y), atol=1e-11)
        assert d[k] == pytest.approx(distance(model, x, y), abs=1e-11)


def test_distance_symmetry_triangle(model, rng):
    for _ in range(50):
        a, b, c = (random_point(model, rng, max_dist=0.7) for _ in range(3))
        assert distance(model, a, b) == pytest.approx(distance(model, b, a), abs=1e-12)
        assert distance(model, a, c) <= distance(model, a, b) + distance(model, b, c) + 1e-12


def test_sphere_quarter_circle():
    m = ManifoldModel(2, 1.0)
    assert distance(m, np.array([1.0, 0, 0]), np.array([0, 1.0, 0])) == pytest.approx(math.pi / 2)


def test_parallel_transport_isometry(model, rng):
    for _ in range(30):
        x, y = random_point(model, rng), random_point(model, rng)
        u, v = random_tangent(model, x, rng), random_tangent(model, x, rng)
        Pu, Pv = parallel_transport(model, x, y, u), parallel_transport(model, x, y, v)
        assert float(model.inner(Pu, Pv)) == pytest.approx(float(model.inner(u, v)), abs=1e-11)
        assert abs(float(model.inner(y, Pu))) < 1e-10 if model.kappa else True
        # the geodesic direction is transported onto itself
        w = log_map(model, x, y)
        assert np.allclose(parallel_transport(model, x, y, w), -log_map(model, y, x), atol=1e-10)


def test_dsq_gradient_fd(model, rng):
    for _ in range(30):
        x0, x = random_point(model, rng), random_point(model, rng)
        _, grad = dsq_value_grad(model, x0, x)
        v = random_tangent(model, x, rng, length=1.0)
        h = 1e-6
        f = lambda p: 0.5 * distance(model, x0, p) ** 2
        fd = (f(exp_map(model, x, h * v)) - f(exp_map(model, x, -h * v))) / (2 * h)
        assert float(model.inner(grad, v)) == pytest.approx(fd, abs=1e-7)


@pytest.mark.parametrize("kappa", KAPPAS)
def test_dsq_hessian_fd_oracle(kappa):
    m = ManifoldModel(2, kappa)
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(100):
        x0 = random_point(m, rng, max_dist=0.5)
        x = random_point(m, rng, center=x0, max_dist=1.2)
        if distance(m, x0, x) < 0.05:
            continue
        fr = radial_frame(m, x, random_tangent(m, x, rng))
        worst = max(worst, np.max(np.abs(dsq_hessian(m, x0, x, fr) - fd_hessian(m, x0, x, fr))))
    assert worst < 1e-5


def test_dsq_hessian_closed_form_sphere():
    m = ManifoldModel(2, 1.0)
    x0 = m.origin()
    x = exp_map(m, x0, np.array([0, math.pi / 4, 0]))
    w = np.linalg.eigvalsh(dsq_hessian(m, x0, x))
    assert np.allclose(w, sorted([1.0, (math.pi / 4) / math.tan(math.pi / 4)]), atol=1e-12)


def test_dsq_hessian_refuses_center(model):
    with pytest.raises(GeometryError):
        dsq_hessian(model, model.origin(), model.origin())


@pytest.mark.parametrize("kappa", KAPPAS)
def test_rauch_bound(kappa):
    m = ManifoldModel(3, kappa)
    rng = np.random.default_rng(3)
    for _ in range(100):
        x0 = random_point(m, rng, max_dist=0.5)
        x = random_point(m, rng, center=x0, max_dist=1.2)
        d = distance(m, x0, x)
        if d < 1e-3:
            continue
        w = np.linalg.eigvalsh(dsq_hessian(m, x0, x))
        if kappa >= 0:
            assert w[-1] <= 1 + 1e-10
        else:
            assert w[-1] > 1 and w[1] > 1  # tangential eigenvalues d coth d > 1
        assert w[0] == pytest.approx(ct_kappa(kappa, d) if kappa > 0 else min(1, ct_kappa(kappa, d)), abs=1e-10)


@settings(max_examples=50, deadline=None)
@given(st.sampled_from(KAPPAS), st.floats(1e-3, 1.4), st.integers(0, 2 ** 31 - 1))
def test_exp_preserves_constraint_and_length(kappa, length, seed):
    m = ManifoldModel(2, kappa)
    rng = np.random.default_rng(seed)
    x = random_point(m, rng)
    v = random_tangent(m, x, rng, length=length)
    y = exp_map(m, x, v)
    m.check_point(y)
    assert distance(m, x, y) == pytest.approx(length, rel=1e-10, abs=1e-12)
