import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from riemsmp.jets import Jet2
from riemsmp.operators import (CATALOG_IDS, SingularJetError, evaluate, exact_rank1_identities,
                               game_p_laplacian, hessian_drift, inf_laplacian, inf_laplacian_h,
                               kernel_from_id, laplace_beltrami, mean_curvature, monge_ampere,
                               monge_ampere_rank1_sup, p_laplacian, pucci_minus, pucci_minus_value,
                               pucci_plus, pucci_plus_value, pucci_rank1_inequality,
                               pucci_sandwich_check, reflect, subadditivity_check, zeroth_order_wrap)

from conftest import random_rotation, random_sym

N_SAMPLES = 10_000


def samples(rng, n, count, vscale=1.0):
    s = rng.uniform(-1, 1, count)
    v = vscale * rng.standard_normal((count, n))
    A = random_sym(rng, n, count=count)
    return s, v, A


def eigh_pucci(A, lam, Lam):
    mu = np.linalg.eigvalsh(A)
    plus = -lam * np.sum(np.clip(mu, 0, None), -1) - Lam * np.sum(np.clip(mu, None, 0), -1)
    minus = -Lam * np.sum(np.clip(mu, 0, None), -1) - lam * np.sum(np.clip(mu, None, 0), -1)
    return plus, minus


def test_pucci_closed_form_vs_eigh(rng):
    A = random_sym(rng, 3, count=2000)
    plus, minus = eigh_pucci(A, 0.5, 3.0)
    assert np.allclose(pucci_plus_value(A, 0.5, 3.0), plus, atol=1e-11)
    assert np.allclose(pucci_minus_value(A, 0.5, 3.0), minus, atol=1e-11)


def test_pucci_extremal_over_random_B(rng):
    lam, Lam = 1.0, 2.0
    A = random_sym(rng, 3, count=200)
    lo, hi = pucci_minus_value(A, lam, Lam), pucci_plus_value(A, lam, Lam)
    for _ in range(50):
        R = random_rotation(rng, 3)
        B = R @ np.diag(rng.uniform(lam, Lam, 3)) @ R.T
        val = -np.einsum("ij,kji->k", B, A)
        assert np.all(val <= hi + 1e-12) and np.all(val >= lo - 1e-12)


def test_pucci_examples():
    assert pucci_plus_value(np.diag([1.0, -1.0]), 1, 2) == pytest.approx(1.0)
    assert pucci_minus_value(np.diag([1.0, -1.0]), 1, 2) == pytest.approx(-1.0)
    assert pucci_plus(1, 1)(0, np.zeros(2), np.diag([2.0, 3.0])) == pytest.approx(-5.0)


@pytest.mark.parametrize("kernel", [p_laplacian(3.0), p_laplacian(1.5), p_laplacian(4.0),
                                    inf_laplacian(), mean_curvature(), game_p_laplacian(3.0),
                                    inf_laplacian_h(2.0)], ids=lambda k: k.id)
def test_exact_rank1_identities(kernel, rng):
    s, v, A = samples(rng, 3, N_SAMPLES)
    alpha = rng.uniform(0, 10, N_SAMPLES)
    lhs, rhs = exact_rank1_identities(kernel, (s, v, A), alpha)
    scale = np.maximum(1.0, np.maximum(np.abs(lhs), np.abs(rhs)))
    assert np.max(np.abs(lhs - rhs) / scale) < 1e-10


def test_rank1_gain_closed_forms():
    v = np.array([3.0, 4.0])
    assert p_laplacian(3).rank1_gain(v, 2.0) == pytest.approx(2 * 2 * 5 ** 3)
    assert inf_laplacian().rank1_gain(v, 2.0) == pytest.approx(2 * 5 ** 4)
    assert mean_curvature().rank1_gain(v, 1.0) == pytest.approx(25 * 26 ** -1.5)


def test_pucci_rank1_inequality(rng):
    _, v, A = samples(rng, 3, N_SAMPLES)
    alpha = rng.uniform(0, 10, N_SAMPLES)
    lhs, rhs = pucci_rank1_inequality(0.7, 2.5, A, v, alpha)
    assert np.min(lhs - rhs) >= -1e-9


UE_IDS = [i for i in CATALOG_IDS if kernel_from_id(i).ellipticity is not None]


@pytest.mark.parametrize("kid", UE_IDS)
def test_sandwich(kid):
    assert pucci_sandwich_check(kernel_from_id(kid), n=3).passed


def test_uniformly_elliptic_catalog_nonempty():
    assert {"laplace-beltrami", "pucci+", "pucci-", "pucci-orig+"} <= set(UE_IDS)


def test_subadditivity_directions():
    assert subadditivity_check(pucci_minus()).passed
    assert subadditivity_check(laplace_beltrami()).passed
    assert not subadditivity_check(pucci_plus()).passed


INVARIANT_IDS = [i for i in CATALOG_IDS if kernel_from_id(i).universal and kernel_from_id(i).invariant]


@pytest.mark.parametrize("kid", INVARIANT_IDS)
def test_rotation_invariance(kid, rng):
    k = kernel_from_id(kid)
    s, v, A = samples(rng, 2, 1000)
    base = k(s, v, A)
    for _ in range(100):
        a = random_rotation(rng, 2)
        rot = k(s, v @ a.T, a @ A @ a.T)
        ok = np.isfinite(base)
        assert np.all(np.abs(rot[ok] - base[ok]) <= 1e-11 * np.maximum(1, np.abs(base[ok])))


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(CATALOG_IDS), st.integers(0, 2 ** 31 - 1))
def test_proper_in_hessian(kid, seed):
    k = kernel_from_id(kid)
    rng = np.random.default_rng(seed)
    s, v, A = samples(rng, 2, 50)
    P = random_sym(rng, 2, count=50)
    P = P @ P  # positive semidefinite
    before, after = k(s, v, A), k(s, v, A + P)
    ok = np.isfinite(before) & np.isfinite(after)
    if kid == "monge-ampere":
        return  # not degenerate elliptic; covered by the condition matrix
    assert np.all(after[ok] <= before[ok] + 1e-9 * np.maximum(1, np.abs(before[ok])))


def test_reflection():
    rng = np.random.default_rng(1)
    s, v, A = samples(rng, 2, 200)
    assert np.allclose(reflect(pucci_plus()).func(s, v, A), pucci_minus()(s, v, A))
    k = p_laplacian(3)
    assert np.allclose(reflect(reflect(k))(s, v, A), k(s, v, A))
    assert reflect(pucci_plus()).frame_rule == "inf"


def test_singular_jets_refused():
    with pytest.raises(SingularJetError):
        evaluate(game_p_laplacian(3), None, Jet2(0, [0, 0], np.eye(2)))
    assert evaluate(p_laplacian(3), None, Jet2(0, [0, 0], np.eye(2))) == 0.0


def test_kernel_ids_roundtrip():
    for kid in CATALOG_IDS:
        k = kernel_from_id(kid)
        if ":" in kid and kid != "grad-power-pucci:2,1,2,+":
            assert k.id == kid
    for bad in ("nope", "p-laplacian", "p-laplacian:0.5", "pucci+:2,1", "grad-power-pucci:0.5,1,2,+"):
        with pytest.raises(ValueError):
            kernel_from_id(bad)


def test_monge_ampere_rank1_unbounded():
    A = np.array([[1.0, 0.0], [0.0, -1.0]])
    v = np.array([1.0, 0.0])
    assert monge_ampere_rank1_sup(A, v, alpha_max=1e6) > 1e5


def test_wrappers():
    lb = laplace_beltrami()
    z = zeroth_order_wrap(lb, 2.0, 1.0, 1.0)
    assert z(0.5, np.zeros(2), np.eye(2)) == pytest.approx(-4 + 0.5)
    d = hessian_drift(lb, 2, [1.0, 0.0])
    assert d(0, np.array([2.0, 0.0]), np.zeros((2, 2))) == pytest.approx(2.0)
    assert d.lipschitz == pytest.approx(lb.lipschitz + 1.0)


def test_p2_collapse():
    rng = np.random.default_rng(9)
    s, v, A = samples(rng, 3, 100)
    for k in (p_laplacian(2), game_p_laplacian(2)):
        assert np.allclose(k(s, v, A), laplace_beltrami()(s, v, A))
        assert k.gradient_free and k.frame_rule == "any"
