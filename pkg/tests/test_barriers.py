import configparser
import math

import numpy as np
import pytest

from riemsmp.barriers import (BarrierSpec, annulus_samples, barrier_jet, barrier_value,
                              certify_strict_supersolution, closed_form_lb_alpha, hopf_lower_bound,
                              touching_point)
from riemsmp.geometry import GeometryError, ManifoldModel, distance, exp_map, radial_frame, random_point
from riemsmp.operators import kernel_from_id, laplace_beltrami, zeroth_order_wrap
from riemsmp.reports import FAIL, PASS

from conftest import KAPPAS, fd_jet

R0 = 0.5
CERT_KERNELS = ("laplace-beltrami", "pucci+", "pucci-", "p-laplacian:3", "inf-laplacian",
                "game-p-laplacian:3")


def test_barrier_jet_fd(model, rng):
    y0 = model.origin()
    spec = BarrierSpec(y0, R0, 7.0)
    for _ in range(10):
        x = random_point(model, rng, center=y0, max_dist=0.45)
        if distance(model, y0, x) < 0.05:
            continue
        fr = radial_frame(model, x, None)
        jet = barrier_jet(spec, model, x, fr)
        v, g, H = fd_jet(model, lambda p: barrier_value(spec, model, p), x, fr)
        assert jet.s == pytest.approx(v, abs=1e-12)
        assert np.allclose(jet.q, g, atol=1e-7)
        assert np.allclose(jet.Q, H, atol=1e-5)


def test_barrier_sign_and_zero_set(model):
    y0 = model.origin()
    spec = BarrierSpec(y0, R0, 3.0)
    assert barrier_value(spec, model, touching_point(model, y0, R0)) == pytest.approx(0, abs=1e-14)
    inner = exp_map(model, y0, 0.3 * radial_frame(model, y0).vectors[0])
    assert barrier_value(spec, model, inner) < 0


def test_barrier_validation_and_config():
    with pytest.raises(ValueError):
        BarrierSpec(np.zeros(2), -1.0, 1.0)
    with pytest.raises(ValueError):
        BarrierSpec(np.zeros(2), 1.0, 0.0)
    m = ManifoldModel(2, 1.0)
    with pytest.raises(GeometryError):
        BarrierSpec(m.origin(), 2.0, 1.0).validate(m)
    spec = BarrierSpec(m.origin(), 0.5, 12.25)
    cp = configparser.ConfigParser()
    cp["barrier"] = spec.to_config()
    back = BarrierSpec.from_config(cp["barrier"])
    assert np.array_equal(back.y0, spec.y0) and back.r0 == spec.r0 and back.alpha == spec.alpha


def test_annulus_samples_inside_ball(model):
    y0 = model.origin()
    pts = annulus_samples(model, y0, R0)
    x0 = pts[0]
    assert distance(model, y0, x0) == pytest.approx(R0)
    assert all(distance(model, y0, p) < R0 for p in pts[1:])


@pytest.mark.parametrize("kappa", KAPPAS)
@pytest.mark.parametrize("kid", CERT_KERNELS)
def test_certification(kid, kappa):
    m = ManifoldModel(2, kappa)
    rep = certify_strict_supersolution(kernel_from_id(kid), m, m.origin(), R0)
    assert rep.verdict == PASS
    assert math.isfinite(rep.alpha_threshold) and rep.min_margin > 0
    assert all(v > 0 for v in rep.details["eps_margins"].values())


def test_lb_flat_matches_closed_form():
    m = ManifoldModel(2, 0.0)
    y0 = m.origin()
    pts = annulus_samples(m, y0, R0)
    rep = certify_strict_supersolution(laplace_beltrami(), m, y0, R0, points=pts)
    closed = closed_form_lb_alpha(m, y0, pts)
    assert abs(rep.alpha_threshold - closed) <= 0.1 * closed
    assert rep.alpha_threshold == pytest.approx(closed, rel=1e-8)


def test_value_only_kernel_not_certified():
    # F = s and h <= 0 on the ball: no weight helps
    m = ManifoldModel(2, 0.0)
    k = zeroth_order_wrap(laplace_beltrami(), 0.0, 1.0, 1.0)
    rep = certify_strict_supersolution(k, m, m.origin(), R0)
    assert rep.verdict == FAIL and rep.witnesses


def test_certify_rejects_large_radius():
    m = ManifoldModel(2, 1.0)
    with pytest.raises(GeometryError):
        certify_strict_supersolution(laplace_beltrami(), m, m.origin(), 1.6)


def test_hopf_lower_bound_flat():
    m = ManifoldModel(2, 0.0)
    spec = BarrierSpec(np.zeros(2), R0, 10.0)
    x0 = np.array([R0, 0.0])
    assert hopf_lower_bound(m, spec, x0, 0.5) == pytest.approx(0.5 * spec.c * R0)
    oblique = np.array([1.0, 1.0]) / math.sqrt(2)
    assert hopf_lower_bound(m, spec, x0, 1.0, direction=oblique) == pytest.approx(spec.c * R0 / math.sqrt(2))
    with pytest.raises(GeometryError):
        hopf_lower_bound(m, spec, x0, 1.0, direction=np.array([0.0, 1.0]))
    with pytest.raises(GeometryError):
        hopf_lower_bound(m, spec, np.array([0.3, 0.0]), 1.0)
    with pytest.raises(ValueError):
        hopf_lower_bound(m, spec, x0, 0.0)


@pytest.mark.parametrize("kappa", KAPPAS)
@pytest.mark.parametrize("kid", ["laplace-beltrami", "pucci+", "pucci-", "p-laplacian:3"])
def test_normalized_margin_nondecreasing(kid, kappa):
    from riemsmp.barriers import normalized_margin

    m = ManifoldModel(2, kappa)
    k = kernel_from_id(kid)
    pts = annulus_samples(m, m.origin(), R0)
    rep = certify_strict_supersolution(k, m, m.origin(), R0, points=pts)
    alphas = rep.details["alpha_certified"] * 2.0 ** np.arange(6)
    vals = normalized_margin(k, m, m.origin(), R0, alphas, pts, h=k.homogeneity)
    assert np.all(vals > 0) and np.all(np.diff(vals) >= -1e-12 * np.abs(vals[1:]))
