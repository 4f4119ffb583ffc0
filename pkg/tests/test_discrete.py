import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from riemsmp.barriers import BarrierSpec, barrier_jet, barrier_value
from riemsmp.discrete import (ConvergenceError, Grid2D, PreconditionError, SchemeError, SchemeSpec,
                              check_discrete_comparison, check_monotone, consistency_errors,
                              counterexample_subsolution_check, discretize, grid_counterexample,
                              linearized_domination_check, observed_rates, outcome,
                              smp_mirror_test, smp_propagation_test, solve_dirichlet, spike_field,
                              stable_damping, stencil_value, strong_comparison_test, write_field_csv)
from riemsmp.geometry import ManifoldModel, exp_map, radial_frame
from riemsmp.jets import Jet2
from riemsmp.operators import (game_p_laplacian, inf_laplacian, kernel_from_id, laplace_beltrami,
                               mean_curvature, p_laplacian, pucci_minus, pucci_orig_plus,
                               pucci_plus)

FLAT = ManifoldModel(2, 0.0)


def flat_grid(size=21, spacing=None):
    return Grid2D(FLAT, spacing or 2.0 / (size - 1), size)


def saddle(grid):
    x, y = grid.chart.T
    return 0.5 * (x * x - 2 * y * y)


def test_grid_validation():
    with pytest.raises(ValueError):
        Grid2D(FLAT, 0.1, 5)
    with pytest.raises(ValueError):
        Grid2D(FLAT, -0.1, 11)
    with pytest.raises(ValueError):
        Grid2D(ManifoldModel(2, 1.0), 1.0, 11)
    g = flat_grid(11)
    assert g.count == 121 and g.interior.size == 25
    assert np.allclose(g.chart[g.center_index], 0)


def test_lb_exact_on_quadratics():
    g = flat_grid()
    x, y = g.chart.T
    r, _ = discretize(SchemeSpec(laplace_beltrami()), g, x * x + 3 * x * y - 0.5 * y * y)
    assert np.max(np.abs(r[g.interior] + 1.0)) < 1e-10


def test_saddle_is_pucci_minus_solution():
    g = flat_grid()
    r, _ = discretize(SchemeSpec(pucci_minus()), g, saddle(g))
    assert np.max(np.abs(r[g.interior])) < 1e-10


def test_affine_dirichlet_solve():
    g = flat_grid(21)
    x, y = g.chart.T
    exact = 1 + 2 * x - y
    data = exact.copy()
    data[g.interior] = 0
    sol, info = solve_dirichlet(SchemeSpec(laplace_beltrami()), g, data)
    assert info["converged"] and np.max(np.abs(sol.values - exact)) < 1e-6


def test_solver_guards():
    g = flat_grid(11)
    sch = SchemeSpec(laplace_beltrami())
    data = saddle(g)
    tau = stable_damping(sch, g, data)
    with pytest.raises(ValueError):
        solve_dirichlet(sch, g, data, damping=10 * tau)
    with pytest.raises(ConvergenceError) as err:
        solve_dirichlet(sch, g, np.where(g.boundary_mask, data, 5.0), max_sweeps=3)
    assert err.value.field is not None and not err.value.info["converged"]


def test_nonmonotone_scheme_refused():
    with pytest.raises(SchemeError):
        solve_dirichlet(SchemeSpec(inf_laplacian()), flat_grid(11), np.zeros(121))


@pytest.mark.parametrize("kernel", [laplace_beltrami(), pucci_plus(), pucci_minus(), pucci_orig_plus(0.25)],
                         ids=lambda k: k.id)
def test_monotone(kernel):
    assert check_monotone(SchemeSpec(kernel), flat_grid(21), count=2000).passed


def test_counterexample_scheme_monotone():
    g = flat_grid(21)
    assert check_monotone(SchemeSpec(grid_counterexample(g)), g, count=2000).passed


@pytest.mark.parametrize("kernel", [inf_laplacian(), game_p_laplacian(3)], ids=lambda k: k.id)
def test_aligned_schemes_not_monotone(kernel):
    sch = SchemeSpec(kernel, allow_nonmonotone=True)
    assert not sch.monotone
    assert not check_monotone(sch, flat_grid(21), count=2000).passed


def test_discrete_comparison_small_grid():
    assert check_discrete_comparison(SchemeSpec(laplace_beltrami()), flat_grid(11), pairs=5).passed


SPACINGS = (0.08, 0.04, 0.02, 0.01)


def _barrier_case(kappa):
    m = ManifoldModel(2, kappa)
    o = m.origin()
    y0 = exp_map(m, o, radial_frame(m, o).vector(np.array([0.5, 0.3])))
    return m, BarrierSpec(y0, 0.9, 3.0)


@pytest.mark.parametrize("kappa", (-1.0, 0.0, 1.0))
@pytest.mark.parametrize("kernel", [laplace_beltrami(), pucci_plus(), pucci_minus(), p_laplacian(3),
                                    game_p_laplacian(3), inf_laplacian(), mean_curvature()],
                         ids=lambda k: k.id)
def test_consistency_second_order(kernel, kappa):
    m, spec = _barrier_case(kappa)
    sch = SchemeSpec(kernel, allow_nonmonotone=True)
    errs, resolution = consistency_errors(sch, m, lambda p: barrier_value(spec, m, p),
                                          lambda x, f: barrier_jet(spec, m, x, f), SPACINGS)
    rates = observed_rates(errs, SPACINGS)
    # coarse spacings are pre-asymptotic for the extremal kernels
    assert errs[-1] < errs[-2] < errs[-3]
    assert rates[-1] > 1.8
    if kernel.frame_rule == "any":
        assert resolution < 1e-12


def test_stencil_value_exact_for_trace():
    jet = Jet2(0.0, [1.0, 2.0], [[1.0, 0.4], [0.4, -2.0]])
    assert stencil_value(SchemeSpec(laplace_beltrami()), jet) == pytest.approx(1.0)


def test_propagation_constant_and_spike():
    g = flat_grid(21)
    res = smp_propagation_test(SchemeSpec(pucci_plus()), g, np.full(g.count, 0.5))
    assert res.constant and res.reached == res.total
    spike = spike_field(g)
    ce = SchemeSpec(grid_counterexample(g))
    bad = smp_propagation_test(ce, g, spike)
    assert outcome(bad) == "nonconstant" and bad.witness is not None and bad.reached == 1
    with pytest.raises(PreconditionError) as err:
        smp_propagation_test(SchemeSpec(laplace_beltrami()), g, spike)
    assert outcome(err.value) == "rejected"


def test_boundary_maximum_is_vacuous():
    g = flat_grid(21)
    x, _ = g.chart.T
    with pytest.raises(PreconditionError) as err:
        smp_propagation_test(SchemeSpec(laplace_beltrami()), g, x)
    assert outcome(err.value) == "vacuous"


def test_mirror_agrees():
    g = flat_grid(21)
    for sch, u in [(SchemeSpec(grid_counterexample(g)), spike_field(g)),
                   (SchemeSpec(pucci_minus()), np.zeros(g.count))]:
        mirrored, direct = smp_mirror_test(sch.reflected(), g, -u)
        assert outcome(direct) == outcome(smp_propagation_test(sch, g, u))
        assert outcome(mirrored) == outcome(direct)


def test_strong_comparison_verdicts():
    g = flat_grid(15)
    sch = SchemeSpec(pucci_minus())
    v = saddle(g)
    assert strong_comparison_test(sch, g, v, v).verdict == "identity"
    assert strong_comparison_test(sch, g, v - 0.1, v).verdict == "strict separation"
    with pytest.raises(PreconditionError):
        strong_comparison_test(sch, g, v + 0.1, v)


def test_sample_checks():
    assert counterexample_subsolution_check(ManifoldModel(2, 1.0), count=2000).passed
    assert linearized_domination_check(pucci_minus(), count=2000).passed
    assert linearized_domination_check(laplace_beltrami(), count=2000).passed


def test_field_csv():
    g = flat_grid(11)
    buf = io.StringIO()
    write_field_csv(buf, g, np.arange(g.count, dtype=float))
    lines = buf.getvalue().splitlines()
    assert lines[0].startswith("node,i,j,x,y,value") and len(lines) == g.count + 1


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.floats(-5, 5), st.floats(0.1, 10))
def test_scheme_shift_and_scale(seed, shift, scale):
    g = flat_grid(11)
    u = np.random.default_rng(seed).standard_normal(g.count)
    for kid in ("laplace-beltrami", "pucci+", "pucci-"):
        sch = SchemeSpec(kernel_from_id(kid))
        r0, _ = discretize(sch, g, u)
        r1, _ = discretize(sch, g, u + shift)
        r2, _ = discretize(sch, g, scale * u)
        ii = g.interior
        assert np.allclose(r0[ii], r1[ii], atol=1e-8 * (1 + abs(shift)) * 200)
        assert np.allclose(scale * r0[ii], r2[ii], rtol=1e-9, atol=1e-9 * scale * 200)


def test_pucci_plus_radial_symmetry():
    g = flat_grid(21)
    x, y = g.chart.T
    data = np.where(g.boundary_mask, x * x + y * y, 0.0)
    sol, _ = solve_dirichlet(SchemeSpec(pucci_plus()), g, data)
    u = sol.values.reshape(g.size, g.size)
    for w in (u.T, u[::-1], u[:, ::-1]):
        assert np.max(np.abs(w - u)) < 1e-7


def test_game_p2_matches_laplacian():
    g = flat_grid(15)
    x, y = g.chart.T
    data = np.where(g.boundary_mask, np.sin(2 * x) * np.cosh(y) + x * y * y, 0.0)
    a, _ = solve_dirichlet(SchemeSpec(laplace_beltrami()), g, data)
    b, _ = solve_dirichlet(SchemeSpec(game_p_laplacian(2)), g, data)
    assert np.max(np.abs(a.values - b.values)) < 1e-8


def test_discrete_harmonic_maximum_9x9():
    g = flat_grid(9)
    sch = SchemeSpec(laplace_beltrami())
    rng = np.random.default_rng(4)
    for _ in range(5):
        data = np.where(g.boundary_mask, rng.uniform(-1, 1, g.count), 0.0)
        sol, _ = solve_dirichlet(sch, g, data, tol=1e-12)
        ii = g.interior
        assert np.max(sol.values[ii]) < np.max(sol.values[g.boundary_mask])
    assert smp_propagation_test(sch, g, np.full(g.count, 0.25)).constant


def test_constant_field_residual():
    g = flat_grid(11)
    ii = g.interior
    r, _ = discretize(SchemeSpec(laplace_beltrami()), g, np.full(g.count, 0.7))
    assert np.all(r[ii] == 0)
    k = kernel_from_id("capillary:1")
    r, _ = discretize(SchemeSpec(k, allow_nonmonotone=True), g, np.full(g.count, 0.7))
    assert np.allclose(r[ii], 2 * 0.7)


def test_field_and_domination_errors():
    g = flat_grid(11)
    from riemsmp.discrete import DiscreteField
    with pytest.raises(ValueError):
        DiscreteField(g, np.full(g.count, np.nan))
    with pytest.raises(ValueError):
        linearized_domination_check(p_laplacian(3))


def test_singular_kernel_flags_flat_nodes():
    g = flat_grid(11)
    r, flagged = discretize(SchemeSpec(game_p_laplacian(3), allow_nonmonotone=True), g, np.zeros(g.count))
    assert np.all(np.isfinite(r[g.interior])) and np.all(flagged[g.interior])
