"""Sampled predicates for the structural conditions on operator kernels.

Manifold-aware checks evaluate kernels on jets of ``f(x) = d(x, x0)^2 / 2``
built from the closed-form geometry, at points of the convex ball around
``x0``.  Every verdict is sampled; reports carry the sampling descriptor.
"""

from __future__ import annotations

import math

import numpy as np

from . import sampling
from .geometry import (ManifoldModel, convexity_radius, distance, exp_map, random_tangent,
                       radial_frame)
from .jets import Jet2, jet_of_dsq, jet_pullback
from .operators import OperatorKernel, laplace_beltrami, pucci_minus, pucci_plus
from .reports import FAIL, INCONCLUSIVE, PASS, PropertyReport

ALPHA_MAX = 2.0 ** 40
BISECT_STEPS = 60
C_GRID = 2.0 ** -np.arange(13)
S_GRID_LOWER = np.linspace(-1.0, 0.0, 21)
S_GRID_UPPER = np.linspace(0.0, 1.0, 21)
N_ALPHA_ABOVE = 10
HOMOGENEITY_C = 2.0 ** np.arange(-6, 7)
SCALE_SWEEP = 10.0 ** np.arange(-8, 9)


# ------------------------------------------------------------ families

def ball_sample_points(m: ManifoldModel, x0, count=50, seed=0, max_dist=None, include=()):
    """Deterministic points of the convex ball ``B(x0, R)`` (``x0`` excluded)."""
    rng = np.random.default_rng(seed)
    if max_dist is None:
        max_dist = min(0.9 * convexity_radius(m, x0), 1.5)
    pts = [np.asarray(p, dtype=float) for p in include]
    while len(pts) < count:
        t = max_dist * rng.uniform(0.05, 1.0)
        pts.append(exp_map(m, x0, random_tangent(m, x0, rng, t)))
    return np.array(pts)


def dsq_family(m: ManifoldModel, x0, points):
    """Arrays ``(q, H, X, d)`` of gradients, Hessians, positions and distances
    of ``f_{x0}`` at ``points``, in radial-adapted frames."""
    qs, Hs, ds = [], [], []
    for x in points:
        jet = jet_of_dsq(m, x0, x)
        qs.append(jet.q)
        Hs.append(jet.Q)
        ds.append(distance(m, x0, x))
    return np.array(qs), np.array(Hs), np.asarray(points, dtype=float), np.array(ds)


def _outer(q):
    return q[..., :, None] * q[..., None, :]


# ------------------------------------------------------------ alpha search

def alpha_grid(alpha_max=ALPHA_MAX):
    k = np.arange(int(math.floor(math.log2(alpha_max))) + 1)
    return np.concatenate([[0.0], 2.0 ** k])


def alpha_search(g, count, alpha_max=ALPHA_MAX, first=False):
    """Least ``alpha`` beyond which ``g(alpha) > 0`` on the doubling grid.

    With ``first=True`` the least ``alpha`` at which ``g`` first turns
    positive is returned instead, for families that decay again (or
    underflow) at very large weights.

    ``g`` maps an ``(count, K)`` array of alphas to values of the same shape.
    Returns ``(thresholds, status, tail)`` where status is ``"ok"``,
    ``"fail"`` or ``"inconclusive"`` per sample and ``tail`` holds the
    values at ``alpha_max``.  Exhaustion is reported as a failure when the
    values have stopped improving (non-increasing or saturated tail; for
    ``first=True`` a tail that has decayed to zero), and as inconclusive
    otherwise.
    """
    grid = alpha_grid(alpha_max)
    vals = g(np.broadcast_to(grid, (count, grid.size)).copy())
    # nan (singular evaluations) never counts as positive
    nonpos = ~(vals > 0)
    if first:
        positive = ~nonpos
        first_pos = np.where(positive.any(axis=1), np.argmax(positive, axis=1), grid.size)
        last = first_pos - 1
    else:
        last = np.where(nonpos.any(axis=1),
                        grid.size - 1 - np.argmax(nonpos[:, ::-1], axis=1), -1)
    thr = np.zeros(count)
    status = np.full(count, "ok", dtype=object)
    exhausted = last == grid.size - 1
    a, b = vals[:, -2], vals[:, -1]
    if first:
        # decaying families only settle once they have died out
        peak = np.nanmax(np.abs(np.where(np.isfinite(vals), vals, 0.0)), axis=1)
        stalled = np.abs(b) <= 1e-9 * (1 + peak)
    else:
        stalled = (b <= a) | (np.abs(b - a) <= 1e-9 * (1 + np.abs(b)))
    status[exhausted & stalled] = "fail"
    status[exhausted & ~stalled] = "inconclusive"
    thr[exhausted] = np.nan

    todo = np.flatnonzero((last >= 0) & ~exhausted)
    if todo.size:
        lo = grid[last[todo]].copy()
        hi = grid[last[todo] + 1].copy()
        sub = _restrict(g, todo, count)
        for _ in range(BISECT_STEPS):
            mid = 0.5 * (lo + hi)
            pos = sub(mid[:, None])[:, 0] > 0
            hi = np.where(pos, mid, hi)
            lo = np.where(pos, lo, mid)
        thr[todo] = hi
    return thr, status, b


def _restrict(g, idx, count):
    # evaluate g only on a subset of samples by padding the other rows
    def sub(alpha):
        full = np.zeros((count, alpha.shape[1]))
        full[idx] = alpha
        return g(full)[idx]
    return sub


def _pe_values(kernel, q, H, X, upper):
    """``alpha -> F(x, 0, q, H - a qq)`` (lower) or ``-F(x, 0, q, a qq - H)``."""
    qq = _outer(q)

    def g(alpha):
        A = H[:, None] - alpha[..., None, None] * qq[:, None]
        if upper:
            return -kernel(0.0, q[:, None], -A, X[:, None])
        return kernel(0.0, q[:, None], A, X[:, None])
    return g


def _pe_report(name, kernel, thr, status, tail, g, descr, extra=None):
    bad = status != "ok"
    if np.any(status == "fail"):
        verdict = FAIL
    elif np.any(bad):
        verdict = INCONCLUSIVE
    else:
        verdict = PASS
    if verdict == PASS:
        # value at a certified weight, per sample
        probe = 2 * thr + 1
        margin = float(np.min(g(probe[:, None])[:, 0]))
        top = float(np.max(thr))
    else:
        margin = float(np.min(tail[bad]))
        top = None
    rep = PropertyReport(f"{name}[{kernel.id}]", verdict, margin, alpha_threshold=top,
                         sampling=descr)
    for i in np.flatnonzero(bad)[:3]:
        rep.add_witness(f"sample {i} no threshold up to alpha_max ({status[i]})", tail[i])
    rep.details["thresholds"] = thr.tolist()
    rep.details["status"] = list(status)
    if extra:
        rep.details.update(extra)
    return rep


def check_lpe(kernel: OperatorKernel, m: ManifoldModel, x0=None, sample_points=None,
              alpha_max=ALPHA_MAX, seed=0, count=50, upper=False) -> PropertyReport:
    """Lower partial ellipticity on the squared-distance family around ``x0``."""
    x0 = m.origin() if x0 is None else np.asarray(x0, dtype=float)
    if sample_points is None:
        sample_points = ball_sample_points(m, x0, count, seed)
    q, H, X, d = dsq_family(m, x0, sample_points)
    g = _pe_values(kernel, q, H, X, upper)
    thr, status, tail = alpha_search(g, len(q), alpha_max)
    descr = sampling.describe(seed, len(q), kappa=m.kappa, n=m.n, alpha_max=alpha_max)
    rep = _pe_report("upe" if upper else "lpe", kernel, thr, status, tail, g, descr)
    # threshold profile against the distance to the center
    rep.details["profile"] = sorted(zip(d.tolist(), thr.tolist()))
    return rep


def check_upe(kernel, m, x0=None, sample_points=None, alpha_max=ALPHA_MAX, seed=0,
              count=50) -> PropertyReport:
    """Upper partial ellipticity: ``F(x, 0, q, a qq - D^2 f) < 0`` for large ``a``."""
    return check_lpe(kernel, m, x0, sample_points, alpha_max, seed, count, upper=True)


def check_lpe_prime(kernel: OperatorKernel, n=2, q_samples=None, positions=None,
                    alpha_max=ALPHA_MAX, seed=0, count=200, upper=False) -> PropertyReport:
    """``F(x, 0, q, I - a qq) > 0`` for large ``a`` (identity in place of the
    distance Hessian).  ``positions`` lists base points handed to the kernel;
    every position is paired with every gradient sample."""
    rng = np.random.default_rng(seed)
    if q_samples is None:
        q_samples = sampling.vec_samples(rng, count, n)
    q_samples = np.asarray(q_samples, dtype=float)
    n = q_samples.shape[-1]
    pos = [None] if positions is None else list(positions)
    q = np.concatenate([q_samples] * len(pos))
    X = None
    if positions is not None:
        X = np.concatenate([np.broadcast_to(p, (len(q_samples),) + np.shape(p)) for p in pos])
    H = np.broadcast_to(np.eye(n), (len(q), n, n))
    qq = _outer(q)

    def g(alpha):
        A = H[:, None] - alpha[..., None, None] * qq[:, None]
        xx = None if X is None else X[:, None]
        if upper:
            return -kernel(0.0, q[:, None], -A, xx)
        return kernel(0.0, q[:, None], A, xx)

    thr, status, tail = alpha_search(g, len(q), alpha_max)
    descr = sampling.describe(seed, len(q), n=n, alpha_max=alpha_max, positions=len(pos))
    name = "upe_prime" if upper else "lpe_prime"
    return _pe_report(name, kernel, thr, status, tail, g, descr)


# ------------------------------------------------------------ scaling

def fit_eta(lhs, rhs, rtol=1e-9):
    """Largest feasible ``eta`` with ``lhs >= eta * rhs`` on the samples.

    Samples with ``rhs > 0`` bound ``eta`` from above, those with ``rhs < 0``
    from below.  Returns ``(eta, feasible, worst)`` where ``worst`` is the
    smallest normalized slack ``(lhs - eta rhs) / (1 + |rhs|)``.
    """
    lhs = np.ravel(lhs)
    rhs = np.ravel(rhs)
    posm = rhs > 0
    negm = rhs < 0
    up = np.min(lhs[posm] / rhs[posm]) if posm.any() else np.inf
    low = np.max(lhs[negm] / rhs[negm]) if negm.any() else -np.inf
    if np.isfinite(up):
        eta = up
    else:
        eta = max(low, 1.0)
    feasible = eta > 0 and eta >= low - rtol * max(1.0, abs(eta))
    zero = ~(posm | negm)
    if zero.any() and np.min(lhs[zero]) < -rtol:
        feasible = False
    slack = (lhs - eta * rhs) / (1 + np.abs(rhs))
    return float(eta), bool(feasible), float(np.min(slack))


def alphas_above(thr):
    j = np.arange(N_ALPHA_ABOVE)
    return thr[:, None] + (1 + thr[:, None]) * 2.0 ** (j - 4)


def _scaling_family(kernel, m, x0, points, upper, alpha_max):
    """Jets ``J = (s, q, A)`` of the scaled family at certified weights.

    Returns ``(q, A, X, status)`` with one row per (point, alpha), or the
    lpe/upe status array when some point has no threshold.
    """
    q, H, X, _ = dsq_family(m, x0, points)
    thr, status, tail = alpha_search(_pe_values(kernel, q, H, X, upper), len(q), alpha_max)
    if np.any(status != "ok"):
        return None, status, tail
    al = alphas_above(thr)                                  # (S, K)
    A = H[:, None] - al[..., None, None] * _outer(q)[:, None]
    if upper:
        A = -A
    S, K = al.shape
    return (np.repeat(q, K, axis=0), A.reshape(S * K, m.n, m.n), np.repeat(X, K, axis=0)), \
        status, tail


def check_lsp(kernel: OperatorKernel, m: ManifoldModel, x0=None, c_grid=C_GRID, s_grid=None,
              sample_points=None, alpha_max=ALPHA_MAX, seed=0, count=50, generic=2000,
              upper=False) -> PropertyReport:
    """Lower scaling property: ``F(cJ) >= eta(c) F(J)`` with a positive ``eta``.

    ``J`` ranges over the squared-distance family at certified weights and,
    unless ``generic=0``, over random Euclidean jets ``(s, v, A)``.
    """
    name = "usp" if upper else "lsp"
    sign = -1.0 if upper else 1.0
    x0 = m.origin() if x0 is None else np.asarray(x0, dtype=float)
    if s_grid is None:
        s_grid = S_GRID_UPPER if upper else S_GRID_LOWER
    if sample_points is None:
        sample_points = ball_sample_points(m, x0, count, seed)
    descr = sampling.describe(seed, len(sample_points), kappa=m.kappa, n=m.n, generic=generic,
                              c_min=float(np.min(c_grid)))
    fam, status, tail = _scaling_family(kernel, m, x0, sample_points, upper, alpha_max)
    if fam is None:
        rep = PropertyReport(f"{name}[{kernel.id}]", FAIL, float(np.min(tail[status != "ok"])),
                             sampling=descr)
        for i in np.flatnonzero(status != "ok")[:3]:
            rep.add_witness(f"sample {i} has no partial-ellipticity threshold", tail[i])
        return rep
    q, A, X = fam
    s = np.asarray(s_grid, dtype=float)

    # rows: (family jet, s) pairs
    qf = np.repeat(q, len(s), axis=0)
    Af = np.repeat(A, len(s), axis=0)
    Xf = np.repeat(X, len(s), axis=0)
    sf = np.tile(s, len(q))
    rhs_fam = sign * kernel(sf, qf, Af, Xf)
    if np.any(rhs_fam[sf == 0] <= 0):
        raise RuntimeError("scaling family is not positive where positivity was certified")

    if generic:
        rng = np.random.default_rng(seed + 1)
        sg = rng.uniform(0.0, 1.0, generic) * (1.0 if upper else -1.0)
        vg = sampling.vec_samples(rng, generic, m.n)
        Ag = sampling.sym_samples(rng, generic, m.n)
        rhs_gen = sign * kernel(sg, vg, Ag)
    etas, worst = [], np.inf
    feasible_all = True
    rep = PropertyReport(f"{name}[{kernel.id}]", PASS, sampling=descr)
    for c in c_grid:
        lhs = sign * kernel(c * sf, c * qf, c * Af, Xf)
        rhs = rhs_fam
        if generic:
            lhs = np.concatenate([lhs, sign * kernel(c * sg, c * vg, c * Ag)])
            rhs = np.concatenate([rhs, rhs_gen])
        eta, ok, slack = fit_eta(lhs, rhs)
        etas.append(eta)
        worst = min(worst, slack)
        if not ok:
            feasible_all = False
            rep.add_witness(f"c={c:g} no positive eta (slack {slack:.3g})", slack)
    rep.verdict = PASS if feasible_all else FAIL
    rep.min_margin = float(worst) if feasible_all else min(w[1] for w in rep.witnesses)
    rep.details["eta"] = etas
    rep.details["c_grid"] = list(map(float, c_grid))
    return rep


def check_usp(kernel, m, x0=None, c_grid=C_GRID, s_grid=None, sample_points=None,
              alpha_max=ALPHA_MAX, seed=0, count=50, generic=2000) -> PropertyReport:
    return check_lsp(kernel, m, x0, c_grid, s_grid, sample_points, alpha_max, seed, count,
                     generic, upper=True)


def check_lsp_prime(kernel: OperatorKernel, hat_kernel: OperatorKernel, m: ManifoldModel,
                    x0=None, c_grid=C_GRID, s_grid=None, sample_points=None,
                    alpha_max=ALPHA_MAX, seed=0, count=50, upper=False) -> PropertyReport:
    """``F(cJ) >= F_hat(cJ) + eta(c) eta_hat(c)`` with ``eta_hat -> 0``.

    ``eta`` comes from the scaling fit of ``hat_kernel`` and ``eta_hat`` is the
    smallest admissible correction on the family (zero when ``F >= F_hat``).
    The check passes when the correction at the smallest ``c`` is below
    ``1e-3`` of its largest size and its magnitude is non-increasing in the
    last four grid steps.
    """
    name = "usp_prime" if upper else "lsp_prime"
    sign = -1.0 if upper else 1.0
    x0 = m.origin() if x0 is None else np.asarray(x0, dtype=float)
    if s_grid is None:
        s_grid = S_GRID_UPPER if upper else S_GRID_LOWER
    if sample_points is None:
        sample_points = ball_sample_points(m, x0, count, seed)
    c_grid = np.asarray(c_grid, dtype=float)
    descr = sampling.describe(seed, len(sample_points), kappa=m.kappa, n=m.n,
                              c_min=float(np.min(c_grid)))
    hat_rep = check_lsp(hat_kernel, m, x0, c_grid, s_grid, sample_points, alpha_max, seed,
                        count, upper=upper)
    if not hat_rep.passed:
        rep = PropertyReport(f"{name}[{kernel.id}|{hat_kernel.id}]", FAIL, hat_rep.min_margin,
                             sampling=descr)
        rep.add_witness(f"comparison kernel fails scaling ({hat_rep.verdict})",
                        hat_rep.min_margin or -1.0)
        return rep
    eta = np.array(hat_rep.details["eta"])
    fam, _, _ = _scaling_family(hat_kernel, m, x0, sample_points, upper, alpha_max)
    q, A, X = fam
    s = np.asarray(s_grid, dtype=float)
    qf = np.repeat(q, len(s), axis=0)
    Af = np.repeat(A, len(s), axis=0)
    Xf = np.repeat(X, len(s), axis=0)
    sf = np.tile(s, len(q))
    hat = []
    for c, e in zip(c_grid, eta):
        diff = sign * (kernel(c * sf, c * qf, c * Af, Xf) - hat_kernel(c * sf, c * qf, c * Af, Xf))
        hat.append(min(0.0, float(np.min(diff))) / e)
    mag = np.abs(np.array(hat))
    order = np.argsort(-c_grid)            # decreasing c
    mag_c = mag[order]
    vanishes = mag_c[-1] <= 1e-3 * max(1.0, mag_c.max())
    settling = np.all(np.diff(mag_c[-4:]) <= 1e-12 * max(1.0, mag_c.max()))
    verdict = PASS if vanishes and settling else FAIL
    rep = PropertyReport(f"{name}[{kernel.id}|{hat_kernel.id}]", verdict, -float(mag_c[-1]),
                         sampling=descr)
    if verdict == FAIL:
        rep.add_witness(f"correction at c={c_grid[order][-1]:g} is {mag_c[-1]:.3g}", -mag_c[-1])
    rep.details["eta_hat"] = [float(h) for h in hat]
    rep.details["eta"] = eta.tolist()
    return rep


def check_usp_prime(kernel, hat_kernel, m, x0=None, c_grid=C_GRID, s_grid=None,
                    sample_points=None, alpha_max=ALPHA_MAX, seed=0, count=50):
    return check_lsp_prime(kernel, hat_kernel, m, x0, c_grid, s_grid, sample_points, alpha_max,
                           seed, count, upper=True)


# ------------------------------------------------------------ Euclidean checks

def _samples(n, count, seed):
    rng = np.random.default_rng(seed)
    s = rng.uniform(-1.0, 1.0, count)
    v = sampling.vec_samples(rng, count, n)
    A = sampling.sym_samples(rng, count, n)
    return rng, s, v, A


def check_proper(kernel: OperatorKernel, n=2, count=2000, seed=0, x=None,
                 tol=1e-9) -> PropertyReport:
    """``F(r, q, P) <= F(s, q, Q)`` whenever ``r <= s`` and ``Q <= P``."""
    rng, s, v, A = _samples(n, count, seed)
    P = sampling.psd_samples(rng, count, n)
    ds = rng.uniform(0.0, 1.0, count)
    base = kernel(s, v, A, x)
    m1 = base - kernel(s, v, A + P, x)
    m2 = base - kernel(s - ds, v, A, x)
    margin = np.minimum(m1, m2) / (1 + np.abs(base))
    ok = margin.min() >= -tol
    rep = PropertyReport(f"proper[{kernel.id}]", PASS if ok else FAIL, float(margin.min()),
                         sampling=sampling.describe(seed, count, n=n))
    for i in np.argsort(margin)[:3]:
        if margin[i] < -tol:
            rep.add_witness(f"sample {i}", margin[i])
    return rep


def check_homogeneity(kernel: OperatorKernel, h=None, n=2, count=1000, seed=0,
                      rtol=1e-9) -> PropertyReport:
    """``F(cs, cv, cA) = c^h F(s, v, A)`` for ``c = 2^k``, ``|k| <= 6``.

    Without a declared degree the degree is estimated from ``c = 2`` and then
    tested like a declared one.
    """
    _, s, v, A = _samples(n, count, seed)
    base = kernel(s, v, A)
    if h is None:
        h = kernel.homogeneity
    if h is None:
        r = kernel(2 * s, 2 * v, 2 * A) / base
        ok = np.isfinite(r) & (r > 0)
        h = float(np.median(np.log2(r[ok]))) if ok.any() else 0.0
    worst = 0.0
    for c in HOMOGENEITY_C:
        err = np.abs(kernel(c * s, c * v, c * A) - c ** h * base)
        worst = max(worst, float(np.max(err / (c ** h * np.maximum(np.abs(base), 1e-300) + 1e-300))))
    rep = PropertyReport(f"homogeneous[{kernel.id}]", PASS if worst <= rtol else FAIL, -worst,
                         sampling=sampling.describe(seed, count, n=n))
    rep.details["h"] = h
    if worst > rtol:
        rep.add_witness(f"relative defect for degree {h:g}", -worst)
    return rep


def check_uniform_ellipticity(kernel: OperatorKernel, lam=None, Lam=None, n=2, count=500,
                              seed=0, tol=1e-9) -> PropertyReport:
    """``lam Tr P <= F(Q) - F(Q + P) <= Lam Tr P`` for ``P >= 0``.

    With no constants given (and none declared) the best constants are
    fitted over a sweep of gradient and Hessian scales ``10^k``,
    ``|k| <= 8``; the kernel fails when the fitted ``lam`` vanishes
    (``<= 1e-9``) or the ratio exceeds ``1e6``.
    """
    if lam is None and Lam is None:
        consts = kernel.ellipticity_constants(n)
        if consts is not None:
            lam, Lam = consts
    rng, s, v, A = _samples(n, count, seed)
    P = sampling.psd_samples(rng, count, n)
    u = v / np.linalg.norm(v, axis=-1, keepdims=True)
    ratios, trs, diffs = [], [], []
    for k in SCALE_SWEEP:
        for vv, AA, PP in ((k * u, A, P), (u, k * A, k * P)):
            d = kernel(s, vv, AA) - kernel(s, vv, AA + PP)
            tr = np.trace(PP, axis1=-2, axis2=-1)
            diffs.append(d)
            trs.append(tr)
    d = np.concatenate(diffs)
    tr = np.concatenate(trs)
    descr = sampling.describe(seed, count, n=n)
    if lam is not None:
        margin = np.minimum(d - lam * tr, Lam * tr - d) / (1 + tr)
        ok = margin.min() >= -tol
        rep = PropertyReport(f"uniformly_elliptic[{kernel.id}]", PASS if ok else FAIL,
                             float(margin.min()), sampling=descr)
        rep.details.update(lam=lam, Lam=Lam)
        for i in np.argsort(margin)[:3]:
            if margin[i] < -tol:
                rep.add_witness(f"sample {i % count}", margin[i])
        return rep
    keep = tr > 1e-12
    r = d[keep] / tr[keep]
    lam_hat = float(np.min(r)) if r.size else 0.0
    Lam_hat = float(np.max(r)) if r.size else 0.0
    ok = np.all(np.isfinite(r)) and lam_hat > 1e-9 and Lam_hat / lam_hat <= 1e6
    rep = PropertyReport(f"uniformly_elliptic[{kernel.id}]", PASS if ok else FAIL,
                         lam_hat, sampling=descr)
    rep.details.update(lam_fit=lam_hat, Lam_fit=Lam_hat)
    if not ok:
        i = int(np.argmin(r))
        rep.add_witness(f"smallest ratio {lam_hat:.3g}, largest {Lam_hat:.3g}", r[i])
    return rep


def check_ulp(kernel: OperatorKernel, C=None, n=2, count=400, seed=0) -> PropertyReport:
    """Empirical Lipschitz constant in ``(s, q)`` with the Hessian held fixed.

    Pairs are drawn in gradient-size bands ``10^[b, b+1]`` for
    ``b = -2..1``; the kernel fails if the best constant grows tenfold from
    the lowest to the highest band, or exceeds ``C`` when one is given.
    """
    rng = np.random.default_rng(seed)
    bands = []
    for b in range(-2, 2):
        s1 = rng.uniform(-1, 1, count)
        q1 = sampling.vec_samples(rng, count, n, (b, b + 1))
        A = sampling.sym_samples(rng, count, n)
        ds = rng.uniform(-1, 1, count) * 1e-3
        dq = sampling.vec_samples(rng, count, n, (-4, -3)) * np.linalg.norm(q1, axis=-1)[:, None]
        num = np.abs(kernel(s1 + ds, q1 + dq, A) - kernel(s1, q1, A))
        bands.append(float(np.max(num / (np.abs(ds) + np.linalg.norm(dq, axis=-1)))))
    best = max(bands)
    grows = bands[-1] > 10 * max(bands[0], 1e-12)
    ok = not grows and (C is None or best <= C * (1 + 1e-6) + 1e-12)
    rep = PropertyReport(f"ulp[{kernel.id}]", PASS if ok else FAIL,
                         None if C is None else float(C - best),
                         sampling=sampling.describe(seed, count, n=n))
    rep.details["C_fit"] = best
    rep.details["bands"] = bands
    if not ok:
        rep.add_witness("best constant per gradient band " + ",".join(f"{x:.3g}" for x in bands),
                        -(best - (C or bands[0])))
    return rep


def check_iuc(kernel: OperatorKernel, m: ManifoldModel, count=100, seed=0, pairs=None,
              tol=1e-10) -> PropertyReport:
    """``|F(y, J) - F(x, L*J)|`` over point pairs and random jets at ``y``.

    Gaps are measured relative to ``max(1, |F|)`` since the jet samples span
    many scales.  Universal kernels must agree to ``tol``; otherwise the
    largest jump is reported as the empirical modulus.
    """
    rng = np.random.default_rng(seed)
    if pairs is None:
        pairs = []
        center = kernel.center
        for i in range(count):
            y = center if (center is not None and np.ndim(center) == 1 and i % 10 == 0) \
                else ball_sample_points(m, m.origin(), 1, seed=int(rng.integers(1 << 31)))[0]
            x = exp_map(m, y, random_tangent(m, y, rng, rng.uniform(0.05, 0.5)))
            pairs.append((x, y))
    worst = 0.0
    rep = PropertyReport(f"iuc[{kernel.id}]", PASS, sampling=sampling.describe(seed, len(pairs),
                                                                               kappa=m.kappa,
                                                                               n=m.n))
    for i, (x, y) in enumerate(pairs):
        s = rng.uniform(-1, 1)
        q = sampling.vec_samples(rng, 1, m.n)[0]
        Q = sampling.sym_samples(rng, 1, m.n)[0]
        jet = Jet2(s, q, Q)
        back = jet_pullback(m, x, y, jet, radial_frame(m, x), radial_frame(m, y))
        a = float(kernel(jet.s, jet.q, jet.Q, y))
        b = float(kernel(back.s, back.q, back.Q, x))
        gap = abs(a - b) / max(1.0, abs(a), abs(b))
        if gap > worst:
            worst = gap
        if gap > tol:
            rep.add_witness(f"pair {i}", -gap)
    rep.verdict = PASS if worst <= tol else FAIL
    rep.min_margin = -worst
    rep.details["modulus"] = worst
    return rep


# ------------------------------------------------------------ helpers for scaling primes

def default_hat_kernel(kernel: OperatorKernel):
    """Comparison operator with the scaling property used for primed checks."""
    if kernel.id.startswith("capillary"):
        from .operators import capillary_principal
        H = float(kernel.id.split(":")[1]) if ":" in kernel.id else 1.0
        return capillary_principal(H)
    return laplace_beltrami()


HAT_SEARCH_FAMILY = (laplace_beltrami, pucci_plus, pucci_minus)
