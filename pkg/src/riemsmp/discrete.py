"""Wide-stencil finite differences on 2D grids: residuals, a damped
Dirichlet solver, propagation of maxima and the discrete comparison test.

Residuals use the kernel's sign convention: a field ``u`` is a discrete
subsolution when ``R[u] <= 0`` at every interior node.  Each stencil pair is
two orthogonal integer offsets; along each line the second derivative is the
directional second difference and the gradient component the centered
difference, so every pair yields a diagonal Hessian in its own frame and no
mixed differences appear.
"""

from __future__ import annotations

import csv
import math
from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np

from . import sampling
from .geometry import ManifoldModel, exp_map, injectivity_radius, log_map_batch, radial_frame
from .jets import Jet2
from .operators import OperatorKernel, counterexample, pucci_plus_value, reflect
from .reports import FAIL, PASS, PropertyReport

PAIRS = (((1, 0), (0, 1)), ((1, 1), (1, -1)), ((2, 1), (1, -2)), ((1, 2), (2, -1)),
         ((3, 1), (1, -3)), ((1, 3), (3, -1)), ((3, 2), (2, -3)), ((2, 3), (3, -2)))
REACH = 3
RULES = ("sup", "inf", "any", "align")
# discrete gradients below this (relative to max|u| / spacing) count as zero
ZERO_GRAD = 1e-13
SUBSOLUTION_TOL = 1e-10
SOLVE_TOL = 1e-8
MAX_SWEEPS = 10 ** 6
REFRESH_EVERY = 100


class SchemeError(ValueError):
    """The scheme cannot be used as requested (e.g. it is not monotone)."""


class PreconditionError(ValueError):
    """A test was handed a field that does not meet its hypotheses."""

    def __init__(self, message, reason="", node=None, value=None):
        super().__init__(message)
        self.reason = reason
        self.node = node
        self.value = value


class ConvergenceError(RuntimeError):
    def __init__(self, message, field=None, info=None):
        super().__init__(message)
        self.field = field
        self.info = info


# ------------------------------------------------------------------ grids

@dataclass
class _Stencil:
    plus: np.ndarray      # (pairs, 2, Ni) neighbour indices
    minus: np.ndarray
    dplus: np.ndarray     # (pairs, 2, Ni) geodesic distances
    dminus: np.ndarray
    corr: np.ndarray | None   # (pairs, 2, Ni, 2) curvature correction weights
    dmin: float

    def __post_init__(self):
        tot = self.dplus + self.dminus
        self.cplus = 2.0 / (self.dplus * tot)
        self.cminus = 2.0 / (self.dminus * tot)
        self.cgrad = 1.0 / tot


class Grid2D:
    """Square grid of ``size x size`` nodes with the given spacing.

    Chart coordinates are centered at the middle node.  For ``kappa = 0``
    nodes are the chart points themselves; otherwise they are the images of
    the chart under geodesic normal coordinates at the model origin.  A node
    is interior when its whole stencil lies in the grid and ``domain``
    (a predicate on chart coordinates) holds there.
    """

    def __init__(self, m: ManifoldModel, spacing, size, domain=None):
        if m.n != 2:
            raise ValueError("grids are two-dimensional")
        if not spacing > 0:
            raise ValueError("spacing must be positive")
        if size < 2 * REACH + 1:
            raise ValueError(f"size must be at least {2 * REACH + 1}")
        self.m = m
        self.spacing = float(spacing)
        self.size = int(size)
        half = (self.size - 1) / 2
        i, j = np.meshgrid(np.arange(self.size), np.arange(self.size), indexing="ij")
        self.ij = np.stack([i.ravel(), j.ravel()], axis=1)
        self.chart = (self.ij - half) * self.spacing
        # chart axes at the center node
        self.frame = radial_frame(m, m.origin())
        if m.kappa == 0:
            self.points = self.chart.copy()
        else:
            if np.max(np.linalg.norm(self.chart, axis=1)) >= injectivity_radius(m):
                raise ValueError("grid does not fit inside the injectivity radius")
            o = m.origin()
            self.points = np.array([exp_map(m, o, self.frame.vector(c)) for c in self.chart])
        edge = np.all((self.ij >= REACH) & (self.ij < self.size - REACH), axis=1)
        inside = edge if domain is None else edge & np.asarray(domain(self.chart), dtype=bool)
        self.boundary_mask = ~inside
        self.interior = np.flatnonzero(inside)
        self._stencils = {}

    @property
    def count(self) -> int:
        return self.size * self.size

    def index(self, i, j) -> int:
        return int(i) * self.size + int(j)

    @property
    def center_index(self) -> int:
        c = (self.size - 1) // 2
        return self.index(c, c)

    def nearest(self, chart_point) -> int:
        return int(np.argmin(np.linalg.norm(self.chart - np.asarray(chart_point), axis=1)))

    def sample(self, func, on="chart"):
        """Values of ``func`` at every node (vectorized over chart or ambient points)."""
        pts = self.chart if on == "chart" else self.points
        return np.asarray(func(pts), dtype=float).reshape(self.count)

    def active(self, npairs=len(PAIRS)) -> np.ndarray:
        """Nodes the scheme reads: interior nodes and their stencil neighbours."""
        st = self.stencil(npairs)
        mask = np.zeros(self.count, dtype=bool)
        mask[self.interior] = True
        mask[st.plus.ravel()] = True
        mask[st.minus.ravel()] = True
        return mask

    def stencil(self, npairs=len(PAIRS)) -> _Stencil:
        if npairs not in self._stencils:
            self._stencils[npairs] = self._build_stencil(npairs)
        return self._stencils[npairs]

    def _build_stencil(self, npairs):
        ii = self.interior
        ij = self.ij[ii]
        off = np.array(PAIRS[:npairs])          # (pairs, 2, 2)
        plus = (ij[None, None] + off[:, :, None]) @ np.array([self.size, 1])
        minus = (ij[None, None] - off[:, :, None]) @ np.array([self.size, 1])
        length = np.linalg.norm(off, axis=-1)[..., None] * self.spacing
        if self.m.kappa == 0:
            dp = np.broadcast_to(length, plus.shape).copy()
            return _Stencil(plus, minus, dp, dp.copy(), None, float(np.min(dp)))
        m = self.m
        x = self.points[ii]                                  # (Ni, amb)
        wp, dp = log_map_batch(m, x, self.points[plus])      # (pairs, 2, Ni, amb)
        wm, dm = log_map_batch(m, x, self.points[minus])
        ep = wp / dp[..., None]
        em = wm / dm[..., None]
        # centered differences of the first pair see <grad u, T>
        tot = dp[0] + dm[0]                                   # (2, Ni)
        T = (dp[0][..., None] * ep[0] - dm[0][..., None] * em[0]) / tot[..., None]
        G = m.inner(T[:, None], T[None, :])                   # (2, 2, Ni)
        Ginv = np.linalg.inv(np.moveaxis(G, -1, 0))           # (Ni, 2, 2)
        proj = m.inner(T[None, None], (ep + em)[:, :, None])  # (pairs, 2, 2, Ni)
        corr = 2.0 * np.einsum("aij,klja->klai", Ginv, proj) / (dp + dm)[..., None]
        return _Stencil(plus, minus, dp, dm, corr, float(min(dp.min(), dm.min())))


@dataclass
class DiscreteField:
    grid: Grid2D
    values: np.ndarray
    flagged: np.ndarray | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(-1)
        if self.values.shape != (self.grid.count,):
            raise ValueError("field does not match the grid")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field values must be finite")

    def to_csv(self, path_or_file):
        write_field_csv(path_or_file, self.grid, self.values, self.flagged)


def write_field_csv(path_or_file, grid: Grid2D, values, flagged=None, extra=None):
    """Rows ``node, i, j, x, y, value`` (+ ``flagged`` and extra columns)."""
    extra = extra or {}
    own = isinstance(path_or_file, str)
    fh = open(path_or_file, "w", newline="", encoding="utf-8") if own else path_or_file
    try:
        w = csv.writer(fh, lineterminator="\n")
        head = ["node", "i", "j", "x", "y", "value"]
        if flagged is not None:
            head.append("flagged")
        head += list(extra)
        w.writerow(head)
        for k in range(grid.count):
            row = [k, int(grid.ij[k, 0]), int(grid.ij[k, 1]), f"{grid.chart[k, 0]:.10g}",
                   f"{grid.chart[k, 1]:.10g}", f"{float(values[k]) + 0.0:.10g}"]
            if flagged is not None:
                row.append(int(bool(flagged[k])))
            row += [f"{float(col[k]) + 0.0:.10g}" for col in extra.values()]
            w.writerow(row)
    finally:
        if own:
            fh.close()


# ----------------------------------------------------------------- scheme

@dataclass(frozen=True)
class SchemeSpec:
    """Kernel plus stencil choice.

    ``rule`` combines the per-pair values: ``sup``/``inf`` take the max/min
    over pairs, ``any`` uses the axis pair only (enough for kernels that only
    see the trace) and ``align`` uses the pair best aligned with the discrete
    gradient.  The scheme is monotone for the first three rules when the
    kernel ignores the gradient.
    """

    kernel: OperatorKernel
    pairs: int = len(PAIRS)
    rule: str | None = None
    allow_nonmonotone: bool = False

    def __post_init__(self):
        if not 4 <= self.pairs <= len(PAIRS):
            raise ValueError(f"need between 8 and {2 * len(PAIRS)} stencil directions")
        if self.rule is None:
            object.__setattr__(self, "rule", self.kernel.frame_rule)
        if self.rule not in RULES:
            raise ValueError(f"unknown combination rule {self.rule!r}")

    @property
    def kernel_id(self) -> str:
        return self.kernel.id

    @property
    def directions(self) -> np.ndarray:
        """The ``2 * pairs`` unit stencil directions of the flat chart."""
        off = np.array(PAIRS[:self.pairs], dtype=float).reshape(-1, 2)
        return off / np.linalg.norm(off, axis=1, keepdims=True)

    @property
    def monotone(self) -> bool:
        return self.rule in ("sup", "inf", "any") and self.kernel.gradient_free

    def require_monotone(self):
        if not (self.monotone or self.allow_nonmonotone):
            raise SchemeError(f"scheme for {self.kernel.id} with rule {self.rule} is not monotone")

    def reflected(self) -> "SchemeSpec":
        k = reflect(self.kernel)
        return replace(self, kernel=k, rule=k.frame_rule if self.rule in ("sup", "inf") else self.rule)


def _pair_differences(st: _Stencil, u, ii, pair_ids):
    uc = u.take(ii)
    if len(pair_ids) < len(st.plus):
        sl = slice(0, len(pair_ids))
    else:
        sl = slice(None)
    up = u.take(st.plus[sl])
    um = u.take(st.minus[sl])
    D = st.cplus[sl] * (up - uc) + st.cminus[sl] * (um - uc)
    g = (up - um) * st.cgrad[sl]
    if st.corr is not None:
        g0 = (u.take(st.plus[0]) - u.take(st.minus[0])) * st.cgrad[0]   # (2, Ni)
        D = D - np.einsum("klac,ca->kla", st.corr[sl], g0)
    return D, g


def _diag(D):
    A = np.zeros(D.shape[:1] + D.shape[2:] + (2, 2))
    A[..., 0, 0] = D[:, 0]
    A[..., 1, 1] = D[:, 1]
    return A


_UNIT = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])


def _envelope(kernel, s, A, X, upper):
    # limiting values over unit gradient directions along the pair's lines
    vals = np.stack([kernel(s, np.broadcast_to(e, A.shape[:-1]), A, X) for e in _UNIT])
    return np.max(vals, axis=0) if upper else np.min(vals, axis=0)


def discretize(scheme: SchemeSpec, grid: Grid2D, u, envelope="lower"):
    """Per-node residuals (zero at boundary nodes) and the mask of interior
    nodes where a kernel that is singular or degenerate at a vanishing
    gradient fell back to its form on unit gradients.

    ``envelope`` picks the lower (subsolution) or upper (supersolution)
    limit at such nodes.
    """
    u = np.asarray(u, dtype=float).reshape(-1)
    if u.shape != (grid.count,):
        raise ValueError("field does not match the grid")
    upper = envelope == "upper"
    kernel = scheme.kernel
    st = grid.stencil(scheme.pairs)
    ii = grid.interior
    pair_ids = np.arange(1) if scheme.rule == "any" else np.arange(scheme.pairs)
    D, g = _pair_differences(st, u, ii, pair_ids)
    A = _diag(D)                              # (pairs, Ni, 2, 2)
    v = np.moveaxis(g, 1, -1)                 # (pairs, Ni, 2)
    s = u[ii]
    X = ii.astype(np.int64)
    gnorm = np.linalg.norm(v, axis=-1)
    zero_at = ZERO_GRAD * max(1.0, float(np.max(np.abs(u)))) / grid.spacing
    limiting = kernel.singular_at_zero or kernel.degenerate_at_zero
    zero = (gnorm <= zero_at) if limiting else np.zeros(gnorm.shape, dtype=bool)
    flagged = np.zeros(grid.count, dtype=bool)

    if scheme.rule == "align":
        with np.errstate(invalid="ignore", divide="ignore"):
            score = np.where(zero | (gnorm == 0), -1.0, np.max(np.abs(v), axis=-1) / gnorm)
        best = np.argmax(score, axis=0)
        cols = np.arange(len(ii))
        vals = kernel(s, v[best, cols], A[best, cols], X)
        lost = zero[best, cols]
        if np.any(lost):
            fb = _envelope(kernel, s[None], A, X[None], upper)
            fb = np.max(fb, axis=0) if upper else np.min(fb, axis=0)
            vals = np.where(lost, fb, vals)
            flagged[ii[lost]] = True
    else:
        vals = kernel(s[None], v, A, X[None])
        if np.any(zero):
            fb = _envelope(kernel, s[None], A, X[None], upper)
            vals = np.where(zero, fb, vals)
            flagged[ii[np.any(zero, axis=0)]] = True
        if scheme.rule == "sup":
            vals = np.max(vals, axis=0)
        elif scheme.rule == "inf":
            vals = np.min(vals, axis=0)
        else:
            vals = vals[0]
    res = np.zeros(grid.count)
    res[ii] = vals
    return res, flagged


def stencil_value(scheme: SchemeSpec, jet: Jet2, x=None) -> float:
    """The scheme's combination applied to the exact directional derivatives
    of ``jet``: the limit of the residual as the spacing goes to zero."""
    Q = np.asarray(jet.Q, dtype=float)
    q = np.asarray(jet.q, dtype=float)
    dirs = scheme.directions.reshape(scheme.pairs, 2, 2)
    D = np.einsum("kli,ij,klj->kl", dirs, Q, dirs)[:, :, None]
    g = np.einsum("kli,i->kl", dirs, q)[:, :, None]
    A = _diag(D)[:, 0]
    v = g[:, :, 0]
    vals = scheme.kernel(np.full(scheme.pairs, jet.s), v, A, x)
    if scheme.rule == "align":
        score = np.max(np.abs(v), axis=-1) / np.linalg.norm(v, axis=-1)
        return float(vals[int(np.argmax(score))])
    return float({"sup": np.max, "inf": np.min, "any": lambda a: a[0]}[scheme.rule](vals))


# ----------------------------------------------------------------- solver

def effective_lambda(scheme: SchemeSpec, grid: Grid2D, u) -> float:
    """Bound on the second-order coefficient of the residual on the current
    field, with the zeroth-order sensitivity folded in at the grid scale."""
    u = np.asarray(u, dtype=float).reshape(-1)
    st = grid.stencil(scheme.pairs)
    ii = grid.interior
    pair_ids = np.arange(1) if scheme.rule == "any" else np.arange(scheme.pairs)
    D, g = _pair_differences(st, u, ii, pair_ids)
    A = _diag(D)
    v = np.moveaxis(g, 1, -1)
    if scheme.kernel.singular_at_zero or scheme.kernel.degenerate_at_zero:
        # sensitivities at vanishing gradients are measured along unit directions
        tiny = np.linalg.norm(v, axis=-1, keepdims=True) == 0
        v = np.where(tiny, np.array([1.0, 0.0]), v)
    s = np.broadcast_to(u[ii], D.shape[:1] + D.shape[2:])
    X = ii.astype(np.int64)[None]
    f = scheme.kernel
    eps = 1e-6 * (1.0 + np.max(np.abs(D)))
    base = f(s, v, A, X)
    S = (base - f(s, v, A + eps * np.eye(2), X)) / eps
    Ls = (f(s + eps, v, A, X) - base) / eps
    S = float(np.nanmax(np.abs(S)))
    Ls = float(np.nanmax(np.abs(Ls))) if scheme.kernel.s_dependent else 0.0
    return max(S / 2.0 + st.dmin ** 2 * Ls / 4.0, 1e-12)


def stable_damping(scheme: SchemeSpec, grid: Grid2D, u, cushion=1.1) -> float:
    """``spacing^2 / (4 Lambda_eff)`` with the shortest stencil arm as spacing."""
    st = grid.stencil(scheme.pairs)
    return st.dmin ** 2 / (4.0 * cushion * effective_lambda(scheme, grid, u))


def solve_dirichlet(scheme: SchemeSpec, grid: Grid2D, boundary, damping=None, tol=SOLVE_TOL,
                    max_sweeps=MAX_SWEEPS):
    """Relax ``u <- u - damping * R[u]`` at interior nodes until
    ``max |R| <= tol``.

    ``boundary`` gives values at every node; boundary nodes keep them and
    the interior entries are the initial guess.  Returns
    ``(DiscreteField, info)``; raises ConvergenceError past ``max_sweeps``.
    """
    scheme.require_monotone()
    u = np.array(boundary, dtype=float).reshape(-1)
    if u.shape != (grid.count,):
        raise ValueError("boundary data does not match the grid")
    if not np.all(np.isfinite(u)):
        raise ValueError("boundary data must be finite")
    ii = grid.interior
    fixed = damping is not None
    if fixed:
        limit = stable_damping(scheme, grid, u, cushion=1.0)
        if damping > limit * (1 + 1e-12):
            raise ValueError(f"damping {damping:g} exceeds the stability bound {limit:g}")
    tau = damping if fixed else stable_damping(scheme, grid, u)
    info = {"sweeps": 0, "residual": math.inf, "damping": tau, "converged": False}
    for sweep in range(max_sweeps + 1):
        res, flagged = discretize(scheme, grid, u)
        r = float(np.max(np.abs(res[ii]))) if len(ii) else 0.0
        info.update(sweeps=sweep, residual=r)
        if r <= tol:
            info["converged"] = True
            return DiscreteField(grid, u, flagged), info
        if not np.isfinite(r):
            break
        if not fixed and sweep and sweep % REFRESH_EVERY == 0:
            tau = min(tau, stable_damping(scheme, grid, u)) if scheme.kernel.gradient_free \
                else stable_damping(scheme, grid, u)
            info["damping"] = tau
        u[ii] -= tau * res[ii]
    raise ConvergenceError(f"no convergence after {info['sweeps']} sweeps "
                           f"(residual {info['residual']:.3g})", DiscreteField(grid, np.nan_to_num(u)), info)


# ------------------------------------------------------ structural checks

def check_monotone(scheme: SchemeSpec, grid: Grid2D, count=10_000, seed=0, tol=1e-10) -> PropertyReport:
    """Raising single node values must not raise the residual at other nodes.

    Nodes on a sublattice of period ``2 REACH + 1`` have disjoint stencils,
    so each batch perturbs a whole sublattice at once.
    """
    rng = np.random.default_rng(seed)
    period = 2 * REACH + 1
    done = 0
    worst = math.inf
    rep = PropertyReport(f"monotone[{scheme.kernel_id};{scheme.rule}]", PASS, 0.0,
                         sampling=sampling.describe(seed, count, size=grid.size))
    x, y = grid.chart.T
    while done < count:
        c = rng.uniform(-1, 1, size=6)
        u = c[0] + c[1] * x + c[2] * y + c[3] * x * x + c[4] * x * y + c[5] * y * y
        u = u + 0.1 * rng.standard_normal(grid.count)
        r0, _ = discretize(scheme, grid, u)
        a, b = rng.integers(0, period, size=2)
        hit = ((grid.ij[:, 0] % period) == a) & ((grid.ij[:, 1] % period) == b)
        du = np.where(hit, 10.0 ** rng.uniform(-3, 0, size=grid.count), 0.0)
        r1, _ = discretize(scheme, grid, u + du)
        others = np.zeros(grid.count, dtype=bool)
        others[grid.interior] = True
        others &= ~hit
        excess = (r1 - r0)[others] - tol * (1.0 + np.abs(r0[others]))
        m = -float(np.max(excess))
        if m < worst:
            worst = m
        if m < 0:
            node = int(np.flatnonzero(others)[np.argmax(excess)])
            rep.add_witness(f"node {node} residual rose", m)
        done += int(np.count_nonzero(hit))
    rep.min_margin = worst
    rep.verdict = PASS if worst >= 0 else FAIL
    rep.details["perturbations"] = done
    return rep


def check_discrete_comparison(scheme: SchemeSpec, grid: Grid2D, pairs=20, seed=0, tol=1e-8,
                              solve_tol=SOLVE_TOL) -> PropertyReport:
    """Ordered boundary data must give ordered solutions."""
    rng = np.random.default_rng(seed)
    x, y = grid.chart.T
    worst = math.inf
    rep = PropertyReport(f"discrete-comparison[{scheme.kernel_id}]", PASS, 0.0,
                         sampling=sampling.describe(seed, pairs, size=grid.size))
    for t in range(pairs):
        c = rng.uniform(-1, 1, size=5)
        g1 = c[0] + c[1] * x + c[2] * y + c[3] * np.sin(3 * x + c[4] * y)
        d = rng.uniform(0, 1, size=3)
        g2 = g1 + d[0] + d[1] * (1 + np.cos(2 * x + 3 * d[2] * y))
        u1, _ = solve_dirichlet(scheme, grid, g1, tol=solve_tol)
        u2, _ = solve_dirichlet(scheme, grid, g2, tol=solve_tol)
        m = float(np.min(u2.values - u1.values)) + tol
        worst = min(worst, m)
        if m < 0:
            rep.add_witness(f"pair {t}", m)
    rep.min_margin = worst
    rep.verdict = PASS if worst >= 0 else FAIL
    return rep


def consistency_errors(scheme: SchemeSpec, m: ManifoldModel, field_fn, jet_fn, spacings):
    """Residual at the chart center against the exact stencil value, per spacing.

    ``field_fn`` maps ambient points to values and ``jet_fn(x, frame)``
    gives the exact jet there in the chart frame of the grid.  Returns the errors and the
    gap between the stencil value and the kernel on the jet, which is the
    directional resolution error of the scheme.
    """
    errs = []
    for h in spacings:
        grid = Grid2D(m, h, 2 * REACH + 1)
        u = np.array([field_fn(p) for p in grid.points])
        res, _ = discretize(scheme, grid, u)
        c = grid.center_index
        jet = jet_fn(grid.points[c], grid.frame)
        errs.append(abs(res[c] - stencil_value(scheme, jet, np.int64(c))))
    x = Grid2D(m, spacings[0], 2 * REACH + 1)
    c = x.center_index
    jet = jet_fn(x.points[c], x.frame)
    resolution = abs(stencil_value(scheme, jet, np.int64(c)) - float(scheme.kernel(jet.s, jet.q, jet.Q, np.int64(c))))
    return np.array(errs), resolution


def observed_rates(errors, spacings):
    e = np.asarray(errors, dtype=float)
    h = np.asarray(spacings, dtype=float)
    return np.log(e[:-1] / e[1:]) / np.log(h[:-1] / h[1:])


# ------------------------------------------------------ maximum principles

@dataclass
class PropagationResult:
    verdict: str             # "constant" or "nonconstant"
    extreme: float
    trace: list              # nodes reached per propagation layer
    reached: int
    total: int
    witness: int | None = None
    flagged: int = 0
    details: dict = field(default_factory=dict)

    @property
    def constant(self) -> bool:
        return self.verdict == "constant"


def _propagate(grid: Grid2D, npairs, at_ext):
    """Breadth-first spread through stencil neighbours, starting from the
    interior nodes at the extreme value."""
    st = grid.stencil(npairs)
    nbrs = np.concatenate([st.plus.reshape(-1, len(grid.interior)),
                           st.minus.reshape(-1, len(grid.interior))], axis=0)
    pos = np.full(grid.count, -1)
    pos[grid.interior] = np.arange(len(grid.interior))
    seeds = [k for k in grid.interior if at_ext[k]]
    seen = np.zeros(grid.count, dtype=bool)
    seen[seeds] = True
    trace = [len(seeds)]
    front = deque(seeds)
    while front:
        nxt = []
        for _ in range(len(front)):
            k = front.popleft()
            if pos[k] < 0:
                continue   # boundary nodes close the stencil chain
            for j in nbrs[:, pos[k]]:
                if at_ext[j] and not seen[j]:
                    seen[j] = True
                    nxt.append(j)
        if nxt:
            trace.append(len(nxt))
        front.extend(nxt)
    return seen, trace


def _extreme_test(scheme, grid, u, tol, atol, sign):
    # sign = +1: maxima of subsolutions; sign = -1: minima of supersolutions
    scheme.require_monotone()
    u = np.asarray(u, dtype=float).reshape(-1)
    res, flagged = discretize(scheme, grid, u, envelope="lower" if sign > 0 else "upper")
    ii = grid.interior
    bad = sign * res[ii]
    if len(ii) and np.max(bad) > tol:
        k = int(ii[np.argmax(bad)])
        kind = "subsolution" if sign > 0 else "supersolution"
        raise PreconditionError(f"not a discrete {kind}: residual {res[k]:.3g} at node {k}",
                                "not a " + kind, k, float(res[k]))
    active = grid.active(scheme.pairs)
    w = np.where(active, sign * u, -np.inf)
    M = float(np.max(w))
    at_ext = w >= M - atol
    if M < -atol or not np.any(at_ext[ii]):
        what = "nonnegative interior maximum" if sign > 0 else "nonpositive interior minimum"
        raise PreconditionError(f"field has no {what}", "no interior extreme")
    seen, trace = _propagate(grid, scheme.pairs, at_ext)
    const = bool(np.all(at_ext[active]))
    witness = None if const else int(np.argmin(np.where(active, w, np.inf)))
    return PropagationResult("constant" if const else "nonconstant", sign * M, trace,
                             int(np.count_nonzero(seen)), int(np.count_nonzero(active)), witness,
                             int(np.count_nonzero(flagged)),
                             {"at_extreme": int(np.count_nonzero(at_ext))})


def smp_propagation_test(scheme: SchemeSpec, grid: Grid2D, u, tol=SUBSOLUTION_TOL, atol=0.0):
    """For a discrete subsolution with a nonnegative interior maximum, follow
    the set where the maximum is attained through the stencil.

    Only nodes the scheme reads take part (the grid corners do not).  Nodes
    within ``atol`` of the maximum count as maximal.  Raises
    PreconditionError if ``u`` is not a subsolution (with the worst node) or
    has no such maximum.
    """
    return _extreme_test(scheme, grid, u, tol, atol, +1)


def smp_minimum_test(scheme: SchemeSpec, grid: Grid2D, v, tol=SUBSOLUTION_TOL, atol=0.0):
    """The same for the minimum of a discrete supersolution."""
    return _extreme_test(scheme, grid, v, tol, atol, -1)


def smp_mirror_test(scheme: SchemeSpec, grid: Grid2D, v, tol=SUBSOLUTION_TOL, atol=0.0):
    """Minimum test for ``v`` directly and through the reflected operator
    applied to ``-v``.  Returns ``(direct, mirrored)`` where each entry is a
    PropagationResult or the PreconditionError raised."""
    out = []
    for sch, fld, fn in ((scheme, v, smp_minimum_test),
                         (scheme.reflected(), -np.asarray(v, dtype=float), smp_propagation_test)):
        try:
            out.append(fn(sch, grid, fld, tol, atol))
        except PreconditionError as exc:
            out.append(exc)
    return tuple(out)


def outcome(result) -> str:
    """``constant``/``nonconstant``, or ``rejected`` / ``vacuous`` for the
    two precondition failures."""
    if isinstance(result, PreconditionError):
        return "rejected" if result.reason.startswith("not") else "vacuous"
    return result.verdict


def spike_field(grid: Grid2D, node=None, height=1.0):
    u = np.zeros(grid.count)
    u[grid.center_index if node is None else node] = height
    return u


def grid_counterexample(grid: Grid2D, node=None):
    """The counterexample kernel with its center at a grid node (matched by index)."""
    return counterexample(np.int64(grid.center_index if node is None else node))


# ------------------------------------------------------- strong comparison

@dataclass
class ComparisonResult:
    verdict: str              # "identity", "strict separation" or "violation"
    max_gap: float            # max (u - v)
    propagation: PropagationResult | None
    margins: dict


def strong_comparison_test(scheme: SchemeSpec, grid: Grid2D, u, v, tol=SUBSOLUTION_TOL, atol=1e-9):
    """Either ``u < v`` at every interior node or ``u == v`` on the grid.

    ``u`` must be a discrete subsolution, ``v`` a supersolution with
    ``u <= v``.  The difference ``w = u - v`` is checked to be a subsolution
    itself and then handed to the propagation test.
    """
    u = np.asarray(u, dtype=float).reshape(-1)
    v = np.asarray(v, dtype=float).reshape(-1)
    ii = grid.interior
    w = u - v
    gap = float(np.max(w))
    if gap > atol:
        k = int(np.argmax(w))
        raise PreconditionError(f"u exceeds v by {gap:.3g} at node {k}", "order violated", k, gap)
    ru, _ = discretize(scheme, grid, u)
    rv, _ = discretize(scheme, grid, v, envelope="upper")
    rw, _ = discretize(scheme, grid, w)
    margins = {"sub_u": -float(np.max(ru[ii])), "super_v": float(np.min(rv[ii])),
               "sub_w": -float(np.max(rw[ii]))}
    if margins["sub_u"] < -tol:
        raise PreconditionError("u is not a discrete subsolution", "not a subsolution")
    if margins["super_v"] < -tol:
        raise PreconditionError("v is not a discrete supersolution", "not a supersolution")
    if float(np.max(w[ii])) < gap - atol or gap < -atol:
        return ComparisonResult("strict separation", gap, None, margins)
    prop = smp_propagation_test(scheme, grid, w, tol=tol, atol=atol)
    return ComparisonResult("identity" if prop.constant else "violation", gap, prop, margins)


# -------------------------------------------------- sample-wise checks

def counterexample_subsolution_check(m: ManifoldModel, x0=None, count=10_000, seed=0) -> PropertyReport:
    """The spike (1 at ``x0``, 0 elsewhere) against smooth test jets.

    At ``x0`` every jet with value 1 gives ``-t/(1+|t|) - 1 < 0``; away from
    ``x0`` the zero jet gives 0.
    """
    rng = np.random.default_rng(seed)
    x0 = m.origin() if x0 is None else np.asarray(x0, dtype=float)
    kern = counterexample(x0)
    n = m.n
    Q = sampling.sym_samples(rng, count, n) * (10.0 ** rng.uniform(-6, 6, size=count))[:, None, None]
    q = sampling.vec_samples(rng, count, n)
    # pin the extreme traces and zero explicitly
    for k, t in enumerate((0.0, 1e6, -1e6)):
        Q[k] = np.eye(n) * t / n
    at = kern(np.ones(count), q, Q, np.broadcast_to(x0, (count, len(x0))))
    t = np.trace(Q, axis1=1, axis2=2)
    exact = -t / (1 + np.abs(t)) - 1
    others = np.array([_random_other(m, rng, x0) for _ in range(100)])
    off = kern(np.zeros(len(others)), np.zeros((len(others), n)), np.zeros((len(others), n, n)), others)
    margin = min(-float(np.max(at)), -float(np.max(off)))
    err = float(np.max(np.abs(at - exact)))
    ok = np.max(at) < 0 and np.max(off) <= 0 and err <= 1e-12
    rep = PropertyReport("counterexample-subsolution", PASS if ok else FAIL, margin,
                         sampling=sampling.describe(seed, count, trace_log10=(-6, 6)))
    rep.details["formula_error"] = err
    if np.max(at) >= 0:
        rep.add_witness("nonnegative value at the center", -float(np.max(at)))
    return rep


def _random_other(m, rng, x0):
    from .geometry import random_point
    while True:
        x = random_point(m, rng, center=x0, max_dist=1.0)
        if not np.array_equal(x, x0):
            return x


def linearized_domination_check(kernel: OperatorKernel, n=2, count=10_000, seed=0,
                                tol=1e-9) -> PropertyReport:
    """``F(b - j) - F(b) >= -G(j)`` with ``G = M+(Q) + C(|s| + |q|)`` over
    sampled base jets ``b`` and jets ``j``; the zero base is included."""
    if kernel.ellipticity is None or kernel.lipschitz is None:
        raise ValueError(f"{kernel.id} has no declared ellipticity constants or Lipschitz bound")
    lam, Lam = kernel.ellipticity_constants(n)
    C = kernel.lipschitz
    rng = np.random.default_rng(seed)

    def jets(k):
        s = rng.uniform(-1, 1, size=k) * 10.0 ** rng.uniform(-2, 2, size=k)
        return s, sampling.vec_samples(rng, k, n), sampling.sym_samples(rng, k, n) * \
            (10.0 ** rng.uniform(-2, 2, size=k))[:, None, None]

    bs, bq, bQ = jets(count)
    js, jq, jQ = jets(count)
    bs[0], bq[0], bQ[0] = 0.0, 0.0, 0.0
    js[1], jq[1], jQ[1] = 0.0, 0.0, 0.0
    lhs = kernel(bs - js, bq - jq, bQ - jQ) - kernel(bs, bq, bQ)
    G = pucci_plus_value(jQ, lam, Lam) + C * (np.abs(js) + np.linalg.norm(jq, axis=-1))
    scale = 1.0 + np.abs(G)
    margin = (lhs + G) / scale
    worst = float(np.min(margin))
    rep = PropertyReport(f"linearized-domination[{kernel.id}]", PASS if worst >= -tol else FAIL,
                         worst, sampling=sampling.describe(seed, count, n=n))
    rep.details["constants"] = f"{lam:g},{Lam:g},{C:g}"
    if worst < -tol:
        rep.add_witness(f"sample {int(np.argmin(margin))}", worst)
    return rep
