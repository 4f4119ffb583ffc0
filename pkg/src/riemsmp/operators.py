"""O(n)-invariant Euclidean operator kernels and their algebraic checks.

A kernel is a vectorized callable ``F(s, v, A, x=None)`` over batches: ``s``
has shape ``(...)``, ``v`` shape ``(..., n)`` and ``A`` shape ``(..., n, n)``.
The sign convention is the degenerate-elliptic one: ``F`` is non-increasing
in ``A``.  ``x`` is only consulted by position-dependent kernels; it may be an
ambient point array or an integer array of grid indices.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .jets import Jet2
from .linalg import sym_eigenvalues
from .reports import FAIL, PASS, PropertyReport
from . import sampling

# eigenvalues below this fraction of ||A||_F count as zero in Pucci sums
PUCCI_ZERO_TOL = 1e-12


class SingularJetError(ValueError):
    """Evaluation of a kernel that is singular at ``q = 0`` on such a jet."""


def _trace(A):
    return np.trace(A, axis1=-2, axis2=-1)


def _vAv(v, A):
    return np.einsum("...i,...ij,...j->...", v, A, v)


def _norm(v):
    return np.linalg.norm(v, axis=-1)


def _like_s(val, s):
    # broadcast a value that does not depend on s against the batch of s
    return val + 0.0 * np.asarray(s, dtype=float)


def _pucci_parts(A):
    A = np.asarray(A, dtype=float)
    mu = sym_eigenvalues(A)
    scale = np.sqrt(np.sum(A * A, axis=(-2, -1)))[..., None]
    mu = np.where(np.abs(mu) <= PUCCI_ZERO_TOL * scale, 0.0, mu)
    pos = np.sum(np.where(mu > 0, mu, 0.0), axis=-1)
    neg = np.sum(np.where(mu < 0, mu, 0.0), axis=-1)
    return pos, neg


def pucci_plus_value(A, lam, Lam):
    pos, neg = _pucci_parts(A)
    return -lam * pos - Lam * neg


def pucci_minus_value(A, lam, Lam):
    pos, neg = _pucci_parts(A)
    return -Lam * pos - lam * neg


@dataclass(frozen=True)
class OperatorKernel:
    id: str
    func: Callable
    singular_at_zero: bool = False
    degenerate_at_zero: bool = False   # the principal part vanishes at q = 0
    homogeneity: float | None = None
    # (lam, Lam) or a callable n -> (lam, Lam)
    ellipticity: tuple | Callable | None = None
    lipschitz: float | None = None
    universal: bool = True       # no dependence on the base point
    invariant: bool = True       # O(n)-invariant in (v, A)
    s_dependent: bool = False
    rank1_gain: Callable | None = None   # exact F(v, A - a vv^T) - F(v, A)
    frame_rule: str = "align"    # how a discrete scheme combines stencil pairs
    gradient_free: bool = False
    min_dim: int = 1
    max_dim: int | None = None
    center: object = None        # marked position of x-dependent kernels

    def __call__(self, s, v, A, x=None):
        v = np.asarray(v, dtype=float)
        A = np.asarray(A, dtype=float)
        n = v.shape[-1]
        if n < self.min_dim or (self.max_dim is not None and n > self.max_dim):
            raise ValueError(f"{self.id} is not defined in dimension {n}")
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.func(np.asarray(s, dtype=float), v, A, x)

    def ellipticity_constants(self, n):
        if callable(self.ellipticity):
            return self.ellipticity(n)
        return self.ellipticity


def evaluate(kernel: OperatorKernel, x, jet: Jet2) -> float:
    """Value of the lifted operator on a jet given in frame coordinates."""
    if kernel.singular_at_zero and not jet.regular:
        raise SingularJetError(f"{kernel.id} is singular at a vanishing gradient")
    return float(kernel(jet.s, jet.q, jet.Q, x))


def reflect(kernel: OperatorKernel) -> OperatorKernel:
    """``F^-(s, v, A) = -F(-s, -v, -A)``."""
    f = kernel.func

    def func(s, v, A, x=None):
        return -f(-s, -v, -A, x)

    swap = {"sup": "inf", "inf": "sup"}
    return replace(kernel, id=f"reflect({kernel.id})", func=func, rank1_gain=None,
                   frame_rule=swap.get(kernel.frame_rule, kernel.frame_rule))


# ---------------------------------------------------------------- catalog

def laplace_beltrami():
    return OperatorKernel(
        "laplace-beltrami", lambda s, v, A, x=None: _like_s(-_trace(A), s),
        homogeneity=1.0, ellipticity=(1.0, 1.0), lipschitz=0.0,
        rank1_gain=lambda v, a: a * _norm(v) ** 2, frame_rule="any", gradient_free=True)


def monge_ampere():
    return OperatorKernel("monge-ampere", lambda s, v, A, x=None: _like_s(np.linalg.det(A), s),
                          frame_rule="any", gradient_free=True, lipschitz=0.0)


def pucci_plus(lam=1.0, Lam=2.0):
    _check_constants(lam, Lam)
    return OperatorKernel(
        f"pucci+:{lam:g},{Lam:g}",
        lambda s, v, A, x=None: _like_s(pucci_plus_value(A, lam, Lam), s),
        homogeneity=1.0, ellipticity=(lam, Lam), lipschitz=0.0, frame_rule="sup",
        gradient_free=True)


def pucci_minus(lam=1.0, Lam=2.0):
    _check_constants(lam, Lam)
    return OperatorKernel(
        f"pucci-:{lam:g},{Lam:g}",
        lambda s, v, A, x=None: _like_s(pucci_minus_value(A, lam, Lam), s),
        homogeneity=1.0, ellipticity=(lam, Lam), lipschitz=0.0, frame_rule="inf",
        gradient_free=True)


def _check_constants(lam, Lam):
    if not 0 < lam <= Lam:
        raise ValueError(f"need 0 < lambda <= Lambda, got ({lam}, {Lam})")


def _orig_pucci(alpha, which):
    if alpha <= 0:
        raise ValueError("alpha must be positive")

    def func(s, v, A, x=None):
        n = A.shape[-1]
        if alpha > 1.0 / n:
            raise ValueError(f"alpha must be at most 1/n = {1.0 / n:g}")
        mu = sym_eigenvalues(A)
        extreme = mu[..., 0] if which == "+" else mu[..., -1]
        return _like_s(-alpha * _trace(A) - (1 - n * alpha) * extreme, s)

    return OperatorKernel(
        f"pucci-orig{which}:{alpha:g}", func, homogeneity=1.0,
        ellipticity=lambda n: (alpha, 1 - (n - 1) * alpha), lipschitz=0.0,
        frame_rule="sup" if which == "+" else "inf", gradient_free=True)


def pucci_orig_plus(alpha):
    return _orig_pucci(alpha, "+")


def pucci_orig_minus(alpha):
    return _orig_pucci(alpha, "-")


def _trace_form(kid, p):
    # both p-Laplacians collapse to -Tr A at p = 2
    return OperatorKernel(
        kid, lambda s, v, A, x=None: _like_s(-_trace(A), s), homogeneity=1.0, ellipticity=(1.0, 1.0),
        lipschitz=0.0, rank1_gain=lambda v, a: a * (p - 1) * _norm(v) ** 2, frame_rule="any",
        gradient_free=True)


def p_laplacian(p):
    if not 1 < p < np.inf:
        raise ValueError("p must lie in (1, inf)")
    if p == 2:
        return _trace_form("p-laplacian:2", p)

    def func(s, v, A, x=None):
        r2 = np.sum(v * v, axis=-1)
        # |v|^{p-4} vAv extends continuously to v = 0 once p >= 2
        if p >= 2:
            radial = np.where(r2 > 0, r2 ** ((p - 4) / 2) * _vAv(v, A), 0.0)
        else:
            radial = r2 ** ((p - 4) / 2) * _vAv(v, A)
        return _like_s(-(r2 ** ((p - 2) / 2)) * _trace(A) - (p - 2) * radial, s)

    return OperatorKernel(
        f"p-laplacian:{p:g}", func, singular_at_zero=p < 2, degenerate_at_zero=p > 2,
        homogeneity=p - 1.0,
        rank1_gain=lambda v, a: a * (p - 1) * _norm(v) ** p, lipschitz=None)


def game_p_laplacian(p):
    if not 1 < p < np.inf:
        raise ValueError("p must lie in (1, inf)")
    if p == 2:
        return _trace_form("game-p-laplacian:2", p)

    def func(s, v, A, x=None):
        r2 = np.sum(v * v, axis=-1)
        return _like_s(-_trace(A) - (p - 2) * _vAv(v, A) / r2, s)

    return OperatorKernel(
        f"game-p-laplacian:{p:g}", func, singular_at_zero=True, homogeneity=1.0,
        rank1_gain=lambda v, a: a * (p - 1) * _norm(v) ** 2)


def inf_laplacian():
    return OperatorKernel(
        "inf-laplacian", lambda s, v, A, x=None: _like_s(-_vAv(v, A), s), homogeneity=3.0,
        degenerate_at_zero=True,
        rank1_gain=lambda v, a: a * _norm(v) ** 4)


def inf_laplacian_h(h):
    if h <= 0:
        raise ValueError("h must be positive")

    def func(s, v, A, x=None):
        r = _norm(v)
        if h >= 3:
            val = -(r ** (h - 3)) * _vAv(v, A)
        else:
            val = -np.where(r > 0, r ** (h - 3) * _vAv(v, A), np.nan)
        return _like_s(val, s)

    return OperatorKernel(
        f"inf-laplacian-h:{h:g}", func, singular_at_zero=h < 3, degenerate_at_zero=h >= 3,
        homogeneity=float(h),
        rank1_gain=lambda v, a: a * _norm(v) ** (h + 1))


def mean_curvature():
    def func(s, v, A, x=None):
        w = 1.0 + np.sum(v * v, axis=-1)
        return _like_s(w ** -1.5 * (-w * _trace(A) + _vAv(v, A)), s)

    return OperatorKernel(
        "mean-curvature", func,
        rank1_gain=lambda v, a: a * _norm(v) ** 2 * (1 + _norm(v) ** 2) ** -1.5)


def grad_power_pucci(beta, lam=1.0, Lam=2.0, sign="+"):
    if beta <= 1:
        raise ValueError("beta must exceed 1")
    _check_constants(lam, Lam)
    if sign not in "+-" or len(sign) != 1:
        raise ValueError("sign must be '+' or '-'")
    extremal = pucci_plus_value if sign == "+" else pucci_minus_value

    def func(s, v, A, x=None):
        return _like_s(_norm(v) ** beta * extremal(A, lam, Lam), s)

    return OperatorKernel(
        f"grad-power-pucci:{beta:g},{lam:g},{Lam:g},{sign}", func, homogeneity=beta + 1.0,
        degenerate_at_zero=True,
        frame_rule="sup" if sign == "+" else "inf")


def capillary(H=1.0):
    def func(s, v, A, x=None):
        n = v.shape[-1]
        w = 1.0 + np.sum(v * v, axis=-1)
        return n * H * s * w ** 1.5 - w * _trace(A) + _vAv(v, A)

    return OperatorKernel(f"capillary:{H:g}", func, s_dependent=True,
                          rank1_gain=lambda v, a: a * _norm(v) ** 2)


def capillary_principal(H=1.0):
    """``nH s - Tr A``: the 1-homogeneous part of the capillary operator."""
    def func(s, v, A, x=None):
        return v.shape[-1] * H * s - _trace(A)

    return OperatorKernel(f"capillary-principal:{H:g}", func, homogeneity=1.0, s_dependent=True,
                          ellipticity=(1.0, 1.0), lipschitz=None, frame_rule="any",
                          gradient_free=True, rank1_gain=lambda v, a: a * _norm(v) ** 2)


def zeroth_order_wrap(kernel, a, c, k):
    """``a(x) F(v, A) + c(x) |s|^{k-1} s``; ``a`` and ``c`` are callbacks
    (or constants) evaluated on the position argument."""
    if k <= 0:
        raise ValueError("k must be positive")
    a_fn = a if callable(a) else (lambda x, _a=a: _a)
    c_fn = c if callable(c) else (lambda x, _c=c: _c)

    def func(s, v, A, x=None):
        return a_fn(x) * kernel.func(s, v, A, x) + c_fn(x) * np.abs(s) ** (k - 1) * s

    fixed = not (callable(a) or callable(c))
    return OperatorKernel(
        f"zeroth-order({kernel.id};k={k:g})", func, singular_at_zero=kernel.singular_at_zero,
        homogeneity=kernel.homogeneity if kernel.homogeneity == k else None,
        universal=kernel.universal and fixed, invariant=kernel.invariant, s_dependent=True,
        frame_rule=kernel.frame_rule, gradient_free=kernel.gradient_free)


def hessian_drift(kernel, p, b):
    """``|v|^{p-2} (F(A) + <v, b(x)>)`` with ``b`` a vector or a callback."""
    b_fn = b if callable(b) else (lambda x, _b=np.asarray(b, dtype=float): _b)

    def func(s, v, A, x=None):
        r = _norm(v)
        return r ** (p - 2) * (kernel.func(s, v, A, x) + np.sum(v * b_fn(x), axis=-1))

    lip = None
    if p == 2 and not callable(b) and kernel.lipschitz is not None:
        lip = kernel.lipschitz + float(np.linalg.norm(b))
    return OperatorKernel(
        f"hessian-drift({kernel.id};p={p:g})", func, singular_at_zero=p < 2,
        degenerate_at_zero=p > 2,
        lipschitz=lip, universal=not callable(b), invariant=False, frame_rule=kernel.frame_rule)


def counterexample(x0=None):
    """``-t/(1+|t|) + f(x)`` with ``t = Tr A`` and ``f = -1`` exactly at ``x0``.

    ``x0`` is either an ambient point (matched by exact equality) or an
    integer grid index (matched against integer position arrays).
    """
    def func(s, v, A, x=None):
        t = _trace(A)
        return _like_s(-t / (1 + np.abs(t)) - at_center(x, x0), s)

    return OperatorKernel("counterexample", func, universal=False, frame_rule="any",
                          gradient_free=True, center=x0)


def at_center(x, x0):
    """1.0 where the position ``x`` is exactly the marked center, else 0.0."""
    if x is None or x0 is None:
        return 0.0
    xa = np.asarray(x)
    ca = np.asarray(x0)
    int_x = np.issubdtype(xa.dtype, np.integer)
    int_c = np.issubdtype(ca.dtype, np.integer)
    if int_x != int_c:
        return np.zeros(xa.shape if int_x else xa.shape[:-1])
    if int_x:
        return (xa == ca).astype(float) if ca.ndim == 0 else np.all(xa == ca, axis=-1).astype(float)
    return np.all(xa == ca, axis=-1).astype(float)


def kernel_from_id(kid: str) -> OperatorKernel:
    """Build a catalog kernel from ids such as ``pucci+``, ``p-laplacian:3``
    or ``grad-power-pucci:2,1,2,+``."""
    name, _, args = kid.strip().partition(":")
    raw = [a for a in args.split(",") if a] if args else []

    def nums(count, defaults=()):
        vals = [float(a) for a in raw if a not in "+-"] if raw else list(defaults)
        if len(vals) != count:
            raise ValueError(f"kernel {name!r} expects {count} parameter(s), got {args!r}")
        return vals

    try:
        if name in ("laplace-beltrami", "lb"):
            return laplace_beltrami()
        if name == "monge-ampere":
            return monge_ampere()
        if name == "pucci+":
            return pucci_plus(*nums(2, (1.0, 2.0)))
        if name == "pucci-":
            return pucci_minus(*nums(2, (1.0, 2.0)))
        if name == "pucci-orig+":
            return pucci_orig_plus(*nums(1, (0.25,)))
        if name == "pucci-orig-":
            return pucci_orig_minus(*nums(1, (0.25,)))
        if name == "p-laplacian":
            return p_laplacian(*nums(1))
        if name == "game-p-laplacian":
            return game_p_laplacian(*nums(1))
        if name == "inf-laplacian":
            return inf_laplacian()
        if name == "inf-laplacian-h":
            return inf_laplacian_h(*nums(1))
        if name == "mean-curvature":
            return mean_curvature()
        if name == "capillary":
            return capillary(*nums(1, (1.0,)))
        if name == "counterexample":
            return counterexample()
        if name == "grad-power-pucci":
            sign = raw[-1] if raw and raw[-1] in ("+", "-") else "+"
            return grad_power_pucci(*nums(3, (2.0, 1.0, 2.0)), sign=sign)
    except (TypeError, ValueError) as err:
        raise ValueError(f"bad kernel id {kid!r}: {err}") from None
    raise ValueError(f"unknown kernel id {kid!r}")


CATALOG_IDS = (
    "laplace-beltrami", "monge-ampere", "pucci+", "pucci-", "pucci-orig+", "pucci-orig-",
    "p-laplacian:3", "game-p-laplacian:3", "inf-laplacian", "inf-laplacian-h:2",
    "mean-curvature", "grad-power-pucci:2,1,2,+", "capillary:1", "counterexample",
)


# ------------------------------------------------------ algebraic checks

def _unpack(jet):
    if isinstance(jet, Jet2):
        return jet.s, jet.q, jet.Q
    s, v, A = jet
    return np.asarray(s, dtype=float), np.asarray(v, dtype=float), np.asarray(A, dtype=float)


def exact_rank1_identities(kernel: OperatorKernel, jet, alpha):
    """``(F(s, v, A - a vv^T), F(s, v, A) + gain(v, a))``; equal for kernels
    with an exact rank-one gain."""
    if kernel.rank1_gain is None:
        raise ValueError(f"{kernel.id} has no exact rank-one identity")
    s, v, A = _unpack(jet)
    alpha = np.asarray(alpha, dtype=float)
    vv = v[..., :, None] * v[..., None, :]
    lhs = kernel(s, v, A - alpha[..., None, None] * vv)
    rhs = kernel(s, v, A) + kernel.rank1_gain(v, alpha)
    return lhs, rhs


def pucci_rank1_inequality(lam, Lam, A, v, alpha):
    """``(M^-(A - a vv^T), M^-(A) + a lam |v|^2)``; lhs never falls below rhs."""
    A = np.asarray(A, dtype=float)
    v = np.asarray(v, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    vv = v[..., :, None] * v[..., None, :]
    lhs = pucci_minus_value(A - alpha[..., None, None] * vv, lam, Lam)
    rhs = pucci_minus_value(A, lam, Lam) + alpha * lam * np.sum(v * v, axis=-1)
    return lhs, rhs


def _default_samples(n, count, seed):
    rng = np.random.default_rng(seed)
    s = rng.uniform(-1.0, 1.0, size=count)
    v = sampling.vec_samples(rng, count, n)
    A = sampling.sym_samples(rng, count, n)
    return s, v, A


def pucci_sandwich_check(kernel: OperatorKernel, samples=None, n=3, count=10_000, seed=0,
                         tol=1e-9) -> PropertyReport:
    """``M^-(Q) <= F(s, q, Q) - F(s, q, 0) <= M^+(Q)`` with the declared constants."""
    if samples is None:
        samples = _default_samples(n, count, seed)
    s, v, A = samples
    n = v.shape[-1]
    consts = kernel.ellipticity_constants(n)
    if consts is None:
        raise ValueError(f"{kernel.id} declares no ellipticity constants")
    lam, Lam = consts
    diff = kernel(s, v, A) - kernel(s, v, np.zeros_like(A))
    lower = diff - pucci_minus_value(A, lam, Lam)
    upper = pucci_plus_value(A, lam, Lam) - diff
    margin = np.minimum(lower, upper)
    rep = PropertyReport(f"sandwich[{kernel.id}]", PASS if margin.min() >= -tol else FAIL,
                         float(margin.min()),
                         sampling=sampling.describe(seed, len(margin), n=n))
    rep.details.update(lam=lam, Lam=Lam)
    for i in np.argsort(margin)[:3]:
        if margin[i] < -tol:
            rep.add_witness(f"sample {i}", margin[i])
    return rep


def subadditivity_check(kernel: OperatorKernel, samples=None, n=3, count=10_000, seed=0,
                        tol=1e-9) -> PropertyReport:
    """``F(J1 - J2) <= F(J1) - F(J2)`` on random jet pairs."""
    if samples is None:
        s1, v1, A1 = _default_samples(n, count, seed)
        s2, v2, A2 = _default_samples(n, count, seed + 1)
    else:
        (s1, v1, A1), (s2, v2, A2) = samples
    margin = kernel(s1, v1, A1) - kernel(s2, v2, A2) - kernel(s1 - s2, v1 - v2, A1 - A2)
    rep = PropertyReport(f"subadditive[{kernel.id}]", PASS if margin.min() >= -tol else FAIL,
                         float(margin.min()),
                         sampling=sampling.describe(seed, len(margin), n=v1.shape[-1]))
    for i in np.argsort(margin)[:3]:
        if margin[i] < -tol:
            rep.add_witness(f"pair {i}", margin[i])
    return rep


def monge_ampere_rank1_sup(A, v, alpha_max=1e6, num=200):
    """Largest ``det(A - a vv^T)`` over a log grid of ``a`` in ``[0, alpha_max]``."""
    A = np.asarray(A, dtype=float)
    v = np.asarray(v, dtype=float)
    alphas = np.concatenate([[0.0], np.geomspace(1e-6, alpha_max, num)])
    vals = np.linalg.det(A[None] - alphas[:, None, None] * np.outer(v, v)[None])
    return float(vals.max())
