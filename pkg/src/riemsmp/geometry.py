"""Closed-form geometry of the constant-curvature model spaces.

Points are stored as ambient coordinate vectors:

* ``kappa == 0``: plain vectors in R^n,
* ``kappa > 0``: the sphere of radius ``1/sqrt(kappa)`` in R^{n+1},
* ``kappa < 0``: the upper sheet of the hyperboloid ``<x, x> = 1/kappa`` in
  Minkowski space R^{1,n} (signature ``-, +, ..., +``).

Tangent vectors at ``x`` are ambient vectors ``v`` with ``<x, v> = 0``.  In all
three cases the ambient product restricted to the tangent space is the
Riemannian metric, which keeps every formula below uniform in ``kappa``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

POINT_TOL = 1e-12
TANGENT_TOL = 1e-12
FRAME_TOL = 1e-10
# below this distance the Hessian of the squared distance is not evaluated
MIN_HESSIAN_DIST = 1e-8


class GeometryError(ValueError):
    """Raised for invalid points, frames or out-of-range geodesic queries."""


@dataclass(frozen=True)
class ManifoldModel:
    n: int
    kappa: float

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise GeometryError(f"dimension must be a positive integer, got {self.n!r}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "kappa", float(self.kappa))

    @property
    def ambient_dim(self) -> int:
        return self.n if self.kappa == 0 else self.n + 1

    def inner(self, a, b):
        """Ambient product; Minkowski for negative curvature."""
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        if self.kappa < 0:
            return np.sum(a[..., 1:] * b[..., 1:], axis=-1) - a[..., 0] * b[..., 0]
        return np.sum(a * b, axis=-1)

    def norm(self, v) -> float:
        return math.sqrt(max(float(self.inner(v, v)), 0.0))

    def origin(self) -> np.ndarray:
        """A distinguished base point (the north pole / hyperboloid vertex)."""
        x = np.zeros(self.ambient_dim)
        if self.kappa != 0:
            x[0] = 1.0 / math.sqrt(abs(self.kappa))
        return x

    def project_point(self, x) -> np.ndarray:
        """Push an almost-valid ambient vector back onto the model."""
        x = np.array(x, dtype=float)
        if self.kappa > 0:
            return x / (np.linalg.norm(x) * math.sqrt(self.kappa))
        if self.kappa < 0:
            x[0] = math.sqrt(1.0 / abs(self.kappa) + float(np.dot(x[1:], x[1:])))
        return x

    def project_tangent(self, x, v) -> np.ndarray:
        v = np.array(v, dtype=float)
        if self.kappa == 0:
            return v
        return v - self.kappa * self.inner(x, v) * np.asarray(x, dtype=float)

    def check_point(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.ambient_dim,):
            raise GeometryError(f"point must have shape ({self.ambient_dim},), got {x.shape}")
        if not np.all(np.isfinite(x)):
            raise GeometryError("point has non-finite coordinates")
        if self.kappa != 0:
            scale = max(1.0, abs(self.kappa) * float(np.dot(x, x)))
            if abs(self.kappa * float(self.inner(x, x)) - 1.0) > 8 * POINT_TOL * scale:
                raise GeometryError("point violates the model constraint")
            if self.kappa < 0 and x[0] <= 0:
                raise GeometryError("point is on the lower hyperboloid sheet")
        return x

    def check_tangent(self, x, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape != (self.ambient_dim,):
            raise GeometryError(f"tangent vector must have shape ({self.ambient_dim},)")
        if self.kappa != 0:
            scale = max(1.0, float(np.linalg.norm(x)) * float(np.linalg.norm(v)))
            if abs(float(self.inner(x, v))) > 8 * TANGENT_TOL * scale:
                raise GeometryError("vector is not tangent at the given base point")
        return v


def _sn(kappa: float, t: float) -> float:
    if kappa > 0:
        k = math.sqrt(kappa)
        return math.sin(k * t) / k
    if kappa < 0:
        k = math.sqrt(-kappa)
        return math.sinh(k * t) / k
    return t


def _cs(kappa: float, t: float) -> float:
    if kappa > 0:
        return math.cos(math.sqrt(kappa) * t)
    if kappa < 0:
        return math.cosh(math.sqrt(-kappa) * t)
    return 1.0


def ct_kappa(kappa: float, d: float) -> float:
    """Tangential eigenvalue of the Hessian of half the squared distance."""
    if kappa == 0 or d == 0:
        return 1.0
    s = math.sqrt(abs(kappa)) * d
    if kappa > 0:
        return s / math.tan(s)
    return s / math.tanh(s)


def injectivity_radius(m: ManifoldModel, x=None) -> float:
    return math.pi / math.sqrt(m.kappa) if m.kappa > 0 else math.inf


def convexity_radius(m: ManifoldModel, x=None) -> float:
    return math.pi / (2 * math.sqrt(m.kappa)) if m.kappa > 0 else math.inf


def distance(m: ManifoldModel, x, y) -> float:
    x = m.check_point(x)
    y = m.check_point(y)
    diff = x - y
    if m.kappa == 0:
        return float(np.linalg.norm(diff))
    # chord-based formulas stay accurate for nearby points
    rad = 1.0 / math.sqrt(abs(m.kappa))
    chord = math.sqrt(max(float(m.inner(diff, diff)), 0.0))
    if m.kappa > 0:
        return 2 * rad * math.asin(min(1.0, chord / (2 * rad)))
    return 2 * rad * math.asinh(chord / (2 * rad))


def exp_map(m: ManifoldModel, x, v) -> np.ndarray:
    x = m.check_point(x)
    v = m.check_tangent(x, v)
    t = m.norm(v)
    if t == 0:
        return x.copy()
    y = _cs(m.kappa, t) * x + (_sn(m.kappa, t) / t) * v
    return m.project_point(y)


def log_map(m: ManifoldModel, x, y) -> np.ndarray:
    x = m.check_point(x)
    y = m.check_point(y)
    d = distance(m, x, y)
    if d == 0:
        return np.zeros_like(x)
    if d >= injectivity_radius(m, x) * (1 - 1e-12):
        raise GeometryError("points are beyond the injectivity radius")
    if m.kappa == 0:
        return y - x
    w = (y - x) - m.kappa * m.inner(x, y - x) * x
    w = m.project_tangent(x, w)
    nw = m.norm(w)
    if nw == 0:
        raise GeometryError("degenerate logarithm")
    return (d / nw) * w


def log_map_batch(m: ManifoldModel, x, y):
    """Vectorized ``log_map`` over stacked points (no validation).

    Returns ``(w, d)`` with ``w`` of the shape of ``x`` and the distances ``d``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    diff = y - x
    if m.kappa == 0:
        return diff, np.linalg.norm(diff, axis=-1)
    rad = 1.0 / math.sqrt(abs(m.kappa))
    chord = np.sqrt(np.maximum(m.inner(diff, diff), 0.0))
    if m.kappa > 0:
        d = 2 * rad * np.arcsin(np.minimum(1.0, chord / (2 * rad)))
    else:
        d = 2 * rad * np.arcsinh(chord / (2 * rad))
    # <x, x> = 1/kappa on both models, so this is tangent at x
    w = diff - m.kappa * m.inner(x, diff)[..., None] * x
    nw = np.sqrt(np.maximum(m.inner(w, w), 0.0))
    with np.errstate(invalid="ignore", divide="ignore"):
        w = np.where(nw[..., None] > 0, w * (d / nw)[..., None], 0.0)
    return w, d


def parallel_transport(m: ManifoldModel, x, y, v) -> np.ndarray:
    """Transport ``v`` from ``x`` to ``y`` along the minimizing geodesic."""
    x = m.check_point(x)
    y = m.check_point(y)
    v = m.check_tangent(x, v)
    if m.kappa == 0:
        return v.copy()
    d = distance(m, x, y)
    if d == 0:
        return v.copy()
    if d >= injectivity_radius(m, x) * (1 - 1e-12):
        raise GeometryError("points are beyond the injectivity radius")
    u = log_map(m, x, y) / d
    a = float(m.inner(u, v))
    u_end = -m.kappa * _sn(m.kappa, d) * x + _cs(m.kappa, d) * u
    out = v + a * (u_end - u)
    return m.project_tangent(y, out)


def dsq_value_grad(m: ManifoldModel, x0, x):
    """Value and gradient at ``x`` of ``f(x) = d(x, x0)^2 / 2``."""
    d = distance(m, x0, x)
    if d >= injectivity_radius(m, x0) * (1 - 1e-12):
        raise GeometryError("point is beyond the injectivity radius of the center")
    return 0.5 * d * d, -log_map(m, x, x0)


@dataclass(frozen=True)
class Frame:
    base: np.ndarray
    vectors: np.ndarray  # shape (n, ambient_dim), rows are the frame vectors

    def coords(self, m: ManifoldModel, v) -> np.ndarray:
        """Components of a tangent vector in this orthonormal frame."""
        return np.array([float(m.inner(e, v)) for e in self.vectors])

    def vector(self, c) -> np.ndarray:
        return np.asarray(c, dtype=float) @ self.vectors


def check_frame(m: ManifoldModel, frame: Frame) -> Frame:
    m.check_point(frame.base)
    vecs = np.asarray(frame.vectors, dtype=float)
    if vecs.shape != (m.n, m.ambient_dim):
        raise GeometryError("frame has the wrong number or size of vectors")
    gram = np.array([[float(m.inner(a, b)) for b in vecs] for a in vecs])
    if np.max(np.abs(gram - np.eye(m.n))) > FRAME_TOL:
        raise GeometryError("frame is not orthonormal")
    for e in vecs:
        if m.kappa != 0 and abs(float(m.inner(frame.base, e))) > FRAME_TOL * max(1.0, np.linalg.norm(frame.base)):
            raise GeometryError("frame vector is not tangent at the base point")
    return frame


def radial_frame(m: ManifoldModel, x, direction=None) -> Frame:
    """Orthonormal frame at ``x``; the first vector is ``direction`` if given.

    Gram-Schmidt over the seed direction followed by the ambient axes, in
    that fixed order, so the result is reproducible.
    """
    x = m.check_point(x)
    seeds = []
    if direction is not None:
        seeds.append(m.project_tangent(x, direction))
    seeds.extend(m.project_tangent(x, e) for e in np.eye(m.ambient_dim))
    basis = []
    for s in seeds:
        w = np.array(s, dtype=float)
        for _ in range(2):
            for b in basis:
                w = w - float(m.inner(b, w)) * b
        nw = m.norm(w)
        if nw > 1e-8:
            basis.append(w / nw)
        if len(basis) == m.n:
            break
    return Frame(base=x, vectors=np.array(basis))


def dsq_hessian(m: ManifoldModel, x0, x, frame: Frame | None = None) -> np.ndarray:
    """Hessian of ``d(., x0)^2 / 2`` at ``x`` in the given orthonormal frame.

    Eigenvalue 1 in the radial direction and ``ct_kappa(d)`` on its
    orthogonal complement.
    """
    d = distance(m, x0, x)
    if d < MIN_HESSIAN_DIST:
        raise GeometryError("Hessian requested too close to the center")
    if d >= injectivity_radius(m, x0) * (1 - 1e-12):
        raise GeometryError("point is beyond the injectivity radius of the center")
    grad = -log_map(m, x, x0)
    if frame is None:
        frame = radial_frame(m, x, grad)
    r = frame.coords(m, grad) / d
    ct = ct_kappa(m.kappa, d)
    H = ct * np.eye(m.n) + (1.0 - ct) * np.outer(r, r)
    return 0.5 * (H + H.T)


def random_tangent(m: ManifoldModel, x, rng, length=None) -> np.ndarray:
    v = m.project_tangent(x, rng.standard_normal(m.ambient_dim))
    if length is not None:
        v = v * (length / m.norm(v))
    return v


def random_point(m: ManifoldModel, rng, center=None, max_dist=1.0) -> np.ndarray:
    center = m.origin() if center is None else center
    t = max_dist * rng.uniform(0.05, 1.0)
    return exp_map(m, center, random_tangent(m, center, rng, t))
