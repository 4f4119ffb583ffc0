"""Second-order jets in orthonormal frame coordinates."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    Frame,
    GeometryError,
    ManifoldModel,
    check_frame,
    distance,
    dsq_hessian,
    dsq_value_grad,
    injectivity_radius,
    parallel_transport,
    radial_frame,
)


@dataclass(frozen=True)
class Jet2:
    """A 2-jet ``(s, q, Q)`` with ``q`` and ``Q`` in frame coordinates.

    ``Q`` is symmetrized on construction so that it is exactly symmetric as
    stored.  ``regular`` is false when ``q == 0``; operators singular at a
    vanishing gradient refuse such jets.
    """

    s: float
    q: np.ndarray
    Q: np.ndarray
    regular: bool = field(init=False)

    def __post_init__(self):
        q = np.array(self.q, dtype=float).reshape(-1)
        Q = np.array(self.Q, dtype=float)
        if Q.shape != (q.size, q.size):
            raise ValueError(f"Q must be {q.size}x{q.size}, got {Q.shape}")
        Q = 0.5 * (Q + Q.T)
        object.__setattr__(self, "s", float(self.s))
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "regular", bool(np.any(q != 0.0)))

    @property
    def n(self) -> int:
        return self.q.size

    def scaled(self, c: float) -> "Jet2":
        return Jet2(c * self.s, c * self.q, c * self.Q)

    def __neg__(self) -> "Jet2":
        return Jet2(-self.s, -self.q, -self.Q)

    def __add__(self, other: "Jet2") -> "Jet2":
        return Jet2(self.s + other.s, self.q + other.q, self.Q + other.Q)

    def __sub__(self, other: "Jet2") -> "Jet2":
        return self + (-other)

    def rotated(self, a) -> "Jet2":
        """Coordinates after the frame change ``e' = a.e``."""
        a = np.asarray(a, dtype=float)
        return Jet2(self.s, a @ self.q, a @ self.Q @ a.T)


def frame_coords(m: ManifoldModel, x, e: Frame, s: float, q, Q_form) -> Jet2:
    """Express an abstract jet at ``x`` in the orthonormal frame ``e``.

    ``q`` is a tangent vector (the metric dual of the covector) and
    ``Q_form(u, w)`` evaluates the symmetric bilinear form.
    """
    check_frame(m, e)
    if not np.allclose(e.base, x, rtol=0, atol=1e-12):
        raise GeometryError("frame is based at a different point")
    qc = e.coords(m, q)
    n = m.n
    Qc = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            Qc[i, j] = Q_form(e.vectors[i], e.vectors[j])
    return Jet2(s, qc, Qc)


def transport_matrix(m: ManifoldModel, x, y, frame_x: Frame, frame_y: Frame) -> np.ndarray:
    """``T[j, i] = g(f_j, L_xy e_i)`` for frames ``e`` at x and ``f`` at y."""
    n = m.n
    T = np.empty((n, n))
    for i, ei in enumerate(frame_x.vectors):
        Le = parallel_transport(m, x, y, ei)
        for j, fj in enumerate(frame_y.vectors):
            T[j, i] = float(m.inner(fj, Le))
    return T


def jet_pullback(m: ManifoldModel, x, y, jet_at_y: Jet2, frame_x: Frame | None = None,
                 frame_y: Frame | None = None) -> Jet2:
    """Pull a jet at ``y`` back to ``x`` through parallel transport."""
    d = distance(m, x, y)
    if d >= min(injectivity_radius(m, x), injectivity_radius(m, y)) * (1 - 1e-12):
        raise GeometryError("points are beyond the injectivity radius")
    frame_x = radial_frame(m, x) if frame_x is None else check_frame(m, frame_x)
    frame_y = radial_frame(m, y) if frame_y is None else check_frame(m, frame_y)
    T = transport_matrix(m, x, y, frame_x, frame_y)
    return Jet2(jet_at_y.s, T.T @ jet_at_y.q, T.T @ jet_at_y.Q @ T)


def jet_of_dsq(m: ManifoldModel, x0, x, frame: Frame | None = None) -> Jet2:
    """Jet of ``f(x) = d(x, x0)^2 / 2`` at ``x != x0``.

    Without an explicit frame the radial-adapted frame is used, so ``q`` is
    ``(d, 0, ..., 0)``.
    """
    value, grad = dsq_value_grad(m, x0, x)
    if value == 0:
        raise GeometryError("the squared distance is not regular at its center")
    if frame is None:
        frame = radial_frame(m, x, grad)
    return Jet2(value, frame.coords(m, grad), dsq_hessian(m, x0, x, frame))
