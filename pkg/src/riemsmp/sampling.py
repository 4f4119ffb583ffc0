"""Random inputs for sampled property checks.

Symmetric matrices have i.i.d. uniform [-1, 1] entries, symmetrized.
Vectors are uniform on the unit sphere times ``10**u`` with ``u`` uniform in
``[-2, 2]`` unless another exponent range is given.
"""

import numpy as np


def sym_samples(rng, count, n, scale=1.0):
    B = rng.uniform(-1.0, 1.0, size=(count, n, n))
    return scale * 0.5 * (B + np.swapaxes(B, -1, -2))


def psd_samples(rng, count, n, scale=1.0):
    B = rng.uniform(-1.0, 1.0, size=(count, n, n))
    # random rank so that degenerate directions are exercised
    ranks = rng.integers(1, n + 1, size=count)
    mask = np.arange(n)[None, :] < ranks[:, None]
    B = B * mask[:, None, :]
    return scale * B @ np.swapaxes(B, -1, -2)


def unit_vectors(rng, count, n):
    v = rng.standard_normal((count, n))
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def vec_samples(rng, count, n, log10_range=(-2.0, 2.0)):
    u = rng.uniform(*log10_range, size=count)
    return unit_vectors(rng, count, n) * (10.0 ** u)[:, None]


def orthogonal_samples(rng, count, n):
    """Haar-distributed orthogonal matrices (sign-corrected QR)."""
    Z = rng.standard_normal((count, n, n))
    Q, R = np.linalg.qr(Z)
    d = np.sign(np.diagonal(R, axis1=-2, axis2=-1))
    d[d == 0] = 1.0
    return Q * d[:, None, :]


def describe(seed, count, **ranges):
    out = {"seed": seed, "count": count}
    out.update(ranges)
    return out
