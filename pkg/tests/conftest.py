import numpy as np
import pytest

from riemsmp.geometry import ManifoldModel

KAPPAS = (-1.0, 0.0, 1.0)


def random_rotation(rng, n):
    Q, R = np.linalg.qr(rng.standard_normal((n, n)))
    return Q * np.sign(np.diag(R))


def random_sym(rng, n, count=None, scale=1.0):
    shape = (n, n) if count is None else (count, n, n)
    A = scale * rng.standard_normal(shape)
    return 0.5 * (A + np.swapaxes(A, -1, -2))


@pytest.fixture(params=KAPPAS, ids=lambda k: f"kappa{k:+g}")
def model(request):
    return ManifoldModel(2, request.param)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def fd_jet(m, f, x, frame, h=1e-4):
    """Value, gradient and Hessian of ``f`` at ``x`` from central differences
    along geodesics in the frame directions (polarized for mixed terms)."""
    from riemsmp.geometry import exp_map

    e = frame.vectors
    n = m.n
    along = lambda v, t: f(exp_map(m, x, t * v))
    f0 = f(x)
    grad = np.array([(along(ei, h) - along(ei, -h)) / (2 * h) for ei in e])
    second = lambda v: (along(v, h) - 2 * f0 + along(v, -h)) / h ** 2
    H = np.empty((n, n))
    for i in range(n):
        H[i, i] = second(e[i])
        for j in range(i + 1, n):
            H[i, j] = H[j, i] = 0.25 * (second(e[i] + e[j]) - second(e[i] - e[j]))
    return f0, grad, H
