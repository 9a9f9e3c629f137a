"""Random instance generators shared by the test-suite and the check harness."""

import numpy as np

from . import songeo
from .symlin import sym


def random_orthogonal(rng, n):
    Q, R = np.linalg.qr(rng.normal(size=(n, n)))
    return Q * np.sign(np.diag(R))


def random_rotation(rng, n=3):
    Q = random_orthogonal(rng, n)
    if np.linalg.det(Q) < 0:
        Q[:, 0] *= -1
    return Q


def random_spd(rng, n, cond=10.0, scale=1.0):
    """SPD matrix with log-uniform spectrum and condition number at most ``cond``."""
    U = random_orthogonal(rng, n)
    half = 0.5 * np.log(cond)
    w = scale * np.exp(rng.uniform(-half, half, size=n))
    return sym((U * w) @ U.T)


def random_sym(rng, n, scale=1.0):
    return scale * sym(rng.normal(size=(n, n)))


def random_skew(rng, n=3, scale=1.0):
    X = rng.normal(size=(n, n)) * scale
    return 0.5 * (X - X.T)


def spd_with_gap(rng, n, gap, base=1.0):
    """SPD matrix whose two leading eigenvalues differ by ``gap``."""
    U = random_orthogonal(rng, n)
    w = np.exp(rng.uniform(-1.0, 1.0, size=n))
    w[0] = base + 1.0
    w[1] = base + 1.0 + gap
    return sym((U * w) @ U.T)


def random_rotation_with_angle(rng, angle):
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    return songeo.so3_exp(songeo.hat(angle * axis))
