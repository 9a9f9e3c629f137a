"""Bi-invariant geometry of SO(n), with a decomposition-free SO(3) path.

Tangent vectors use the Lie-algebra representation: a tangent vector at
``R`` is a skew-symmetric matrix ``A`` standing for ``R A``.
"""

import numpy as np
from scipy.linalg import expm, logm

from .exceptions import BranchError, DegenerateError, DomainError
from .symlin import skew, swap, trace

#: angles closer than this to pi are rejected by the SO(3) logarithm
PI_TOL = 1e-6
_SMALL_ANGLE = 1e-4


def check_rotation(R, name="rotation"):
    """Validate ``R^T R = I`` and ``det R = +1``."""
    R = np.asarray(R, dtype=float)
    if R.ndim < 2 or R.shape[-1] != R.shape[-2]:
        raise DomainError(f"{name} must be square, got shape {R.shape}")
    eye = np.eye(R.shape[-1])
    err = np.abs(swap(R) @ R - eye).max() if R.size else 0.0
    if not err <= 1e-10:
        raise DomainError(f"{name} is not orthogonal (residual {err:.3g})")
    if np.any(np.abs(np.linalg.det(R) - 1.0) > 1e-8):
        raise DomainError(f"{name} has determinant -1")
    return R


def hat(w):
    """Skew matrix of a 3-vector (stacks allowed)."""
    w = np.asarray(w, dtype=float)
    out = np.zeros(w.shape[:-1] + (3, 3))
    out[..., 0, 1] = -w[..., 2]
    out[..., 0, 2] = w[..., 1]
    out[..., 1, 0] = w[..., 2]
    out[..., 1, 2] = -w[..., 0]
    out[..., 2, 0] = -w[..., 1]
    out[..., 2, 1] = w[..., 0]
    return out


def vee(A):
    return np.stack([A[..., 2, 1], A[..., 0, 2], A[..., 1, 0]], axis=-1)


def so3_exp(A):
    """Rodrigues exponential of a (stack of) 3x3 skew matrices."""
    A = np.asarray(A, dtype=float)
    w = vee(A)
    t = np.linalg.norm(w, axis=-1)[..., None, None]
    small = t < 1e-8
    ts = np.where(small, 1.0, t)
    a = np.where(small, 1.0 - t**2 / 6.0, np.sin(ts) / ts)
    b = np.where(small, 0.5 - t**2 / 24.0, (1.0 - np.cos(ts)) / ts**2)
    return np.eye(3) + a * A + b * (A @ A)


def euler_angle(R):
    """Rotation angle ``arccos((tr R - 1) / 2)`` in ``[0, pi]``.

    Evaluated as ``atan2(sin, cos)`` with the sine read off the skew part,
    which stays accurate near 0 and pi where ``arccos`` loses digits.
    """
    R = np.asarray(R, dtype=float)
    c = (trace(R) - 1.0) / 2.0
    s = np.linalg.norm(R - swap(R), axis=(-2, -1)) / (2.0 * np.sqrt(2.0))
    return np.arctan2(s, c)


def euler_axis(R):
    """Unit rotation axis.

    Raises
    ------
    DegenerateError
        When ``sin(theta)`` vanishes (angle 0 or pi).
    """
    R = np.asarray(R, dtype=float)
    theta = euler_angle(R)
    s = np.sin(theta)
    if np.any(np.abs(s) < 1e-12):
        raise DegenerateError("rotation axis is undefined at angle 0 or pi")
    v = np.stack(
        [R[..., 2, 1] - R[..., 1, 2], R[..., 0, 2] - R[..., 2, 0], R[..., 1, 0] - R[..., 0, 1]],
        axis=-1,
    )
    return v / (2.0 * s[..., None])


def _log_coefficient(theta):
    """``theta / (2 sin theta)`` with its small-angle expansion."""
    small = theta < _SMALL_ANGLE
    ts = np.where(small, 1.0, theta)
    return np.where(small, 0.5 * (1.0 + theta**2 / 6.0), ts / (2.0 * np.sin(ts)))


def so3_log(R):
    """Principal logarithm on SO(3) without decomposition.

    Raises
    ------
    BranchError
        If any angle is within ``PI_TOL`` of pi; perturb the input instead.
    """
    R = np.asarray(R, dtype=float)
    theta = euler_angle(R)
    if np.any(theta > np.pi - PI_TOL):
        raise BranchError(
            f"rotation angle {float(np.max(theta)):.9f} is within {PI_TOL:g} of pi; "
            "the logarithm is ambiguous there, perturb the rotation"
        )
    return _log_coefficient(theta)[..., None, None] * (R - swap(R))


def _generic_log(M):
    flat = M.reshape(-1, M.shape[-2], M.shape[-1])
    out = np.empty_like(flat)
    for i, X in enumerate(flat):
        w = np.linalg.eigvals(X)
        if np.any(np.isclose(w, -1.0, atol=1e-6)):
            raise BranchError("rotation has eigenvalue -1; the logarithm is ambiguous")
        out[i] = skew(np.real(logm(X)))
    return out.reshape(M.shape)


def so_log(R, S):
    """Riemannian logarithm ``log(R^T S)`` in the Lie algebra."""
    M = swap(np.asarray(R, dtype=float)) @ np.asarray(S, dtype=float)
    if M.shape[-1] == 3:
        return so3_log(M)
    return _generic_log(M)


def so_exp(A):
    A = np.asarray(A, dtype=float)
    if A.shape[-1] == 3:
        return so3_exp(A)
    if A.ndim == 2:
        return expm(A)
    flat = A.reshape(-1, *A.shape[-2:])
    return np.stack([expm(a) for a in flat]).reshape(A.shape)


def so_project(R, U):
    """Project an ambient matrix ``U`` at ``R`` onto the Lie algebra: ``skew(R^T U)``."""
    return skew(swap(np.asarray(R, dtype=float)) @ np.asarray(U, dtype=float))


def so_retract(R, A):
    """QR retraction ``qf(R + R A)`` with a positive-diagonal triangular factor."""
    R = np.asarray(R, dtype=float)
    Q, T = np.linalg.qr(R + R @ np.asarray(A, dtype=float))
    signs = np.sign(np.diagonal(T, axis1=-2, axis2=-1))
    signs = np.where(signs == 0, 1.0, signs)
    Q = Q * signs[..., None, :]
    flip = np.linalg.det(Q) < 0
    if np.any(flip):
        Q = Q.copy()
        Q[flip, :, -1] *= -1
    return Q


def rotation_z(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
