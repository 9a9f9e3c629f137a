"""Dense symmetric and triangular matrix kernel.

All routines accept stacks of matrices with shape ``(..., n, n)`` and
broadcast over the leading axes. Matrix functions go through a single real
symmetric eigendecomposition so that forward and backward passes can share
one :class:`EigenPair`.
"""

from typing import Callable, NamedTuple

import numpy as np
from scipy.linalg import lapack

from .exceptions import ConvergenceError, DomainError

#: relative eigen-gap under which divided differences switch to f'(midpoint)
GAP_TOL = 1e-10


class EigenPair(NamedTuple):
    """Eigendecomposition ``S = U diag(sigma) U^T`` with descending ``sigma``."""

    U: np.ndarray
    sigma: np.ndarray

    def reconstruct(self, values=None):
        values = self.sigma if values is None else values
        return (self.U * values[..., None, :]) @ swap(self.U)


class SpectralFunction(NamedTuple):
    """Scalar function applied to a spectrum, with its first divided difference.

    ``divided(si, sj)`` is only evaluated where ``si != sj``; implementations
    use cancellation-free forms so that nearly equal eigenvalues stay accurate.
    """

    name: str
    value: Callable
    deriv: Callable
    divided: Callable
    positive: bool


def _pow_divided(p):
    def divided(si, sj):
        d = si - sj
        return sj**p * np.expm1(p * np.log1p(d / sj)) / d

    return divided


def _log_divided(si, sj):
    d = si - sj
    return np.log1p(d / sj) / d


def _exp_divided(si, sj):
    d = si - sj
    return np.exp(sj) * np.expm1(d) / d


LOG = SpectralFunction("log", np.log, lambda s: 1.0 / s, _log_divided, True)
EXP = SpectralFunction("exp", np.exp, np.exp, _exp_divided, False)
SQRT = SpectralFunction(
    "sqrt",
    np.sqrt,
    lambda s: 0.5 / np.sqrt(s),
    lambda si, sj: 1.0 / (np.sqrt(si) + np.sqrt(sj)),
    True,
)


def power(p):
    """Return the spectral function ``s -> s**p``."""
    p = float(p)
    if p == 0:
        raise DomainError("power exponent must be nonzero")
    if p == 1.0:
        return SpectralFunction(
            "pow(1)", lambda s: s.copy(), np.ones_like,
            lambda si, sj: np.ones_like(si), False,
        )
    positive = not (p > 0 and p == int(p))
    return SpectralFunction(
        f"pow({p:g})",
        lambda s: s**p,
        lambda s: p * s ** (p - 1.0),
        _pow_divided(p),
        positive,
    )


def as_spectral(f):
    """Resolve ``f`` given as a :class:`SpectralFunction`, a name, or an exponent."""
    if isinstance(f, SpectralFunction):
        return f
    if isinstance(f, str):
        try:
            return {"log": LOG, "exp": EXP, "sqrt": SQRT}[f]
        except KeyError:
            raise ValueError(f"unknown spectral function {f!r}") from None
    return power(f)


def swap(X):
    return np.swapaxes(X, -1, -2)


def sym(X):
    """Symmetric part ``(X + X^T) / 2``."""
    return 0.5 * (X + swap(X))


def skew(X):
    """Skew-symmetric part ``(X - X^T) / 2``."""
    return 0.5 * (X - swap(X))


def trace(X):
    return np.trace(X, axis1=-2, axis2=-1)


def frob(X, Y):
    """Frobenius inner product over the last two axes."""
    return np.einsum("...ij,...ij->...", X, Y)


def eye_like(X):
    return np.broadcast_to(np.eye(X.shape[-1]), X.shape).copy()


def strict_lower(X):
    return np.tril(X, -1)


def diag_part(X):
    """Diagonal matrix built from the diagonal of ``X``."""
    d = np.diagonal(X, axis1=-2, axis2=-1)
    return d[..., :, None] * np.eye(X.shape[-1])


def half(X):
    """Strictly lower part plus half of the diagonal."""
    return strict_lower(X) + 0.5 * diag_part(X)


def spd_tolerance(sigma_max):
    """Scale-aware positivity floor used by the SPD domain checks."""
    return 1e-10 * (1.0 + np.abs(sigma_max))


def eig_sym(S):
    """Eigendecomposition of a (stack of) symmetric matrices.

    Eigenvalues are returned in descending order; ties keep the order produced
    by the LAPACK driver.

    Raises
    ------
    DomainError
        If ``S`` contains non-finite entries.
    ConvergenceError
        If the eigen solver does not converge.
    """
    S = np.asarray(S, dtype=float)
    if not np.all(np.isfinite(S)):
        raise DomainError("eigendecomposition of a matrix with non-finite entries")
    try:
        w, U = np.linalg.eigh(S)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceError(
            f"symmetric eigensolver failed: {exc}",
            residual=float(np.linalg.norm(S - sym(S))),
        ) from exc
    order = np.argsort(-w, axis=-1, kind="stable")
    w = np.take_along_axis(w, order, axis=-1)
    U = np.take_along_axis(U, order[..., None, :], axis=-1)
    return EigenPair(U, w)


def _check_spectrum(f, sigma):
    if f.positive:
        bad = sigma <= 0
        if np.any(bad):
            worst = float(sigma[bad].min())
            raise DomainError(
                f"{f.name} requires an SPD argument; found eigenvalue {worst:.6g}"
            )


def funcm(S, f, eig=None):
    """Spectral matrix function ``U f(Sigma) U^T``.

    Parameters
    ----------
    S : ndarray, shape (..., n, n)
        Symmetric input.
    f : SpectralFunction, str or float
        ``"log"``, ``"exp"``, ``"sqrt"`` or a real exponent.
    eig : EigenPair, optional
        Cached decomposition of ``S``.

    Returns
    -------
    ndarray, shape (..., n, n)
    """
    f = as_spectral(f)
    eig = eig_sym(S) if eig is None else eig
    _check_spectrum(f, eig.sigma)
    return eig.reconstruct(f.value(eig.sigma))


def divided_differences(f, sigma):
    """First divided differences ``f[s_i, s_j]`` with the eigen-gap guard."""
    f = as_spectral(f)
    si = sigma[..., :, None]
    sj = sigma[..., None, :]
    d = si - sj
    scale = np.max(np.abs(sigma), axis=-1)[..., None, None]
    close = np.abs(d) <= GAP_TOL * scale
    si_safe = np.where(close, sj + 1.0, si)
    with np.errstate(divide="ignore", invalid="ignore"):
        general = f.divided(si_safe, np.broadcast_to(sj, si_safe.shape))
    mid = f.deriv(0.5 * (si + sj))
    return np.where(close, mid, general)


def _dk(eig, K, V):
    Ut = swap(eig.U)
    return eig.U @ (K * (Ut @ V @ eig.U)) @ Ut


def funcm_diff(S, f, V, eig=None):
    """Differential of ``funcm(., f)`` at ``S`` applied to ``V`` (Daleckii-Krein)."""
    f = as_spectral(f)
    eig = eig_sym(S) if eig is None else eig
    _check_spectrum(f, eig.sigma)
    return _dk(eig, divided_differences(f, eig.sigma), V)


def funcm_diff_inv(S, f, V, eig=None):
    """Inverse of :func:`funcm_diff` for strictly monotone ``f``."""
    f = as_spectral(f)
    eig = eig_sym(S) if eig is None else eig
    _check_spectrum(f, eig.sigma)
    return _dk(eig, 1.0 / divided_differences(f, eig.sigma), V)


def _potrf_pivot(P):
    _, info = lapack.dpotrf(np.asarray(P, dtype=float), lower=1)
    return info - 1 if info > 0 else None


def chol(P):
    """Lower Cholesky factor.

    Raises
    ------
    DomainError
        On a non-positive pivot; the message names the pivot index.
    """
    P = np.asarray(P, dtype=float)
    try:
        return np.linalg.cholesky(P)
    except np.linalg.LinAlgError:
        flat = P.reshape(-1, P.shape[-2], P.shape[-1])
        for b, M in enumerate(flat):
            pivot = _potrf_pivot(M)
            if pivot is not None:
                where = f" (matrix {b})" if flat.shape[0] > 1 else ""
                raise DomainError(
                    f"Cholesky failed: non-positive pivot at index {pivot}{where}"
                ) from None
        raise DomainError("Cholesky failed on a non-SPD input") from None


def chol_diff(P, V, L=None):
    """Differential of ``chol`` at ``P``: ``L half(L^-1 V L^-T)``."""
    L = chol(P) if L is None else L
    Li = np.linalg.inv(L)
    return L @ half(Li @ V @ swap(Li))


def chol_inv_diff(L, X):
    """Differential of ``L -> L L^T`` at ``L`` applied to ``X``."""
    return X @ swap(L) + L @ swap(X)


def lyap_solve(P, V, eig=None):
    """Solve ``X P + P X = V`` for symmetric ``X``."""
    eig = eig_sym(P) if eig is None else eig
    _check_spectrum(SQRT, eig.sigma)
    K = 1.0 / (eig.sigma[..., :, None] + eig.sigma[..., None, :])
    return _dk(eig, K, V)


def lyap_vjp(P, X, G, eig=None):
    """Backward pass of :func:`lyap_solve`.

    Given ``X = lyap_solve(P, V)`` and ``G = dloss/dX``, returns
    ``(dV, dP) = (lyap_solve(P, G), -X dV - dV X)``. No eigenvector
    derivative is taken, so nearly repeated eigenvalues of ``P`` are harmless.
    """
    dV = lyap_solve(P, sym(G), eig=eig)
    dP = -X @ dV - dV @ X
    return dV, sym(dP)


def prod_sqrt(B, A, eig=None):
    """Square roots of the non-symmetric products ``BA`` and ``AB``.

    Uses ``(BA)^{1/2} = B^{1/2} (B^{1/2} A B^{1/2})^{1/2} B^{-1/2}`` and
    ``(AB)^{1/2} = [(BA)^{1/2}]^T``.

    Returns
    -------
    ba, ab : ndarray
    """
    eig = eig_sym(B) if eig is None else eig
    _check_spectrum(SQRT, eig.sigma)
    A = np.asarray(A, dtype=float)
    _check_spectrum(SQRT, eig_sym(A).sigma)
    Bh = eig.reconstruct(np.sqrt(eig.sigma))
    Bih = eig.reconstruct(1.0 / np.sqrt(eig.sigma))
    middle = funcm(sym(Bh @ A @ Bh), SQRT)
    ba = Bh @ middle @ Bih
    return ba, swap(ba)


def spd_project(S, floor=1e-8):
    """Symmetrize, then clamp eigenvalues from below at ``floor``."""
    eig = eig_sym(sym(np.asarray(S, dtype=float)))
    return eig.reconstruct(np.maximum(eig.sigma, floor))


def check_spd(P, name="matrix"):
    """Validate symmetry and positive definiteness; return the eigenvalues.

    Raises
    ------
    DomainError
    """
    P = np.asarray(P, dtype=float)
    if P.ndim < 2 or P.shape[-1] != P.shape[-2]:
        raise DomainError(f"{name} must be square, got shape {P.shape}")
    if not np.all(np.isfinite(P)):
        raise DomainError(f"{name} has non-finite entries")
    asym = np.linalg.norm(P - swap(P), axis=(-2, -1))
    size = np.linalg.norm(P, axis=(-2, -1))
    if np.any(asym > 1e-12 * np.maximum(size, 1e-300)):
        raise DomainError(f"{name} is not symmetric (asymmetry {asym.max():.3g})")
    sigma = eig_sym(P).sigma
    floor = spd_tolerance(sigma[..., 0])
    if np.any(sigma[..., -1] <= floor):
        raise DomainError(
            f"{name} is not SPD: smallest eigenvalue {sigma[..., -1].min():.6g}"
        )
    return sigma
