"""Power-deformed Riemannian metrics on the SPD cone.

Five base families are supported: ``LEM``, ``AIM``, ``EM`` (each with the
O(n)-invariant ``(alpha, beta)`` inner product), ``LCM`` and ``BWM``. A
deformation exponent ``theta`` pulls each base metric back through
``P -> P**p`` and scales it by ``1/p**2``, where ``p = theta`` except for
``BWM`` which uses ``p = 2 theta``. ``LEM`` is invariant under the
deformation, so its ``theta`` is ignored.

Logarithms and transports of the deformed metric are obtained by conjugating
the base-family operator with the differential of the power map.
"""

from dataclasses import dataclass

import numpy as np

from . import symlin
from .exceptions import ParameterDomainError, UnsupportedOriginError
from .symlin import LOG, SQRT, frob, swap, sym, trace

FAMILIES = ("LEM", "AIM", "EM", "LCM", "BWM")


@dataclass(frozen=True)
class MetricParams:
    """Metric family tag and deformation parameters ``(theta, alpha, beta)``."""

    family: str
    theta: float = 1.0
    alpha: float = 1.0
    beta: float = 0.0

    def __post_init__(self):
        family = str(self.family).upper()
        if family not in FAMILIES:
            raise ParameterDomainError(
                f"unknown metric family {self.family!r}; expected one of {FAMILIES}"
            )
        object.__setattr__(self, "family", family)
        theta = float(self.theta)
        if theta == 0 or not np.isfinite(theta):
            raise ParameterDomainError("theta must be finite and nonzero")
        object.__setattr__(self, "theta", theta)
        if family in ("LCM", "BWM"):
            object.__setattr__(self, "alpha", 1.0)
            object.__setattr__(self, "beta", 0.0)
        else:
            object.__setattr__(self, "alpha", float(self.alpha))
            object.__setattr__(self, "beta", float(self.beta))
            if not self.alpha > 0:
                raise ParameterDomainError(f"alpha must be positive, got {self.alpha}")

    @property
    def power(self):
        """Exponent of the deformation map (``2 theta`` for BWM)."""
        return 2.0 * self.theta if self.family == "BWM" else self.theta

    def validate(self, n):
        """Check ``min(alpha, alpha + n beta) > 0`` at dimension ``n``."""
        if self.family in ("LEM", "AIM", "EM"):
            check_alpha_beta(self.alpha, self.beta, n)
        return self

    def scaled(self, a):
        """Same metric with ``alpha`` and ``beta`` multiplied by ``a``."""
        return MetricParams(self.family, self.theta, a * self.alpha, a * self.beta)


def check_alpha_beta(alpha, beta, n):
    if not min(alpha, alpha + n * beta) > 0:
        raise ParameterDomainError(
            f"(alpha, beta) = ({alpha}, {beta}) violates min(alpha, alpha + n beta) > 0 "
            f"at n = {n}"
        )


def oi_inner(V, W, alpha=1.0, beta=0.0):
    """O(n)-invariant inner product ``alpha <V, W> + beta tr(V) tr(W)``."""
    V = np.asarray(V, dtype=float)
    check_alpha_beta(alpha, beta, V.shape[-1])
    return alpha * frob(V, W) + beta * trace(V) * trace(W)


def _ab(V, W, mp):
    return mp.alpha * frob(V, W) + mp.beta * trace(V) * trace(W)


# -- base families ---------------------------------------------------------


def _base_metric(mp, Q, V, W):
    family = mp.family
    if family == "EM":
        return _ab(V, W, mp)
    if family == "LEM":
        eig = symlin.eig_sym(Q)
        return _ab(
            symlin.funcm_diff(Q, LOG, V, eig=eig),
            symlin.funcm_diff(Q, LOG, W, eig=eig),
            mp,
        )
    if family == "AIM":
        Qi = np.linalg.inv(Q)
        return _ab(Qi @ V, W @ Qi, mp)
    if family == "LCM":
        L = symlin.chol(Q)
        Vt = symlin.chol_diff(Q, V, L=L)
        Wt = symlin.chol_diff(Q, W, L=L)
        d = np.diagonal(L, axis1=-2, axis2=-1)
        dv = np.diagonal(Vt, axis1=-2, axis2=-1)
        dw = np.diagonal(Wt, axis1=-2, axis2=-1)
        return frob(symlin.strict_lower(Vt), symlin.strict_lower(Wt)) + np.sum(
            dv * dw / d**2, axis=-1
        )
    # BWM
    return 0.5 * frob(symlin.lyap_solve(Q, V), W)


def _dlog_ratio(L, K):
    dl = np.diagonal(L, axis1=-2, axis2=-1)
    dk = np.diagonal(K, axis1=-2, axis2=-1)
    return (dl * np.log(dk / dl))[..., :, None] * np.eye(L.shape[-1])


def _base_log(family, Q, T):
    if family == "EM":
        return T - Q
    if family == "LEM":
        return symlin.funcm_diff_inv(Q, LOG, symlin.funcm(T, LOG) - symlin.funcm(Q, LOG))
    if family == "AIM":
        eig = symlin.eig_sym(Q)
        Qh = eig.reconstruct(np.sqrt(eig.sigma))
        Qih = eig.reconstruct(1.0 / np.sqrt(eig.sigma))
        return sym(Qh @ symlin.funcm(sym(Qih @ T @ Qih), LOG) @ Qh)
    if family == "LCM":
        L = symlin.chol(Q)
        K = symlin.chol(T)
        X = symlin.strict_lower(K) - symlin.strict_lower(L) + _dlog_ratio(L, K)
        return symlin.chol_inv_diff(L, X)
    ba, ab = symlin.prod_sqrt(Q, T)
    return sym(ba + ab) - 2.0 * Q


def bwm_transport_from_identity(Q, V):
    """Bures-Wasserstein parallel transport from ``I`` to ``Q``."""
    eig = symlin.eig_sym(Q)
    K = np.sqrt(0.5 * (eig.sigma[..., :, None] + eig.sigma[..., None, :]))
    return symlin._dk(eig, K, V)


def _base_transport(family, Q1, Q2, V):
    if family == "EM":
        return np.array(V, dtype=float, copy=True)
    if family == "LEM":
        return symlin.funcm_diff_inv(Q2, LOG, symlin.funcm_diff(Q1, LOG, V))
    if family == "AIM":
        # E = (Q2 Q1^{-1})^{1/2} = Q1^{1/2} (Q1^{-1/2} Q2 Q1^{-1/2})^{1/2} Q1^{-1/2}, no explicit inverse
        eig = symlin.eig_sym(Q1)
        symlin._check_spectrum(SQRT, eig.sigma)
        Ph = eig.reconstruct(np.sqrt(eig.sigma))
        Pih = eig.reconstruct(1.0 / np.sqrt(eig.sigma))
        E = Ph @ symlin.funcm(sym(Pih @ Q2 @ Pih), SQRT) @ Pih
        return sym(E @ V @ swap(E))
    if family == "LCM":
        L = symlin.chol(Q1)
        K = symlin.chol(Q2)
        Vt = symlin.chol_diff(Q1, V, L=L)
        dl = np.diagonal(L, axis1=-2, axis2=-1)
        dk = np.diagonal(K, axis1=-2, axis2=-1)
        dv = np.diagonal(Vt, axis1=-2, axis2=-1)
        X = symlin.strict_lower(Vt) + (dk / dl * dv)[..., :, None] * np.eye(V.shape[-1])
        return symlin.chol_inv_diff(K, X)
    return bwm_transport_from_identity(Q2, V)


# -- deformed metrics ------------------------------------------------------


def _deform(mp, P):
    """Power map data ``(P**p, eig(P))`` for the deformed family."""
    eig = symlin.eig_sym(P)
    return eig.reconstruct(eig.sigma**mp.power), eig


def metric(mp, P, V, W):
    """Riemannian inner product ``g_P(V, W)`` of the deformed metric ``mp``."""
    P = np.asarray(P, dtype=float)
    if mp.family == "LEM":
        return _base_metric(mp, P, V, W)
    p = mp.power
    Pp, eig = _deform(mp, P)
    Vp = symlin.funcm_diff(P, p, V, eig=eig)
    Wp = symlin.funcm_diff(P, p, W, eig=eig)
    return _base_metric(mp, Pp, Vp, Wp) / p**2


def norm(mp, P, V):
    return np.sqrt(metric(mp, P, V, V))


def rielog(mp, P, Q):
    """Riemannian logarithm ``Log_P Q`` of the deformed metric ``mp``.

    Depends only on the family and ``theta``; scaling ``alpha``/``beta``
    leaves it unchanged.
    """
    P = np.asarray(P, dtype=float)
    Q = np.asarray(Q, dtype=float)
    if mp.family == "LEM" or mp.power == 1.0:
        return _base_log(mp.family, P, Q)
    p = mp.power
    Pp, eig = _deform(mp, P)
    return symlin.funcm_diff_inv(P, p, _base_log(mp.family, Pp, symlin.funcm(Q, p)), eig=eig)


def riexp_aim(P, V):
    """Affine-invariant exponential ``P^{1/2} exp(P^{-1/2} V P^{-1/2}) P^{1/2}``."""
    eig = symlin.eig_sym(P)
    symlin._check_spectrum(SQRT, eig.sigma)
    Ph = eig.reconstruct(np.sqrt(eig.sigma))
    Pih = eig.reconstruct(1.0 / np.sqrt(eig.sigma))
    return sym(Ph @ symlin.funcm(sym(Pih @ V @ Pih), "exp") @ Ph)


def ptransport(mp, P, Q, V):
    """Parallel transport of ``V`` from ``T_P`` to ``T_Q`` under ``mp``.

    Raises
    ------
    UnsupportedOriginError
        For ``BWM`` when ``P`` is not the identity.
    """
    P = np.asarray(P, dtype=float)
    Q = np.asarray(Q, dtype=float)
    if mp.family == "BWM" and not np.allclose(P, np.eye(P.shape[-1]), rtol=0, atol=1e-14):
        raise UnsupportedOriginError(
            "Bures-Wasserstein transport has a closed form only from the identity"
        )
    if mp.family == "LEM" or mp.power == 1.0:
        return _base_transport(mp.family, P, Q, V)
    p = mp.power
    Pp, eig_p = _deform(mp, P)
    Qp, eig_q = _deform(mp, Q)
    moved = _base_transport(mp.family, Pp, Qp, symlin.funcm_diff(P, p, V, eig=eig_p))
    return symlin.funcm_diff_inv(Q, p, moved, eig=eig_q)


def chol_group_op(S1, S2):
    """Cholesky Lie group product ``chol(S1) S2 chol(S1)^T``."""
    L1 = symlin.chol(S1)
    return sym(L1 @ S2 @ swap(L1))


def geodesic_distance(mp, P, Q):
    """``|| Log_P Q ||_P``."""
    return norm(mp, P, rielog(mp, P, Q))
