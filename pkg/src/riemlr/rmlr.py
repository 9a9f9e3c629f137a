"""Riemannian multinomial logistic regression heads.

Per-class scores are ``<Log_{P_k} S, A~_k>_{P_k}`` where ``P_k`` is a point on
the manifold and ``A~_k`` a tangent vector at ``P_k`` generated from a
parameter ``A_k`` living in the tangent space at the identity.

:func:`spd_mlr_logits` evaluates the closed forms for the five SPD families
and is the training path; when given a :class:`Tape` it records the
intermediates consumed by :mod:`riemlr.grad`. :func:`rmlr_logits_generic`
builds the same scores from :mod:`riemlr.spdgeo` operators and exists as a
reference.
"""

from dataclasses import dataclass, field

import numpy as np

from . import songeo, spdgeo, symlin
from .exceptions import DegenerateError, DomainError
from .spdgeo import MetricParams
from .symlin import EigenPair, frob, half, swap, sym, trace


@dataclass
class SpdMlrLayer:
    """Per-class SPD points ``P`` (C, n, n) and symmetric tangent parameters ``A``."""

    mp: MetricParams
    P: np.ndarray
    A: np.ndarray

    def __post_init__(self):
        self.P = np.asarray(self.P, dtype=float)
        self.A = np.asarray(self.A, dtype=float)
        if self.P.shape != self.A.shape or self.P.ndim != 3:
            raise ValueError(f"P and A must both be (C, n, n); got {self.P.shape}, {self.A.shape}")
        self.mp.validate(self.P.shape[-1])

    @property
    def n_classes(self):
        return self.P.shape[0]

    def check(self):
        symlin.check_spd(self.P, "class point P")
        if np.abs(self.A - swap(self.A)).max() > 1e-12 * max(1.0, np.abs(self.A).max()):
            raise DomainError("tangent parameters A must be symmetric")
        if np.any(np.linalg.norm(self.A, axis=(-2, -1)) == 0):
            raise DegenerateError("tangent parameters A must be nonzero")
        return self

    @classmethod
    def initialize(cls, mp, n, n_classes, rng):
        P = np.broadcast_to(np.eye(n), (n_classes, n, n)).copy()
        A = sym(rng.normal(0.0, np.sqrt(2.0 / n), size=(n_classes, n, n)))
        return cls(mp, P, A)


@dataclass
class LieMlrLayer:
    """Per-class rotations ``P`` (C, m, 3, 3) and skew parameters ``A`` over SO(3)^m."""

    P: np.ndarray
    A: np.ndarray

    def __post_init__(self):
        self.P = np.asarray(self.P, dtype=float)
        self.A = np.asarray(self.A, dtype=float)
        if self.P.shape != self.A.shape or self.P.ndim != 4:
            raise ValueError(f"P and A must both be (C, m, n, n); got {self.P.shape}, {self.A.shape}")

    @property
    def n_classes(self):
        return self.P.shape[0]

    def check(self):
        songeo.check_rotation(self.P, "class rotation P")
        if np.abs(self.A + swap(self.A)).max() > 1e-12:
            raise DomainError("tangent parameters A must be skew-symmetric")
        return self

    @classmethod
    def initialize(cls, m, n_classes, rng, n=3):
        P = np.broadcast_to(np.eye(n), (n_classes, m, n, n)).copy()
        A = symlin.skew(rng.normal(0.0, np.sqrt(2.0 / n), size=(n_classes, m, n, n)))
        return cls(P, A)


@dataclass
class LogEigLayer:
    """Linear layer on the flattened matrix logarithm."""

    weight: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=float)
        self.bias = np.asarray(self.bias, dtype=float)

    @property
    def n_classes(self):
        return self.weight.shape[0]

    @classmethod
    def initialize(cls, n, n_classes, rng):
        d = n * (n + 1) // 2
        return cls(rng.normal(0.0, np.sqrt(2.0 / n), size=(n_classes, d)), np.zeros(n_classes))


@dataclass
class Tape:
    """Intermediates recorded by one forward pass, keyed by name."""

    kind: str
    batched: bool
    cache: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.cache[key]

    def __setitem__(self, key, value):
        self.cache[key] = value


def _batch(S):
    S = np.asarray(S, dtype=float)
    return (S, True) if S.ndim == 3 else (S[None], False)


def _ab(X, A, mp):
    return mp.alpha * frob(X, A) + mp.beta * trace(X) * trace(A)


def _power_eig(eig, p):
    return EigenPair(eig.U, eig.sigma**p)


def spd_mlr_logits(mp, S, layer, tape=None):
    """Closed-form SPD MLR scores.

    Parameters
    ----------
    mp : MetricParams
    S : ndarray, shape (n, n) or (B, n, n)
    layer : SpdMlrLayer
    tape : Tape, optional
        Filled with the intermediates needed by the backward pass.

    Returns
    -------
    ndarray, shape (C,) or (B, C)
    """
    Sb, batched = _batch(S)
    P, A = layer.P, layer.A
    family, theta = mp.family, mp.theta
    t = Tape(family, batched) if tape is None else tape
    t.kind, t.batched = family, batched
    eS = symlin.eig_sym(Sb)
    eP = symlin.eig_sym(P)
    symlin._check_spectrum(symlin.LOG, eS.sigma)
    symlin._check_spectrum(symlin.LOG, eP.sigma)
    t["S"], t["eS"], t["eP"] = Sb, eS, eP

    if family in ("LEM", "EM"):
        if family == "LEM":
            fS, fP, scale = np.log(eS.sigma), np.log(eP.sigma), 1.0
        else:
            fS, fP, scale = eS.sigma**theta, eP.sigma**theta, 1.0 / theta
        X = eS.reconstruct(fS)[:, None] - eP.reconstruct(fP)[None]
        logits = scale * _ab(X, A[None], mp)
        t["X"], t["scale"] = X, scale

    elif family == "AIM":
        St = eS.reconstruct(eS.sigma**theta)
        Pm = eP.reconstruct(eP.sigma ** (-theta / 2.0))
        M = sym(Pm[None] @ St[:, None] @ Pm[None])
        eM = symlin.eig_sym(M)
        symlin._check_spectrum(symlin.LOG, eM.sigma)
        logM = eM.reconstruct(np.log(eM.sigma))
        logits = _ab(logM, A[None], mp) / theta
        t.cache.update(St=St, Pm=Pm, M=M, eM=eM, logM=logM)

    elif family == "LCM":
        K = symlin.chol(eS.reconstruct(eS.sigma**theta))
        L = symlin.chol(eP.reconstruct(eP.sigma**theta))
        Ah = half(A)
        zK = _log_cholesky(K)
        zL = _log_cholesky(L)
        logits = (frob(zK[:, None], Ah[None]) - frob(zL, Ah)[None]) / theta
        t.cache.update(K=K, L=L, zK=zK, zL=zL)

    else:  # BWM
        T = eS.reconstruct(eS.sigma ** (2 * theta))
        Q = eP.reconstruct(eP.sigma ** (2 * theta))
        R = eP.reconstruct(eP.sigma**theta)
        Ri = eP.reconstruct(eP.sigma ** (-theta))
        Lb = symlin.chol(Q)
        V = sym(Lb @ A @ swap(Lb))
        eQ = _power_eig(eP, 2 * theta)
        X = symlin.lyap_solve(Q, V, eig=eQ)
        M = sym(R[None] @ T[:, None] @ R[None])
        eM = symlin.eig_sym(M)
        symlin._check_spectrum(symlin.SQRT, eM.sigma)
        Z = eM.reconstruct(np.sqrt(eM.sigma))
        Y = R[None] @ Z @ Ri[None]
        Log = Y + swap(Y) - 2.0 * Q[None]
        logits = frob(Log, X[None]) / (4.0 * theta)
        t.cache.update(T=T, Q=Q, R=R, Ri=Ri, Lb=Lb, V=V, eQ=eQ, X=X, M=M, eM=eM, Z=Z, Log=Log)

    return logits if batched else logits[0]


def _log_cholesky(L):
    d = np.diagonal(L, axis1=-2, axis2=-1)
    return symlin.strict_lower(L) + np.log(d)[..., :, None] * np.eye(L.shape[-1])


def make_tilde_A_pt(mp, P, A):
    """Tangent parameter at ``P`` by parallel transport from the identity."""
    P = np.asarray(P, dtype=float)
    return spdgeo.ptransport(mp, np.eye(P.shape[-1]), P, A)


def make_tilde_A_lt(P, A, mp=None):
    """Tangent parameter at ``P`` by left translation in the Cholesky group.

    Without ``mp`` this is ``L A L^T`` with ``L = chol(P)``. With a deformed
    metric the translation is conjugated by the power map
    ``P -> P**p``: ``(phi_*P)^{-1}[p Lbar A Lbar^T]`` with ``Lbar = chol(P**p)``.
    """
    P = np.asarray(P, dtype=float)
    if mp is None or mp.power == 1.0:
        L = symlin.chol(P)
        return sym(L @ A @ swap(L))
    p = mp.power
    eig = symlin.eig_sym(P)
    Lb = symlin.chol(eig.reconstruct(eig.sigma**p))
    return symlin.funcm_diff_inv(P, p, p * sym(Lb @ A @ swap(Lb)), eig=eig)


def tilde_A(mp, P, A):
    """Tangent parameter used by the generic path for family ``mp``."""
    if mp.family == "BWM":
        return make_tilde_A_lt(P, A, mp)
    return make_tilde_A_pt(mp, P, A)


def rmlr_logits_generic(mp, S, layer):
    """Reference scores ``<Log_{P_k} S, A~_k>_{P_k}`` from the geometry operators."""
    Sb, batched = _batch(S)
    out = np.empty((Sb.shape[0], layer.n_classes))
    for k in range(layer.n_classes):
        Pk = layer.P[k]
        At = tilde_A(mp, Pk, layer.A[k])
        for b, Sample in enumerate(Sb):
            out[b, k] = spdgeo.metric(mp, Pk, spdgeo.rielog(mp, Pk, Sample), At)
    return out if batched else out[0]


def margin_distance(mp, S, P, At):
    """Distance from ``S`` to the hyperplane ``{<Log_P Y, At>_P = 0}``.

    Raises
    ------
    DegenerateError
        If ``At`` has zero norm at ``P``.
    """
    a_norm = spdgeo.norm(mp, P, At)
    if not a_norm > 0:
        raise DegenerateError("hyperplane normal has zero norm")
    return abs(spdgeo.metric(mp, P, spdgeo.rielog(mp, P, S), At)) / a_norm


# -- Lie MLR ---------------------------------------------------------------


def _lie_batch(S):
    S = np.asarray(S, dtype=float)
    return (S, True) if S.ndim == 4 else (S[None], False)


def lie_mlr_logits(S, layer, tape=None):
    """Scores ``sum_blocks <log(P_k^T S), A_k>`` on a product of rotation groups.

    Parameters
    ----------
    S : ndarray, shape (m, n, n) or (B, m, n, n)
    layer : LieMlrLayer
    """
    Sb, batched = _lie_batch(S)
    M = swap(layer.P)[None] @ Sb[:, None]
    logM = songeo.so3_log(M) if M.shape[-1] == 3 else songeo.so_log(np.eye(M.shape[-1]), M)
    logits = frob(logM, layer.A[None]).sum(axis=-1)
    if tape is not None:
        tape.kind, tape.batched = "LIE", batched
        tape.cache.update(S=Sb, M=M, logM=logM)
    return logits if batched else logits[0]


def lie_tilde_A(P, A, path="pt", Q=None):
    """Ambient tangent parameter at ``P`` generated from ``A`` at ``Q``.

    ``path="pt"`` uses the transport ``P Q^T H``, ``path="lt"`` the
    left-translation differential ``P Q^{-1} H``, where ``H = Q A`` is the
    ambient form of ``A``.
    """
    P = np.asarray(P, dtype=float)
    Q = np.eye(P.shape[-1]) if Q is None else np.asarray(Q, dtype=float)
    H = Q @ A
    if path == "pt":
        return P @ swap(Q) @ H
    if path == "lt":
        return P @ np.linalg.inv(Q) @ H
    raise ValueError(f"unknown path {path!r}")


def lie_mlr_logits_generic(S, layer, path="pt"):
    """Lie MLR scores via ambient tangent parameters and the bi-invariant metric."""
    Sb, batched = _lie_batch(S)
    At = swap(layer.P) @ lie_tilde_A(layer.P, layer.A, path)
    logM = songeo.so_log(layer.P[None], Sb[:, None])
    logits = frob(logM, At[None]).sum(axis=-1)
    return logits if batched else logits[0]


# -- LogEig baseline -------------------------------------------------------


def sym_to_vec(X):
    """Upper triangle with off-diagonal entries scaled by sqrt(2)."""
    n = X.shape[-1]
    iu = np.triu_indices(n)
    w = np.where(iu[0] == iu[1], 1.0, np.sqrt(2.0))
    return X[..., iu[0], iu[1]] * w


def vec_to_sym(v, n):
    """Inverse of :func:`sym_to_vec`."""
    iu = np.triu_indices(n)
    w = np.where(iu[0] == iu[1], 1.0, 1.0 / np.sqrt(2.0))
    out = np.zeros(v.shape[:-1] + (n, n))
    out[..., iu[0], iu[1]] = v * w
    out[..., iu[1], iu[0]] = v * w
    return out


def logeig_logits(S, layer, tape=None):
    """``weight @ vec(log S) + bias``."""
    Sb, batched = _batch(S)
    eS = symlin.eig_sym(Sb)
    symlin._check_spectrum(symlin.LOG, eS.sigma)
    feats = sym_to_vec(eS.reconstruct(np.log(eS.sigma)))
    logits = feats @ layer.weight.T + layer.bias
    if tape is not None:
        tape.kind, tape.batched = "LOGEIG", batched
        tape.cache.update(S=Sb, eS=eS, feats=feats)
    return logits if batched else logits[0]


def softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_xent(logits, label):
    """Cross-entropy loss and its gradient with respect to the logits.

    With a batch of logits (B, C) the loss is the mean over samples and the
    returned gradient is that of the mean.
    """
    logits = np.asarray(logits, dtype=float)
    single = logits.ndim == 1
    Z = logits[None] if single else logits
    y = np.atleast_1d(np.asarray(label, dtype=int))
    if np.any((y < 0) | (y >= Z.shape[-1])):
        raise ValueError(f"label out of range for {Z.shape[-1]} classes")
    m = Z.max(axis=-1, keepdims=True)
    lse = m[:, 0] + np.log(np.exp(Z - m).sum(axis=-1))
    rows = np.arange(Z.shape[0])
    loss = np.mean(lse - Z[rows, y])
    d = softmax(Z)
    d[rows, y] -= 1.0
    d /= Z.shape[0]
    return float(loss), (d[0] if single else d)
