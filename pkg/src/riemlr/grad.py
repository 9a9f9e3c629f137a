"""Reverse-mode gradients of the classifier heads.

Conventions: the gradient with respect to a symmetric matrix argument is the
symmetric matrix ``G`` such that ``dloss = <G, dX>`` for every symmetric
``dX``; for rotation parameters it is the Lie-algebra (skew) gradient
``skew(R^T G_ambient)``. Gradients with respect to SPD class points are
ambient Euclidean gradients; :mod:`riemlr.optim` converts them.
"""

from dataclasses import dataclass, replace

import numpy as np

from . import rmlr, songeo, spdgeo, symlin
from .symlin import EigenPair, LOG, SQRT, half, skew, swap, sym, trace

vjp_lyap = symlin.lyap_vjp


@dataclass
class GradBundle:
    """Loss gradients with respect to the input and every layer parameter.

    ``dP`` / ``dA`` follow the layer's parameter shapes. For the LogEig head
    ``dP`` is ``None``, ``dA`` holds the weight gradient and ``db`` the bias
    gradient.
    """

    dS: np.ndarray
    dP: np.ndarray | None
    dA: np.ndarray
    db: np.ndarray | None = None

    def slots(self):
        return {k: v for k, v in (("P", self.dP), ("A", self.dA), ("b", self.db)) if v is not None}

    def map(self, fn):
        return replace(
            self,
            dS=fn(self.dS),
            dP=None if self.dP is None else fn(self.dP),
            dA=fn(self.dA),
            db=None if self.db is None else fn(self.db),
        )


def vjp_funcm(S, f, G, eig=None):
    """Adjoint of ``funcm(., f)`` at ``S``; the Daleckii-Krein map is self-adjoint."""
    return symlin.funcm_diff(S, f, sym(G), eig=eig)


def vjp_chol(L, G_L):
    """Pull a gradient on the Cholesky factor ``L`` back to ``P = L L^T``."""
    Li = np.linalg.inv(L)
    return sym(swap(Li) @ half(swap(L) @ np.tril(G_L)) @ Li)


def _ab_grad(X, mp):
    return mp.alpha * X + mp.beta * trace(X)[..., None, None] * np.eye(X.shape[-1])


def _spd_backward(mp, layer, tape, G):
    """Backward pass through :func:`rmlr.spd_mlr_logits` for upstream ``G`` (B, C)."""
    A = layer.A
    theta = mp.theta
    eS, eP = tape["eS"], tape["eP"]
    S = tape["S"]
    P = layer.P
    Gx = G[:, :, None, None]
    family = tape.kind

    if family in ("LEM", "EM"):
        f = LOG if family == "LEM" else theta
        scale = tape["scale"]
        X = tape["X"]
        gX = scale * Gx * _ab_grad(A, mp)[None]
        dS = symlin.funcm_diff(S, f, gX.sum(axis=1), eig=eS)
        dP = -symlin.funcm_diff(P, f, gX.sum(axis=0), eig=eP)
        dA = scale * _ab_grad(np.sum(Gx * X, axis=0), mp)

    elif family == "AIM":
        Pm, St, logM = tape["Pm"], tape["St"], tape["logM"]
        gLog = Gx * _ab_grad(A, mp)[None] / theta
        gM = symlin.funcm_diff(tape["M"], LOG, gLog, eig=tape["eM"])
        gSt = np.sum(Pm[None] @ gM @ Pm[None], axis=1)
        gPm = np.sum(gM @ Pm[None] @ St[:, None] + St[:, None] @ Pm[None] @ gM, axis=0)
        dS = symlin.funcm_diff(S, theta, sym(gSt), eig=eS)
        dP = symlin.funcm_diff(P, -theta / 2.0, sym(gPm), eig=eP)
        dA = _ab_grad(np.sum(Gx * logM, axis=0), mp) / theta

    elif family == "LCM":
        K, L, zK, zL = tape["K"], tape["L"], tape["zK"], tape["zL"]
        Ah = half(A)
        gzK = np.einsum("bk,kij->bij", G, Ah) / theta
        gzL = -np.einsum("bk,kij->kij", G, Ah) / theta
        dS = symlin.funcm_diff(S, theta, vjp_chol(K, _log_cholesky_vjp(K, gzK)), eig=eS)
        dP = symlin.funcm_diff(P, theta, vjp_chol(L, _log_cholesky_vjp(L, gzL)), eig=eP)
        E = (np.einsum("bk,bij->kij", G, zK) - G.sum(axis=0)[:, None, None] * zL) / theta
        dA = sym(half(E))

    else:  # BWM
        s = 1.0 / (4.0 * theta)
        X, Log = tape["X"], tape["Log"]
        Q, R, Ri, T, Z, Lb = tape["Q"], tape["R"], tape["Ri"], tape["T"], tape["Z"], tape["Lb"]
        gLog = s * Gx * X[None]
        gX = s * np.sum(Gx * Log, axis=0)
        dV, gQ = symlin.lyap_vjp(Q, X, gX, eig=tape["eQ"])
        dA = sym(swap(Lb) @ dV @ Lb)
        gQ = gQ + vjp_chol(Lb, 2.0 * dV @ Lb @ A)
        gQ = gQ - 2.0 * gLog.sum(axis=0)
        gY = 2.0 * gLog
        gR = np.sum(gY @ Ri[None] @ Z, axis=0)
        gRi = np.sum(Z @ R[None] @ gY, axis=0)
        gZ = R[None] @ gY @ Ri[None]
        gM = symlin.funcm_diff(tape["M"], SQRT, sym(gZ), eig=tape["eM"])
        gR = gR + np.sum(gM @ R[None] @ T[:, None] + T[:, None] @ R[None] @ gM, axis=0)
        gT = np.sum(R[None] @ gM @ R[None], axis=1)
        dS = symlin.funcm_diff(S, 2 * theta, sym(gT), eig=eS)
        dP = (
            symlin.funcm_diff(P, 2 * theta, sym(gQ), eig=eP)
            + symlin.funcm_diff(P, theta, sym(gR), eig=eP)
            + symlin.funcm_diff(P, -theta, sym(gRi), eig=eP)
        )
    return sym(dS), sym(dP), sym(dA)


def _log_cholesky_vjp(L, G):
    d = np.diagonal(L, axis1=-2, axis2=-1)
    gd = np.diagonal(G, axis1=-2, axis2=-1)
    return symlin.strict_lower(G) + (gd / d)[..., :, None] * np.eye(L.shape[-1])


def _finish(tape, dS):
    return dS if tape.batched else dS[0]


def grad_spd_mlr(mp, S, layer, label):
    """Cross-entropy loss and its gradients for an SPD MLR head.

    Parameters
    ----------
    mp : MetricParams
    S : ndarray, shape (n, n) or (B, n, n)
    layer : SpdMlrLayer
    label : int or ndarray of int, shape (B,)

    Returns
    -------
    loss : float
        Mean cross-entropy over the batch.
    bundle : GradBundle
    """
    tape = rmlr.Tape(mp.family, True)
    logits = rmlr.spd_mlr_logits(mp, S, layer, tape=tape)
    loss, dlogits = rmlr.softmax_xent(logits, label)
    return loss, backward_spd(mp, layer, tape, np.atleast_2d(dlogits))


def backward_spd(mp, layer, tape, dlogits):
    """Replay a recorded SPD forward pass for upstream logit gradients (B, C)."""
    dS, dP, dA = _spd_backward(mp, layer, tape, dlogits)
    return GradBundle(_finish(tape, dS), dP, dA)


def _lie_coefficients(theta):
    """``c = theta / (2 sin theta)`` and ``c'(theta) / sin(theta)``."""
    small = theta < 1e-3
    ts = np.where(small, 1.0, theta)
    s = np.sin(ts)
    c = np.where(small, 0.5 + theta**2 / 12.0, ts / (2.0 * s))
    dc = np.where(small, 1.0 / 6.0 + theta**2 / 15.0, (s - ts * np.cos(ts)) / (2.0 * s**3))
    return c, dc


def backward_lie(layer, tape, dlogits):
    S, M, logM = tape["S"], tape["M"], tape["logM"]
    A = layer.A
    G = dlogits[:, :, None, None, None]
    c, dc = _lie_coefficients(songeo.euler_angle(M))
    inner = symlin.frob(M, A[None])
    gM = G * (2.0 * c[..., None, None] * A[None] - (inner * dc)[..., None, None] * np.eye(3))
    gP = np.sum(S[:, None] @ swap(gM), axis=0)
    gS = np.sum(layer.P[None] @ gM, axis=1)
    dP = songeo.so_project(layer.P, gP)
    dS = songeo.so_project(S, gS)
    dA = np.sum(G * logM, axis=0)
    return GradBundle(_finish(tape, dS), dP, dA)


def grad_lie_mlr(S, layer, label):
    """Cross-entropy loss and Lie-algebra gradients for a Lie MLR head on SO(3)^m."""
    tape = rmlr.Tape("LIE", True)
    logits = rmlr.lie_mlr_logits(S, layer, tape=tape)
    loss, dlogits = rmlr.softmax_xent(logits, label)
    return loss, backward_lie(layer, tape, np.atleast_2d(dlogits))


def backward_logeig(layer, tape, dlogits):
    feats = tape["feats"]
    n = tape["S"].shape[-1]
    dW = dlogits.T @ feats
    db = dlogits.sum(axis=0)
    gLog = rmlr.vec_to_sym(dlogits @ layer.weight, n)
    dS = symlin.funcm_diff(tape["S"], LOG, gLog, eig=tape["eS"])
    return GradBundle(_finish(tape, dS), None, dW, db)


def grad_logeig(S, layer, label):
    tape = rmlr.Tape("LOGEIG", True)
    logits = rmlr.logeig_logits(S, layer, tape=tape)
    loss, dlogits = rmlr.softmax_xent(logits, label)
    return loss, backward_logeig(layer, tape, np.atleast_2d(dlogits))


# -- finite-difference oracle ---------------------------------------------


def sym_basis(n):
    """Basis ``E_ii`` and ``E_ij + E_ji`` of symmetric matrices."""
    out = []
    for i in range(n):
        for j in range(i, n):
            E = np.zeros((n, n))
            E[i, j] = E[j, i] = 1.0
            out.append(E)
    return out


def skew_basis(n):
    out = []
    for i in range(n):
        for j in range(i + 1, n):
            E = np.zeros((n, n))
            E[i, j], E[j, i] = -1.0, 1.0
            out.append(E)
    return out


def _stacked_basis(shape, block_basis):
    """Embed a per-block basis into every block of a stacked parameter."""
    lead = int(np.prod(shape[:-2])) if len(shape) > 2 else 1
    n = shape[-1]
    for idx in range(lead):
        for E in block_basis(n):
            D = np.zeros((lead, n, n))
            D[idx] = E
            yield D.reshape(shape)


def fd_check(f, x, grad, h=1e-6, basis="sym", retract=None, return_all=False):
    """Compare an analytic gradient against central finite differences.

    For every basis direction ``E`` the derivative
    ``(f(x(+h)) - f(x(-h))) / 2h`` is compared with ``<grad, E>``, where
    ``x(t) = retract(x, t E)`` (or ``x + t E`` without a retraction).

    Parameters
    ----------
    f : callable
        Scalar function of the parameter.
    x : ndarray
    grad : ndarray
        Claimed gradient, same shape as ``x``.
    h : float
    basis : {"sym", "skew", "full"}
        Directions spanning the tangent space; stacked parameters get the
        basis in every trailing ``n x n`` block.
    retract : callable, optional

    Returns
    -------
    float
        Worst coordinate error divided by the largest analytic coordinate
        (floored at 1e-8).
    """
    x = np.asarray(x, dtype=float)
    grad = np.asarray(grad, dtype=float)
    if basis == "full":
        dirs = []
        for i in range(x.size):
            E = np.zeros(x.size)
            E[i] = 1.0
            dirs.append(E.reshape(x.shape))
    else:
        block = sym_basis if basis == "sym" else skew_basis
        dirs = list(_stacked_basis(x.shape, block))
    step = retract if retract is not None else (lambda p, d: p + d)
    fd = np.array([(f(step(x, h * E)) - f(step(x, -h * E))) / (2.0 * h) for E in dirs])
    an = np.array([np.sum(grad * E) for E in dirs])
    err = float(np.max(np.abs(fd - an)) / max(np.max(np.abs(an)), 1e-8)) if len(dirs) else 0.0
    return (err, fd, an) if return_all else err


def spd_retract(P, V):
    return spdgeo.riexp_aim(P, V)


def check_bundle(loss_fn, S, layer, bundle, h=1e-6, kind="spd"):
    """Finite-difference errors for every component of a :class:`GradBundle`.

    ``loss_fn(S, layer)`` returns the scalar loss. SPD points are perturbed
    along the affine-invariant exponential, rotations along the QR retraction.

    Returns
    -------
    dict
        ``{"S": err, "P": err, "A": err}`` (plus ``"b"`` for LogEig).
    """
    S = np.asarray(S, dtype=float)
    out = {}
    if kind == "lie":
        out["S"] = fd_check(lambda x: loss_fn(x, layer), S, bundle.dS, h, "skew", songeo.so_retract)
    else:
        out["S"] = fd_check(lambda x: loss_fn(x, layer), S, bundle.dS, h, "sym", spd_retract)

    def with_param(name, value):
        return replace(layer, **{name: value})

    if kind == "spd":
        out["P"] = fd_check(lambda x: loss_fn(S, with_param("P", x)), layer.P, bundle.dP, h, "sym", spd_retract)
        out["A"] = fd_check(lambda x: loss_fn(S, with_param("A", x)), layer.A, bundle.dA, h, "sym")
    elif kind == "lie":
        out["P"] = fd_check(lambda x: loss_fn(S, with_param("P", x)), layer.P, bundle.dP, h, "skew", songeo.so_retract)
        out["A"] = fd_check(lambda x: loss_fn(S, with_param("A", x)), layer.A, bundle.dA, h, "skew")
    else:
        out["A"] = fd_check(lambda x: loss_fn(S, with_param("weight", x)), layer.weight, bundle.dA, h, "full")
        out["b"] = fd_check(lambda x: loss_fn(S, with_param("bias", x)), layer.bias, bundle.db, h, "full")
    return out
