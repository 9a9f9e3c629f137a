"""Riemannian SGD with momentum over mixed parameter manifolds.

SPD parameters retract with the affine-invariant exponential whatever the
metric of the classifier head, rotations with the QR retraction, everything
else takes plain Euclidean steps.
"""

from dataclasses import dataclass, replace

import numpy as np

from . import songeo, spdgeo, symlin
from .exceptions import DivergenceError
from .symlin import skew, sym

KINDS = ("spd", "rotation", "euclidean")


@dataclass(frozen=True)
class OptConfig:
    lr: float = 1e-2
    momentum: float = 0.9
    weight_decay: float = 0.0
    grad_clip: float | None = None

    def __post_init__(self):
        if not self.lr >= 0:
            raise ValueError(f"lr must be non-negative, got {self.lr}")
        if not 0 <= self.momentum < 1:
            raise ValueError(f"momentum must lie in [0, 1), got {self.momentum}")
        if not self.weight_decay >= 0:
            raise ValueError("weight_decay must be non-negative")
        if self.grad_clip is not None and not self.grad_clip > 0:
            raise ValueError("grad_clip must be positive or None")


@dataclass
class ParamSlot:
    """A parameter value, its manifold tag and its momentum buffer."""

    kind: str
    value: np.ndarray
    buf: np.ndarray | None = None
    name: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown slot kind {self.kind!r}")
        if self.buf is None:
            self.buf = np.zeros_like(self.value, dtype=float)


def riem_grad_spd(P, G):
    """Affine-invariant Riemannian gradient ``P sym(G) P`` of an ambient gradient."""
    return P @ sym(G) @ P


def _check_finite(value, slot, what="value after step"):
    if not np.all(np.isfinite(value)):
        raise DivergenceError(f"non-finite {what} on slot {slot.name or slot.kind!r}", slot=slot.name)


def step(slot, grad, cfg):
    """Return the slot after one momentum step.

    Raises
    ------
    DivergenceError
        If the update produces non-finite values or leaves the manifold.
    """
    grad = np.asarray(grad, dtype=float)
    if grad.shape != slot.value.shape:
        raise ValueError(f"gradient shape {grad.shape} does not match {slot.value.shape}")
    if cfg.lr == 0:
        return slot
    _check_finite(grad, slot, "gradient")
    mu = cfg.momentum

    if slot.kind == "spd":
        P = slot.value
        buf = mu * slot.buf + riem_grad_spd(P, grad)
        _check_finite(buf, slot, "momentum buffer")
        new = spdgeo.riexp_aim(P, -cfg.lr * buf)
        _check_finite(new, slot)
        try:
            symlin.chol(new)
        except symlin.DomainError as exc:
            raise DivergenceError(f"slot {slot.name!r} left the SPD cone", slot=slot.name) from exc
        buf = spdgeo.ptransport(spdgeo.MetricParams("AIM"), P, new, buf) if mu else buf
    elif slot.kind == "rotation":
        buf = mu * slot.buf + skew(grad)
        new = songeo.so_retract(slot.value, -cfg.lr * buf)
        _check_finite(new, slot)
    else:
        g = grad + cfg.weight_decay * slot.value if cfg.weight_decay else grad
        buf = mu * slot.buf + g
        new = slot.value - cfg.lr * buf
        _check_finite(new, slot)
    return replace(slot, value=new, buf=buf)


def clip_grads(bundle, max_norm):
    """Rescale a :class:`~riemlr.grad.GradBundle` so its parameter norm is at most ``max_norm``.

    The norm is the joint Frobenius norm over all parameter slots; the input
    gradient ``dS`` is rescaled by the same factor.
    """
    if not max_norm > 0:
        raise ValueError("max_norm must be positive")
    total = np.sqrt(sum(float(np.sum(g**2)) for g in bundle.slots().values()))
    if total <= max_norm:
        return bundle
    factor = max_norm / total
    return bundle.map(lambda g: g * factor)
