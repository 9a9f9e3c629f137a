"""Scikit-learn compatible classifiers built on the Riemannian MLR heads.

Each estimator takes manifold-valued samples (SPD matrices or products of
rotations) and trains its head with Riemannian SGD. They follow the usual
``fit`` / ``partial_fit`` / ``predict`` / ``predict_proba`` protocol so they
can sit inside pipelines, grid searches and cross-validation loops.
"""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.multiclass import check_classification_targets
from sklearn.utils.validation import check_is_fitted

from . import grad, optim, rmlr
from .spdgeo import MetricParams
from .validation import (
    check_dimension,
    check_matching_length,
    check_rotation_array,
    check_spd_array,
)

FAMILY_DEFAULT_THETA = {"LEM": 1.0, "AIM": 1.0, "EM": 1.0, "LCM": 1.0, "BWM": 0.5}


class _RiemannianMLRBase(ClassifierMixin, BaseEstimator):
    """Shared mini-batch training loop."""

    def __init__(
        self,
        max_epochs=200,
        batch_size=30,
        lr=1e-2,
        momentum=0.9,
        weight_decay=0.0,
        grad_clip=5.0,
        shuffle=True,
        random_state=None,
    ):
        self.max_epochs = max_epochs
        self.batch_size = batch_size
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.grad_clip = grad_clip
        self.shuffle = shuffle
        self.random_state = random_state

    # subclass hooks ------------------------------------------------------

    def _check_X(self, X, fitted=False):
        raise NotImplementedError

    def _init_layer(self, X, n_classes, rng):
        raise NotImplementedError

    def _slot_kinds(self):
        raise NotImplementedError

    def _loss_grad(self, X, y):
        raise NotImplementedError

    def _logits(self, X):
        raise NotImplementedError

    # ---------------------------------------------------------------------

    def _opt_config(self):
        return optim.OptConfig(self.lr, self.momentum, self.weight_decay, self.grad_clip)

    def _initialize(self, X, y, classes):
        check_classification_targets(y)
        self.classes_ = np.unique(y) if classes is None else np.unique(classes)
        if len(self.classes_) < 2:
            raise ValueError("need at least two classes")
        self._rng = np.random.default_rng(self.random_state)
        self.layer_ = self._init_layer(X, len(self.classes_), self._rng)
        self.sample_shape_ = X.shape[1:]
        self._slots = {
            name: optim.ParamSlot(kind, getattr(self.layer_, attr), name=name)
            for name, (kind, attr) in self._slot_kinds().items()
        }
        self.loss_curve_ = []
        self.n_iter_ = 0

    def _encode(self, y):
        idx = np.searchsorted(self.classes_, y)
        idx = np.clip(idx, 0, len(self.classes_) - 1)
        if np.any(self.classes_[idx] != y):
            raise ValueError("y contains labels not seen in classes")
        return idx

    def _run_epoch(self, X, yi):
        cfg = self._opt_config()
        n = len(X)
        order = self._rng.permutation(n) if self.shuffle else np.arange(n)
        total = 0.0
        for start in range(0, n, self.batch_size):
            idx = order[start : start + self.batch_size]
            loss, bundle = self._loss_grad(X[idx], yi[idx])
            if self.grad_clip is not None:
                bundle = optim.clip_grads(bundle, self.grad_clip)
            grads = bundle.slots()
            for name, (_, attr) in self._slot_kinds().items():
                slot = optim.step(self._slots[name], grads[name], cfg)
                self._slots[name] = slot
                setattr(self.layer_, attr, slot.value)
            total += loss * len(idx)
        self.n_iter_ += 1
        self.loss_curve_.append(total / n)
        return total / n

    def fit(self, X, y):
        """Train from scratch for ``max_epochs`` epochs."""
        X = self._check_X(X)
        y = check_matching_length(X, y)
        self._initialize(X, y, None)
        yi = self._encode(y)
        for _ in range(self.max_epochs):
            self._run_epoch(X, yi)
        return self

    def initialize(self, X, y, classes=None):
        """Draw initial parameters for ``(X, y)`` without training."""
        X = self._check_X(X)
        y = check_matching_length(X, y)
        self._initialize(X, y, classes)
        return self

    def partial_fit(self, X, y, classes=None):
        """Run one epoch over ``(X, y)``, initializing on the first call."""
        X = self._check_X(X)
        y = check_matching_length(X, y)
        if not hasattr(self, "layer_"):
            self._initialize(X, y, classes)
        else:
            check_dimension(X, self.sample_shape_)
        self._run_epoch(X, self._encode(y))
        return self

    def decision_function(self, X):
        check_is_fitted(self, "layer_")
        X = self._check_X(X)
        check_dimension(X, self.sample_shape_)
        return self._logits(X)

    def predict_proba(self, X):
        return rmlr.softmax(self.decision_function(X))

    def predict_log_proba(self, X):
        return np.log(self.predict_proba(X))

    def predict(self, X):
        scores = self.decision_function(X)
        return self.classes_[np.argmax(scores, axis=1)]


class SPDMLRClassifier(_RiemannianMLRBase):
    """Multinomial logistic regression on SPD matrices under a deformed metric.

    Parameters
    ----------
    metric : {"lem", "aim", "em", "lcm", "bwm"}
        Metric family defining the per-class hyperplanes.
    theta : float, optional
        Deformation exponent. Defaults to 1, or 0.5 for ``"bwm"`` (the
        undeformed Bures-Wasserstein metric).
    alpha, beta : float
        O(n)-invariant inner product weights; ignored by ``"lcm"`` and
        ``"bwm"``. Must satisfy ``min(alpha, alpha + n beta) > 0``.
    max_epochs, batch_size, lr, momentum, weight_decay, grad_clip, shuffle, random_state
        Training loop settings. ``weight_decay`` applies to the tangent
        parameters only.

    Attributes
    ----------
    classes_ : ndarray
    layer_ : SpdMlrLayer
    loss_curve_ : list of float
        Mean training loss of every epoch.
    """

    def __init__(
        self,
        metric="aim",
        theta=None,
        alpha=1.0,
        beta=0.0,
        max_epochs=200,
        batch_size=30,
        lr=1e-2,
        momentum=0.9,
        weight_decay=0.0,
        grad_clip=5.0,
        shuffle=True,
        random_state=None,
    ):
        super().__init__(max_epochs, batch_size, lr, momentum, weight_decay, grad_clip, shuffle, random_state)
        self.metric = metric
        self.theta = theta
        self.alpha = alpha
        self.beta = beta

    def metric_params(self):
        family = str(self.metric).upper()
        theta = FAMILY_DEFAULT_THETA.get(family, 1.0) if self.theta is None else self.theta
        return MetricParams(family, theta, self.alpha, self.beta)

    def _check_X(self, X, fitted=False):
        return check_spd_array(X)

    def _init_layer(self, X, n_classes, rng):
        mp = self.metric_params().validate(X.shape[-1])
        return rmlr.SpdMlrLayer.initialize(mp, X.shape[-1], n_classes, rng)

    def _slot_kinds(self):
        return {"P": ("spd", "P"), "A": ("euclidean", "A")}

    def _loss_grad(self, X, y):
        return grad.grad_spd_mlr(self.layer_.mp, X, self.layer_, y)

    def _logits(self, X):
        return rmlr.spd_mlr_logits(self.layer_.mp, X, self.layer_)


class LieMLRClassifier(_RiemannianMLRBase):
    """Multinomial logistic regression on products of SO(3).

    Samples have shape (m, 3, 3): ``m`` rotation blocks each. Class points
    are rotations updated by the QR retraction; tangent parameters are
    skew-symmetric matrices.
    """

    def _check_X(self, X, fitted=False):
        return check_rotation_array(X)

    def _init_layer(self, X, n_classes, rng):
        return rmlr.LieMlrLayer.initialize(X.shape[1], n_classes, rng, n=X.shape[-1])

    def _slot_kinds(self):
        return {"P": ("rotation", "P"), "A": ("euclidean", "A")}

    def _loss_grad(self, X, y):
        return grad.grad_lie_mlr(X, self.layer_, y)

    def _logits(self, X):
        return rmlr.lie_mlr_logits(X, self.layer_)


class LogEigClassifier(_RiemannianMLRBase):
    """Euclidean logistic regression on matrix-logarithm coordinates.

    The non-intrinsic baseline: ``log S`` is flattened with sqrt(2)-weighted
    off-diagonal entries and fed to a linear softmax layer.
    """

    def _check_X(self, X, fitted=False):
        return check_spd_array(X)

    def _init_layer(self, X, n_classes, rng):
        return rmlr.LogEigLayer.initialize(X.shape[-1], n_classes, rng)

    def _slot_kinds(self):
        return {"A": ("euclidean", "weight"), "b": ("euclidean", "bias")}

    def _loss_grad(self, X, y):
        return grad.grad_logeig(X, self.layer_, y)

    def _logits(self, X):
        return rmlr.logeig_logits(X, self.layer_)


def make_classifier(name, **kwargs):
    """Estimator for a classifier tag in ``{logeig, lem, aim, em, lcm, bwm, lie}``."""
    name = name.lower()
    if name == "logeig":
        return LogEigClassifier(**kwargs)
    if name == "lie":
        return LieMLRClassifier(**kwargs)
    return SPDMLRClassifier(metric=name, **kwargs)
