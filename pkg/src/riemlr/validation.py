"""Input validation for matrix-valued samples."""

import numpy as np

from . import songeo, symlin
from .exceptions import DomainError


def check_spd_array(X, name="X", check_values=True):
    """Return ``X`` as a float array of shape (n_samples, n, n) of SPD matrices."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 3 or X.shape[1] != X.shape[2]:
        raise ValueError(f"{name} must have shape (n_samples, n, n), got {X.shape}")
    if X.shape[0] == 0:
        raise ValueError(f"{name} is empty")
    if check_values:
        symlin.check_spd(X, name)
    return X


def check_rotation_array(X, name="X", check_values=True):
    """Return ``X`` as a float array of shape (n_samples, m, n, n) of rotations.

    A 3-D input (n_samples, n, n) is read as a single block per sample.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 3:
        X = X[:, None]
    if X.ndim != 4 or X.shape[-1] != X.shape[-2]:
        raise ValueError(f"{name} must have shape (n_samples, m, n, n), got {X.shape}")
    if X.shape[0] == 0:
        raise ValueError(f"{name} is empty")
    if check_values:
        songeo.check_rotation(X, name)
    return X


def check_matching_length(X, y):
    y = np.asarray(y)
    if y.ndim != 1:
        raise ValueError(f"y must be 1-D, got shape {y.shape}")
    if len(y) != len(X):
        raise ValueError(f"X has {len(X)} samples but y has {len(y)}")
    return y


def check_dimension(X, expected, name="X"):
    if X.shape[1:] != expected:
        raise DomainError(f"{name} has sample shape {X.shape[1:]}, estimator was fitted on {expected}")
