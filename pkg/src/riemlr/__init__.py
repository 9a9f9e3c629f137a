"""Riemannian multinomial logistic regression on SPD matrices and rotation groups.

Modules
-------
symlin
    Spectral functions of symmetric matrices and their differentials.
spdgeo
    Deformed LEM, AIM, EM, LCM and BWM geometry of the SPD cone.
songeo
    Logarithm, exponential and retraction on SO(n).
rmlr
    Classifier heads and their forward passes.
grad
    Reverse-mode gradients and finite-difference checks.
optim
    Riemannian SGD with momentum.
estimators
    Scikit-learn compatible classifiers.
"""

from .estimators import LieMLRClassifier, LogEigClassifier, SPDMLRClassifier, make_classifier
from .exceptions import (
    BranchError,
    ConvergenceError,
    DegenerateError,
    DivergenceError,
    DomainError,
    ParameterDomainError,
    RiemlrError,
    UnsupportedOriginError,
)
from .spdgeo import MetricParams

__version__ = "0.1.0"

__all__ = [
    "BranchError",
    "ConvergenceError",
    "DegenerateError",
    "DivergenceError",
    "DomainError",
    "LieMLRClassifier",
    "LogEigClassifier",
    "MetricParams",
    "ParameterDomainError",
    "RiemlrError",
    "SPDMLRClassifier",
    "UnsupportedOriginError",
    "make_classifier",
]
