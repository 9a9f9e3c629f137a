"""Synthetic manifold-valued datasets and their text file format.

File layout: a header line ``kind n C count seed`` followed by one sample per
line, ``label`` then the flattened matrix. SPD samples store the row-major
lower triangle; ``so3`` samples store ``m`` blocks of 9 row-major entries (the
header ``n`` is then the block count). Values carry 17 significant digits so
files round-trip exactly.
"""

from dataclasses import dataclass, field

import numpy as np

from .. import songeo, spdgeo, symlin
from ..symlin import sym

KINDS = ("spd", "so3")
TEST_FRACTION = 0.25


@dataclass
class Dataset:
    kind: str
    n: int
    n_classes: int
    X: np.ndarray
    y: np.ndarray
    seed: int = 0
    train_idx: np.ndarray = field(default=None, repr=False)
    test_idx: np.ndarray = field(default=None, repr=False)
    means: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown dataset kind {self.kind!r}")
        self.y = np.asarray(self.y, dtype=int)
        if np.any((self.y < 0) | (self.y >= self.n_classes)):
            raise ValueError("labels out of range")
        if self.train_idx is None or self.test_idx is None:
            self.train_idx, self.test_idx = stratified_split(self.y, self.seed)

    def __len__(self):
        return len(self.y)

    @property
    def train(self):
        return self.X[self.train_idx], self.y[self.train_idx]

    @property
    def test(self):
        return self.X[self.test_idx], self.y[self.test_idx]


def stratified_split(y, seed, test_fraction=TEST_FRACTION):
    """Deterministic per-class split into disjoint, exhaustive train/test indices."""
    rng = np.random.default_rng([seed, 7919])
    train, test = [], []
    for c in np.unique(y):
        idx = rng.permutation(np.flatnonzero(y == c))
        k = int(round(test_fraction * len(idx)))
        test.append(idx[:k])
        train.append(idx[k:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


def _sym_normal(rng, size, n):
    return sym(rng.normal(size=size + (n, n)))


def gen_spd_data(n, n_classes, per_class, sigma, seed):
    """Gaussian-like clusters around random SPD class means.

    Class means are ``exp(Z_c)`` with ``Z_c`` the symmetric part of a standard
    normal matrix; samples are ``M^{1/2} exp(sigma W) M^{1/2}``.
    """
    if n < 2 or n_classes < 2 or not sigma > 0:
        raise ValueError("need n >= 2, n_classes >= 2 and sigma > 0")
    rng = np.random.default_rng(seed)
    means = spdgeo.riexp_aim(np.eye(n), _sym_normal(rng, (n_classes,), n))
    X = np.empty((n_classes * per_class, n, n))
    y = np.repeat(np.arange(n_classes), per_class)
    for c in range(n_classes):
        half = symlin.funcm(means[c], symlin.SQRT)
        noise = symlin.funcm(sigma * _sym_normal(rng, (per_class,), n), "exp")
        X[c * per_class : (c + 1) * per_class] = sym(half @ noise @ half)
    return Dataset("spd", n, n_classes, X, y, seed, means=means)


def _clip_angle(w, max_angle):
    t = np.linalg.norm(w, axis=-1, keepdims=True)
    return np.where(t > max_angle, w * (max_angle / np.maximum(t, 1e-300)), w)


def gen_so3_data(m, n_classes, per_class, sigma, seed, mean_angle=2.0, margin=0.1):
    """Clusters on SO(3)^m around random class rotations.

    Class means have angle at most ``mean_angle``; perturbation angles are
    clipped so that every sample stays within ``pi - margin`` of the identity.
    """
    if m < 1 or n_classes < 2 or not sigma > 0:
        raise ValueError("need m >= 1, n_classes >= 2 and sigma > 0")
    rng = np.random.default_rng(seed)
    means = songeo.so3_exp(songeo.hat(_clip_angle(rng.normal(size=(n_classes, m, 3)), mean_angle)))
    budget = np.pi - margin - mean_angle
    X = np.empty((n_classes * per_class, m, 3, 3))
    y = np.repeat(np.arange(n_classes), per_class)
    for c in range(n_classes):
        w = _clip_angle(sigma * rng.normal(size=(per_class, m, 3)), budget)
        X[c * per_class : (c + 1) * per_class] = means[c][None] @ songeo.so3_exp(songeo.hat(w))
    return Dataset("so3", m, n_classes, X, y, seed, means=means)


def _flatten(ds):
    if ds.kind == "spd":
        il = np.tril_indices(ds.n)
        return ds.X[:, il[0], il[1]]
    return ds.X.reshape(len(ds), -1)


def dumps(ds):
    lines = [f"{ds.kind} {ds.n} {ds.n_classes} {len(ds)} {ds.seed}"]
    for label, row in zip(ds.y, _flatten(ds)):
        lines.append(" ".join([str(int(label))] + [f"{v:.17g}" for v in row]))
    return "\n".join(lines) + "\n"


def loads(text):
    rows = [line.split() for line in text.splitlines() if line.strip()]
    kind, n, C, count, seed = rows[0]
    n, C, count, seed = int(n), int(C), int(count), int(seed)
    body = rows[1:]
    if len(body) != count:
        raise ValueError(f"header announces {count} samples, file has {len(body)}")
    y = np.array([int(r[0]) for r in body])
    flat = np.array([[float(v) for v in r[1:]] for r in body])
    if kind == "spd":
        X = np.zeros((count, n, n))
        il = np.tril_indices(n)
        X[:, il[0], il[1]] = flat
        X[:, il[1], il[0]] = flat
    elif kind == "so3":
        X = flat.reshape(count, n, 3, 3)
    else:
        raise ValueError(f"unknown dataset kind {kind!r}")
    return Dataset(kind, n, C, X, y, seed)


def save(ds, path):
    with open(path, "w") as fh:
        fh.write(dumps(ds))


def load(path):
    with open(path) as fh:
        return loads(fh.read())
