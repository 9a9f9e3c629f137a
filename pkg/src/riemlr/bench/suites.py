"""Randomized invariant suites behind ``riemlr check`` and ``riemlr gradcheck``.

Each suite runs a list of named invariants over seeded random instances and
records, for every invariant, the worst error seen, the seed of the instance
that produced it and the tolerance it is held to. Primitives are looked up as
module attributes at call time so a patched kernel is exercised, not a stale
reference.
"""

import math
import time
import zlib
from dataclasses import dataclass, field, replace

import numpy as np

from .. import grad, rmlr, songeo, spdgeo, symlin
from ..spdgeo import MetricParams
from ..testing import (
    random_orthogonal,
    random_rotation,
    random_rotation_with_angle,
    random_skew,
    random_spd,
    random_sym,
    spd_with_gap,
)

FAMILIES = spdgeo.FAMILIES
ZERO_LAW_THETAS = {f: (-0.5, 0.5, 1.0, 1.5) for f in FAMILIES}
ZERO_LAW_THETAS["BWM"] = (0.25, 0.5, 0.75)
EQUIV_THETAS = {f: (0.5, 1.0, 1.5) for f in FAMILIES}
EQUIV_THETAS["BWM"] = (0.25, 0.5, 0.75)
LIMIT_THETAS = (1e-2, 1e-3, 1e-4)
LIMIT_TARGET = 1e-3


# -- bookkeeping -----------------------------------------------------------


@dataclass
class CheckResult:
    """Outcome of one invariant over all its instances."""

    suite: str
    module: str
    invariant: str
    tol: float
    worst: float = 0.0
    seed: int | None = None
    count: int = 0
    error: str | None = None
    details: list = field(default_factory=list)

    @property
    def name(self):
        return f"{self.module}.{self.invariant}"

    @property
    def passed(self):
        return self.error is None and self.count > 0 and self.worst <= self.tol

    def record(self, err, seed):
        err = float(err)
        if not math.isfinite(err):
            err = math.inf
        if self.seed is None or err > self.worst:
            self.worst, self.seed = err, seed
        self.count += 1

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        text = (
            f"{status} [{self.suite}] {self.name}: worst={self.worst:.3e} tol={self.tol:.0e} "
            f"seed={self.seed} instances={self.count}"
        )
        return text + (f" error={self.error}" if self.error else "")


@dataclass
class SuiteReport:
    suite: str
    results: list = field(default_factory=list)
    tables: list = field(default_factory=list)
    seconds: float = 0.0

    @property
    def passed(self):
        return all(r.passed for r in self.results)

    @property
    def failures(self):
        return [r for r in self.results if not r.passed]

    def __getitem__(self, name):
        for r in self.results:
            if r.name == name:
                return r
        raise KeyError(name)

    def format(self):
        lines = [r.line() for r in self.results]
        lines.extend(self.tables)
        n_fail = len(self.failures)
        lines.append(
            f"suite {self.suite}: {len(self.results) - n_fail}/{len(self.results)} invariants passed "
            f"in {self.seconds:.1f}s"
        )
        return "\n".join(lines)


class _Runner:
    def __init__(self, suite, seed):
        self.report = SuiteReport(suite)
        self.seed = seed
        self._results = {}

    def result(self, module, invariant, tol):
        key = (module, invariant)
        if key not in self._results:
            res = CheckResult(self.report.suite, module, invariant, tol)
            self._results[key] = res
            self.report.results.append(res)
        return self._results[key]

    def run(self, module, invariant, tol, instances, fn):
        """Call ``fn(rng, i)`` per instance; it returns the instance error."""
        res = self.result(module, invariant, tol)
        for i in range(instances):
            seed = self.seed * 1_000_003 + i
            try:
                res.record(fn(np.random.default_rng([seed, zlib.crc32(invariant.encode())]), i), seed)
            except Exception as exc:  # a raising invariant is a failed invariant
                res.record(math.inf, seed)
                res.error = f"{type(exc).__name__}: {exc}"
        return res


def _rel(a, b, floor=1e-300):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), floor))


def _random_ab(rng, n):
    alpha = rng.uniform(0.5, 2.0)
    beta = rng.uniform(-0.9 * alpha / n, 1.0)
    return alpha, beta


def _random_mp(rng, family, n, thetas):
    alpha, beta = _random_ab(rng, n)
    return MetricParams(family, thetas[rng.integers(len(thetas))], alpha, beta)


# -- geometry --------------------------------------------------------------


def geometry_suite(seed=0, instances=100):
    """Round trips, zero laws, transport isometry, O(n)-invariance, group axioms."""
    r = _Runner("geometry", seed)
    dims = lambda i: 2 + i % 7  # noqa: E731

    def log_exp(rng, i):
        S = random_spd(rng, dims(i), cond=1e4)
        X = symlin.funcm(S, "log")
        return max(_rel(symlin.funcm(X, "exp"), S), _rel(symlin.funcm(symlin.funcm(X, "exp"), "log"), X, 1.0))

    def pow_roundtrip(rng, i):
        S = random_spd(rng, dims(i), cond=1e4)
        errs = [_rel(symlin.funcm(symlin.funcm(S, t), 1.0 / t), S) for t in (-0.25, 0.25, -0.5, 0.5, 1.0, 1.5)]
        return max(errs)

    def lyap_residual(rng, i):
        P = random_spd(rng, dims(i), cond=1e4)
        V = random_sym(rng, dims(i))
        X = symlin.lyap_solve(P, V)
        return np.linalg.norm(X @ P + P @ X - V) / (1.0 + np.linalg.norm(V))

    def prod_sqrt(rng, i):
        n = dims(i)
        B, A = random_spd(rng, n, 100.0), random_spd(rng, n, 100.0)
        ba, ab = symlin.prod_sqrt(B, A)
        exact = 0.0 if np.array_equal(ab, ba.T) else math.inf
        return max(_rel(ba @ ba, B @ A), _rel(ab @ ab, A @ B), exact)

    def chol_inverse(rng, i):
        n = dims(i)
        P = random_spd(rng, n, 100.0)
        L = symlin.chol(P)
        V = random_sym(rng, n)
        X = np.tril(rng.normal(size=(n, n)))
        return max(
            _rel(symlin.chol_inv_diff(L, symlin.chol_diff(P, V, L)), V),
            _rel(symlin.chol_diff(P, symlin.chol_inv_diff(L, X), L), X),
        )

    r.run("symlin", "log_exp_roundtrip", 1e-8, instances, log_exp)
    r.run("symlin", "pow_roundtrip", 1e-8, instances, pow_roundtrip)
    r.run("symlin", "lyap_residual", 1e-10, instances, lyap_residual)
    r.run("symlin", "prod_sqrt_square", 1e-8, instances, prod_sqrt)
    r.run("symlin", "chol_diff_inverse", 1e-9, instances, chol_inverse)

    def aim_exp_log(rng, i):
        n = dims(i)
        P = random_spd(rng, n, 100.0)
        V = random_sym(rng, n, 0.5)
        V = V / max(1.0, np.linalg.norm(V))
        return _rel(spdgeo.rielog(MetricParams("AIM"), P, spdgeo.riexp_aim(P, V)), V)

    r.run("spdgeo", "aim_exp_log", 1e-8, instances, aim_exp_log)

    for family in FAMILIES:

        def zero_law(rng, i, family=family):
            n = dims(i)
            P = random_spd(rng, n, 100.0)
            mp = _random_mp(rng, family, n, ZERO_LAW_THETAS[family])
            return np.linalg.norm(spdgeo.rielog(mp, P, P)) / max(1.0, np.linalg.norm(P))

        def isometry(rng, i, family=family):
            n = dims(i)
            mp = _random_mp(rng, family, n, ZERO_LAW_THETAS[family])
            P = np.eye(n) if family == "BWM" else random_spd(rng, n, 20.0)
            Q = random_spd(rng, n, 20.0)
            V = random_sym(rng, n)
            before = spdgeo.metric(mp, P, V, V)
            after = spdgeo.metric(mp, Q, *(2 * [spdgeo.ptransport(mp, P, Q, V)]))
            return abs(after - before) / abs(before)

        def o_invariance(rng, i, family=family):
            n = dims(i)
            mp = _random_mp(rng, family, n, ZERO_LAW_THETAS[family])
            P = random_spd(rng, n, 20.0)
            V, W = random_sym(rng, n), random_sym(rng, n)
            R = random_orthogonal(rng, n)
            g = spdgeo.metric(mp, P, V, W)
            gR = spdgeo.metric(mp, R @ P @ R.T, R @ V @ R.T, R @ W @ R.T)
            return abs(gR - g) / (spdgeo.norm(mp, P, V) * spdgeo.norm(mp, P, W))

        def metric_scaling(rng, i, family=family):
            n = dims(i)
            mp = _random_mp(rng, family, n, ZERO_LAW_THETAS[family])
            mq = mp.scaled(rng.uniform(0.1, 10.0))
            P, Q = np.eye(n) if family == "BWM" else random_spd(rng, n, 20.0), random_spd(rng, n, 20.0)
            V = random_sym(rng, n)
            return max(
                np.max(np.abs(spdgeo.rielog(mp, P, Q) - spdgeo.rielog(mq, P, Q))),
                np.max(np.abs(spdgeo.ptransport(mp, P, Q, V) - spdgeo.ptransport(mq, P, Q, V))),
            )

        r.run("spdgeo", f"zero_law[{family}]", 1e-9, instances, zero_law)
        r.run("spdgeo", f"transport_isometry[{family}]", 1e-8, instances, isometry)
        if family != "LCM":
            r.run("spdgeo", f"o_n_invariance[{family}]", 1e-9, instances, o_invariance)
        r.run("spdgeo", f"metric_scaling[{family}]", 1e-12, instances, metric_scaling)

    def group_axioms(rng, i):
        n = dims(i)
        S1, S2, S3 = (random_spd(rng, n, 20.0) for _ in range(3))
        op = spdgeo.chol_group_op
        I = np.eye(n)
        Li = np.linalg.inv(symlin.chol(S1))
        inv = symlin.sym(Li @ Li.T)
        return max(
            _rel(op(I, S1), S1),
            _rel(op(S1, I), S1),
            _rel(op(op(S1, S2), S3), op(S1, op(S2, S3))),
            _rel(op(S1, inv), I),
        )

    r.run("spdgeo", "cholesky_group_axioms", 1e-9, instances, group_axioms)

    def so3_roundtrip(rng, i):
        angle = (np.pi - 1e-3) * i / max(instances - 1, 1)
        R = random_rotation_with_angle(rng, angle)
        return np.linalg.norm(songeo.so3_exp(songeo.so3_log(R)) - R)

    def bi_invariance(rng, i):
        A1, A2 = random_skew(rng), random_skew(rng)
        Q = random_rotation(rng)
        return abs(symlin.frob(Q @ A1 @ Q.T, Q @ A2 @ Q.T) - symlin.frob(A1, A2))

    r.run("songeo", "so3_log_exp_roundtrip", 1e-10, instances, so3_roundtrip)
    r.run("songeo", "bi_invariance", 1e-12, instances, bi_invariance)
    return r.report


# -- limits ----------------------------------------------------------------


def limit_deviations(P, V, alpha=1.0, beta=0.0, thetas=LIMIT_THETAS):
    """Relative gaps of deformed EM and BWM norms from their log-Euclidean limits.

    Returns
    -------
    em, bwm : list of float
        One entry per ``theta``: ``|g_EM(theta) - g_LEM| / g_LEM`` with the
        ``(alpha, beta)`` weights, and ``|g_BWM(theta) - g_LEM/4| / (g_LEM/4)``
        with the standard weights.
    """
    lem = spdgeo.metric(MetricParams("LEM", 1.0, alpha, beta), P, V, V)
    lem_std = spdgeo.metric(MetricParams("LEM"), P, V, V) / 4.0
    em = [abs(spdgeo.metric(MetricParams("EM", t, alpha, beta), P, V, V) - lem) / lem for t in thetas]
    bwm = [abs(spdgeo.metric(MetricParams("BWM", t), P, V, V) - lem_std) / lem_std for t in thetas]
    return em, bwm


def limits_suite(seed=0, instances=50):
    """Deformed EM and BWM approach their log-Euclidean limits as theta shrinks."""
    r = _Runner("limits", seed)
    worst = {"EM": np.zeros(len(LIMIT_THETAS)), "BWM": np.zeros(len(LIMIT_THETAS))}

    def check(family):
        def fn(rng, i):
            n = 2 + i % 7
            P = random_spd(rng, n, 10.0)
            V = random_sym(rng, n)
            alpha, beta = _random_ab(rng, n) if i % 2 else (1.0, 0.0)
            em, bwm = limit_deviations(P, V, alpha, beta)
            dev = np.array(em if family == "EM" else bwm)
            worst[family] = np.maximum(worst[family], dev)
            monotone = bool(np.all(np.diff(dev) < 0))
            return dev[-1] if monotone else math.inf

        return fn

    r.run("spdgeo", "em_to_lem_limit", LIMIT_TARGET, instances, check("EM"))
    r.run("spdgeo", "bwm_to_quarter_lem_limit", LIMIT_TARGET, instances, check("BWM"))
    table = ["theta      EM-vs-LEM   BWM-vs-LEM/4   (worst relative deviation)"]
    for j, t in enumerate(LIMIT_THETAS):
        table.append(f"{t:<10.0e} {worst['EM'][j]:.3e}   {worst['BWM'][j]:.3e}")
    r.report.tables.append("\n".join(table))
    return r.report


# -- closed form versus generic pipeline -----------------------------------


def _random_layer(rng, mp, n, C, origin_identity=False):
    P = np.stack([np.eye(n) if origin_identity else random_spd(rng, n, 10.0) for _ in range(C)])
    A = np.stack([random_sym(rng, n) for _ in range(C)])
    return rmlr.SpdMlrLayer(mp, P, A)


def equivalence_suite(seed=0, instances=3):
    """Closed-form scores against the generic pipeline, plus reductions."""
    r = _Runner("equivalence", seed)
    for family in FAMILIES:
        for theta in EQUIV_THETAS[family]:
            for n in (2, 3, 5):

                def fn(rng, i, family=family, theta=theta, n=n):
                    alpha, beta = _random_ab(rng, n)
                    mp = MetricParams(family, theta, alpha, beta)
                    layer = _random_layer(rng, mp, n, 3)
                    S = np.stack([random_spd(rng, n, 10.0) for _ in range(4)])
                    closed = rmlr.spd_mlr_logits(mp, S, layer)
                    generic = rmlr.rmlr_logits_generic(mp, S, layer)
                    return np.max(np.abs(closed - generic) / np.maximum(1.0, np.abs(generic)))

                r.run("rmlr", f"closed_vs_generic[{family}]", 1e-9, instances, fn)

    def euclidean(rng, i):
        n = 2 + i % 4
        mp = MetricParams("EM", 1.0, 1.0, 0.0)
        P = np.stack([np.diag(rng.uniform(0.5, 2.0, n)) for _ in range(3)])
        A = np.stack([np.diag(rng.normal(size=n)) for _ in range(3)])
        x = rng.uniform(0.5, 2.0, size=(5, n))
        S = np.stack([np.diag(v) for v in x])
        scores = rmlr.spd_mlr_logits(mp, S, rmlr.SpdMlrLayer(mp, P, A))
        a = np.diagonal(A, axis1=1, axis2=2)
        b = np.einsum("kn,kn->k", np.diagonal(P, axis1=1, axis2=2), a)
        return np.max(np.abs(scores - (x @ a.T - b)))

    r.run("rmlr", "euclidean_reduction", 1e-12, 10 * instances, euclidean)

    def margin_consistency(rng, i):
        n = 2 + i % 4
        family = FAMILIES[i % len(FAMILIES)]
        mp = _random_mp(rng, family, n, EQUIV_THETAS[family])
        layer = _random_layer(rng, mp, n, 3)
        S = random_spd(rng, n, 10.0)
        scores = rmlr.spd_mlr_logits(mp, S, layer)
        err = 0.0
        for k in range(3):
            At = rmlr.tilde_A(mp, layer.P[k], layer.A[k])
            rebuilt = np.sign(scores[k]) * spdgeo.norm(mp, layer.P[k], At) * rmlr.margin_distance(
                mp, S, layer.P[k], At
            )
            err = max(err, abs(rebuilt - scores[k]) / max(1.0, abs(scores[k])))
        return err

    r.run("rmlr", "margin_consistency", 1e-10, 10 * instances, margin_consistency)

    def alpha_scaling(rng, i):
        n = 2 + i % 4
        family = ("LEM", "AIM", "EM")[i % 3]
        mp = _random_mp(rng, family, n, EQUIV_THETAS[family])
        layer = _random_layer(rng, mp, n, 4)
        S = np.stack([random_spd(rng, n, 10.0) for _ in range(8)])
        a = rng.uniform(0.1, 10.0)
        base = rmlr.spd_mlr_logits(mp, S, layer)
        scaled = rmlr.spd_mlr_logits(mp.scaled(a), S, replace(layer, mp=mp.scaled(a)))
        ratio = np.max(np.abs(scaled - a * base) / np.maximum(1.0, np.abs(a * base)))
        same = np.array_equal(np.argmax(base, axis=1), np.argmax(scaled, axis=1))
        return ratio if same else math.inf

    r.run("rmlr", "alpha_scaling_argmax", 1e-10, 10 * instances, alpha_scaling)

    def lie_paths(rng, i):
        m, C = 1 + i % 3, 3
        P = np.stack([[random_rotation(rng) for _ in range(m)] for _ in range(C)])
        A = np.stack([[random_skew(rng) for _ in range(m)] for _ in range(C)])
        layer = rmlr.LieMlrLayer(P, A)
        S = np.stack([[random_rotation_with_angle(rng, 0.3) for _ in range(m)] for _ in range(4)])
        S = P[0][None] @ S
        pt = rmlr.lie_mlr_logits_generic(S, layer, "pt")
        lt = rmlr.lie_mlr_logits_generic(S, layer, "lt")
        closed = rmlr.lie_mlr_logits(S, layer)
        identical = np.array_equal(pt, lt)
        return np.max(np.abs(closed - pt)) if identical else math.inf

    r.run("rmlr", "lie_transport_vs_translation", 1e-12, 10 * instances, lie_paths)
    return r.report


# -- margin distance oracle ------------------------------------------------


def sampled_margin(mp, S, P, At, samples, rng, chunk=250_000):
    """Infimum over sampled hyperplane points of ``sin(angle) ||Log_P S||_P``.

    Hyperplane points are parameterized by their logarithm ``Y`` at ``P``,
    drawn from the ``g_P``-orthogonal complement of ``At``; the value for one
    ``Y`` is the length of the component of ``Log_P S`` orthogonal to ``Y``.
    """
    n = P.shape[-1]
    basis = grad.sym_basis(n)
    G = np.array([[spdgeo.metric(mp, P, Ei, Ej) for Ej in basis] for Ei in basis])
    G = 0.5 * (G + G.T)
    coords = lambda X: np.linalg.solve(  # noqa: E731
        np.array([[np.sum(Ei * Ej) for Ej in basis] for Ei in basis]), np.array([np.sum(X * E) for E in basis])
    )
    s = coords(spdgeo.rielog(mp, P, S))
    a = coords(At)
    Ga, Gs = G @ a, G @ s
    s_norm2 = s @ Gs
    best = math.inf
    done = 0
    while done < samples:
        k = min(chunk, samples - done)
        Y = rng.normal(size=(k, len(basis)))
        Y -= np.outer(Y @ Ga / (a @ Ga), a)
        yy = np.einsum("ki,ij,kj->k", Y, G, Y)
        cos2 = (Y @ Gs) ** 2 / (yy * s_norm2)
        best = min(best, float(np.sqrt(s_norm2 * max(1.0 - np.max(cos2), 0.0))))
        done += k
    return best


def margin_suite(seed=0, instances=20, samples=1_000_000, rel_tol=0.02):
    """Closed-form margin distance against a sampled infimum on 2x2 matrices."""
    r = _Runner("margin", seed)
    for family in FAMILIES:

        def fn(rng, i, family=family):
            mp = _random_mp(rng, family, 2, EQUIV_THETAS[family])
            P = random_spd(rng, 2, 10.0)
            S = random_spd(rng, 2, 10.0)
            At = rmlr.tilde_A(mp, P, random_sym(rng, 2))
            closed = rmlr.margin_distance(mp, S, P, At)
            sampled = sampled_margin(mp, S, P, At, samples, rng)
            if closed > sampled * (1 + 1e-9) + 1e-15:
                return math.inf
            return (sampled - closed) / max(closed, 1e-15)

        r.run("rmlr", f"margin_distance[{family}]", rel_tol, instances, fn)
    return r.report


# -- gradients -------------------------------------------------------------


def _loss_spd(mp, label):
    return lambda S, layer: rmlr.softmax_xent(rmlr.spd_mlr_logits(mp, S, layer), label)[0]


def _loss_lie(label):
    return lambda S, layer: rmlr.softmax_xent(rmlr.lie_mlr_logits(S, layer), label)[0]


def _loss_logeig(label):
    return lambda S, layer: rmlr.softmax_xent(rmlr.logeig_logits(S, layer), label)[0]


def _finite_bundle(bundle):
    return all(np.all(np.isfinite(g)) for g in (bundle.dS, *bundle.slots().values()))


def _bundles_identical(b1, b2):
    return all(np.array_equal(g1, g2) for g1, g2 in zip((b1.dS, *b1.slots().values()), (b2.dS, *b2.slots().values())))


GRAD_THETAS = {f: (0.5, 1.5) for f in FAMILIES}
GRAD_THETAS["BWM"] = (0.25, 0.75)
GRAD_THETAS["LEM"] = (1.0,)
END_TO_END_TOL = {f: 1e-4 for f in FAMILIES} | {"BWM": 1e-3, "LIE": 1e-4, "LOGEIG": 1e-4}


def gradients_suite(seed=0, instances=20, classifiers=None):
    """Finite-difference checks of every VJP and of the end-to-end heads.

    Parameters
    ----------
    classifiers : iterable of str, optional
        Restrict the end-to-end checks to these classifier tags.
    """
    r = _Runner("gradients", seed)
    dims = lambda i: 2 + i % 5  # noqa: E731
    wanted = None if classifiers is None else {c.upper() for c in classifiers}

    for name, f in (("log", "log"), ("exp", "exp"), ("pow0.5", 0.5)):

        def vjp_funcm(rng, i, f=f):
            n = dims(i)
            S = random_spd(rng, n, 20.0)
            G = rng.normal(size=(n, n))
            return grad.fd_check(
                lambda X: symlin.frob(G, symlin.funcm(X, f)), S, grad.vjp_funcm(S, f, G), h=1e-6
            )

        def funcm_diff(rng, i, f=f):
            n = dims(i)
            S = spd_with_gap(rng, n, 1e-7) if i % 2 else random_spd(rng, n, 20.0)
            V = random_sym(rng, n)
            h = 1e-6
            fd = (symlin.funcm(S + h * V, f) - symlin.funcm(S - h * V, f)) / (2 * h)
            return _rel(fd, symlin.funcm_diff(S, f, V))

        r.run("grad", f"vjp_funcm[{name}]", 1e-5, instances, vjp_funcm)
        r.run("symlin", f"funcm_diff[{name}]", 1e-5, instances, funcm_diff)

    def vjp_chol(rng, i):
        n = dims(i)
        P = random_spd(rng, n, 20.0)
        G = rng.normal(size=(n, n))
        L = symlin.chol(P)
        return grad.fd_check(lambda X: symlin.frob(G, np.linalg.cholesky(X)), P, grad.vjp_chol(L, G), h=1e-6)

    def chol_diff(rng, i):
        n = dims(i)
        P = random_spd(rng, n, 20.0)
        V = random_sym(rng, n)
        h = 1e-6
        fd = (symlin.chol(P + h * V) - symlin.chol(P - h * V)) / (2 * h)
        return _rel(fd, symlin.chol_diff(P, V))

    r.run("grad", "vjp_chol", 1e-5, instances, vjp_chol)
    r.run("symlin", "chol_diff", 1e-5, instances, chol_diff)
    r.run("symlin", "lyap_vjp", 1e-5, max(instances, 50), lyap_vjp_error)

    def so3_log_vjp(rng, i):
        S = np.stack([[random_rotation_with_angle(rng, rng.uniform(0.0, 3.0))]])
        G = random_skew(rng)
        layer = rmlr.LieMlrLayer(np.eye(3)[None, None], G[None, None])
        tape = rmlr.Tape("LIE", True)
        rmlr.lie_mlr_logits(S, layer, tape=tape)
        bundle = grad.backward_lie(layer, tape, np.ones((1, 1)))
        f = lambda X: float(rmlr.lie_mlr_logits(X, layer)[0, 0])  # noqa: E731
        return grad.fd_check(f, S, bundle.dS, 1e-6, "skew", songeo.so_retract)

    r.run("grad", "vjp_so3_log", 1e-5, instances, so3_log_vjp)

    e2e = max(2, instances // 5)
    for family in FAMILIES:
        if wanted is not None and family not in wanted:
            continue
        for theta in GRAD_THETAS[family]:

            def spd_e2e(rng, i, family=family, theta=theta):
                n = 2 + i % 3
                alpha, beta = _random_ab(rng, n)
                mp = MetricParams(family, theta, alpha, beta)
                layer = _random_layer(rng, mp, n, 3)
                S = np.stack([random_spd(rng, n, 10.0) for _ in range(5)])
                label = rng.integers(0, 3, size=5)
                _, bundle = grad.grad_spd_mlr(mp, S, layer, label)
                errs = grad.check_bundle(_loss_spd(mp, label), S, layer, bundle, 1e-6, "spd")
                return max(errs.values())

            r.run("grad", f"end_to_end[{family}]", END_TO_END_TOL[family], e2e, spd_e2e)

        def gap_guard(rng, i, family=family):
            n = 2 + i % 4
            theta = GRAD_THETAS[family][i % len(GRAD_THETAS[family])]
            mp = MetricParams(family, theta)
            layer = _random_layer(rng, mp, n, 3, origin_identity=i % 2 == 0)
            S = np.stack([spd_with_gap(rng, n, 1e-8), np.eye(n) * 1.5, spd_with_gap(rng, n, 1e-8, 0.2)])
            _, bundle = grad.grad_spd_mlr(mp, S, layer, np.array([0, 1, 2]))
            return 0.0 if _finite_bundle(bundle) else math.inf

        def replay(rng, i, family=family):
            n = 2 + i % 4
            mp = _random_mp(rng, family, n, GRAD_THETAS[family])
            layer = _random_layer(rng, mp, n, 3)
            S = np.stack([random_spd(rng, n, 10.0) for _ in range(4)])
            tape = rmlr.Tape(family, True)
            logits = rmlr.spd_mlr_logits(mp, S, layer, tape=tape)
            _, dl = rmlr.softmax_xent(logits, np.array([0, 1, 2, 0]))
            b1 = grad.backward_spd(mp, layer, tape, dl)
            b2 = grad.backward_spd(mp, layer, tape, dl)
            return 0.0 if _bundles_identical(b1, b2) else math.inf

        r.run("grad", f"eigen_gap_guard[{family}]", 0.0, e2e, gap_guard)
        r.run("grad", f"tape_replay[{family}]", 0.0, e2e, replay)

    if wanted is None or "LIE" in wanted:

        def lie_e2e(rng, i):
            m, C = 1 + i % 2, 3
            P = np.stack([[random_rotation(rng) for _ in range(m)] for _ in range(C)])
            A = np.stack([[random_skew(rng) for _ in range(m)] for _ in range(C)])
            layer = rmlr.LieMlrLayer(P, A)
            S = np.stack([[random_rotation_with_angle(rng, 1.0) for _ in range(m)] for _ in range(4)])
            label = rng.integers(0, C, size=4)
            _, bundle = grad.grad_lie_mlr(S, layer, label)
            return max(grad.check_bundle(_loss_lie(label), S, layer, bundle, 1e-6, "lie").values())

        r.run("grad", "end_to_end[LIE]", END_TO_END_TOL["LIE"], e2e, lie_e2e)

    if wanted is None or "LOGEIG" in wanted:

        def logeig_e2e(rng, i):
            n = 2 + i % 3
            layer = rmlr.LogEigLayer.initialize(n, 3, rng)
            layer = replace(layer, bias=rng.normal(size=3))
            S = np.stack([random_spd(rng, n, 10.0) for _ in range(4)])
            label = rng.integers(0, 3, size=4)
            _, bundle = grad.grad_logeig(S, layer, label)
            return max(grad.check_bundle(_loss_logeig(label), S, layer, bundle, 1e-6, "logeig").values())

        def logeig_gap(rng, i):
            n = 2 + i % 3
            layer = rmlr.LogEigLayer.initialize(n, 3, rng)
            S = np.stack([spd_with_gap(rng, n, 1e-8), np.eye(n)])
            _, bundle = grad.grad_logeig(S, layer, np.array([0, 1]))
            return 0.0 if _finite_bundle(bundle) else math.inf

        r.run("grad", "end_to_end[LOGEIG]", END_TO_END_TOL["LOGEIG"], e2e, logeig_e2e)
        r.run("grad", "eigen_gap_guard[LOGEIG]", 0.0, e2e, logeig_gap)
    return r.report


def lyap_vjp_error(rng, i, total=50):
    """FD error of ``symlin.lyap_vjp`` on one random ``(P, V, G)`` triple.

    Condition numbers sweep log-uniformly up to 1e4 over ``total`` instances.
    Both the ``V`` and the ``P`` cotangents are checked; the step for ``P``
    is scaled to its smallest eigenvalue.
    """
    n = 2 + i % 5
    cond = 10.0 ** (4.0 * (i % total) / (total - 1))
    P = random_spd(rng, n, cond)
    P /= np.linalg.eigvalsh(P)[-1]
    V = random_sym(rng, n)
    G = random_sym(rng, n)
    X = symlin.lyap_solve(P, V)
    dV, dP = symlin.lyap_vjp(P, X, G)
    err_v = grad.fd_check(lambda W: symlin.frob(G, symlin.lyap_solve(P, W)), V, dV, h=1e-3)
    h = 1e-4 * np.linalg.eigvalsh(P)[0]
    err_p = grad.fd_check(lambda Q: symlin.frob(G, symlin.lyap_solve(Q, V)), P, dP, h=h)
    return max(err_v, err_p)


# -- registry --------------------------------------------------------------

SUITES = {
    "geometry": geometry_suite,
    "limits": limits_suite,
    "equivalence": equivalence_suite,
    "margin": margin_suite,
    "gradients": gradients_suite,
}


def run_suite(name, seed=0, **kwargs):
    """Run one suite, or every suite for ``name="all"``.

    Returns
    -------
    SuiteReport
    """
    if name == "all":
        t0 = time.perf_counter()
        merged = SuiteReport("all")
        for key, fn in SUITES.items():
            rep = fn(seed=seed)
            merged.results.extend(rep.results)
            merged.tables.extend(rep.tables)
        merged.seconds = time.perf_counter() - t0
        return merged
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; choose from {sorted(SUITES)} or 'all'")
    t0 = time.perf_counter()
    rep = SUITES[name](seed=seed, **kwargs)
    rep.seconds = time.perf_counter() - t0
    return rep
