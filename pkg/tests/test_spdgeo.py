import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.linalg import fractional_matrix_power, logm, solve_continuous_lyapunov, sqrtm

from riemlr import spdgeo, symlin
from riemlr.exceptions import ParameterDomainError, UnsupportedOriginError
from riemlr.spdgeo import MetricParams
from riemlr.testing import random_orthogonal, random_spd, random_sym

from strategies import seeds

THETAS = {"LEM": (1.0,), "AIM": (0.5, 1.0, 1.5), "EM": (0.5, 1.0, 1.5), "LCM": (0.5, 1.0, 1.5), "BWM": (0.25, 0.5, 0.75)}
CASES = [(f, t) for f, ts in THETAS.items() for t in ts]


# -- independent oracles built on scipy and finite differences ---------------


def _fd(fn, P, V, h=1e-6):
    return (fn(P + h * V) - fn(P - h * V)) / (2 * h)


def _ab(V, W, alpha, beta):
    return alpha * np.sum(V * W) + beta * np.trace(V) * np.trace(W)


def oracle_base_metric(family, P, V, W, alpha=1.0, beta=0.0):
    if family == "LEM":
        dlog = lambda X: _fd(lambda Q: np.real(logm(Q)), P, X)  # noqa: E731
        return _ab(dlog(V), dlog(W), alpha, beta)
    if family == "AIM":
        Pi = np.linalg.inv(P)
        return alpha * np.trace(Pi @ V @ Pi @ W) + beta * np.trace(Pi @ V) * np.trace(Pi @ W)
    if family == "EM":
        return _ab(V, W, alpha, beta)
    if family == "LCM":
        L = np.linalg.cholesky(P)
        dV, dW = (_fd(np.linalg.cholesky, P, X) for X in (V, W))
        Dinv = np.diag(1.0 / np.diag(L))
        return np.sum(np.tril(dV, -1) * np.tril(dW, -1)) + np.sum(np.diag(Dinv @ dV) * np.diag(Dinv @ dW))
    if family == "BWM":
        return 0.5 * np.sum(solve_continuous_lyapunov(P, V) * W)
    raise ValueError(family)


def oracle_metric(mp, P, V, W):
    if mp.family == "LEM":
        return oracle_base_metric("LEM", P, V, W, mp.alpha, mp.beta)
    p = mp.power
    phi = lambda Q: np.real(fractional_matrix_power(Q, p))  # noqa: E731
    Vp, Wp = _fd(phi, P, V), _fd(phi, P, W)
    return oracle_base_metric(mp.family, phi(P), Vp, Wp, mp.alpha, mp.beta) / p**2


def oracle_base_log(family, P, Q):
    if family == "LEM":
        return None
    if family == "AIM":
        Ph = np.real(sqrtm(P))
        Pih = np.linalg.inv(Ph)
        return Ph @ np.real(logm(Pih @ Q @ Pih)) @ Ph
    if family == "EM":
        return Q - P
    if family == "BWM":
        return np.real(sqrtm(P @ Q) + sqrtm(Q @ P)) - 2 * P
    if family == "LCM":
        L, K = np.linalg.cholesky(P), np.linalg.cholesky(Q)
        dL, dK = np.diag(np.diag(L)), np.diag(np.diag(K))

        def curve(t):
            G = np.tril(L, -1) + t * (np.tril(K, -1) - np.tril(L, -1)) + dL @ np.diag(np.exp(t * np.log(np.diag(dK) / np.diag(dL))))
            return G @ G.T

        h = 1e-6
        return (curve(h) - curve(-h)) / (2 * h)
    raise ValueError(family)


# -- MetricParams ----------------------------------------------------------


def test_metric_params_normalizes_family():
    mp = MetricParams("aim", 0.5)
    assert mp.family == "AIM" and mp.power == 0.5
    assert MetricParams("bwm", 0.5).power == 1.0


def test_metric_params_rejects_bad_values():
    with pytest.raises(ParameterDomainError):
        MetricParams("XYZ")
    with pytest.raises(ParameterDomainError):
        MetricParams("AIM", 0.0)
    with pytest.raises(ParameterDomainError):
        MetricParams("AIM", 1.0, alpha=-1.0)
    with pytest.raises(ParameterDomainError):
        MetricParams("EM", 1.0, 1.0, -0.5).validate(2)
    MetricParams("EM", 1.0, 1.0, -0.49).validate(2)


def test_lcm_bwm_ignore_alpha_beta():
    assert MetricParams("LCM", 1.0, 3.0, 2.0).alpha == 1.0
    assert MetricParams("BWM", 0.5, 3.0, 2.0).beta == 0.0


def test_metric_params_frozen():
    with pytest.raises(AttributeError):
        MetricParams("AIM").theta = 2.0


# -- oi_inner --------------------------------------------------------------


def test_oi_inner_examples():
    I2 = np.eye(2)
    assert spdgeo.oi_inner(I2, I2, 1, 0) == 2.0
    assert spdgeo.oi_inner(I2, I2, 1, 1) == 6.0
    assert spdgeo.oi_inner(np.diag([1.0, -1.0]), I2, 1, 5) == 0.0


def test_oi_inner_rejects_non_invariant_weights():
    with pytest.raises(ParameterDomainError):
        spdgeo.oi_inner(np.eye(3), np.eye(3), 1.0, -1.0 / 3)


# -- metric ----------------------------------------------------------------


def test_metric_examples(rng):
    V = random_sym(rng, 3)
    np.testing.assert_allclose(spdgeo.metric(MetricParams("AIM"), np.eye(3), V, V), np.sum(V * V), rtol=1e-14)
    np.testing.assert_allclose(spdgeo.metric(MetricParams("BWM", 0.5), np.eye(3), V, V), np.sum(V * V) / 4, rtol=1e-14)


def test_em_small_theta_close_to_lem(rng):
    P, V = random_spd(rng, 3, 10.0), random_sym(rng, 3)
    em = spdgeo.metric(MetricParams("EM", 1e-4), P, V, V)
    lem = spdgeo.metric(MetricParams("LEM"), P, V, V)
    assert abs(em - lem) / lem < 1e-3


@pytest.mark.parametrize("family,theta", CASES + [("AIM", -0.5), ("EM", -0.5)])
def test_metric_matches_pullback_oracle(family, theta, rng):
    for n in (2, 3, 4):
        alpha, beta = rng.uniform(0.5, 2), rng.uniform(-0.4 / n, 1)
        mp = MetricParams(family, theta, alpha, beta)
        P = random_spd(rng, n, 10.0)
        V, W = random_sym(rng, n), random_sym(rng, n)
        got = spdgeo.metric(mp, P, V, W)
        ref = oracle_metric(mp, P, V, W)
        scale = np.sqrt(oracle_metric(mp, P, V, V) * oracle_metric(mp, P, W, W))
        assert abs(got - ref) < 1e-6 * scale


@pytest.mark.parametrize("family,theta", CASES)
def test_metric_symmetric_and_positive(family, theta, rng):
    mp = MetricParams(family, theta, 1.0, 0.1)
    P, V, W = random_spd(rng, 4), random_sym(rng, 4), random_sym(rng, 4)
    np.testing.assert_allclose(spdgeo.metric(mp, P, V, W), spdgeo.metric(mp, P, W, V), rtol=1e-12)
    assert spdgeo.metric(mp, P, V, V) > 0


# -- rielog ----------------------------------------------------------------


def test_rielog_examples():
    Q = np.diag([2.0, 5.0])
    np.testing.assert_allclose(spdgeo.rielog(MetricParams("AIM"), np.eye(2), Q), np.diag(np.log([2.0, 5.0])), rtol=1e-15)
    np.testing.assert_allclose(spdgeo.rielog(MetricParams("BWM", 0.5), np.eye(2), np.diag([4.0, 9.0])), np.diag([2.0, 4.0]), atol=1e-14)
    np.testing.assert_allclose(spdgeo.rielog(MetricParams("LCM"), np.eye(2), np.diag([np.e**2, 1.0])), np.diag([2.0, 0.0]), atol=1e-15)


@pytest.mark.parametrize("family,theta", CASES)
def test_rielog_matches_oracle(family, theta, rng):
    mp = MetricParams(family, theta)
    for n in (2, 3, 4):
        P, Q = random_spd(rng, n, 10.0), random_spd(rng, n, 10.0)
        got = spdgeo.rielog(mp, P, Q)
        if family == "LEM":
            # the log-Euclidean logarithm satisfies dlog_P[Log_P Q] = log Q - log P
            lhs = _fd(lambda X: np.real(logm(X)), P, got)
            ref = np.real(logm(Q) - logm(P))
            np.testing.assert_allclose(lhs, ref, atol=1e-6 * np.abs(ref).max())
            continue
        p = mp.power
        phi = lambda X: np.real(fractional_matrix_power(X, p))  # noqa: E731
        lhs = _fd(phi, P, got)
        ref = oracle_base_log(family, phi(P), phi(Q))
        np.testing.assert_allclose(lhs, ref, atol=2e-6 * np.abs(ref).max())


@pytest.mark.parametrize("family", spdgeo.FAMILIES)
@pytest.mark.parametrize("theta", [-0.5, 0.5, 1.0, 1.5])
def test_zero_law(family, theta, rng):
    if family == "BWM":
        theta = {-0.5: 0.25, 0.5: 0.5, 1.0: 0.5, 1.5: 0.75}[theta]
    mp = MetricParams(family, theta)
    P = random_spd(rng, 4, 100.0)
    assert np.abs(spdgeo.rielog(mp, P, P)).max() < 1e-9 * np.abs(P).max()


@given(st.integers(2, 8), seeds)
def test_aim_exp_log_consistency(n, seed):
    rng = np.random.default_rng(seed)
    P = random_spd(rng, n, 100.0)
    V = random_sym(rng, n, 0.3)
    back = spdgeo.rielog(MetricParams("AIM"), P, spdgeo.riexp_aim(P, V))
    assert np.linalg.norm(back - V) <= 1e-8 * np.linalg.norm(V)


def test_geodesic_distance_aim_matches_eigen_formula(rng):
    P, Q = random_spd(rng, 3), random_spd(rng, 3)
    w = np.linalg.eigvals(np.linalg.solve(P, Q)).real
    np.testing.assert_allclose(spdgeo.geodesic_distance(MetricParams("AIM"), P, Q), np.sqrt(np.sum(np.log(w) ** 2)), rtol=1e-12)


# -- riexp_aim -------------------------------------------------------------


def test_riexp_aim_examples(rng):
    np.testing.assert_allclose(spdgeo.riexp_aim(np.eye(3), np.zeros((3, 3))), np.eye(3))
    V = random_sym(rng, 3)
    np.testing.assert_allclose(spdgeo.riexp_aim(np.eye(3), V), symlin.funcm(V, "exp"), rtol=1e-14)


def test_riexp_aim_diagonal():
    # P^(1/2) exp(P^(-1/2) V P^(-1/2)) P^(1/2) = diag(2,1) diag(2,1) diag(2,1) = diag(8, 1)
    out = spdgeo.riexp_aim(np.diag([4.0, 1.0]), np.diag([4.0 * np.log(2.0), 0.0]))
    np.testing.assert_allclose(out, np.diag([8.0, 1.0]), rtol=1e-14)
    np.testing.assert_allclose(
        spdgeo.rielog(MetricParams("AIM"), np.diag([4.0, 1.0]), out), np.diag([4.0 * np.log(2.0), 0.0]), atol=1e-14
    )


# -- parallel transport ----------------------------------------------------


@pytest.mark.parametrize("family,theta", CASES)
def test_transport_identity_path(family, theta, rng):
    mp = MetricParams(family, theta)
    P = np.eye(3) if family == "BWM" else random_spd(rng, 3)
    V = random_sym(rng, 3)
    np.testing.assert_allclose(spdgeo.ptransport(mp, P, P, V), V, atol=1e-12)


def test_transport_em_is_flat(rng):
    P, Q, V = random_spd(rng, 3), random_spd(rng, 3), random_sym(rng, 3)
    np.testing.assert_array_equal(spdgeo.ptransport(MetricParams("EM"), P, Q, V), V)


def test_transport_bwm_diagonal():
    out = spdgeo.ptransport(MetricParams("BWM", 0.5), np.eye(2), np.diag([1.0, 3.0]), np.diag([1.0, 0.0]))
    np.testing.assert_allclose(out, np.diag([1.0, 0.0]), atol=1e-15)
    mp = MetricParams("BWM", 0.5)
    np.testing.assert_allclose(spdgeo.metric(mp, np.diag([1.0, 3.0]), out, out), spdgeo.metric(mp, np.eye(2), out, out))


def test_transport_aim_matches_congruence(rng):
    P, Q, V = random_spd(rng, 3), random_spd(rng, 3), random_sym(rng, 3)
    E = np.real(sqrtm(Q @ np.linalg.inv(P)))
    np.testing.assert_allclose(spdgeo.ptransport(MetricParams("AIM"), P, Q, V), E @ V @ E.T, atol=1e-10)


def test_transport_bwm_requires_identity_origin(rng):
    with pytest.raises(UnsupportedOriginError):
        spdgeo.ptransport(MetricParams("BWM", 0.5), random_spd(rng, 3), np.eye(3), np.eye(3))


@pytest.mark.parametrize("family,theta", CASES)
def test_transport_isometry(family, theta, rng):
    mp = MetricParams(family, theta, 1.3, 0.2)
    for n in range(2, 9):
        P = np.eye(n) if family == "BWM" else random_spd(rng, n, 20.0)
        Q, V = random_spd(rng, n, 20.0), random_sym(rng, n)
        W = spdgeo.ptransport(mp, P, Q, V)
        a, b = spdgeo.metric(mp, P, V, V), spdgeo.metric(mp, Q, W, W)
        assert abs(a - b) <= 1e-8 * a


@pytest.mark.parametrize("family,theta", [c for c in CASES if c[0] != "BWM"])
def test_transport_round_trip(family, theta, rng):
    mp = MetricParams(family, theta)
    P, Q, V = random_spd(rng, 4), random_spd(rng, 4), random_sym(rng, 4)
    back = spdgeo.ptransport(mp, Q, P, spdgeo.ptransport(mp, P, Q, V))
    np.testing.assert_allclose(back, V, atol=1e-10 * np.abs(V).max())


# -- invariances -----------------------------------------------------------


@pytest.mark.parametrize("family,theta", [c for c in CASES if c[0] != "LCM"])
def test_orthogonal_invariance(family, theta, rng):
    for n in range(2, 9):
        mp = MetricParams(family, theta, 0.7, 0.3)
        P, V, W = random_spd(rng, n, 20.0), random_sym(rng, n), random_sym(rng, n)
        R = random_orthogonal(rng, n)
        g = spdgeo.metric(mp, P, V, W)
        gR = spdgeo.metric(mp, R @ P @ R.T, R @ V @ R.T, R @ W @ R.T)
        assert abs(g - gR) <= 1e-9 * spdgeo.norm(mp, P, V) * spdgeo.norm(mp, P, W)


@pytest.mark.parametrize("family,theta", CASES)
def test_metric_scaling(family, theta, rng):
    mp = MetricParams(family, theta, 1.0, 0.1)
    mq = mp.scaled(3.7)
    P = np.eye(3) if family == "BWM" else random_spd(rng, 3)
    Q, V = random_spd(rng, 3), random_sym(rng, 3)
    np.testing.assert_array_equal(spdgeo.rielog(mp, P, Q), spdgeo.rielog(mq, P, Q))
    np.testing.assert_array_equal(spdgeo.ptransport(mp, P, Q, V), spdgeo.ptransport(mq, P, Q, V))
    if family in ("LEM", "AIM", "EM"):
        np.testing.assert_allclose(spdgeo.metric(mq, P, V, V), 3.7 * spdgeo.metric(mp, P, V, V), rtol=1e-14)


# -- Cholesky group --------------------------------------------------------


def test_chol_group_examples(rng):
    S = random_spd(rng, 3)
    np.testing.assert_allclose(spdgeo.chol_group_op(np.eye(3), S), S, atol=1e-15)
    np.testing.assert_allclose(spdgeo.chol_group_op(S, np.eye(3)), S, atol=1e-14)
    np.testing.assert_allclose(spdgeo.chol_group_op(np.diag([4.0, 1.0]), np.diag([1.0, 9.0])), np.diag([4.0, 9.0]))


@given(st.integers(2, 8), seeds)
def test_chol_group_associative_with_inverse(n, seed):
    rng = np.random.default_rng(seed)
    A, B, C = (random_spd(rng, n, 20.0) for _ in range(3))
    op = spdgeo.chol_group_op
    lhs, rhs = op(op(A, B), C), op(A, op(B, C))
    assert np.linalg.norm(lhs - rhs) <= 1e-9 * np.linalg.norm(rhs)
    Li = np.linalg.inv(np.linalg.cholesky(A))
    assert np.linalg.norm(op(A, Li @ Li.T) - np.eye(n)) < 1e-9
