from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings

from riemlr import grad, rmlr, songeo, symlin
from riemlr.grad import GradBundle
from riemlr.optim import clip_grads
from riemlr.rmlr import LieMlrLayer, LogEigLayer, SpdMlrLayer
from riemlr.spdgeo import MetricParams
from riemlr.testing import (
    random_rotation,
    random_rotation_with_angle,
    random_skew,
    random_spd,
    random_sym,
    spd_with_gap,
)

from strategies import seeds

E2E_CASES = [
    (MetricParams("LEM", 1.0, 1.0, 0.3), 1e-4),
    (MetricParams("AIM", 1.0, 1.0, 0.0), 1e-4),
    (MetricParams("AIM", 0.5, 2.0, -0.2), 1e-4),
    (MetricParams("EM", 1.0, 1.0, 0.0), 1e-6),
    (MetricParams("EM", 1.5, 1.0, 0.1), 1e-4),
    (MetricParams("LCM", 1.0), 1e-4),
    (MetricParams("LCM", 0.5), 1e-4),
    (MetricParams("BWM", 0.5), 1e-3),
    (MetricParams("BWM", 0.25), 1e-3),
]
E2E_IDS = [f"{m.family}-{m.theta}" for m, _ in E2E_CASES]


def _spd_loss(mp, label):
    return lambda S, layer: rmlr.softmax_xent(rmlr.spd_mlr_logits(mp, S, layer), label)[0]


def _layer(mp, rng, n, C):
    P = np.stack([random_spd(rng, n, cond=5.0) for _ in range(C)])
    A = np.stack([random_sym(rng, n) for _ in range(C)])
    return SpdMlrLayer(mp, P, A)


# -- primitive VJPs ---------------------------------------------------------


def test_vjp_funcm_examples(rng):
    G = random_sym(rng, 3)
    np.testing.assert_allclose(grad.vjp_funcm(np.eye(3), symlin.LOG, G), G, atol=1e-15)
    np.testing.assert_allclose(grad.vjp_funcm(random_spd(rng, 3), 1.0, G), G, atol=1e-13)


@pytest.mark.parametrize("f", [symlin.LOG, 0.5])
def test_vjp_funcm_matches_fd(f, rng):
    S = random_spd(rng, 4, cond=10.0)
    G = rng.normal(size=(4, 4))
    err = grad.fd_check(lambda X: symlin.frob(G, symlin.funcm(X, f)), S, grad.vjp_funcm(S, f, G))
    assert err < 1e-6


def test_vjp_chol_examples(rng):
    D = np.diag([1.0, -2.0, 3.0])
    np.testing.assert_allclose(grad.vjp_chol(np.eye(3), D), 0.5 * D, atol=1e-15)
    L = symlin.chol(random_spd(rng, 3))
    np.testing.assert_array_equal(grad.vjp_chol(L, np.zeros((3, 3))), 0.0)


def test_vjp_chol_matches_fd(rng):
    P = random_spd(rng, 5, cond=10.0)
    G = rng.normal(size=(5, 5))
    err = grad.fd_check(lambda X: symlin.frob(G, np.linalg.cholesky(X)), P, grad.vjp_chol(symlin.chol(P), G))
    assert err < 1e-6


def test_vjp_lyap_identity_path(rng):
    G, V = random_sym(rng, 3), random_sym(rng, 3)
    dV, _ = grad.vjp_lyap(np.eye(3), V / 2, G)
    np.testing.assert_allclose(dV, G / 2, atol=1e-15)


def test_vjp_lyap_matches_fd(rng):
    P, V, G = random_spd(rng, 5, cond=10.0), random_sym(rng, 5), random_sym(rng, 5)
    dV, dP = grad.vjp_lyap(P, symlin.lyap_solve(P, V), G)
    assert grad.fd_check(lambda W: symlin.frob(G, symlin.lyap_solve(P, W)), V, dV) < 1e-6
    assert grad.fd_check(lambda Q: symlin.frob(G, symlin.lyap_solve(Q, V)), P, dP) < 1e-6


# -- fd_check ----------------------------------------------------------------


def test_fd_check_quadratic(rng):
    # central differences are exact on quadratics, so a large step only removes roundoff
    x = random_sym(rng, 4)
    assert grad.fd_check(lambda y: 0.5 * np.sum(y * y), x, x, h=1e-2) < 1e-10
    x = rng.normal(size=(3, 2))
    assert grad.fd_check(lambda y: 0.5 * np.sum(y * y), x, x, h=1e-2, basis="full") < 1e-10


def test_fd_check_detects_wrong_gradient(rng):
    x = random_sym(rng, 3)
    assert grad.fd_check(lambda y: 0.5 * np.sum(y * y), x, 2 * x) > 0.4


def test_fd_check_return_all(rng):
    x = random_sym(rng, 2)
    err, fd, an = grad.fd_check(lambda y: np.sum(y), x, np.ones((2, 2)), return_all=True)
    assert fd.shape == an.shape == (3,)
    assert err < 1e-9


def test_bases():
    assert len(grad.sym_basis(4)) == 10
    assert len(grad.skew_basis(3)) == 3
    for E in grad.skew_basis(3):
        np.testing.assert_array_equal(E, -E.T)


# -- end-to-end heads --------------------------------------------------------


@pytest.mark.parametrize("mp,tol", E2E_CASES, ids=E2E_IDS)
def test_spd_end_to_end_fd(mp, tol, rng):
    n = 4 if mp.family == "BWM" else 3
    layer = _layer(mp, rng, n, 3)
    S = np.stack([random_spd(rng, n, cond=5.0) for _ in range(4)])
    label = np.array([0, 2, 1, 2])
    loss, bundle = grad.grad_spd_mlr(mp, S, layer, label)
    assert loss == pytest.approx(_spd_loss(mp, label)(S, layer), rel=1e-14)
    errs = grad.check_bundle(_spd_loss(mp, label), S, layer, bundle, kind="spd")
    assert set(errs) == {"S", "P", "A"}
    assert max(errs.values()) < tol, errs


def test_em_input_gradient_is_linear(rng):
    mp = MetricParams("EM")
    layer = _layer(mp, rng, 3, 4)
    S = random_spd(rng, 3)
    _, bundle = grad.grad_spd_mlr(mp, S, layer, 2)
    d = rmlr.softmax(rmlr.spd_mlr_logits(mp, S, layer))
    d[2] -= 1.0
    np.testing.assert_allclose(bundle.dS, np.einsum("k,kij->ij", d, layer.A), atol=1e-14)
    assert bundle.dS.shape == (3, 3)


def test_zero_logits_gradient_in_A(rng):
    # with P_k = I every class shares the S-term log S, so dA_k = (softmax_k - onehot_k) log S
    mp = MetricParams("LEM")
    layer = SpdMlrLayer(mp, np.stack([np.eye(3)] * 3), np.stack([random_sym(rng, 3) for _ in range(3)]))
    S = random_spd(rng, 3)
    Z = symlin.funcm(S, symlin.LOG)
    _, bundle = grad.grad_spd_mlr(mp, S, layer, 1)
    d = rmlr.softmax(rmlr.spd_mlr_logits(mp, S, layer))
    d[1] -= 1.0
    np.testing.assert_allclose(bundle.dA, d[:, None, None] * Z[None], atol=1e-13)


def test_lem_dP_at_class_point(rng):
    mp = MetricParams("LEM")
    layer = _layer(mp, rng, 3, 2)
    S = layer.P[0].copy()
    _, bundle = grad.grad_spd_mlr(mp, S, layer, 1)
    d = rmlr.softmax(rmlr.spd_mlr_logits(mp, S, layer))
    d[1] -= 1.0
    expected = -d[0] * symlin.funcm_diff(layer.P[0], symlin.LOG, layer.A[0])
    np.testing.assert_allclose(bundle.dP[0], expected, atol=1e-12)
    errs = grad.check_bundle(_spd_loss(mp, 1), S, layer, bundle)
    assert errs["P"] < 1e-6


@given(seeds)
@settings(max_examples=10)
def test_lie_end_to_end_fd(seed):
    rng = np.random.default_rng(seed)
    C, m = 3, 2
    P = np.stack([[random_rotation(rng) for _ in range(m)] for _ in range(C)])
    A = np.stack([[random_skew(rng) for _ in range(m)] for _ in range(C)])
    layer = LieMlrLayer(P, A)
    S = np.stack([[P[b % C, j] @ random_rotation_with_angle(rng, 1.0) for j in range(m)] for b in range(4)])
    label = np.array([0, 1, 2, 0])
    loss_fn = lambda X, lay: rmlr.softmax_xent(rmlr.lie_mlr_logits(X, lay), label)[0]  # noqa: E731
    _, bundle = grad.grad_lie_mlr(S, layer, label)
    errs = grad.check_bundle(loss_fn, S, layer, bundle, h=1e-5, kind="lie")
    assert max(errs.values()) < 1e-4, errs


def test_lie_dA_is_exact(rng):
    layer = LieMlrLayer(np.stack([[random_rotation(rng)] for _ in range(2)]), np.stack([[random_skew(rng)]] * 2))
    S = layer.P[0][None]
    _, bundle = grad.grad_lie_mlr(S[0], layer, 0)
    # S = P_0, so the matching class term has a vanishing logarithm
    np.testing.assert_allclose(bundle.dA[0], 0.0, atol=1e-14)
    logM = songeo.so3_log(layer.P[1, 0].T @ S[0, 0])
    d = rmlr.softmax(rmlr.lie_mlr_logits(S[0], layer))
    np.testing.assert_allclose(bundle.dA[1, 0], d[1] * logM, atol=1e-14)


def test_logeig_end_to_end_fd(rng):
    layer = LogEigLayer(rng.normal(size=(3, 6)), rng.normal(size=3))
    S = np.stack([random_spd(rng, 3) for _ in range(4)])
    label = np.array([0, 1, 2, 1])
    loss_fn = lambda X, lay: rmlr.softmax_xent(rmlr.logeig_logits(X, lay), label)[0]  # noqa: E731
    _, bundle = grad.grad_logeig(S, layer, label)
    assert bundle.dP is None and bundle.db.shape == (3,)
    errs = grad.check_bundle(loss_fn, S, layer, bundle, kind="logeig")
    assert set(errs) == {"S", "A", "b"}
    assert max(errs.values()) < 1e-6, errs


@pytest.mark.parametrize("family", ["LEM", "AIM", "EM", "LCM", "BWM"])
def test_gap_guard_keeps_gradients_finite(family, rng):
    mp = MetricParams(family, 0.5 if family == "BWM" else 1.0)
    layer = SpdMlrLayer(mp, np.stack([np.eye(3), spd_with_gap(rng, 3, 1e-9)]), np.stack([random_sym(rng, 3)] * 2))
    S = np.stack([spd_with_gap(rng, 3, 1e-9), 2.0 * np.eye(3)])
    _, bundle = grad.grad_spd_mlr(mp, S, layer, np.array([0, 1]))
    for g in (bundle.dS, bundle.dP, bundle.dA):
        assert np.all(np.isfinite(g))


@pytest.mark.parametrize("family", ["LEM", "AIM", "EM", "LCM", "BWM"])
def test_tape_replay_is_deterministic(family, rng):
    mp = MetricParams(family, 0.5)
    layer = _layer(mp, rng, 3, 3)
    S = np.stack([random_spd(rng, 3) for _ in range(2)])
    tape = rmlr.Tape(family, True)
    logits = rmlr.spd_mlr_logits(mp, S, layer, tape=tape)
    _, dl = rmlr.softmax_xent(logits, [0, 1])
    b1 = grad.backward_spd(mp, layer, tape, dl)
    b2 = grad.backward_spd(mp, layer, tape, dl)
    for g1, g2 in zip((b1.dS, b1.dP, b1.dA), (b2.dS, b2.dP, b2.dA)):
        np.testing.assert_array_equal(g1, g2)
    _, ref = grad.grad_spd_mlr(mp, S, layer, [0, 1])
    np.testing.assert_array_equal(ref.dA, b1.dA)


def test_symmetric_outputs(rng):
    mp = MetricParams("BWM", 0.5)
    layer = _layer(mp, rng, 3, 2)
    _, b = grad.grad_spd_mlr(mp, random_spd(rng, 3), layer, 0)
    for g in (b.dS, b.dP, b.dA):
        np.testing.assert_array_equal(g, np.swapaxes(g, -1, -2))


# -- bundles and clipping ----------------------------------------------------


def test_bundle_slots_and_map():
    b = GradBundle(np.ones((2, 2)), None, 2 * np.ones((2, 2)), np.ones(3))
    assert set(b.slots()) == {"A", "b"}
    m = b.map(lambda g: -g)
    assert m.dP is None
    np.testing.assert_array_equal(m.db, -np.ones(3))


def test_clip_examples(rng):
    small = GradBundle(np.ones((2, 2)), 0.1 * np.eye(2), 0.1 * np.eye(2))
    assert clip_grads(small, 5.0) is small
    big = GradBundle(np.ones((2, 2)), np.diag([6.0, 0.0]), np.diag([0.0, 8.0]))
    out = clip_grads(big, 5.0)
    np.testing.assert_allclose(out.dP, big.dP / 2)
    np.testing.assert_allclose(out.dA, big.dA / 2)
    np.testing.assert_allclose(out.dS, big.dS / 2)
    with pytest.raises(ValueError):
        clip_grads(big, 0.0)


def test_clip_joint_norm_over_mixed_slots(rng):
    P = random_sym(rng, 3)
    A = random_skew(rng)
    b = GradBundle(np.zeros((3, 3)), P, A, rng.normal(size=4))
    norm = np.sqrt(np.sum(P**2) + np.sum(A**2) + np.sum(b.db**2))
    out = clip_grads(b, norm / 3)
    new = np.sqrt(sum(np.sum(g**2) for g in out.slots().values()))
    assert new == pytest.approx(norm / 3, rel=1e-14)
    np.testing.assert_allclose(out.dA, A / 3, rtol=1e-14)


def test_check_bundle_on_replaced_layer(rng):
    # loss closures see perturbed copies, never the original layer
    mp = MetricParams("AIM")
    layer = _layer(mp, rng, 2, 2)
    P0 = layer.P.copy()
    _, bundle = grad.grad_spd_mlr(mp, random_spd(rng, 2), layer, 0)
    grad.check_bundle(_spd_loss(mp, 0), random_spd(rng, 2), replace(layer), bundle)
    np.testing.assert_array_equal(layer.P, P0)
