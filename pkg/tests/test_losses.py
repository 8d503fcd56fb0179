import math

import numpy as np
import pytest

from crossglyph import autograd as ag
from crossglyph import losses
from helpers import assert_grads_close, finite_difference


def rng(seed=0):
    return np.random.default_rng(seed)


def softmax_np(z):
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


# -- source classification loss ---------------------------------------------------


def test_cls_one_hot_correct_is_zero():
    logits = np.full((3, 4), -50.0)
    labels = np.array([1, 0, 3])
    logits[np.arange(3), labels] = 50.0
    loss = losses.source_classification_loss(ag.tensor(logits), labels)
    assert abs(loss.item()) < 1e-9


def test_cls_uniform_is_log_c():
    loss = losses.source_classification_loss(ag.tensor(np.zeros((5, 7))), np.zeros(5, dtype=int))
    assert abs(loss.item() - math.log(7)) < 1e-12


def test_cls_matches_hand_computation():
    g = rng(1)
    logits = g.normal(size=(4, 3))
    labels = np.array([2, 0, 1, 1])
    expected = -np.mean(np.log(softmax_np(logits)[np.arange(4), labels]))
    loss = losses.source_classification_loss(ag.tensor(logits), labels)
    assert abs(loss.item() - expected) < 1e-12


def test_cls_rejects_bad_label():
    with pytest.raises(ValueError, match="label out of range"):
        losses.source_classification_loss(ag.tensor(np.zeros((2, 3))), np.array([0, 3]))


def test_cls_gradient_matches_fd():
    g = rng(2)
    logits = g.normal(size=(4, 3))
    labels = np.array([0, 2, 1, 2])
    t = ag.param(logits)
    ag.backward(losses.source_classification_loss(t, labels))
    fd = finite_difference(
        lambda z: -np.mean(np.log(softmax_np(z)[np.arange(4), labels])), [logits], 0)
    assert_grads_close(t.grad, fd)


# -- adversarial loss ---------------------------------------------------------------


def test_adv_all_half_scores():
    s = ag.tensor(np.full(6, 0.5))
    t = ag.tensor(np.full(6, 0.5))
    assert abs(losses.adversarial_loss(s, t).item() - 2.0 * math.log(0.5)) < 1e-12


def test_adv_perfect_discriminator_approaches_zero():
    s = ag.tensor(np.full(4, 1.0 - 1e-12))
    t = ag.tensor(np.full(4, 1e-12))
    assert abs(losses.adversarial_loss(s, t).item()) < 1e-9


def test_adv_matches_mean_log_oracle():
    g = rng(3)
    s, t = g.uniform(0.05, 0.95, 8), g.uniform(0.05, 0.95, 8)
    expected = np.mean(np.log(s)) + np.mean(np.log(1.0 - t))
    got = losses.adversarial_loss(ag.tensor(s), ag.tensor(t)).item()
    assert abs(got - expected) < 1e-12


def test_adv_rejects_out_of_interval_scores():
    ok = ag.tensor(np.full(3, 0.5))
    with pytest.raises(ValueError, match="strictly inside"):
        losses.adversarial_loss(ag.tensor(np.array([0.2, 1.0, 0.5])), ok)
    with pytest.raises(ValueError, match="strictly inside"):
        losses.adversarial_loss(ok, ag.tensor(np.array([0.0, 0.3, 0.5])))


def test_adv_gradient_matches_fd():
    g = rng(4)
    s, t = g.uniform(0.1, 0.9, 5), g.uniform(0.1, 0.9, 5)
    ts, tt = ag.param(s), ag.param(t)
    ag.backward(losses.adversarial_loss(ts, tt))
    fd_s = finite_difference(lambda a, b: np.mean(np.log(a)) + np.mean(np.log(1 - b)), [s, t], 0)
    fd_t = finite_difference(lambda a, b: np.mean(np.log(a)) + np.mean(np.log(1 - b)), [s, t], 1)
    assert_grads_close(ts.grad, fd_s)
    assert_grads_close(tt.grad, fd_t)


def test_domain_bce_is_negated_adversarial_value():
    g = rng(5)
    src_logits, tgt_logits = g.normal(size=6), g.normal(size=6)

    def sig(z):
        return 1.0 / (1.0 + np.exp(-z))

    bce = losses.domain_discrimination_loss(ag.tensor(src_logits), ag.tensor(tgt_logits)).item()
    adv = losses.adversarial_loss(ag.tensor(sig(src_logits)), ag.tensor(sig(tgt_logits))).item()
    assert abs(bce + adv) < 1e-10


def test_domain_bce_gradient_matches_fd():
    g = rng(6)
    s, t = g.normal(size=4), g.normal(size=4)

    def forward(sv, tv):
        return float(np.mean(np.log1p(np.exp(-sv))) + np.mean(np.log1p(np.exp(tv))))

    ts, tt = ag.param(s), ag.param(t)
    ag.backward(losses.domain_discrimination_loss(ts, tt))
    assert_grads_close(ts.grad, finite_difference(forward, [s, t], 0))
    assert_grads_close(tt.grad, finite_difference(forward, [s, t], 1))


# -- consistency loss -----------------------------------------------------------------


def test_consistency_all_abstained_is_zero():
    logits = rng(7).normal(size=(4, 3))
    loss = losses.consistency_loss(ag.tensor(logits), np.full(4, -1))
    assert loss.item() == 0.0


def test_consistency_confident_match_is_zero():
    pseudo = np.array([0, 2, 1])
    logits = np.full((3, 3), -50.0)
    logits[np.arange(3), pseudo] = 50.0
    assert abs(losses.consistency_loss(ag.tensor(logits), pseudo).item()) < 1e-9


def test_consistency_matches_masked_oracle():
    g = rng(8)
    logits = g.normal(size=(4, 3))
    pseudo = np.array([2, -1, 0, -1])
    logp = np.log(softmax_np(logits))
    expected = -(logp[0, 2] + logp[2, 0]) / 4.0   # divisor is the full batch
    got = losses.consistency_loss(ag.tensor(logits), pseudo).item()
    assert abs(got - expected) < 1e-12


def test_consistency_monotone_in_assigned_probability():
    pseudo = np.array([1, -1])
    base = np.array([[0.2, 0.5, 0.3], [1.0, 1.0, 1.0]])
    values = []
    for bump in (0.0, 0.5, 1.0, 2.0):
        z = base.copy()
        z[0, 1] += bump
        values.append(losses.consistency_loss(ag.tensor(z), pseudo).item())
    assert all(a > b for a, b in zip(values, values[1:]))


def test_consistency_rejects_bad_pseudo_values():
    with pytest.raises(ValueError, match="pseudo label out of range"):
        losses.consistency_loss(ag.tensor(np.zeros((2, 3))), np.array([-2, 0]))
    with pytest.raises(ag.ShapeError):
        losses.consistency_loss(ag.tensor(np.zeros((2, 3))), np.array([0, 1, 2]))


def test_consistency_gradient_matches_fd():
    g = rng(9)
    logits = g.normal(size=(4, 3))
    pseudo = np.array([1, -1, 2, 0])
    keep = pseudo >= 0

    def forward(z):
        logp = np.log(softmax_np(z))
        return -float(np.sum(logp[keep, pseudo[keep]])) / 4.0

    t = ag.param(logits)
    ag.backward(losses.consistency_loss(t, pseudo))
    assert_grads_close(t.grad, finite_difference(forward, [logits], 0))


# -- correlation and transitions ---------------------------------------------------------


def test_correlation_identity_rows():
    p = np.array([[1.0, 0.0], [0.0, 1.0]])
    out = losses.correlation_matrix(ag.tensor(p), ag.tensor(p))
    np.testing.assert_array_equal(out.data, np.eye(2))


def test_correlation_uniform_rows():
    p = np.full((2, 2), 0.5)
    out = losses.correlation_matrix(ag.tensor(p), ag.tensor(p))
    np.testing.assert_allclose(out.data, np.full((2, 2), 0.5), atol=1e-15)


def test_correlation_matches_double_loop():
    g = rng(10)
    pw = softmax_np(g.normal(size=(5, 3)))
    ps = softmax_np(g.normal(size=(5, 3)))
    expected = np.zeros((3, 3))
    for i in range(3):
        for j in range(3):
            expected[i, j] = float(np.dot(pw[:, i], ps[:, j]))
    out = losses.correlation_matrix(ag.tensor(pw), ag.tensor(ps))
    np.testing.assert_allclose(out.data, expected, atol=1e-12)


def test_correlation_is_asymmetric_in_general():
    g = rng(11)
    pw = softmax_np(g.normal(size=(6, 3)))
    ps = softmax_np(g.normal(size=(6, 3)))
    out = losses.correlation_matrix(ag.tensor(pw), ag.tensor(ps)).data
    assert not np.allclose(out, out.T)


def test_correlation_shape_mismatch_rejected():
    with pytest.raises(ag.ShapeError):
        losses.correlation_matrix(ag.tensor(np.zeros((4, 3))), ag.tensor(np.zeros((5, 3))))


def test_transitions_identity_and_uniform():
    t1, t2 = losses.transition_matrices(ag.tensor(np.eye(3)))
    np.testing.assert_allclose(t1.data, np.eye(3), atol=1e-9)
    np.testing.assert_allclose(t2.data, np.eye(3), atol=1e-9)
    t1, t2 = losses.transition_matrices(ag.tensor(np.full((4, 4), 2.5)))
    np.testing.assert_allclose(t1.data, np.full((4, 4), 0.25), atol=1e-9)
    np.testing.assert_allclose(t2.data, np.full((4, 4), 0.25), atol=1e-9)


def test_transitions_match_loop_oracle_and_row_sums():
    g = rng(12)
    for _ in range(25):
        corr = g.uniform(0.0, 3.0, size=(4, 4))
        t_ws, t_sw = losses.transition_matrices(ag.tensor(corr))
        expected_ws = np.zeros_like(corr)
        expected_sw = np.zeros_like(corr)
        for i in range(4):
            for j in range(4):
                expected_ws[i, j] = corr[i, j] / (corr[i, :].sum() + 1e-12)
                expected_sw[i, j] = corr[j, i] / (corr[:, i].sum() + 1e-12)
        np.testing.assert_allclose(t_ws.data, expected_ws, atol=1e-12)
        np.testing.assert_allclose(t_sw.data, expected_sw, atol=1e-12)
        np.testing.assert_allclose(t_ws.data.sum(axis=1), np.ones(4), atol=1e-6)
        np.testing.assert_allclose(t_sw.data.sum(axis=1), np.ones(4), atol=1e-6)


def test_transitions_reject_negative_entries():
    bad = np.eye(3)
    bad[0, 1] = -0.5
    with pytest.raises(ValueError, match="negative"):
        losses.transition_matrices(ag.tensor(bad))


def test_transition_loss_identity_minimum():
    eye = ag.tensor(np.eye(2))
    assert abs(losses.transition_loss(eye, eye).item() - (-2.0)) < 1e-15


def test_transition_loss_uniform():
    u = ag.tensor(np.full((2, 2), 0.5))
    assert abs(losses.transition_loss(u, u).item()) < 1e-15


def test_transition_loss_trace_identity():
    g = rng(13)
    for _ in range(25):
        t1 = softmax_np(g.normal(size=(5, 5)))
        t2 = softmax_np(g.normal(size=(5, 5)))
        got = losses.transition_loss(ag.tensor(t1), ag.tensor(t2)).item()
        expected = 5.0 - np.trace(t1) - np.trace(t2)
        assert abs(got - expected) < 1e-9
        assert -5.0 <= got <= 5.0


# -- end-to-end discriminative loss -------------------------------------------------------


def transition_loss_np(pw, ps, eps=1e-12):
    corr = pw.T @ ps
    t_ws = corr / (corr.sum(axis=1, keepdims=True) + eps)
    corr_t = corr.T
    t_sw = corr_t / (corr_t.sum(axis=1, keepdims=True) + eps)
    off1 = t_ws.sum() - np.trace(t_ws)
    off2 = t_sw.sum() - np.trace(t_sw)
    return 0.5 * (off1 - np.trace(t_ws)) + 0.5 * (off2 - np.trace(t_sw))


@pytest.mark.parametrize("batch,classes", [(2, 2), (2, 5), (8, 2), (8, 5)])
def test_transition_consistency_gradients(batch, classes):
    g = rng(batch * 100 + classes)
    for _ in range(5):
        pw = softmax_np(g.normal(size=(batch, classes)))
        ps = softmax_np(g.normal(size=(batch, classes)))
        tw, ts = ag.param(pw), ag.param(ps)
        ag.backward(losses.transition_consistency_loss(tw, ts))
        assert_grads_close(tw.grad, finite_difference(transition_loss_np, [pw, ps], 0), msg="weak")
        assert_grads_close(ts.grad, finite_difference(transition_loss_np, [pw, ps], 1), msg="strong")


def test_transition_loss_permutation_equivariance():
    g = rng(14)
    pw = softmax_np(g.normal(size=(6, 4)))
    ps = softmax_np(g.normal(size=(6, 4)))
    perm = np.array([2, 0, 3, 1])
    base = losses.transition_consistency_loss(ag.tensor(pw), ag.tensor(ps))
    permuted = losses.transition_consistency_loss(ag.tensor(pw[:, perm]), ag.tensor(ps[:, perm]))
    assert abs(base.item() - permuted.item()) < 1e-12
    corr = losses.correlation_matrix(ag.tensor(pw), ag.tensor(ps)).data
    corr_p = losses.correlation_matrix(ag.tensor(pw[:, perm]), ag.tensor(ps[:, perm])).data
    np.testing.assert_allclose(corr_p, corr[np.ix_(perm, perm)], atol=1e-12)


def test_transition_loss_swap_symmetry():
    g = rng(15)
    pw = softmax_np(g.normal(size=(5, 3)))
    ps = softmax_np(g.normal(size=(5, 3)))
    a = losses.transition_consistency_loss(ag.tensor(pw), ag.tensor(ps)).item()
    b = losses.transition_consistency_loss(ag.tensor(ps), ag.tensor(pw)).item()
    assert abs(a - b) < 1e-12
    t1a, t2a = losses.transition_matrices(losses.correlation_matrix(ag.tensor(pw), ag.tensor(ps)))
    t1b, t2b = losses.transition_matrices(losses.correlation_matrix(ag.tensor(ps), ag.tensor(pw)))
    np.testing.assert_allclose(t1a.data, t2b.data, atol=1e-12)
    np.testing.assert_allclose(t2a.data, t1b.data, atol=1e-12)
