import numpy as np
import pytest

from crossglyph import autograd as ag
from crossglyph import networks as nets
from crossglyph.rng import SeededRng
from helpers import assert_grads_close, finite_difference


def small_extractor(seed=0):
    return nets.FeatureExtractor(8, 8, SeededRng(seed).child(0), channels=(2, 3), feature_dim=5)


def test_zero_image_zero_final_layer_gives_zero_features():
    fe = small_extractor()
    fe.params()["fc.w"].data[:] = 0.0
    out = fe.forward(np.zeros((2, 8, 8)))
    np.testing.assert_array_equal(out.data, np.zeros((2, 5)))


def test_identical_images_identical_features():
    fe = small_extractor(1)
    img = SeededRng(2)._gen.random((8, 8))
    out = fe.forward(np.stack([img, img, img]))
    np.testing.assert_array_equal(out.data[0], out.data[1])
    np.testing.assert_array_equal(out.data[0], out.data[2])


def test_extractor_rejects_wrong_size():
    fe = small_extractor()
    with pytest.raises(ag.ShapeError, match="8x8"):
        fe.forward(np.zeros((1, 16, 16)))


def test_extractor_features_finite_and_gradients_match_fd():
    fe = small_extractor(3)
    img = SeededRng(4)._gen.random((2, 8, 8))
    feats = fe.forward(img)
    assert np.all(np.isfinite(feats.data))

    loss = ag.mul(feats, feats).sum()
    ag.backward(loss, params=fe.params().values())

    names = list(fe.params())
    arrays = [fe.params()[n].data.copy() for n in names]

    def forward(*vals):
        with ag.no_grad():
            for n, v in zip(names, vals):
                fe.params()[n].data = v
            out = fe.forward(img)
            result = ag.mul(out, out).sum().item()
        for n, a in zip(names, arrays):
            fe.params()[n].data = a
        return result

    for i, n in enumerate(names):
        fd = finite_difference(forward, arrays, i)
        assert_grads_close(fe.params()[n].grad, fd, msg=n)


def test_classifier_rows_are_stochastic():
    rng = SeededRng(5)
    cl = nets.Classifier(6, 4, rng.child(0))
    feats = ag.tensor(rng._gen.normal(size=(9, 6)))
    probs = nets.classify(cl, feats)
    np.testing.assert_allclose(probs.data.sum(axis=1), np.ones(9), atol=1e-9)
    assert np.all(probs.data > 0.0) and np.all(probs.data < 1.0)


def test_classifier_zero_logits_uniform():
    cl = nets.Classifier(6, 4, SeededRng(6).child(0))
    for p in cl.params().values():
        p.data[:] = 0.0
    probs = cl.probabilities(ag.tensor(np.ones((3, 6))))
    np.testing.assert_allclose(probs.data, np.full((3, 4), 0.25), atol=1e-15)


def test_classifier_large_logit_saturates():
    cl = nets.Classifier(2, 3, SeededRng(7).child(0))
    cl.params()["fc.w"].data[:] = 0.0
    cl.params()["fc.b"].data[:] = [60.0, 0.0, 0.0]
    probs = cl.probabilities(ag.tensor(np.zeros((1, 2))))
    np.testing.assert_allclose(probs.data[0], [1.0, 0.0, 0.0], atol=1e-12)


def test_classifier_dimension_mismatch_rejected():
    cl = nets.Classifier(6, 4, SeededRng(8).child(0))
    with pytest.raises(ag.ShapeError):
        cl.probabilities(ag.tensor(np.zeros((3, 5))))


def test_hidden_classifier_forward_matches_manual():
    rng = SeededRng(9)
    cl = nets.Classifier(4, 3, rng.child(0), hidden=5)
    feats = rng._gen.normal(size=(6, 4))
    p = {k: v.data for k, v in cl.params().items()}
    h = np.maximum(feats @ p["fc1.w"] + p["fc1.b"], 0.0)
    logits = h @ p["fc2.w"] + p["fc2.b"]
    np.testing.assert_allclose(cl.logits(ag.tensor(feats)).data, logits, atol=1e-12)


# -- gradient reversal ----------------------------------------------------------


def test_grl_forward_is_exact_identity():
    x = ag.param(SeededRng(10)._gen.normal(size=(4, 3)))
    y = nets.gradient_reversal(x)
    assert y.data is x.data or np.array_equal(y.data, x.data)
    np.testing.assert_array_equal(y.data, x.data)


def test_grl_backward_negates_exactly():
    x_val = SeededRng(11)._gen.normal(size=(4, 3))

    def grad_with(reverse):
        x = ag.param(x_val)
        h = nets.gradient_reversal(x) if reverse else x
        loss = ag.mul(h, h).sum()
        ag.backward(loss)
        return x.grad

    np.testing.assert_array_equal(grad_with(True), -grad_with(False))


def test_discriminator_scores_in_open_interval():
    rng = SeededRng(12)
    d = nets.Discriminator(6, rng.child(0), hidden=8)
    feats = ag.tensor(rng._gen.normal(size=(10, 6)))
    s = nets.discriminate(d, feats)
    assert s.shape == (10,)
    assert np.all(s.data > 0.0) and np.all(s.data < 1.0)


def test_discriminate_forward_same_with_reverse_flag():
    rng = SeededRng(13)
    d = nets.Discriminator(5, rng.child(0), hidden=8)
    feats = ag.tensor(rng._gen.normal(size=(7, 5)))
    np.testing.assert_array_equal(nets.discriminate(d, feats, reverse=False).data,
                                  nets.discriminate(d, feats, reverse=True).data)


def test_reverse_negates_feature_gradient_through_discriminator():
    rng = SeededRng(14)
    d = nets.Discriminator(5, rng.child(0), hidden=8)
    feats_val = rng._gen.normal(size=(7, 5))

    def feature_grad(reverse):
        feats = ag.param(feats_val)
        s = nets.discriminate(d, feats, reverse=reverse)
        ag.backward(ag.log(s).mean())
        return feats.grad

    np.testing.assert_array_equal(feature_grad(True), -feature_grad(False))


def test_reversed_adversarial_gradient_matches_negated_fd():
    # end to end: extractor -> GRL -> discriminator; the extractor's gradient
    # of the adversarial score must equal finite differences of its negation
    rng = SeededRng(15)
    fe = small_extractor(16)
    d = nets.Discriminator(5, rng.child(1), hidden=6)
    imgs = rng._gen.random((3, 8, 8))

    feats = fe.forward(imgs)
    loss = ag.log(nets.discriminate(d, feats, reverse=True)).mean()
    ag.backward(loss, params=fe.params().values())

    names = list(fe.params())
    arrays = [fe.params()[n].data.copy() for n in names]

    def neg_loss_no_reverse(*vals):
        with ag.no_grad():
            for n, v in zip(names, vals):
                fe.params()[n].data = v
            value = ag.log(nets.discriminate(d, fe.forward(imgs), reverse=False)).mean().item()
        for n, a in zip(names, arrays):
            fe.params()[n].data = a
        return -value

    for i, n in enumerate(names):
        fd = finite_difference(neg_loss_no_reverse, arrays, i)
        assert_grads_close(fe.params()[n].grad, fd, msg=n)


def test_discriminator_update_frozen_when_only_features_step():
    # with reverse on, D's own gradient is the ordinary (unreversed) one
    rng = SeededRng(17)
    d = nets.Discriminator(4, rng.child(0), hidden=6)
    feats_val = rng._gen.normal(size=(5, 4))

    def d_grads(reverse):
        for p in d.params().values():
            p.grad = None
        s = nets.discriminate(d, ag.tensor(feats_val), reverse=reverse)
        ag.backward(ag.log(s).mean())
        return {k: v.grad.copy() for k, v in d.params().items()}

    with_r, without_r = d_grads(True), d_grads(False)
    for k in with_r:
        np.testing.assert_array_equal(with_r[k], without_r[k])
