import math

import numpy as np
import pytest
from conftest import central_fd, rel_err
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from stresslab.neural_nets import (
    AE_SHAPE,
    MlpParams,
    TrainConfig,
    chronological_split,
    decode,
    dump_networks,
    encode,
    forward,
    grad_mse,
    init_params,
    kl_divergence,
    load_networks,
    mse_loss,
    new_ae,
    new_vae,
    sample_latent,
    train_ae,
    train_vae,
    vae_encode,
    vae_loss_and_grad,
)


def test_init_is_seeded_and_glorot_bounded():
    a, b = init_params(AE_SHAPE, 3), init_params(AE_SHAPE, 3)
    for Wa, Wb in zip(a.weights, b.weights):
        assert np.array_equal(Wa, Wb)
        limit = math.sqrt(6 / sum(Wa.shape))
        assert np.abs(Wa).max() <= limit
    assert all(np.all(bias == 0) for bias in a.biases)
    assert not np.array_equal(a.weights[0], init_params(AE_SHAPE, 4).weights[0])
    assert a.shape == AE_SHAPE


def test_forward_hand_examples():
    net = MlpParams([np.array([[2.0]]), np.array([[3.0]])], [np.array([0.5]), np.array([-1.0])])
    x = np.array([[0.25], [-1.0]])
    np.testing.assert_allclose(forward(net, x), 3 * np.tanh(2 * x + 0.5) - 1, atol=1e-15)
    net.tanh_output = True
    np.testing.assert_allclose(forward(net, x), np.tanh(3 * np.tanh(2 * x + 0.5) - 1), atol=1e-15)


def test_forward_rejects_wrong_width():
    with pytest.raises(ValueError):
        forward(init_params((3, 2), 0), np.zeros((4, 5)))
    with pytest.raises(ValueError):
        MlpParams([np.zeros((3, 2)), np.zeros((4, 1))], [np.zeros(2), np.zeros(1)])


def test_ae_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    m = new_ae((6, 5, 3, 5, 6), seed=1)
    X = rng.standard_normal((8, 6))
    arrays_ = m.params.arrays()
    for a in arrays_:
        a += rng.normal(0, 0.1, a.shape)  # non-zero biases exercise every term
    _, grads = grad_mse(m.params, X)
    fd = central_fd(lambda: mse_loss(m.params, X), arrays_)
    for g, f in zip(grads, fd):
        assert rel_err(g, f) <= 1e-4


def test_vae_gradient_matches_finite_differences():
    rng = np.random.default_rng(1)
    m = new_vae(6, 5, 3, seed=2)
    X = rng.standard_normal((7, 6))
    eps = rng.standard_normal((7, 3))
    for a in m.arrays():
        a += rng.normal(0, 0.1, a.shape)
    grads = vae_loss_and_grad(m, X, eps, kl_weight=0.3)[3]
    fd = central_fd(lambda: vae_loss_and_grad(m, X, eps, kl_weight=0.3, need_grad=False)[0], m.arrays())
    for g, f in zip(grads, fd):
        assert rel_err(g, f) <= 1e-4


def test_zero_gradient_at_exact_reconstruction():
    # decoder inverts a linear encoder exactly: loss 0, all gradients 0
    I = np.eye(3)
    net = MlpParams([I * 1e-3, I * 1e3], [np.zeros(3), np.zeros(3)])
    X = np.zeros((5, 3))
    loss, grads = grad_mse(net, X)
    assert loss == 0.0
    assert all(np.all(g == 0) for g in grads)


def test_gradient_invariant_to_duplicating_the_batch():
    m = new_ae((4, 3, 2, 3, 4), seed=0)
    X = np.random.default_rng(2).standard_normal((6, 4))
    l1, g1 = grad_mse(m.params, X)
    l2, g2 = grad_mse(m.params, np.vstack([X, X]))
    assert l1 == pytest.approx(l2, rel=1e-14)
    for a, b in zip(g1, g2):
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-15)


def test_encode_decode_compose_to_forward():
    m = new_ae(seed=5)
    X = np.random.default_rng(0).standard_normal((10, 25))
    Z = encode(m, X)
    assert Z.shape == (10, 5) and np.all(np.abs(Z) < 1)
    np.testing.assert_allclose(decode(m, Z), forward(m.params, X), atol=1e-14)


def test_chronological_split_keeps_order():
    X = np.arange(100.0)[:, None]
    tr, va = chronological_split(X, 0.2)
    assert tr.shape[0] == 80 and va[0, 0] == 80.0
    with pytest.raises(ValueError):
        chronological_split(X[:2], 0.2)


def test_train_ae_learns_a_one_factor_window(rank1_window):
    m = train_ae(rank1_window, TrainConfig(seed=0))
    rep = m.report
    assert rep.best_val_loss < 0.1
    assert rep.final_train_loss < rep.init_train_loss
    # restored weights are the best-validation weights
    val = chronological_split(rank1_window, 0.2)[1]
    assert mse_loss(m.params, val) == rep.best_val_loss
    assert rep.best_val_loss == min([*rep.val_history])
    if rep.stopped_early:
        assert rep.epochs_run - rep.best_epoch == 10


def test_first_epoch_reduces_training_loss(rank1_window):
    improved = 0
    for seed in range(10):
        rep = train_ae(rank1_window, TrainConfig(seed=seed, max_epochs=1)).report
        improved += rep.train_history[0] < rep.init_train_loss
    assert improved >= 9


def test_train_ae_is_deterministic(rank1_window):
    cfg = TrainConfig(seed=3, max_epochs=5)
    a, b = train_ae(rank1_window, cfg), train_ae(rank1_window, cfg)
    for x, y in zip(a.params.arrays(), b.params.arrays()):
        assert np.array_equal(x, y)


@pytest.mark.parametrize(
    "mu, lv, expected",
    [([0.0, 0.0], [0.0, 0.0], 0.0), ([1.0], [0.0], 0.5), ([0.0], [1.0], 0.5 * (math.e - 2))],
)
def test_kl_hand_values(mu, lv, expected):
    assert abs(kl_divergence(mu, lv) - expected) <= 1e-12


@given(
    arrays(float, 4, elements=st.floats(-3, 3)),
    arrays(float, 4, elements=st.floats(-3, 3)),
)
def test_kl_non_negative_and_zero_only_at_prior(mu, lv):
    kl = kl_divergence(mu, lv)
    assert kl >= 0
    if np.all(mu == 0) and np.all(lv == 0):
        assert kl == 0


@given(arrays(float, 3, elements=st.floats(-2, 2)), arrays(float, 3, elements=st.floats(-2, 2)))
def test_sample_latent_identity(mu, lv):
    assert np.array_equal(sample_latent(mu, lv, np.zeros(3)), mu)
    np.testing.assert_allclose(sample_latent(mu, np.zeros(3), np.ones(3)), mu + 1, atol=1e-15)
    eps = np.array([1.0, -0.5, 2.0])
    np.testing.assert_allclose(sample_latent(mu, lv, eps), mu + np.exp(lv / 2) * eps, rtol=1e-15)


def test_sample_latent_moments():
    eps = np.random.default_rng(0).standard_normal((200_000, 2))
    z = sample_latent(np.array([1.0, -2.0]), np.log([4.0, 0.25]), eps)
    se = np.array([2.0, 0.5]) / math.sqrt(eps.shape[0])
    assert np.all(np.abs(z.mean(0) - [1.0, -2.0]) < 4 * se)
    np.testing.assert_allclose(z.std(0), [2.0, 0.5], rtol=0.01)


def test_sample_latent_shape_mismatch():
    with pytest.raises(ValueError):
        sample_latent(np.zeros(3), np.zeros(2), np.zeros(3))


def test_vae_heavy_kl_collapses_to_prior(rank1_window):
    m = train_vae(rank1_window, TrainConfig(seed=0, max_epochs=60), kl_weight=1e6)
    val = chronological_split(rank1_window, 0.2)[1]
    mu, lv = vae_encode(m, val)
    assert np.abs(mu).mean() < 0.05
    assert np.abs(lv).mean() < 0.1


def test_vae_default_weight_keeps_latent_information(rank1_window):
    m = train_vae(rank1_window, TrainConfig(seed=0, max_epochs=60))
    assert m.kl_weight == pytest.approx(1 / 25)
    mu, _ = vae_encode(m, rank1_window)
    assert mu.std(0).max() > 0.3


def test_vae_training_is_deterministic(rank1_window):
    cfg = TrainConfig(seed=2, max_epochs=3)
    a, b = train_vae(rank1_window, cfg), train_vae(rank1_window, cfg)
    for x, y in zip(a.arrays(), b.arrays()):
        assert np.array_equal(x, y)


@settings(max_examples=10, deadline=None)
@given(st.lists(st.integers(1, 6), min_size=2, max_size=4), st.booleans(), st.integers(0, 99))
def test_slnn_round_trip(tmp_path_factory, dims, tanh_out, seed):
    nets = [init_params(dims, seed, tanh_out), new_vae(5, 4, 2, seed).decoder]
    path = tmp_path_factory.mktemp("slnn") / "w.slnn"
    dump_networks(nets, path)
    back = load_networks(path)
    assert len(back) == 2
    for a, b in zip(nets, back):
        assert a.tanh_output == b.tanh_output and a.shape == b.shape
        for x, y in zip(a.arrays(), b.arrays()):
            assert np.array_equal(x, y)


def test_slnn_rejects_foreign_file(tmp_path):
    p = tmp_path / "x.slnn"
    p.write_bytes(b"NOPE" + bytes(8))
    with pytest.raises(ValueError):
        load_networks(p)


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(val_fraction=0.0)
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)
