import numpy as np
import pytest

from neuralign import autodiff as ad
from neuralign.autodiff import Tensor
from neuralign.errors import ConfigurationError, DimensionError
from neuralign.models import (ArchitectureConfig, Autoencoder, ModelBundle,
                              assert_unchanged, autoencoder_forward,
                              build_autoencoder, build_mapping, mlp_forward,
                              mlp_init, mlp_param_count, named_parameters,
                              snapshot_params)


def test_init_biases_are_zero():
    mlp = mlp_init([4, 4], seed=11)
    for b in mlp.biases:
        np.testing.assert_array_equal(b.data, np.zeros(4))


def test_init_deterministic_in_seed():
    a = mlp_init([5, 7, 3], seed=123)
    b = mlp_init([5, 7, 3], seed=123)
    for wa, wb in zip(a.weights, b.weights):
        assert wa.data.tobytes() == wb.data.tobytes()


def test_init_respects_glorot_bound():
    mlp = mlp_init([8, 3], seed=7)
    bound = np.sqrt(6.0 / (8 + 3))
    w = mlp.weights[0].data
    assert w.shape == (3, 8)
    assert np.all(np.abs(w) <= bound)


@pytest.mark.parametrize("dims", [[], [4], [4, 0], [0, 4]])
def test_init_rejects_bad_dims(dims):
    with pytest.raises(ConfigurationError):
        mlp_init(dims)


def test_init_rejects_bad_activation():
    with pytest.raises(ConfigurationError):
        mlp_init([2, 2], activation="gelu")


def test_forward_zero_params_gives_zeros():
    mlp = mlp_init([3, 4, 2], seed=0)
    for w in mlp.weights:
        w.data[...] = 0.0
    out = mlp_forward(mlp, Tensor(np.random.default_rng(0).normal(size=(5, 3))))
    np.testing.assert_array_equal(out.data, np.zeros((5, 2)))


def test_forward_identity_single_layer():
    mlp = mlp_init([3, 3], seed=0)
    mlp.weights[0].data[...] = np.eye(3)
    x = np.random.default_rng(1).normal(size=(4, 3))
    out = mlp_forward(mlp, Tensor(x))
    np.testing.assert_array_equal(out.data, x)


def test_forward_hand_affine():
    mlp = mlp_init([2, 2], seed=0)
    mlp.weights[0].data[...] = np.eye(2)
    mlp.biases[0].data[...] = [1.0, 1.0]
    out = mlp_forward(mlp, Tensor([[1.0, 2.0]]))
    np.testing.assert_array_equal(out.data, [[2.0, 3.0]])


def test_forward_rejects_wrong_width():
    mlp = mlp_init([3, 2], seed=0)
    with pytest.raises(DimensionError):
        mlp_forward(mlp, Tensor(np.zeros((2, 4))))


def test_forward_batch_consistency():
    mlp = mlp_init([6, 5, 4], seed=9)
    x = np.random.default_rng(2).uniform(-1, 1, (7, 6))
    batch = mlp_forward(mlp, Tensor(x)).data
    rows = np.vstack([mlp_forward(mlp, Tensor(x[i:i + 1])).data for i in range(7)])
    np.testing.assert_allclose(batch, rows, atol=1e-12, rtol=0)


def test_forward_does_not_mutate_input():
    mlp = mlp_init([3, 3, 3], seed=4)
    x = np.random.default_rng(3).normal(size=(4, 3))
    xt = Tensor(x.copy())
    mlp_forward(mlp, xt)
    np.testing.assert_array_equal(xt.data, x)


def test_param_count_formula():
    dims = [6, 5, 4, 2]
    mlp = mlp_init(dims, seed=0)
    expected = sum(dims[l + 1] * dims[l] + dims[l + 1] for l in range(len(dims) - 1))
    assert mlp_param_count(mlp) == expected


def test_autoencoder_identity_roundtrip():
    enc = mlp_init([3, 3], seed=0)
    dec = mlp_init([3, 3], seed=0)
    enc.weights[0].data[...] = np.eye(3)
    dec.weights[0].data[...] = np.eye(3)
    ae = Autoencoder(enc, dec, "video")
    x = np.random.default_rng(5).normal(size=(4, 3))
    emb, rec = autoencoder_forward(ae, Tensor(x))
    np.testing.assert_array_equal(rec.data, x)
    np.testing.assert_array_equal(emb.data, x)


def test_autoencoder_zero_decoder():
    ae = build_autoencoder("video", 4, [5], 3, "tanh", seed=1)
    for w in ae.decoder.weights:
        w.data[...] = 0.0
    for b in ae.decoder.biases:
        b.data[...] = 0.0
    _, rec = autoencoder_forward(ae, Tensor(np.random.default_rng(6).normal(size=(2, 4))))
    np.testing.assert_array_equal(rec.data, np.zeros((2, 4)))


def test_autoencoder_loss_matches_numpy_oracle():
    from neuralign.losses import reconstruction_loss
    ae = build_autoencoder("fmri", 5, [6], 3, "tanh", seed=2)
    x = np.random.default_rng(7).uniform(-1, 1, (8, 5))
    _, rec = autoencoder_forward(ae, Tensor(x))
    loss = reconstruction_loss(Tensor(x), rec).item()
    oracle = np.sum((x - rec.data) ** 2) / x.shape[0]
    assert loss == pytest.approx(oracle, abs=1e-12)


def test_autoencoder_rejects_mismatched_dims():
    with pytest.raises(ConfigurationError):
        Autoencoder(mlp_init([4, 3], seed=0), mlp_init([2, 4], seed=0), "video")


def _small_bundle() -> ModelBundle:
    arch = ArchitectureConfig(video_embedding_dim=3, fmri_embedding_dim=3,
                              emotion_embedding_dim=2, video_hidden=[4],
                              fmri_hidden=[4], emotion_hidden=[3],
                              map_f_to_v_hidden=[3], map_e_to_f_hidden=[3])
    return ModelBundle(
        video_ae=build_autoencoder("video", 5, arch.video_hidden,
                                   arch.video_embedding_dim, "tanh", 0),
        fmri_ae=build_autoencoder("fmri", 4, arch.fmri_hidden,
                                  arch.fmri_embedding_dim, "tanh", 0),
        map_f_to_v=build_mapping("f_to_v", 3, arch.map_f_to_v_hidden, 3, "tanh", 0),
    )


def test_snapshot_then_assert_is_true():
    bundle = _small_bundle()
    snap = snapshot_params(bundle, {"video_ae", "fmri_ae"})
    assert assert_unchanged(snap, bundle)


def test_snapshot_detects_any_bit_change():
    bundle = _small_bundle()
    snap = snapshot_params(bundle, {"video_ae"})
    w = bundle.video_ae.encoder.weights[0].data
    w[0, 0] = np.nextafter(w[0, 0], np.inf)  # single-ulp change
    assert not assert_unchanged(snap, bundle)


def test_snapshot_rejects_unknown_subset():
    with pytest.raises(ConfigurationError):
        snapshot_params(_small_bundle(), {"video_ae", "diffusion_refiner"})


def test_named_parameters_order_is_stable():
    bundle = _small_bundle()
    names = [n for n, _ in named_parameters(bundle)]
    assert names[0] == "video_ae.encoder.w0"
    assert names == sorted(names, key=names.index)  # no duplicates
    assert any(n.startswith("map_f_to_v.net") for n in names)


def test_bundle_chain_validation():
    bundle = _small_bundle()
    bundle.validate_chain()
    bad = _small_bundle()
    bad.map_f_to_v = build_mapping("f_to_v", 2, [3], 3, "tanh", 0)
    with pytest.raises(ConfigurationError):
        bad.validate_chain()


def test_forward_gradients_reach_all_layers():
    mlp = mlp_init([4, 5, 2], seed=3)
    x = Tensor(np.random.default_rng(8).uniform(-1, 1, (3, 4)))
    with ad.Tape() as tape:
        out = mlp_forward(mlp, x)
        loss = ad.reduce_mean(ad.square(out))
    grads = tape.backward(loss)
    for t in (*mlp.weights, *mlp.biases):
        g = grads[t.node_id].data
        assert g.shape == t.shape
        assert np.any(g != 0.0)
