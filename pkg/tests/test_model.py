import numpy as np
import pytest

from oracles import conv2d_loops, parameter_count
from rbamsr import model as M
from rbamsr.autodiff import Tensor
from rbamsr.errors import ConfigError, ShapeError
from rbamsr.model import VARIANTS, ModelConfig, build, forward, variant, zeros_like_store

SMALL = ModelConfig(B=2, C=8, r=2)


def sigmoid(z):
    return 1 / (1 + np.exp(-z))


@pytest.mark.parametrize("name", list(VARIANTS))
@pytest.mark.parametrize("r", [2, 4])
def test_parameter_count_matches_oracle(name, r):
    cfg = variant(ModelConfig(B=3, C=16, r=r), name)
    expected = parameter_count(3, 16, r, use_ca=cfg.use_ca, use_sa=cfg.use_sa,
                               first=cfg.use_first_order, second=cfg.use_second_order)
    assert build(cfg).num_parameters() == expected


def test_default_size_parameter_count():
    assert build(ModelConfig()).num_parameters() == parameter_count(5, 64, 2)


def test_build_is_seed_deterministic():
    a, b, c = build(SMALL, 3), build(SMALL, 3), build(SMALL, 4)
    for (na, ta), (nb, tb) in zip(a.items(), b.items()):
        assert na == nb and ta.data.tobytes() == tb.data.tobytes()
    assert any(ta.data.tobytes() != tc.data.tobytes() for (_, ta), (_, tc) in zip(a.items(), c.items()))


def test_init_bounds_and_zero_biases():
    store = build(SMALL, 0)
    for name, t in store.items():
        if name.endswith(".bias"):
            assert not t.data.any()
        else:
            fan_in = int(np.prod(t.shape[1:]))
            assert np.abs(t.data).max() <= np.sqrt(6 / fan_in)


@pytest.mark.parametrize("name", list(VARIANTS))
def test_zero_block_is_exact_identity(name, rng):
    cfg = variant(SMALL, name)
    p = zeros_like_store(cfg).scope("block0")
    x = Tensor(rng.standard_normal((2, 8, 10, 10)))
    out = M.rbam_block(p, x, cfg)
    assert out.data.tobytes() == x.data.tobytes()


@pytest.mark.parametrize("branch", ["ca", "sa"])
def test_zero_logit_gate_halves_features(branch, rng):
    cfg = SMALL
    p = zeros_like_store(cfg).scope(f"block0.{branch}")
    h = Tensor(rng.standard_normal((1, 8, 9, 9)))
    fn = M.ca_branch if branch == "ca" else M.sa_branch
    out = fn(p, h, cfg).data
    assert np.array_equal(out, 0.5 * h.data)


def test_first_order_channel_attention_matches_squeeze_excitation(rng):
    cfg = variant(SMALL, "CA-1st")
    p = build(cfg, 1).scope("block0.ca")
    for k in ("down.bias", "up.bias"):
        p[k].data[...] = rng.uniform(-0.1, 0.1, p[k].shape)
    h = rng.standard_normal((1, 8, 6, 7))
    z = np.maximum(p["down.weight"].data @ h[0].mean(axis=(1, 2)) + p["down.bias"].data, 0)
    gate = sigmoid(p["up.weight"].data @ z + p["up.bias"].data)
    want = h * gate[None, :, None, None]
    got = M.ca_branch(p, Tensor(h), cfg).data
    np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-14)


def test_second_order_channel_attention_hand_wired(rng):
    cfg = variant(SMALL, "CA-2nd")
    p = build(cfg, 2).scope("block0.ca")
    p["rowwise.bias"].data[...] = 0.05
    h = rng.standard_normal((8, 5, 5))
    flat = h.reshape(8, -1)
    centred = flat - flat.mean(axis=1, keepdims=True)
    cov = centred @ centred.T / flat.shape[1]
    desc = cov @ p["rowwise.weight"].data[0] + 0.05
    z = np.maximum(p["down.weight"].data @ desc, 0)
    gate = sigmoid(p["up.weight"].data @ z)
    got = M.ca_branch(p, Tensor(h[None]), cfg).data[0]
    np.testing.assert_allclose(got, h * gate[:, None, None], rtol=1e-11, atol=1e-13)


def test_spatial_attention_both_orders_hand_wired(rng):
    cfg = variant(SMALL, "SA-both")
    p = build(cfg, 3).scope("block0.sa")
    p["conv.bias"].data[...] = -0.2
    h = rng.standard_normal((8, 16, 16))
    stat1 = h.mean(axis=0)
    pooled = h.reshape(8, 8, 2, 8, 2).mean(axis=(2, 4)).reshape(8, 64)
    centred = pooled - pooled.mean(axis=0, keepdims=True)
    cov = centred.T @ centred / 8
    rows = (cov @ p["rowwise.weight"].data[0] + p["rowwise.bias"].data[0]).reshape(8, 8)
    stat2 = np.repeat(np.repeat(rows, 2, axis=0), 2, axis=1)
    gate = sigmoid(p["conv.weight"].data[0, 0, 0, 0] * (stat1 + stat2) - 0.2)
    got = M.sa_branch(p, Tensor(h[None]), cfg).data[0]
    np.testing.assert_allclose(got, h * gate[None], rtol=1e-11, atol=1e-13)


def test_baseline_block_composition(rng):
    cfg = variant(ModelConfig(B=1, C=4, r=2), "baseline")
    p = build(cfg, 5).scope("block0")
    x = rng.standard_normal((4, 6, 6))
    w = {k: v.data for k, v in p.items()}
    hc = conv2d_loops(np.maximum(conv2d_loops(x, w["conv1.weight"], w["conv1.bias"], 1), 0),
                      w["conv2.weight"], w["conv2.bias"], 1)
    want = conv2d_loops(hc, w["fuse.weight"], w["fuse.bias"], 0) + x
    got = M.rbam_block(p, Tensor(x[None]), cfg).data[0]
    np.testing.assert_allclose(got, want, atol=1e-12)


@pytest.mark.parametrize("r", [2, 4])
@pytest.mark.parametrize("size", [8, 16, 48, 57])
def test_forward_shapes(r, size):
    cfg = ModelConfig(B=1, C=4, r=r)
    out = forward(build(cfg), cfg, np.zeros((1, size, size)))
    assert out.shape == (1, r * size, r * size)


def test_rectangular_and_batched_forward(rng):
    cfg = ModelConfig(B=1, C=4, r=2)
    params = build(cfg)
    x = rng.uniform(size=(3, 1, 9, 13))
    batch = forward(params, cfg, x).data
    assert batch.shape == (3, 1, 18, 26)
    np.testing.assert_allclose(batch[1], forward(params, cfg, x[1]).data, atol=1e-13)


def test_upsample_stage_count():
    assert sum(n.startswith("upsample") and n.endswith("weight") for n in build(ModelConfig(C=4, r=4)).names()) == 2
    assert sum(n.startswith("upsample") and n.endswith("weight") for n in build(ModelConfig(C=4, r=2)).names()) == 1


def test_input_below_sa_pool_rejected():
    cfg = ModelConfig(B=1, C=4)
    with pytest.raises(ShapeError, match="sa_pool"):
        forward(build(cfg), cfg, np.zeros((1, 7, 12)))
    cfg1 = variant(cfg, "CA-1st")
    assert forward(build(cfg1), cfg1, np.zeros((1, 4, 4))).shape == (1, 8, 8)


@pytest.mark.parametrize("bad", [dict(r=3), dict(C=6), dict(B=0),
                                 dict(use_first_order=False, use_second_order=False)])
def test_invalid_configs(bad):
    with pytest.raises(ConfigError):
        build(ModelConfig(**{**dict(C=8), **bad}))


def test_config_dict_round_trip():
    cfg = variant(ModelConfig(B=2, C=8, r=4), "SA-both")
    assert ModelConfig.from_dict(cfg.to_dict()) == cfg


def test_zero_model_predicts_zero():
    cfg = ModelConfig(B=1, C=4)
    out = M.predictor(zeros_like_store(cfg), cfg)(np.full((8, 8), 0.3))
    assert out.shape == (16, 16) and not out.any()
