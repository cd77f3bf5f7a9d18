import numpy as np
import pytest

from agagan.attributes import N_ATTRIBUTES
from agagan.autograd import ConfigurationError, Tensor
from agagan.autograd import functional as F
from agagan.generator import (
    GeneratorConfig,
    aga_module_forward,
    attribute_stem_forward,
    build_generator,
    deconv_upsample,
    dense_block,
    generator_forward,
    main_stem_forward,
    rrdb_forward,
)
from agagan.losses import mae_loss

TINY = dict(main_channels=4, attr_channels=3, rrdb_count=1, rrdb_growth=2)


def lr_batch(rng, n, side):
    return rng.uniform(-1, 1, (n, 3, side, side)).astype(np.float32)


def att_batch(rng, n):
    return rng.integers(0, 2, (n, N_ATTRIBUTES)).astype(np.float32)


def conv_np(p, name, x):
    w, b = p[f"{name}.w"], p[f"{name}.b"]
    return F.conv2d(x, w, b, 1, w.shape[2] // 2)


def test_default_x8_shapes():
    state = build_generator(GeneratorConfig(scale=8), 0)
    rng = np.random.default_rng(0)
    lr = lr_batch(rng, 1, 16)
    assert main_stem_forward(Tensor(lr), state).shape == (1, 64, 16, 16)
    assert attribute_stem_forward(att_batch(rng, 1), Tensor(lr), state).shape == (1, 32, 16, 16)
    sr, maps = generator_forward(lr, att_batch(rng, 1), state, mode="eval")
    assert sr.shape == (1, 3, 128, 128)
    assert len(maps) == 3 and all(m.shape == (1, 1, 32, 32) for m in maps)


def test_x4_shapes_and_one_deconv_stage():
    cfg = GeneratorConfig(scale=4, **TINY)
    state = build_generator(cfg, 0)
    rng = np.random.default_rng(1)
    sr, maps = generator_forward(lr_batch(rng, 2, 32), att_batch(rng, 2), state)
    assert sr.shape == (2, 3, 128, 128)
    assert cfg.deconv_stages == 1
    assert all(m.shape == (2, 1, 64, 64) for m in maps)


def test_minimal_config_on_8x8_input():
    state = build_generator(GeneratorConfig(scale=4, hr_side=32, aga_module_count=1, **TINY), 2)
    rng = np.random.default_rng(2)
    sr, maps = generator_forward(lr_batch(rng, 1, 8), att_batch(rng, 1), state)
    assert sr.shape == (1, 3, 32, 32) and len(maps) == 1


def test_invalid_configs_rejected():
    with pytest.raises(ConfigurationError):
        GeneratorConfig(scale=3)
    with pytest.raises(ConfigurationError):
        GeneratorConfig(aga_module_count=0)
    with pytest.raises(ConfigurationError):
        GeneratorConfig(residual_scale=1.5)


def test_wrong_input_resolution_rejected():
    state = build_generator(GeneratorConfig(scale=4, **TINY), 0)
    rng = np.random.default_rng(3)
    with pytest.raises(ConfigurationError):
        generator_forward(lr_batch(rng, 1, 16), att_batch(rng, 1), state)


def test_parameter_count_recount():
    state = build_generator(GeneratorConfig(scale=8, **TINY), 0)
    recount = sum(int(np.prod(t.data.shape)) for t in state.params.params.values())
    assert state.param_count == recount


def test_zero_residual_scale_makes_rrdb_identity():
    state = build_generator(GeneratorConfig(scale=4, residual_scale=0.0, **TINY), 4)
    x = Tensor(np.random.default_rng(4).standard_normal((1, 4, 8, 8)).astype(np.float32))
    np.testing.assert_array_equal(rrdb_forward(x, state, 0).data, x.data)


def test_rrdb_matches_step_by_step_oracle():
    state = build_generator(GeneratorConfig(scale=4, **TINY), 5)
    p = state.params
    x = Tensor(np.random.default_rng(5).standard_normal((1, 4, 6, 6)).astype(np.float32))

    def block(h, prefix):
        feats = h
        for layer in range(4):
            out = conv_np(p, f"{prefix}.conv{layer}", feats)
            if layer < 3:
                out = F.leaky_relu(out)
                feats = F.concat_channels(feats, out)
        return out

    h = x.data.astype(np.float64)
    for b in range(3):
        h = h + 0.4 * block(Tensor(h), f"gen.rrdb0.db{b}").data
    expected = x.data + 0.4 * h
    np.testing.assert_allclose(rrdb_forward(x, state, 0).data, expected, atol=1e-5)
    np.testing.assert_array_equal(dense_block(x, state, "gen.rrdb0.db0").data, block(x, "gen.rrdb0.db0").data)


def test_aga_module_matches_hand_composition():
    cfg = GeneratorConfig(scale=4, hr_side=16, main_channels=1, attr_channels=1, rrdb_count=1, rrdb_growth=1, aga_module_count=1)
    state = build_generator(cfg, 6)
    p = state.params
    rng = np.random.default_rng(6)
    sr = Tensor(rng.standard_normal((1, 1, 4, 4)).astype(np.float32))
    ast = Tensor(rng.standard_normal((1, 1, 4, 4)).astype(np.float32))

    m = conv_np(p, "gen.aga0.main1", conv_np(p, "gen.aga0.main0", sr))
    a = conv_np(p, "gen.aga0.attr", ast)
    aga = F.sigmoid(conv_np(p, "gen.aga0.att", a))
    aef = F.hadamard(m, aga)
    sr_next = F.add(m, aef)
    as_next = conv_np(p, "gen.aga0.fuse", F.concat_channels(a, sr_next))

    got = aga_module_forward(sr, ast, state, 0)
    for g, e in zip(got, (sr_next, as_next, aga)):
        np.testing.assert_array_equal(g.data, e.data)


def test_aga_zero_attention_leaves_main_path():
    cfg = GeneratorConfig(scale=4, hr_side=16, main_channels=2, attr_channels=2, rrdb_count=1, rrdb_growth=1, aga_module_count=1)
    state = build_generator(cfg, 7)
    p = state.params
    p["gen.aga0.att.w"].data[...] = 0.0
    p["gen.aga0.att.b"].data[...] = -200.0
    rng = np.random.default_rng(7)
    sr = Tensor(rng.standard_normal((1, 2, 4, 4)).astype(np.float32))
    ast = Tensor(rng.standard_normal((1, 2, 4, 4)).astype(np.float32))
    m = conv_np(p, "gen.aga0.main1", conv_np(p, "gen.aga0.main0", sr)).data
    out, _, aga = aga_module_forward(sr, ast, state, 0)
    assert aga.data.max() < 1e-30
    np.testing.assert_allclose(out.data, m, rtol=1e-6, atol=1e-30)


def test_aga_spatial_mismatch_rejected():
    state = build_generator(GeneratorConfig(scale=4, **TINY), 0)
    with pytest.raises(ConfigurationError):
        aga_module_forward(Tensor(np.zeros((1, 4, 4, 4))), Tensor(np.zeros((1, 3, 5, 5))), state, 0)


def test_additive_fuse_variant_runs():
    state = build_generator(GeneratorConfig(scale=4, fuse_mode="add", **TINY), 0)
    rng = np.random.default_rng(8)
    sr, maps = generator_forward(lr_batch(rng, 1, 32), att_batch(rng, 1), state)
    assert sr.shape == (1, 3, 128, 128)


def test_deconv_output_range_and_shape():
    state = build_generator(GeneratorConfig(scale=8, **TINY), 9)
    rng = np.random.default_rng(9)
    out = deconv_upsample(Tensor(rng.standard_normal((1, 4, 32, 32)) * 30), Tensor(rng.standard_normal((1, 3, 32, 32)) * 30), state)
    assert out.shape == (1, 3, 128, 128)
    assert np.all(np.abs(out.data) < 1)


def test_output_and_maps_in_open_intervals():
    state = build_generator(GeneratorConfig(scale=4, **TINY), 10)
    rng = np.random.default_rng(10)
    sr, maps = generator_forward(lr_batch(rng, 2, 32), att_batch(rng, 2), state)
    assert np.all(np.abs(sr.data) < 1)
    for m in maps:
        assert np.all((m.data > 0) & (m.data < 1))


def test_neutral_attributes_and_single_bit_sensitivity():
    state = build_generator(GeneratorConfig(scale=4, **TINY), 11)
    rng = np.random.default_rng(11)
    lr = Tensor(lr_batch(rng, 1, 32))
    neutral = np.full((1, N_ATTRIBUTES), 0.5, np.float32)
    assert np.all(np.isfinite(attribute_stem_forward(neutral, lr, state).data))
    flipped = neutral.copy()
    flipped[0, 15] = 1.0
    a = attribute_stem_forward(neutral, lr, state).data
    b = attribute_stem_forward(flipped, lr, state).data
    assert np.abs(a - b).sum() > 0
    sa, _ = generator_forward(lr, neutral, state)
    sb, _ = generator_forward(lr, flipped, state)
    assert np.abs(sa.data - sb.data).sum() > 0


def test_attribute_batch_mismatch_rejected():
    state = build_generator(GeneratorConfig(scale=4, **TINY), 0)
    with pytest.raises(ConfigurationError):
        attribute_stem_forward(np.zeros((2, N_ATTRIBUTES)), Tensor(np.zeros((1, 3, 32, 32))), state)


def test_eval_forward_is_bitwise_deterministic():
    rng = np.random.default_rng(12)
    lr, att = lr_batch(rng, 2, 32), att_batch(rng, 2)
    a, _ = generator_forward(lr, att, build_generator(GeneratorConfig(scale=4, **TINY), 3), mode="eval")
    b, _ = generator_forward(lr, att, build_generator(GeneratorConfig(scale=4, **TINY), 3), mode="eval")
    assert a.data.tobytes() == b.data.tobytes()


def test_every_parameter_receives_gradient():
    state = build_generator(GeneratorConfig(scale=8, **TINY), 13)
    rng = np.random.default_rng(13)
    sr, _ = generator_forward(lr_batch(rng, 2, 16), att_batch(rng, 2), state)
    hr = Tensor(rng.uniform(-1, 1, sr.shape).astype(np.float32))
    mae_loss(hr, sr).backward()
    dead = [k for k, t in state.params.items() if t.grad is None or not np.any(t.grad)]
    assert dead == []
