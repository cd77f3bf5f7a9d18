import numpy as np
import pytest

from agagan.autograd import Tensor, adam_step
from agagan.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from agagan.data import SynthSpec, render_face
from agagan.discriminator import DiscConfig, build_discriminator, discriminator_forward
from agagan.generator import GeneratorConfig, build_generator
from agagan.losses import PerceptualExtractor, d_loss, d_loss_terms
from agagan.metrics import METRIC_NAMES
from agagan.trainer import (
    BatchSampler,
    NonFiniteLossError,
    TrainConfig,
    TrainingError,
    arrays_from_images,
    evaluate_split,
    mask_batch_attributes,
    recombine_generator_loss,
    run_stage1,
    run_stage2,
    stage1_outputs,
    train_gan_step,
    train_unet_step,
    unet_outputs,
)
from agagan.unet import UNetConfig, build_unet

SIDE = 32
GEN = GeneratorConfig(scale=4, hr_side=SIDE, main_channels=4, attr_channels=3, rrdb_count=1, rrdb_growth=2, aga_module_count=1)
DISC = DiscConfig(base_channels=2, hr_side=SIDE)
UNET = UNetConfig(depth=2, base_channels=6, se_reduction=2, hr_side=SIDE)


@pytest.fixture(scope="module")
def data():
    spec = SynthSpec(seed=21, count=4, side=SIDE)
    faces = [render_face(spec, i) for i in range(spec.count)]
    return arrays_from_images([f.image for f in faces], [f.attributes for f in faces], 4, [f"f{i}" for i in range(4)])


@pytest.fixture(scope="module")
def extractor():
    return PerceptualExtractor(widths=(4, 4), seed=3)


def fresh(seed=0):
    return build_generator(GEN, seed), build_discriminator(DISC, seed + 1)


def test_train_config_validation():
    for bad in (dict(batch_size=0), dict(lr=0.0), dict(stage=3), dict(attr_mask_prob=1.5)):
        with pytest.raises(ValueError):
            TrainConfig(**bad)


def test_dataset_arrays(data):
    assert data.hr.shape == (4, 3, SIDE, SIDE) and data.lr.shape == (4, 3, 8, 8)
    assert data.lr_bicubic.shape == data.hr.shape and data.att.shape == (4, 38)
    assert data.hr.dtype == np.float32 and np.abs(data.hr).max() <= 1


def test_gan_step_report_recombines(data, extractor):
    gen, disc = fresh()
    rep = train_gan_step(data.batch([0, 1]), gen, disc, TrainConfig(batch_size=2), extractor)
    for key in ("L_D", "L_D_real", "L_D_fake", "L_adv", "L_percep", "L_mae", "L_G", "D_HR", "D_SR"):
        assert np.isfinite(rep[key])
    assert rep["L_G"] == pytest.approx(recombine_generator_loss(rep), abs=1e-6)
    assert rep["L_D"] == pytest.approx(rep["L_D_real"] + rep["L_D_fake"], abs=1e-6)
    # gradients are cleared after each update
    assert all(t.grad is None or not np.any(t.grad) for _, t in gen.params.items())
    assert all(t.grad is None or not np.any(t.grad) for _, t in disc.params.items())


def test_gan_step_updates_both_networks(data, extractor):
    gen, disc = fresh()
    g0, d0 = gen.params.snapshot(), disc.params.snapshot()
    train_gan_step(data.batch([2, 3]), gen, disc, TrainConfig(batch_size=2), extractor)
    assert all(not np.array_equal(g0[k], t.data) for k, t in gen.params.items())
    assert any(not np.array_equal(d0[k], t.data) for k, t in disc.params.items())


def test_step_zero_reports_are_reproducible(data, extractor):
    reports = []
    for _ in range(2):
        gen, disc = fresh(5)
        reports.append(train_gan_step(data.batch([0, 3]), gen, disc, TrainConfig(batch_size=2), extractor))
    assert reports[0] == reports[1]


def test_live_fake_term_ignores_smoothing(data, extractor):
    fakes = []
    for smooth in (0.9, 1.0):
        gen, disc = fresh(6)
        rep = train_gan_step(data.batch([1, 2]), gen, disc, TrainConfig(batch_size=2, label_smoothing=smooth), extractor)
        fakes.append(rep["L_D_fake"])
    assert fakes[0] == fakes[1]


def test_discriminator_separates_frozen_generator_output(data):
    # frozen initial generator vs real faces: a separable pair of distributions
    gen, disc = fresh(7)
    sr = stage1_outputs(gen, data.lr, data.att)
    hr, att = Tensor(data.hr), Tensor(data.att)
    first = None
    for step in range(200):
        d_hr, d_sr = discriminator_forward(hr, att, disc), discriminator_forward(sr, att, disc)
        if first is None:
            first = float(d_hr.data.mean() - d_sr.data.mean())
        d_loss(d_hr, d_sr).backward()
        adam_step(disc.params, 1e-3)
        disc.params.zero_grad()
        if d_hr.data.mean() > d_sr.data.mean() + 0.1:
            break
    assert d_hr.data.mean() > d_sr.data.mean()
    assert step < 199 or d_hr.data.mean() - d_sr.data.mean() > first


def test_non_finite_loss_aborts_with_component(data, extractor):
    gen, disc = fresh()
    batch = data.batch([0, 1])
    batch.hr = batch.hr.copy()
    batch.hr[0, 0, 0, 0] = np.nan
    with pytest.raises(NonFiniteLossError) as info:
        train_gan_step(batch, gen, disc, TrainConfig(batch_size=2), extractor)
    assert info.value.component.startswith("L_")
    assert isinstance(info.value, TrainingError)


def test_unet_step_leaves_generator_untouched(data, extractor):
    gen = build_generator(GEN, 8)
    unet = build_unet(UNET, 9)
    before = gen.params.snapshot()
    rng = np.random.default_rng(0)
    for i in range(3):
        rep = train_unet_step(data.batch([i, i + 1]), gen, unet, TrainConfig(stage=2, batch_size=2), extractor, rng)
        assert rep["L_U"] == pytest.approx(rep["L_percep"] + rep["L_mse"], rel=1e-6)
    for k, t in gen.params.items():
        assert t.data.tobytes() == before[k].tobytes()


def test_unet_loss_decreases_on_overfit_set(data, extractor):
    gen = build_generator(GEN, 10)
    unet = build_unet(UNetConfig(depth=2, base_channels=6, se_reduction=2, hr_side=SIDE, passthrough_init=False), 11)
    reps = run_stage2(data, gen, unet, TrainConfig(stage=2, batch_size=4, lr=1e-3, steps=60), extractor)
    first = np.mean([r["L_U"] for r in reps[:5]])
    last = np.mean([r["L_U"] for r in reps[-5:]])
    assert last < first


def test_stage1_loop_is_bitwise_deterministic(data, extractor, tmp_path):
    runs = []
    for k in range(2):
        gen, disc = fresh(12)
        cfg = TrainConfig(batch_size=2, steps=12, seed=4, attr_mask_prob=0.5)
        reps = run_stage1(data, gen, disc, cfg, extractor, log_path=tmp_path / f"log{k}.csv")
        runs.append([(r["L_D"], r["L_G"]) for r in reps])
    assert runs[0] == runs[1]
    assert (tmp_path / "log0.csv").read_bytes() == (tmp_path / "log1.csv").read_bytes()
    header = (tmp_path / "log0.csv").read_text().splitlines()[0]
    assert header == "step,L_D,L_adv,L_percep,L_mae,D_HR,D_SR"


def test_attribute_masking_only_writes_the_neutral_value():
    rng = np.random.default_rng(0)
    att = rng.integers(0, 2, (400, 38)).astype(np.float32)
    assert np.array_equal(mask_batch_attributes(att, 0.0, rng), att)
    out = mask_batch_attributes(att, 0.5, rng)
    changed = out != att
    assert np.all(out[changed] == 0.5)
    touched = changed.any(axis=1).mean()
    assert 0.4 < touched < 0.55
    everything = mask_batch_attributes(att, 1.0, rng)
    assert (everything != att).any(axis=1).mean() > 0.9
    a, b = np.random.default_rng(3), np.random.default_rng(3)
    assert np.array_equal(mask_batch_attributes(att, 0.5, a), mask_batch_attributes(att, 0.5, b))


def test_sampler_visits_every_image_per_epoch():
    sampler = BatchSampler(5, 2, np.random.default_rng(0))
    seen = np.concatenate([sampler.next() for _ in range(5)])
    assert sorted(seen.tolist()) == [0, 0, 1, 1, 2, 2, 3, 3, 4, 4]
    state = sampler.state()
    a = [sampler.next().tolist() for _ in range(4)]
    sampler.restore(state)
    assert [sampler.next().tolist() for _ in range(4)] == a


def test_evaluate_split_reports(data):
    gen = build_generator(GEN, 13)
    unet = build_unet(UNET, 14)
    reports = evaluate_split(data, gen, unet, metrics=("psnr", "ssim"))
    assert set(reports) == {"bicubic", "sr_aga", "sr_u"}
    assert all(len(r) == len(data) for r in reports.values())
    assert reports["sr_aga"].names == data.names


def test_evaluating_ground_truth_gives_ideals(data):
    gen = build_generator(GEN, 15)
    perfect = type(data)(data.hr, data.lr, data.att, data.hr, data.names)
    rep = evaluate_split(perfect, gen, metrics=tuple(m for m in METRIC_NAMES if m != "brisque"))["bicubic"]
    means = rep.means()
    assert means["psnr"] == means["sre"] == 100.0
    for m in ("ssim", "fsim", "uiq"):
        assert means[m] == pytest.approx(1.0, abs=1e-6)
    with pytest.raises(TrainingError):
        evaluate_split(type(data)(data.hr[:0], data.lr[:0], data.att[:0], data.hr[:0]), gen)


# -- checkpoints -------------------------------------------------------------


def test_checkpoint_round_trip_is_bitwise(data, extractor, tmp_path):
    gen, disc = fresh(16)
    unet = build_unet(UNET, 17)
    train_gan_step(data.batch([0, 1]), gen, disc, TrainConfig(batch_size=2), extractor)
    path = tmp_path / "c.agac"
    save_checkpoint(path, {"gen": gen, "disc": disc, "unet": unet}, rng={"k": 1}, meta={"step": 1})
    ck = load_checkpoint(path)
    assert sorted(ck.stores) == ["disc", "gen", "unet"] and ck.meta["step"] == 1 and ck.rng == {"k": 1}
    gen2, disc2, unet2 = ck.build("gen"), ck.build("disc"), ck.build("unet")
    assert gen2.params.step == gen.params.step == 1
    for k in gen.params.params:
        assert gen2.params.m[k].tobytes() == gen.params.m[k].tobytes()
    a = stage1_outputs(gen, data.lr, data.att)
    b = stage1_outputs(gen2, data.lr, data.att)
    assert a.tobytes() == b.tobytes()
    assert unet_outputs(unet, a, data.lr_bicubic).tobytes() == unet_outputs(unet2, b, data.lr_bicubic).tobytes()
    d_a = discriminator_forward(data.hr, data.att, disc).data
    d_b = discriminator_forward(data.hr, data.att, disc2).data
    assert d_a.tobytes() == d_b.tobytes()


def test_stage1_checkpoint_feeds_stage2(data, extractor, tmp_path):
    gen, disc = fresh(18)
    save_checkpoint(tmp_path / "s1.agac", {"gen": gen, "disc": disc})
    ck = load_checkpoint(tmp_path / "s1.agac")
    reps = run_stage2(data, ck.build("gen"), build_unet(UNET, 0), TrainConfig(stage=2, batch_size=2, steps=2), extractor)
    assert len(reps) == 2
    with pytest.raises(CheckpointError):
        ck.build("unet")


@pytest.mark.parametrize("damage", ["magic", "version", "truncated", "checksum", "manifest", "short"])
def test_damaged_checkpoints_name_the_section(tmp_path, damage):
    gen, disc = fresh(19)
    path = tmp_path / "c.agac"
    save_checkpoint(path, {"gen": gen, "disc": disc})
    raw = bytearray(path.read_bytes())
    if damage == "magic":
        raw[0] ^= 0xFF
    elif damage == "version":
        raw[4] = 9
    elif damage == "truncated":
        raw = raw[:-10]
    elif damage == "checksum":
        raw[-3] ^= 0x01
    elif damage == "manifest":
        raw[20] = ord("}")
    else:
        raw = raw[:8]
    path.write_bytes(bytes(raw))
    with pytest.raises(CheckpointError) as info:
        load_checkpoint(path)
    expected = {"magic": "header", "version": "header", "truncated": "blob", "checksum": "blob:", "manifest": "manifest", "short": "header"}
    assert info.value.section.startswith(expected[damage])


def test_unknown_or_missing_parameter_names_rejected(tmp_path):
    gen, disc = fresh(20)
    save_checkpoint(tmp_path / "c.agac", {"gen": gen})
    ck = load_checkpoint(tmp_path / "c.agac")
    other = build_generator(GeneratorConfig(scale=4, hr_side=SIDE, main_channels=4, attr_channels=3, rrdb_count=2, rrdb_growth=2, aga_module_count=1), 0)
    with pytest.raises(CheckpointError):
        ck.restore_into("gen", other.params)
    ck.arrays["gen/bogus.w"] = np.zeros(1, np.float32)
    with pytest.raises(CheckpointError):
        ck.restore_into("gen", gen.params)
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "missing.agac")
