import dataclasses
from collections import OrderedDict

import numpy as np
import pytest

from gatenet.data import SynthSpec, synth_generate
from gatenet.model import GateNet
from gatenet.training import (
    SGD,
    CheckpointError,
    NumericError,
    TrainConfig,
    TrainState,
    load_checkpoint,
    poly_lr,
    preset,
    save_checkpoint,
    sgd_step,
    train,
    variant_config,
)
from gatenet.training import checkpoint as ckpt
from gatenet.training import config as cfgmod
from gatenet.training.ablation import ablation_config, run_ablation, write_rows


def small_config(**kw):
    base = dict(input_size=32, block_channels=(4, 4, 4, 4, 4), convs_per_block=1, epochs=2, batch=4,
                base_lr=0.01, seed=0)
    base.update(kw)
    return TrainConfig(preset="custom", **base)


@pytest.fixture(scope="module")
def data():
    ds = synth_generate(SynthSpec(seed=11, count=14, size=32))
    return ds[:10], ds[10:]


# -- schedule and optimizer ------------------------------------------------------


def test_poly_lr_values():
    assert poly_lr(0, 100, 0.001) == 0.001
    assert poly_lr(100, 100, 0.001) == 0.0
    assert poly_lr(50, 100, 0.001) == pytest.approx(0.001 * 0.5 ** 0.9, rel=1e-12)
    assert poly_lr(50, 100, 0.001) == pytest.approx(5.3589e-4, abs=1e-8)
    with pytest.raises(ValueError):
        poly_lr(101, 100, 0.001)
    with pytest.raises(ValueError):
        poly_lr(-1, 100, 0.001)


def test_poly_lr_monotone():
    vals = [poly_lr(i, 37, 0.01) for i in range(38)]
    assert all(a >= b for a, b in zip(vals, vals[1:]))


def test_sgd_matches_hand_recursion():
    rng = np.random.default_rng(0)
    p0 = rng.standard_normal(5)
    params = OrderedDict([("a.weight", p0.copy()), ("a.bias", p0.copy())])
    grads_seq = [rng.standard_normal(5) for _ in range(4)]
    state = {}
    lr, m, wd = 0.1, 0.9, 0.01
    pw, vw = p0.copy(), np.zeros(5)
    pb, vb = p0.copy(), np.zeros(5)
    for g in grads_seq:
        sgd_step(params, {"a.weight": g, "a.bias": g}, state, lr, m, wd)
        vw = m * vw + g + wd * pw
        pw = pw - lr * vw
        vb = m * vb + g  # biases are not decayed
        pb = pb - lr * vb
    np.testing.assert_allclose(params["a.weight"], pw, rtol=1e-14)
    np.testing.assert_allclose(params["a.bias"], pb, rtol=1e-14)


def test_sgd_zero_lr_is_identity():
    params = OrderedDict([("w.weight", np.arange(4.0))])
    before = params["w.weight"].copy()
    SGD(params).step({"w.weight": np.ones(4)}, 0.0)
    np.testing.assert_array_equal(params["w.weight"], before)


def test_sgd_names_bad_parameter():
    params = OrderedDict([("x.weight", np.zeros(2))])
    with pytest.raises(NumericError, match="x.weight"):
        sgd_step(params, {"x.weight": np.array([1.0, np.nan])}, {}, 0.1)


# -- config text -------------------------------------------------------------------


def test_config_text_roundtrip():
    cfg = preset("toy", seed=7, context="aspp", augment=False)
    text = cfg.to_text()
    assert text.splitlines() == sorted(text.splitlines())
    assert cfgmod.loads(text) == cfg
    assert "block_channels = 16,32,64,64,64" in text


def test_config_parsing_rules():
    cfg = cfgmod.loads("# comment\npreset = toy\nepochs = 3  # inline\ngates = false\n")
    assert cfg.epochs == 3 and cfg.gates is False and cfg.base_lr == preset("toy").base_lr
    with pytest.raises(ValueError, match="unknown config keys"):
        cfgmod.loads("learning_rate = 0.1")
    with pytest.raises(ValueError, match="bad value"):
        cfgmod.loads("epochs = many")
    with pytest.raises(ValueError, match="line 1"):
        cfgmod.loads("epochs 3")
    with pytest.raises(ValueError):
        preset("huge")


def test_config_rejects_nonpositive():
    with pytest.raises(ValueError):
        small_config(base_lr=0)
    with pytest.raises(ValueError):
        small_config(momentum=-1)


def test_presets():
    toy, paper = preset("toy"), preset("paper")
    assert (toy.input_size, toy.block_channels, toy.epochs) == (64, (16, 32, 64, 64, 64), 10)
    assert (paper.input_size, paper.epochs, paper.base_lr) == (384, 40, 0.001)
    assert toy.momentum == 0.9 and toy.weight_decay == 0.0005 and toy.batch == 4 and toy.poly_power == 0.9


# -- checkpoints ---------------------------------------------------------------------


@pytest.fixture
def state():
    cfg = small_config()
    model = GateNet(cfg.model_config(), seed=3, dtype=cfg.np_dtype)
    mom = OrderedDict((k, np.full(v.shape, 0.5, dtype=v.dtype)) for k, v in model.state_dict().items())
    return TrainState(cfg, model.state_dict(), mom, 17)


def test_checkpoint_roundtrip_is_bitwise(tmp_path, state):
    path = tmp_path / "a.gnet"
    save_checkpoint(state, path)
    back = load_checkpoint(path)
    assert back.iteration == 17 and back.config == state.config
    for k in state.params:
        assert back.params[k].tobytes() == state.params[k].tobytes()
        assert back.momentum[k].tobytes() == state.momentum[k].tobytes()
    x = np.random.default_rng(0).random((2, 3, 32, 32)).astype(np.float32)
    a = GateNet(state.config.model_config(), dtype=np.float32)
    a.load_state_dict(state.params)
    b = GateNet(back.config.model_config(), dtype=np.float32)
    b.load_state_dict(back.params)
    assert a.forward(x).final_map.data.tobytes() == b.forward(x).final_map.data.tobytes()


def test_checkpoint_f64_payload(state):
    state.params = OrderedDict((k, v.astype(np.float64)) for k, v in state.params.items())
    back = ckpt.loads(ckpt.dumps(state))
    assert all(v.dtype == np.float64 for v in back.params.values())


def test_checkpoint_rejects_corruption(state):
    raw = bytearray(ckpt.dumps(state))
    raw[len(raw) // 2] ^= 0x01
    with pytest.raises(CheckpointError, match="checksum"):
        ckpt.loads(bytes(raw))


def test_checkpoint_rejects_bad_header(state):
    raw = ckpt.dumps(state)
    with pytest.raises(CheckpointError, match="magic"):
        ckpt.loads(b"XNET" + raw[4:])
    with pytest.raises(CheckpointError, match="version"):
        ckpt.loads(raw[:4] + (2).to_bytes(4, "little") + raw[8:])
    with pytest.raises(CheckpointError, match="checksum|truncated"):
        ckpt.loads(raw[:-100])
    with pytest.raises(CheckpointError):
        ckpt.loads(raw[:10])


def test_checkpoint_config_mismatch(state):
    raw = ckpt.dumps(state)
    other = dataclasses.replace(state.config, context="aspp")
    with pytest.raises(CheckpointError, match="incompatible.*context"):
        ckpt.loads(raw, expected=other)
    # non-architectural differences are fine
    ckpt.loads(raw, expected=dataclasses.replace(state.config, base_lr=0.5, epochs=9))


# -- training loop -------------------------------------------------------------------


def test_training_is_reproducible(data):
    cfg = small_config()
    a = train(cfg, *data)
    b = train(cfg, *data)
    assert a.log.iterations == b.log.iterations
    assert a.log.evals == b.log.evals
    assert len(a.log.iterations) == 6
    for k in a.state.params:
        assert a.state.params[k].tobytes() == b.state.params[k].tobytes()


def test_resume_continues_identically(data, tmp_path):
    cfg = small_config(epochs=3)
    full = train(cfg, data[0])
    half = train(cfg, data[0], stop_after=4)  # stops mid-epoch
    assert half.state.iteration == 4
    path = tmp_path / "mid.gnet"
    save_checkpoint(half.state, path)
    rest = train(cfg, data[0], resume=load_checkpoint(path, expected=cfg))
    assert half.log.iterations + rest.log.iterations == full.log.iterations
    for k in full.state.params:
        assert rest.state.params[k].tobytes() == full.state.params[k].tobytes()


def test_run_log_and_checkpoint_files(data, tmp_path):
    cfg = small_config(epochs=1, checkpoint_every=2, eval_every=1)
    res = train(cfg, *data, out_dir=str(tmp_path))
    header = (tmp_path / "run_log.csv").read_text().splitlines()[0]
    assert header == "iter,epoch,lr,loss,l_s1,l_sf"
    assert (tmp_path / "eval_log.csv").read_text().startswith("epoch,max_f_beta,mae,s_measure")
    assert load_checkpoint(tmp_path / "checkpoint.gnet").iteration == res.state.iteration == 3
    assert all(np.isfinite(r["loss"]) for r in res.log.iterations)


def test_lr_follows_poly_schedule(data):
    res = train(small_config(), data[0])
    lrs = [r["lr"] for r in res.log.iterations]
    assert lrs == [poly_lr(i, 6, 0.01) for i in range(6)]


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_loss_raises(data):
    cfg = small_config(base_lr=1e12, epochs=3, augment=False)
    with pytest.raises(NumericError):
        train(cfg, data[0])


def test_empty_training_set():
    with pytest.raises(ValueError):
        train(small_config(), [])


# -- ablation --------------------------------------------------------------------------


def test_variant_config_keeps_recipe():
    cfg = small_config(base_lr=0.05)
    v = variant_config(cfg, "fpn")
    assert (v.gates, v.context, v.decoder) == (False, "conv1x1", "progressive")
    assert v.base_lr == 0.05 and v.block_channels == cfg.block_channels


def test_ablation_rows(data, tmp_path):
    cfg = small_config(epochs=1)
    rows = run_ablation(cfg, *data, seeds=(0,))
    assert [r["variant"] for r in rows] == ["fpn", "gates", "fold_aspp", "full"]
    sizes = [r["parameters"] for r in rows]
    assert sizes == sorted(sizes) and len(set(sizes)) == 4
    write_rows(rows, str(tmp_path / "ablation.csv"))
    lines = (tmp_path / "ablation.csv").read_text().splitlines()
    assert len(lines) == 5 and lines[0].startswith("variant,label,seeds")


def test_ablation_reuses_trained_models(data):
    cfg = small_config(epochs=1)
    model = train(ablation_config(cfg, "gates", 0), data[0]).model
    fresh = run_ablation(cfg, *data, seeds=(0,), variants=("gates",))
    reused = run_ablation(cfg, *data, seeds=(0,), variants=("gates",), trained={("gates", 0): model})
    assert fresh == reused
