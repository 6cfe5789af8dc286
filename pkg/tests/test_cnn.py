import numpy as np
import pytest

from checks import gradient_errors, tiny_model
from oracles import reference_forward
from srdetect.cnn import (
    FORMAT_VERSION,
    PARAM_NAMES,
    CnnModel,
    ModelFormatError,
    ModelVersionError,
    TrainConfig,
    TrainingError,
    _sigmoid,
    detect_cnn,
    forward,
    forward_batch,
    load_model,
    loss_and_grads,
    param_shapes,
    save_model,
    train,
)
from srdetect.spectral import SrConfig
from srdetect.synth import generate_base
from srdetect.timeseries import TimeSeries


def spiky_set(n=200, window=16, seed=0):
    """Positive windows carry a large spike near the end; negatives are flat noise."""
    rng = np.random.default_rng(seed)
    x = 1 + 0.1 * rng.random((n, window))
    y = np.zeros(n)
    y[: n // 2] = 1
    x[: n // 2, window - 5] += 8
    return x, y


def test_shapes_and_channel_doubling():
    m = CnnModel.init(6)
    assert {n: a.shape for n, a in m.params().items()} == param_shapes(6)
    assert m.conv2_w.shape[0] == 2 * m.conv1_w.shape[0]
    with pytest.raises(ValueError):
        CnnModel(6, **{**m.params(), "fc1_b": np.zeros(5)})
    bad = m.params()
    bad["fc2_w"] = np.full((1, 6), np.nan)
    with pytest.raises(ValueError):
        CnnModel(6, **bad)


def test_zero_model_gives_half():
    assert forward(CnnModel.zeros(8), np.arange(1, 9.0)) == 0.5


def test_forward_deterministic():
    m = CnnModel.init(8, seed=3)
    w = np.random.default_rng(0).random(8)
    assert forward(m, w) == forward(m, w)


@pytest.mark.parametrize("seed", range(5))
def test_forward_matches_direct_convolution(seed):
    m = tiny_model(8, seed)
    w = np.random.default_rng(seed + 10).uniform(0.1, 3.0, 8)
    assert forward(m, w) == pytest.approx(reference_forward(m.params(), w), abs=1e-6)


def test_forward_length_mismatch():
    with pytest.raises(ValueError):
        forward(CnnModel.init(8), np.ones(7))


def test_output_open_interval():
    m = CnnModel.init(8, seed=1)
    x = np.random.default_rng(2).uniform(0.01, 50, (500, 8))
    p = forward_batch(m, x)
    assert np.all((p > 0) & (p < 1))
    z = np.array([-800.0, -30.0, 0.0, 30.0, 800.0])
    s = _sigmoid(z)
    assert np.all(np.isfinite(s))
    assert s[2] == 0.5


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_gradients_match_finite_differences(seed):
    errs = gradient_errors(window=4, samples=2, seed=seed)
    assert set(errs) == set(PARAM_NAMES)
    for name, err in errs.items():
        assert err <= 1e-4, f"{name}: {err}"


def test_logit_gradient_is_weighted_sigmoid_minus_label():
    m = tiny_model(4, 0)
    x = np.array([[1.0, 2.0, 1.5, 0.5], [0.7, 0.7, 3.0, 1.0]])
    y = np.array([1.0, 0.0])
    _, g = loss_and_grads(m, x, y, positive_weight=3.0)
    p = forward_batch(m, x)
    assert g["fc2_b"][0] == pytest.approx((3.0 * (p[0] - 1) + p[1]) / 2, rel=1e-6)


def test_loss_matches_cross_entropy_formula():
    m = tiny_model(4, 1)
    x = np.random.default_rng(5).uniform(0.5, 2, (6, 4))
    y = np.array([1, 0, 0, 1, 0, 0.0])
    loss, _ = loss_and_grads(m, x, y, positive_weight=2.0)
    p = forward_batch(m, x)
    w = np.where(y == 1, 2.0, 1.0)
    assert loss == pytest.approx(np.mean(-w * (y * np.log(p) + (1 - y) * np.log(1 - p))), rel=1e-9)


def test_zero_learning_rate_changes_nothing():
    x, y = spiky_set(64, 8)
    start = CnnModel.init(8, seed=4)
    out = train((x, y), TrainConfig(learning_rate=0.0, epochs=3, seed=4), model=start)
    for name in PARAM_NAMES:
        assert np.array_equal(getattr(out, name), getattr(start, name))
    assert len(out.loss_history) == 4
    assert len(set(out.loss_history)) == 1


def test_separable_toy_set_learned():
    x, y = spiky_set(200, 16)
    model = train((x, y), TrainConfig(epochs=30, batch_size=16, seed=1))
    acc = np.mean((forward_batch(model, x) > 0.5) == (y > 0.5))
    assert acc >= 0.95
    assert model.loss_history[-1] < model.loss_history[0]
    assert model.conv1_w.dtype == np.float32


def test_training_deterministic():
    x, y = spiky_set(64, 8)
    a = train((x, y), TrainConfig(epochs=2, seed=9))
    b = train((x, y), TrainConfig(epochs=2, seed=9))
    assert all(np.array_equal(getattr(a, n), getattr(b, n)) for n in PARAM_NAMES)
    assert a.loss_history == b.loss_history


def test_single_class_rejected():
    x = np.ones((10, 8))
    with pytest.raises(TrainingError):
        train((x, np.zeros(10)))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
@pytest.mark.parametrize("lr", [1e8, 1e15, 1e30])
def test_divergence_detected(lr):
    x, y = spiky_set(64, 8)
    with pytest.raises(TrainingError):
        train((x, y), TrainConfig(learning_rate=lr, epochs=5))


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=-1)
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)
    with pytest.raises(ValueError):
        TrainConfig(momentum=1.0)


def test_detect_cnn_threshold_one_never_fires():
    s = generate_base("seasonal", 200, 1, window=16)
    cfg = SrConfig(window=16, score_window=8)
    out = detect_cnn(s, CnnModel.init(16, seed=0), cfg, decision_threshold=1.0)
    assert len(out) == 200
    assert not any(r.is_anomaly for r in out)
    assert out == detect_cnn(s, CnnModel.init(16, seed=0), cfg, decision_threshold=1.0)


def test_trained_model_calm_on_constant_series():
    x, y = spiky_set(300, 16, seed=2)
    model = train((x, y), TrainConfig(epochs=20, batch_size=16, seed=0))
    cfg = SrConfig(window=16, score_window=8)
    out = detect_cnn(TimeSeries.from_arrays(np.full(80, 5.0)), model, cfg)
    assert max(r.score for r in out) <= 0.9


def test_detect_cnn_window_mismatch():
    with pytest.raises(ValueError):
        detect_cnn(generate_base("stable", 200, 1, window=16), CnnModel.init(8), SrConfig(window=16, score_window=8))


def test_save_load_bit_exact(tmp_path):
    m = CnnModel.init(12, seed=5)
    save_model(m, tmp_path / "m.bin")
    back = load_model(tmp_path / "m.bin")
    assert back.window == 12 and back.version == FORMAT_VERSION
    for name in PARAM_NAMES:
        assert getattr(back, name).tobytes() == getattr(m, name).tobytes()


def test_truncated_model_rejected(tmp_path):
    save_model(CnnModel.init(6), tmp_path / "m.bin")
    raw = (tmp_path / "m.bin").read_bytes()
    for cut in (3, len(raw) // 2, len(raw) - 1):
        (tmp_path / "t.bin").write_bytes(raw[:cut])
        with pytest.raises(ModelFormatError):
            load_model(tmp_path / "t.bin")


def test_corrupt_and_foreign_files(tmp_path):
    save_model(CnnModel.init(6), tmp_path / "m.bin")
    raw = bytearray((tmp_path / "m.bin").read_bytes())
    raw[40] ^= 0xFF
    (tmp_path / "c.bin").write_bytes(bytes(raw))
    with pytest.raises(ModelFormatError):
        load_model(tmp_path / "c.bin")
    (tmp_path / "f.bin").write_bytes(b"PK\x03\x04" + bytes(100))
    with pytest.raises(ModelFormatError):
        load_model(tmp_path / "f.bin")


def test_wrong_version_rejected(tmp_path):
    save_model(CnnModel.init(6), tmp_path / "m.bin")
    raw = bytearray((tmp_path / "m.bin").read_bytes())
    raw[6:8] = (FORMAT_VERSION + 1).to_bytes(2, "little")
    (tmp_path / "v.bin").write_bytes(bytes(raw))
    with pytest.raises(ModelVersionError):
        load_model(tmp_path / "v.bin")
