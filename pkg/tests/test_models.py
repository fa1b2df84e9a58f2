import numpy as np
import pytest

from advtransfer.data import SyntheticSpec, generate_synthetic
from advtransfer.engine import Tensor
from advtransfer.errors import MagicError, ShapeError, ShapeTableError, TrainingError, TruncatedError, VersionError
from advtransfer.models import (
    Model,
    ModelSpec,
    TrainConfig,
    TrainReport,
    accuracy,
    build,
    build_lstm,
    build_spritz1,
    build_spritz2,
    checkpoint_bytes,
    fit,
    load_checkpoint,
    model_fingerprint,
    parse_checkpoint,
    predict,
    save_checkpoint,
    train,
)

from gradcheck import model_gradient_check, smooth_coordinates


@pytest.fixture(scope="module")
def small_data():
    return generate_synthetic(SyntheticSpec(n_per_class=30, class_separation=0.4, noise_sigma=0.05, seed=3))


def test_spritz1_layer_counts_and_halving():
    spec = build_spritz1()
    assert (spec.count("conv"), spec.count("maxpool"), spec.count("dense"), spec.count("flatten")) == (9, 2, 1, 1)
    convs = [layer.out_channels for layer in spec.layers if layer.kind == "conv"]
    assert convs[-1] * 2 == convs[-2]
    assert spec.output_shape() == (2,)


def test_spritz2_layer_counts_and_size():
    s1, s2 = build_spritz1(), build_spritz2()
    assert (s2.count("conv"), s2.count("maxpool"), s2.count("dense")) == (15, 2, 1)
    assert s2.num_params() > s1.num_params()
    assert s2.input_shape == s1.input_shape and s2.output_shape() == s1.output_shape()


def test_lstm_spec():
    spec = build_lstm()
    assert spec.is_recurrent and spec.shapes()[0] == (128,)
    assert spec.output_shape() == (2,)


@pytest.mark.parametrize("arch", ["spritz1", "spritz2", "lstm"])
def test_forward_shape_and_param_count_independent_of_seed(arch):
    kw = {"hidden_dim": 16} if arch == "lstm" else {"width": 0.125}
    spec = build(arch, **kw)
    a, b = Model.init(spec, seed=1), Model.init(spec, seed=2)
    assert a.num_params() == b.num_params() == spec.num_params()
    x = np.random.default_rng(0).uniform(size=(1, 1, 64, 64)).astype(np.float32)
    assert a.forward(Tensor(x)).shape == (1, 2)


def test_spec_roundtrip_and_chain_validation():
    spec = build_spritz1(width=0.25)
    assert ModelSpec.from_dict(spec.to_dict()) == spec
    with pytest.raises(ShapeError):
        ModelSpec("bad", (build_spritz1().layers[0],))
    with pytest.raises(ValueError):
        build("resnet")


def test_wrong_input_shape_raises():
    m = Model.init(build_spritz1(width=0.125), seed=0)
    with pytest.raises(ShapeError):
        m.forward(Tensor(np.zeros((1, 1, 32, 32), np.float32)))


def test_predict_properties():
    m = Model.init(build_spritz1(width=0.125), seed=0)
    x = np.random.default_rng(2).uniform(size=(5, 1, 64, 64)).astype(np.float32)
    p1, p2 = predict(m, x), predict(m, x)
    np.testing.assert_allclose(p1.probabilities.sum(axis=1), 1, atol=1e-6)
    assert p1.logits.tobytes() == p2.logits.tobytes()
    np.testing.assert_array_equal(p1.labels, p1.logits.argmax(axis=1))
    for scale in (0.5, 3.0, 100.0):
        np.testing.assert_array_equal((p1.logits * scale).argmax(axis=1), p1.labels)


def test_checkpoint_roundtrip_bit_exact(tmp_path):
    m = Model.init(build_spritz1(width=0.125), seed=4)
    path = save_checkpoint(tmp_path / "m.sptz", m, TrainConfig(epochs=1), "abc", 0.5)
    loaded, info = load_checkpoint(path, with_info=True)
    x = np.random.default_rng(5).uniform(size=(4, 1, 64, 64)).astype(np.float32)
    assert loaded.logits(x).tobytes() == m.logits(x).tobytes()
    assert checkpoint_bytes(loaded, TrainConfig(epochs=1), "abc", 0.5) == path.read_bytes()
    assert info.dataset_fingerprint == "abc" and info.train_config == TrainConfig(epochs=1).to_dict()
    assert model_fingerprint(loaded) == model_fingerprint(m)


def test_checkpoint_load_errors_are_distinct():
    m = Model.init(build_lstm(hidden_dim=4), seed=0)
    data = bytearray(checkpoint_bytes(m))
    bad_magic = bytes(b"XXXX" + data[4:])
    with pytest.raises(MagicError):
        parse_checkpoint(bad_magic)
    bad_version = bytes(data[:4] + (99).to_bytes(2, "little") + data[6:])
    with pytest.raises(VersionError):
        parse_checkpoint(bad_version)
    with pytest.raises(TruncatedError):
        parse_checkpoint(bytes(data[:-3]))
    # swap the model for a differently sized one behind the same header
    other = checkpoint_bytes(Model.init(build_lstm(hidden_dim=5), seed=0))
    header_end = _header_end(bytes(data))
    with pytest.raises(ShapeTableError):
        parse_checkpoint(bytes(data[:header_end]) + other[_header_end(other):])


def _header_end(blob: bytes) -> int:
    n = int.from_bytes(blob[6:10], "little")
    return 10 + n


def test_training_is_deterministic(small_data, tmp_path):
    cfg = TrainConfig(epochs=1, seed=7)
    paths = []
    for name in ("a", "b"):
        m = Model.init(build_spritz1(width=0.125), seed=7)
        train(m, small_data, cfg, checkpoint_path=tmp_path / f"{name}.sptz")
        paths.append(tmp_path / f"{name}.sptz")
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_zero_epoch_training_matches_untrained_accuracy(small_data):
    m = Model.init(build_spritz1(width=0.125), seed=1)
    report = train(m, small_data, TrainConfig(epochs=0))
    assert report.test_accuracy == report.initial_test_accuracy
    assert report.epoch_losses == []
    assert 0.2 <= report.test_accuracy <= 0.8


def test_train_report_accuracy_reproducible(small_data):
    m = Model.init(build_spritz1(width=0.125), seed=2)
    report = train(m, small_data, TrainConfig(epochs=2, learning_rate=1e-3))
    x, y = small_data.arrays("test")
    assert accuracy(m, x, y) == report.test_accuracy
    assert len(report.val_accuracy) == 2 and report.wall_clock_s > 0


def test_first_epoch_loss_trend_is_downward():
    ds = generate_synthetic(SyntheticSpec(n_per_class=200, class_separation=0.4, noise_sigma=0.05, seed=5))
    m = Model.init(build_spritz1(width=0.125), seed=0)
    x, y = ds.arrays("train")
    report = fit(m, x, y, TrainConfig(epochs=1, train_batch=8, learning_rate=1e-3), TrainReport())
    losses = np.array(report.batch_losses)
    windows = [losses[i : i + 10].mean() for i in range(0, len(losses) - 9, 10)]
    assert windows[-1] < windows[0]


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_empty_split_and_divergence_errors(small_data):
    m = Model.init(build_spritz1(width=0.125), seed=0)
    with pytest.raises(ValueError, match="empty"):
        train(m, small_data.with_splits({"train": np.arange(len(small_data))}), TrainConfig(epochs=1))
    x, y = small_data.arrays("train")
    m.params["dense1.bias"].data[:] = np.inf
    with pytest.raises(TrainingError, match="non-finite loss"):
        fit(m, x, y, TrainConfig(epochs=1), TrainReport())


def test_copy_is_independent():
    m = Model.init(build_spritz1(width=0.125), seed=0)
    c = m.copy()
    c.params["dense1.bias"].data[:] = 5
    assert not m.params["dense1.bias"].data.any()


@pytest.mark.parametrize("arch,kw", [("spritz1", {"width": 0.25}), ("spritz2", {"width": 0.125}), ("lstm", {"hidden_dim": 16})])
def test_reduced_model_gradients(arch, kw):
    errs = model_gradient_check(arch, seed=11, **kw)
    assert errs["input64"] < 1e-5 and errs["param64"] < 1e-5
    assert errs["input32"] < 1e-2 and errs["param32"] < 1e-2


def test_trained_lstm_first_row_gradient_nonzero(small_data):
    m = Model.init(build_lstm(hidden_dim=16), seed=0)
    train(m, small_data, TrainConfig(epochs=2, learning_rate=1e-3))
    x = np.random.default_rng(6).uniform(size=(1, 1, 64, 64)).astype(np.float32)
    row = x[0, 0, 0].astype(np.float64)

    def margin(r):
        z = x.copy()
        z[0, 0, 0] = r
        out = m.logits(z)[0].astype(np.float64)
        return out[1] - out[0]

    # row 0 is read first; its influence has to survive 63 recurrent steps
    coords, numeric = smooth_coordinates(margin, row, np.random.default_rng(0), 8, 1e-2, 1.0)
    assert np.any(np.abs(numeric) > 1e-6)
