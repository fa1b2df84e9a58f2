import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from advtransfer.errors import ShapeError
from advtransfer.metrics import (
    ScenarioMetrics,
    asr,
    asr_from_predictions,
    decide_transferable,
    l1_distortion,
    l1_sum,
    max_abs_distortion,
    mean_psnr,
    psnr,
)

from advtransfer.models import Model, build_lstm


def test_psnr_closed_forms():
    x = np.full((1, 64, 64), 0.5)
    assert psnr(x, x) == math.inf
    # 10*log10(1/0.01**2) evaluated independently of the implementation
    assert psnr(x, x + 0.01) == pytest.approx(40.0, abs=1e-9)
    assert psnr(x, x - 1 / 255) == pytest.approx(48.13080360867909, abs=1e-9)
    assert psnr(x, x + 0.1, peak=2.0) == pytest.approx(20 * math.log10(2 / 0.1), abs=1e-9)


def test_distortion_examples():
    x = np.zeros((1, 64, 64))
    assert l1_distortion(x, x) == 0 and max_abs_distortion(x, x) == 0
    y = x.copy()
    y[0, 5, 7] = 0.5
    assert l1_distortion(x, y) == 0.5 / 4096
    assert l1_sum(x, y) == 0.5
    assert max_abs_distortion(x, y) == 0.5
    for fn in (psnr, l1_distortion, max_abs_distortion):
        with pytest.raises(ShapeError):
            fn(x, np.zeros((1, 64, 63)))


finite = st.floats(0, 1, allow_nan=False, width=32)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float32, (16,), elements=finite), arrays(np.float32, (16,), elements=finite))
def test_psnr_symmetric_and_pure(x, y):
    assert psnr(x, y) == psnr(y, x) == psnr(x.copy(), y.copy())


@settings(max_examples=60, deadline=None)
@given(st.floats(1e-4, 0.5), st.floats(1.01, 3.0))
def test_psnr_strictly_decreasing_in_mse(d, scale):
    x = np.zeros(32)
    assert psnr(x, x + d * scale) < psnr(x, x + d)


def test_asr_examples_and_undefined():
    labels = np.array([0, 1, 0, 1])
    assert asr_from_predictions([0, 1, 0, 1], [1, 0, 1, 0], labels) == 1.0
    assert asr_from_predictions([0, 1, 0, 1], [0, 1, 0, 1], labels) == 0.0
    # the initially wrong sample does not count either way
    assert asr_from_predictions([0, 1, 1, 1], [1, 1, 0, 1], labels) == pytest.approx(1 / 3)
    assert asr_from_predictions([1, 0, 1, 0], [1, 0, 1, 0], labels) is None
    with pytest.raises(ShapeError):
        asr_from_predictions([0], [0, 1], [0])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 1), st.integers(0, 1), st.integers(0, 1)), min_size=1, max_size=30), st.randoms())
def test_asr_permutation_invariant(rows, rnd):
    shuffled = list(rows)
    rnd.shuffle(shuffled)
    a = asr_from_predictions(*map(np.array, zip(*rows)))
    b = asr_from_predictions(*map(np.array, zip(*shuffled)))
    assert a == b or (a is not None and b is not None and abs(a - b) < 1e-12)


def test_asr_on_model_identity_and_self_control():
    model = Model.init(build_lstm(hidden_dim=4), seed=0)
    x = np.random.default_rng(1).uniform(size=(10, 1, 64, 64)).astype(np.float32)
    pred = model.logits(x).argmax(1)
    assert asr(model, x, x, pred) == 0.0
    assert asr(model, x, x, 1 - pred) is None
    assert asr(model, x[:0], x[:0], pred[:0]) is None


def test_decide_transferable_strict():
    assert decide_transferable(0.63) is True
    assert decide_transferable(0.5) is False
    assert decide_transferable(0.5000001) is True
    assert decide_transferable(0.0) is False
    assert decide_transferable(None) is None
    assert decide_transferable(float("nan")) is None


def test_mean_psnr_and_metrics_roundtrip():
    assert mean_psnr([math.inf, math.inf]) == math.inf
    assert mean_psnr([40.0, math.inf, 50.0]) == 45.0
    m = ScenarioMetrics(0.9, 0.63, 41.0, 0.01, 0.05, 90, 80, 40.0)
    d = m.to_dict()
    assert d["transferable"] is True
    assert ScenarioMetrics.from_dict(d) == m
