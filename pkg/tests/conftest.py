import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from advtransfer.data import SyntheticSpec, generate_synthetic  # noqa: E402
from advtransfer.harness import ModelRegistry  # noqa: E402
from advtransfer.models import Model, TrainConfig, build, train  # noqa: E402

TINY_TRAIN = TrainConfig(epochs=4, learning_rate=1e-3, train_batch=16)


def tiny_datasets():
    return {
        "A": generate_synthetic(SyntheticSpec(n_per_class=40, class_separation=0.4, noise_sigma=0.05, seed=1)),
        "B": generate_synthetic(SyntheticSpec(n_per_class=40, class_separation=0.4, noise_sigma=0.05, seed=2)),
    }


def tiny_model(arch, dataset, seed=0):
    kw = {"hidden_dim": 8} if arch == "lstm" else {"width": 0.125}
    model = Model.init(build(arch, **kw), seed=seed)
    train(model, dataset, TINY_TRAIN)
    return model


@pytest.fixture(scope="session")
def tiny_zoo():
    """Registry with spritz1/spritz2 on A and B plus an LSTM on A, all small and briefly trained."""
    reg = ModelRegistry()
    data = tiny_datasets()
    for name, ds in data.items():
        reg.add_dataset(name, ds)
    for ref in ("spritz1@A", "spritz1@B", "spritz2@A", "lstm@A"):
        arch, ds = ref.split("@")
        reg.add_model(ref, tiny_model(arch, data[ds]))
    return reg


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(LINES):
            terminalreporter.write_line(LINES[n])
