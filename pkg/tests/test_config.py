import json

import pytest

from advtransfer.attacks import AttackKind
from advtransfer.config import load_config, parse_config
from advtransfer.errors import ConfigError
from advtransfer.harness import Scenario

BASE = {
    "datasets": {"A": {"format": "synthetic", "seed": 1}, "B": {"format": "synthetic", "seed": 2}},
    "models": {"spritz1@A": {}, "spritz1@B": {}, "spritz2@A": {"width": 0.5}},
    "scenarios": {"cases": [{"sn": "spritz1@A", "tn": "spritz1@B"}, {"sn": "spritz1@A", "tn": "spritz2@A"}]},
}


def test_default_grid_is_reference_grid():
    cfg = parse_config(BASE)
    grid = cfg.attack_grid()
    eps = sorted(a.epsilon for a in grid if a.kind is AttackKind.IFGSM)
    thetas = sorted(a.theta for a in grid if a.kind is AttackKind.JSMA)
    assert eps == [0.001, 0.01, 0.1] and thetas == [0.01, 0.1]
    assert len(cfg.cases()) == 2 * len(grid)
    assert {c.scenario for c in cfg.cases()} == {Scenario.CROSS_TRAINING, Scenario.CROSS_MODEL}


def test_grid_expansion_and_seed_propagation():
    cfg = parse_config({**BASE, "seed": 9, "attacks": {"ifgsm": {"epsilon": [0.1, 0.2], "steps": [5, 10]}, "pgd": {}}})
    grid = cfg.attack_grid()
    assert len(grid) == 5 and all(a.seed == 9 for a in grid)


@pytest.mark.parametrize(
    "patch,needle",
    [
        ({"unexpected": 1}, "unexpected"),
        ({"models": {"spritz1@C": {}}}, "'C'"),
        ({"models": {"resnet@A": {}}}, "resnet"),
        ({"attacks": {"cw": {}}}, "cw"),
        ({"attacks": {"ifgsm": {"bogus": 1}}}, "bogus"),
        ({"scenarios": {"cases": [{"sn": "spritz1@A", "tn": "spritz1@A", "scenario": "CrossTraining"}]}}, "tn.dataset"),
        ({"scenarios": {"cases": [{"sn": "spritz1@A", "tn": "lstm@A"}]}}, "lstm@A"),
        ({"defenses": [{"kind": "mpa_finetune", "sn": "spritz1@A", "tn": "spritz2@A", "adversarial_mix_ratio": 0}]}, "adversarial_mix_ratio"),
        ({"defenses": [{"kind": "mpa_finetune", "sn": "spritz1@A", "tn": "spritz2@A", "mpa_attacks": []}]}, "at least one"),
        ({"datasets": {"A": {"format": "synthetic", "sigma": 1}}}, "sigma"),
    ],
)
def test_invalid_configs_rejected_before_work(patch, needle):
    with pytest.raises(ConfigError, match=needle):
        parse_config({**BASE, **patch})


def test_effective_block_reproduces_config():
    cfg = parse_config({**BASE, "attacks": {"deepfool": {}}})
    eff = cfg.effective()
    assert eff["models"]["spritz1@A"]["epochs"] == 20 and eff["scenarios"]["sample_count"] == 100
    again = parse_config({k: v for k, v in eff.items() if k != "attack_grid"})
    assert again.effective() == eff


def test_load_yaml_and_json(tmp_path):
    (tmp_path / "c.json").write_text(json.dumps(BASE))
    (tmp_path / "c.yaml").write_text("datasets:\n  A: {format: synthetic}\nmodels:\n  lstm@A: {hidden_dim: 4}\n")
    assert load_config(tmp_path / "c.json").effective() == parse_config(BASE).effective()
    assert load_config(tmp_path / "c.yaml").models["lstm@A"].hidden_dim == 4
    (tmp_path / "bad.yaml").write_text("a: [1,\n")
    with pytest.raises(ConfigError, match="cannot parse"):
        load_config(tmp_path / "bad.yaml")
    with pytest.raises(ConfigError, match="mapping"):
        parse_config([1, 2])
