import hashlib
import json
import re

import pytest

from advtransfer.attacks import load_archive
from advtransfer.cli import EXIT_INPUT, EXIT_OK, EXIT_RUNTIME, THREADS_ENV, CliError, main, resolve_threads


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def _fingerprint(out):
    return re.search(r"^fingerprint ([0-9a-f]{64})$", out, re.M).group(1)


def _effective(out):
    body = out.split("\n", 1)[1]
    end = body.index("\n}") + 2
    return json.loads(body[:end])


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    return tmp_path_factory.mktemp("cli")


@pytest.fixture(scope="module")
def data_path(workdir):
    path = workdir / "a.spdz"
    assert main(["prepare", "--format", "synthetic", "--n", "30", "--separation", "0.4", "--sigma", "0.05", "--seed", "7", "--out", str(path)]) == 0
    return path


@pytest.fixture(scope="module")
def model_path(workdir, data_path):
    path = workdir / "m.sptz"
    argv = ["train", "--arch", "spritz1", "--width", "0.125", "--data", data_path, "--epochs", "3", "--lr", "1e-3", "--batch", "16", "--out", path]
    assert main([str(a) for a in argv]) == 0
    return path


def test_prepare_synthetic_repeatable(capsys, tmp_path):
    a = run(capsys, "prepare", "--format", "synthetic", "--n", "20", "--seed", "7", "--out", tmp_path / "x.spdz")
    b = run(capsys, "prepare", "--format", "synthetic", "--n", "20", "--seed", "7", "--out", tmp_path / "y.spdz")
    assert a[0] == b[0] == EXIT_OK
    assert _fingerprint(a[1]) == _fingerprint(b[1])
    assert (tmp_path / "x.spdz").read_bytes() == (tmp_path / "y.spdz").read_bytes()
    eff = _effective(a[1])
    assert eff["n_per_class"] == 20 and eff["seed"] == 7 and eff["noise_sigma"] == 0.1


def test_prepare_malformed_csv_exit_2_with_line(capsys, tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b,label\n1,2,0\n3,oops,1\n")
    code, _, err = run(capsys, "prepare", "--format", "tabular", "--input", path, "--out", tmp_path / "o.spdz")
    assert code == EXIT_INPUT and "line 3" in err and "'b'" in err


def test_prepare_domains(capsys, tmp_path):
    (tmp_path / "b.txt").write_text("".join(f"site{i}.com\n" for i in range(10)))
    (tmp_path / "m.txt").write_text("".join(f"qzx{i}kw.biz\n" for i in range(10)) + "site0.com\n")
    code, out, err = run(capsys, "prepare", "--format", "domains", "--input", tmp_path / "b.txt", tmp_path / "m.txt", "--out", tmp_path / "d.spdz")
    assert code == EXIT_OK and "samples 21" in out and "label conflict" in err


def test_prepare_missing_input_exit_2(capsys, tmp_path):
    assert run(capsys, "prepare", "--format", "tabular", "--out", tmp_path / "o")[0] == EXIT_INPUT
    assert run(capsys, "prepare", "--format", "tabular", "--input", tmp_path / "none.csv", "--out", tmp_path / "o")[0] == EXIT_INPUT
    assert run(capsys, "prepare", "--format", "bogus", "--out", tmp_path / "o")[0] == EXIT_INPUT


def test_train_zero_epochs(capsys, tmp_path, data_path):
    code, out, _ = run(capsys, "train", "--arch", "spritz1", "--width", "0.125", "--data", data_path, "--epochs", "0", "--out", tmp_path / "z.sptz")
    assert code == EXIT_OK and (tmp_path / "z.sptz").exists()
    acc = float(re.search(r"test_accuracy ([0-9.]+)", out).group(1))
    assert 0.2 <= acc <= 0.8


def test_train_same_seed_same_hash(capsys, tmp_path, data_path):
    digests = []
    for name in ("a", "b"):
        path = tmp_path / f"{name}.sptz"
        assert run(capsys, "train", "--arch", "lstm", "--hidden-dim", "8", "--data", data_path, "--epochs", "1", "--seed", "3", "--out", path)[0] == EXIT_OK
        digests.append(hashlib.sha256(path.read_bytes()).hexdigest())
    assert digests[0] == digests[1]


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_train_errors(capsys, tmp_path, data_path):
    assert run(capsys, "train", "--arch", "spritz1", "--data", tmp_path / "missing.spdz", "--out", tmp_path / "x")[0] == EXIT_INPUT
    assert run(capsys, "train", "--arch", "vgg", "--data", data_path, "--out", tmp_path / "x")[0] == EXIT_INPUT
    code, _, err = run(capsys, "train", "--arch", "spritz1", "--width", "0.125", "--data", data_path, "--epochs", "1", "--batch", "8", "--lr", "1e38", "--out", tmp_path / "x")
    assert code == EXIT_RUNTIME and "non-finite" in err


def test_attack_single_row_and_roundtrip(capsys, tmp_path, data_path, model_path):
    out_path = tmp_path / "one.spad"
    code, out, _ = run(capsys, "attack", "--model", model_path, "--data", data_path, "--attack", "ifgsm", "--eps", "0.1", "--n", "1", "--out", out_path)
    assert code == EXIT_OK
    arch = load_archive(out_path)
    assert len(arch.source_ids) == 1 and arch.adversarials.shape == (1, 1, 64, 64)
    summary = json.loads(out_path.with_suffix(".summary.json").read_text())
    assert summary["n_samples"] == 1
    assert re.search(r"^asr [0-9.]+ psnr_db [0-9.]+ l1 ", out, re.M)
    assert _effective(out)["attack"]["steps"] == 10


def test_attack_small_eps_psnr_report(capsys, tmp_path, data_path, model_path):
    code, out, _ = run(capsys, "attack", "--model", model_path, "--data", data_path, "--attack", "ifgsm", "--eps", "0.001", "--n", "5", "--out", tmp_path / "s.spad")
    assert code == EXIT_OK
    assert float(re.search(r"psnr_db ([0-9.]+)", out).group(1)) >= 40.0


def test_attack_rerun_byte_identical(capsys, tmp_path, data_path, model_path):
    for name in ("a", "b"):
        run(capsys, "attack", "--model", model_path, "--data", data_path, "--attack", "deepfool", "--n", "4", "--out", tmp_path / f"{name}.spad")
    assert (tmp_path / "a.spad").read_bytes() == (tmp_path / "b.spad").read_bytes()


def test_attack_missing_model(capsys, tmp_path, data_path):
    assert run(capsys, "attack", "--model", tmp_path / "nope.sptz", "--data", data_path, "--attack", "pgd", "--out", tmp_path / "o.spad")[0] == EXIT_INPUT


def test_threads_resolution(monkeypatch):
    monkeypatch.delenv(THREADS_ENV, raising=False)
    assert resolve_threads(None) == 1
    monkeypatch.setenv(THREADS_ENV, "3")
    assert resolve_threads(None) == 3
    assert resolve_threads(None, 2) == 2
    assert resolve_threads(4, 2) == 4
    monkeypatch.setenv(THREADS_ENV, "many")
    with pytest.raises(CliError):
        resolve_threads(None)
    with pytest.raises(CliError):
        resolve_threads(0)


SUITE = """
seed: 0
output_dir: {out}
datasets:
  A: {{format: synthetic, n_per_class: 20, class_separation: 0.4, noise_sigma: 0.05, seed: 1}}
  B: {{format: synthetic, n_per_class: 20, class_separation: 0.4, noise_sigma: 0.05, seed: 2}}
models:
  spritz1@A: {{epochs: 2, width: 0.125, learning_rate: 0.001, train_batch: 16}}
  spritz1@B: {{epochs: 2, width: 0.125, learning_rate: 0.001, train_batch: 16}}
  spritz2@A: {{epochs: 2, width: 0.125, learning_rate: 0.001, train_batch: 16}}
  lstm@A: {{epochs: 1, hidden_dim: 8}}
attacks:
  ifgsm: {{epsilon: [0.1, 0.01]}}
  deepfool: {{}}
scenarios:
  sample_count: 4
  cases:
{cases}
defenses:
  - {{kind: mpa_finetune, sn: spritz1@A, tn: spritz2@A, mpa_attacks: [{{kind: ifgsm, epsilon: 0.1}}], finetune_epochs: 1, finetune_adv_count: 8, eval_count: 4}}
  - {{kind: arch_mismatch, sn: spritz1@A, tn: lstm@A, cnn_tn: spritz2@A, mpa_attacks: [{{kind: ifgsm, epsilon: 0.1}}], eval_count: 4}}
"""

CASES = "    - {sn: spritz1@A, tn: spritz1@B}\n    - {sn: spritz1@A, tn: spritz2@A}"


def _suite(tmp_path, cases=CASES):
    path = tmp_path / "suite.yaml"
    path.write_text(SUITE.format(out=tmp_path / "run", cases=cases))
    return path


def test_transfer_report_and_defend(capsys, tmp_path):
    cfg = _suite(tmp_path)
    code, out, _ = run(capsys, "transfer", "--config", cfg)
    assert code == EXIT_OK and "cases 6 failed 0" in out
    reports = tmp_path / "run" / "reports"
    csv_rows = (reports / "matrix.csv").read_text().strip().splitlines()
    assert len(csv_rows) == 1 + 6
    assert "undefined" not in "".join(csv_rows[1:])
    md = (reports / "matrix.md").read_text().splitlines()[2:]
    flags = [row.split(",")[10] for row in csv_rows[1:]]
    assert [line.startswith("| **") for line in md] == [f == "yes" for f in flags]

    code, out, _ = run(capsys, "report", "--in", reports, "--format", "csv")
    assert code == EXIT_OK and out.strip().splitlines() == csv_rows
    code, out, _ = run(capsys, "report", "--in", reports, "--format", "md", "--out", tmp_path / "m.md")
    assert code == EXIT_OK and "wrote 6 rows" in out

    code, out, _ = run(capsys, "defend", "--config", cfg)
    assert code == EXIT_OK
    assert "mpa_finetune spritz1@A -> spritz2@A" in out and "arch_mismatch spritz1@A -> lstm@A" in out
    assert len(list((tmp_path / "run" / "defenses").glob("defense-*.json"))) == 2


def test_transfer_empty_suite(capsys, tmp_path):
    code, out, _ = run(capsys, "transfer", "--config", _empty_suite(tmp_path))
    assert code == EXIT_OK and "cases 0 failed 0" in out
    assert (tmp_path / "run" / "reports" / "matrix.csv").read_text().count("\n") == 1


def _empty_suite(tmp_path):
    path = tmp_path / "empty.yaml"
    path.write_text(f"output_dir: {tmp_path / 'run'}\ndatasets: {{}}\nmodels: {{}}\nscenarios: {{cases: []}}\n")
    return path


def test_transfer_invalid_config_exit_2(capsys, tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("datasets: {}\nmodels: {}\nsurprise: 1\n")
    code, _, err = run(capsys, "transfer", "--config", bad)
    assert code == EXIT_INPUT and "surprise" in err
    bad.write_text("datasets: {}\nmodels: {}\nscenarios: {cases: [{sn: spritz1@A, tn: spritz2@A}]}\n")
    code, _, err = run(capsys, "transfer", "--config", bad)
    assert code == EXIT_INPUT
    assert run(capsys, "transfer", "--config", tmp_path / "absent.yaml")[0] == EXIT_INPUT


def test_help_exit_zero(capsys):
    assert run(capsys, "--help")[0] == EXIT_OK
    assert run(capsys)[0] == EXIT_INPUT
