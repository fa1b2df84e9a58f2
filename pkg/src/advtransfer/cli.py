"""Command-line driver: prepare, train, attack, transfer, defend, report.

Exit codes: 0 success, 2 configuration or input error, 3 numeric or runtime error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional

from .attacks import AttackConfig, AttackKind, archive_from_outcome, run_attack_batch, save_archive
from .config import load_config
from .data import SyntheticSpec, generate_synthetic, ingest_domain_strings, ingest_tabular_csv, load_dataset, save_dataset
from .errors import (
    AttackError,
    CheckpointError,
    ConfigError,
    IngestError,
    ScenarioError,
    ShapeError,
    TrainingError,
    UpdateError,
)
from .harness import CraftCache, ModelRef, load_reports, matrix_rows, render_csv, render_markdown, run_suite, select_samples, write_matrix
from .models import Model, TrainConfig, build, load_checkpoint, train

EXIT_OK, EXIT_INPUT, EXIT_RUNTIME = 0, 2, 3
THREADS_ENV = "TRANSFER_BENCH_THREADS"

logger = logging.getLogger("advtransfer")


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def resolve_threads(flag: Optional[int], config_value: Optional[int] = None) -> int:
    """``--threads`` wins, then the config file, then the environment, then 1."""
    if flag is not None:
        value = flag
    elif config_value is not None:
        value = config_value
    else:
        raw = os.environ.get(THREADS_ENV)
        try:
            value = int(raw) if raw else 1
        except ValueError:
            raise CliError(f"{THREADS_ENV} must be an integer, got {raw!r}", EXIT_INPUT) from None
    if value < 1:
        raise CliError(f"thread count must be >= 1, got {value}", EXIT_INPUT)
    return value


def print_effective(command: str, values: dict) -> None:
    print(f"# effective config ({command})")
    print(json.dumps(values, indent=2, sort_keys=True, default=str))


def _load_model(path) -> Model:
    try:
        return load_checkpoint(path)
    except FileNotFoundError:
        raise CliError(f"checkpoint {path} not found", EXIT_INPUT) from None


def _load_data(path):
    try:
        return load_dataset(path)
    except FileNotFoundError:
        raise CliError(f"dataset cache {path} not found", EXIT_INPUT) from None


# ------------------------------------------------------------------ commands


def cmd_prepare(args) -> int:
    eff = {"format": args.format, "input": args.input, "out": args.out, "seed": args.seed}
    if args.format == "synthetic":
        spec = SyntheticSpec(args.n, args.separation, args.sigma, seed=args.seed)
        eff.update(spec.to_dict())
        print_effective("prepare", eff)
        ds = generate_synthetic(spec)
    elif args.format == "tabular":
        if not args.input or len(args.input) != 1:
            raise CliError("tabular format needs exactly one --input CSV", EXIT_INPUT)
        eff.update(label_column=args.label_column, normalization="minmax")
        print_effective("prepare", eff)
        ds = ingest_tabular_csv(args.input[0], args.label_column, seed=args.seed)
    else:
        if not args.input or len(args.input) != 2:
            raise CliError("domains format needs --input BENIGN MALICIOUS", EXIT_INPUT)
        print_effective("prepare", eff)
        ds = ingest_domain_strings(args.input[0], args.input[1], seed=args.seed)
    save_dataset(args.out, ds)
    for line in ds.diagnostics:
        print(f"warning: {line}", file=sys.stderr)
    sizes = {s: len(ds.split_indices(s)) for s in ("train", "val", "test")}
    print(f"samples {len(ds)} splits {sizes}")
    print(f"fingerprint {ds.fingerprint}")
    return EXIT_OK


def cmd_train(args) -> int:
    ds = _load_data(args.data)
    kw = {"hidden_dim": args.hidden_dim} if args.arch == "lstm" else {"width": args.width}
    cfg = TrainConfig(epochs=args.epochs, learning_rate=args.lr, train_batch=args.batch, seed=args.seed)
    print_effective("train", {"arch": args.arch, **kw, "data": args.data, "out": args.out, **cfg.to_dict()})
    model = Model.init(build(args.arch, **kw), seed=args.seed)
    report = train(model, ds, cfg, checkpoint_path=args.out)
    for i, loss in enumerate(report.epoch_losses, 1):
        print(f"epoch {i} loss {loss:.4f} val_acc {report.val_accuracy[i - 1]:.4f}")
    print(f"test_accuracy {report.test_accuracy:.4f}")
    print(f"seconds {report.wall_clock_s:.1f}")
    print(f"checkpoint {args.out}")
    return EXIT_OK


def _attack_config(args) -> AttackConfig:
    kw = {"seed": args.seed}
    for name, attr in (("epsilon", "eps"), ("steps", "steps"), ("theta", "theta"), ("pgd_radius", "radius")):
        value = getattr(args, attr)
        if value is not None:
            kw[name] = value
    return AttackConfig(AttackKind(args.attack), **kw)


def cmd_attack(args) -> int:
    model = _load_model(args.model)
    ds = _load_data(args.data)
    cfg = _attack_config(args)
    threads = resolve_threads(args.threads)
    print_effective("attack", {"model": args.model, "data": args.data, "n": args.n, "threads": threads, "out": args.out, "attack": cfg.resolved().to_dict()})
    indices = select_samples(model, ds, args.n, args.seed)
    if len(indices) == 0:
        raise CliError("the model classifies no test sample correctly", EXIT_RUNTIME)
    x, y = ds.patches[indices], ds.labels[indices]
    ids = [ds.source_ids[i] for i in indices]
    outcome = run_attack_batch(model, (x, y, ids), cfg, threads=threads)
    out = Path(args.out)
    save_archive(out, archive_from_outcome(outcome, ids, y))
    summary = outcome.summary.to_dict()
    summary["failures"] = [{"index": i, "source_id": sid, "message": msg} for i, sid, msg in outcome.failures]
    summary_path = out.with_suffix(".summary.json")
    summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    s = outcome.summary
    psnr = "undefined" if s.mean_psnr_db is None else f"{s.mean_psnr_db:.2f}"
    asr = "undefined" if s.asr is None else f"{s.asr:.4f}"
    print(f"samples {s.n_samples} eligible {s.n_eligible}")
    print(f"asr {asr} psnr_db {psnr} l1 {s.mean_l1:.6f} linf {s.mean_linf:.6f}")
    print(f"seconds {s.total_wall_clock_s:.2f}")
    print(f"archive {out}")
    if outcome.failures:
        for i, sid, msg in outcome.failures:
            print(f"error: sample {i} ({sid}): {msg}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def _config_run(args):
    cfg = load_config(args.config)
    if args.out:
        cfg = cfg.model_copy(update={"output_dir": args.out})
    threads = resolve_threads(args.threads, cfg.threads)
    return cfg, threads


def _run_suite(cfg, registry, threads, cache):
    report_dir = Path(cfg.output_dir) / "reports"
    result = run_suite(cfg.cases(), registry, report_dir, threads=threads, workers=cfg.scenarios.workers, cache=cache)
    for fp, msg in result.failures:
        print(f"warning: case {fp[:12]} failed: {msg}", file=sys.stderr)
    return result, report_dir


def cmd_transfer(args) -> int:
    from .workspace import materialize

    cfg, threads = _config_run(args)
    print_effective("transfer", {**cfg.effective(), "threads": threads})
    registry = materialize(cfg)
    result, report_dir = _run_suite(cfg, registry, threads, CraftCache(Path(cfg.output_dir) / "reports" / "archives"))
    write_matrix(report_dir, result.rows)
    print(f"cases {len(result.rows)} failed {len(result.failures)}")
    print(render_markdown(result.rows), end="")
    print(f"matrix {report_dir / 'matrix.csv'}")
    return EXIT_OK


def cmd_defend(args) -> int:
    from .defenses import DefenseKind, arch_mismatch_eval, mpa_finetune, transferable_attacks, write_defense_report
    from .models import save_checkpoint
    from .workspace import materialize

    cfg, threads = _config_run(args)
    print_effective("defend", {**cfg.effective(), "threads": threads})
    registry = materialize(cfg)
    cache = CraftCache()
    out_dir = Path(cfg.output_dir) / "defenses"
    needs_suite = any(d.mpa_attacks == "transferable" for d in cfg.defenses)
    flagged = {}
    if needs_suite:
        result, _ = _run_suite(cfg, registry, threads, cache)
        for d in cfg.defenses:
            tn = str(ModelRef.parse(d.tn))
            flagged[tn] = transferable_attacks(result.reports, tn=tn)
    configs = cfg.defense_configs(flagged if needs_suite else None)
    for entry, dcfg in zip(cfg.defenses, configs):
        sn, tn = ModelRef.parse(entry.sn), ModelRef.parse(entry.tn)
        if dcfg is None:
            print(f"warning: no transferable attack for {tn}; skipping {entry.kind}", file=sys.stderr)
            continue
        if dcfg.kind is DefenseKind.MPA_FINETUNE:
            defended, report = mpa_finetune(
                registry.model(tn), registry.model(sn), registry.dataset(sn.dataset), dcfg,
                tn_dataset=registry.dataset(tn.dataset), cache=cache, threads=threads,
            )
            save_checkpoint(out_dir / f"{tn}-defended.sptz", defended)
        else:
            cnn = registry.model(ModelRef.parse(entry.cnn_tn)) if entry.cnn_tn else None
            report = arch_mismatch_eval(
                registry.model(sn), registry.dataset(sn.dataset), dcfg.mpa_attacks[0], registry.get(tn), cnn,
                sample_count=dcfg.eval_count, seed=cfg.seed, cache=cache, threads=threads,
            )
        path = write_defense_report(out_dir, report)
        print(
            f"{dcfg.kind.value} {sn} -> {tn}: pre_asr_tn {report.pre_asr_tn} post_asr_tn {report.post_asr_tn} "
            f"accuracy {report.tn_accuracy_before:.4f} -> {report.tn_accuracy_after:.4f} ({path.name})"
        )
    return EXIT_OK


def cmd_report(args) -> int:
    reports = load_reports(args.input)
    rows = matrix_rows(reports)
    text = render_csv(rows) if args.format == "csv" else render_markdown(rows)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"wrote {len(rows)} rows to {args.out}")
    else:
        print(text, end="")
    return EXIT_OK


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="advtransfer", description="Adversarial transferability benchmark for patch classifiers.")
    p.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("prepare", help="build a dataset cache")
    s.add_argument("--format", choices=["tabular", "domains", "synthetic"], required=True)
    s.add_argument("--input", nargs="+", help="CSV file, or benign and malicious domain lists")
    s.add_argument("--out", required=True)
    s.add_argument("--n", type=int, default=500, help="synthetic samples per class")
    s.add_argument("--separation", type=float, default=0.1)
    s.add_argument("--sigma", type=float, default=0.1)
    s.add_argument("--label-column", default="label")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_prepare)

    s = sub.add_parser("train", help="train a model and write a checkpoint")
    s.add_argument("--arch", choices=["spritz1", "spritz2", "lstm"], required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--epochs", type=int, default=20)
    s.add_argument("--lr", type=float, default=1e-4)
    s.add_argument("--batch", type=int, default=64)
    s.add_argument("--width", type=float, default=1.0)
    s.add_argument("--hidden-dim", type=int, default=128)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("attack", help="attack test samples of one model")
    s.add_argument("--model", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--attack", choices=[k.value for k in AttackKind], required=True)
    s.add_argument("--eps", type=float)
    s.add_argument("--steps", type=int)
    s.add_argument("--theta", type=float)
    s.add_argument("--radius", type=float)
    s.add_argument("--n", type=int, default=250)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.add_argument("--threads", type=int)
    s.set_defaults(func=cmd_attack)

    for name, func, text in (("transfer", cmd_transfer, "run a transferability suite"), ("defend", cmd_defend, "run defenses")):
        s = sub.add_parser(name, help=text)
        s.add_argument("--config", required=True)
        s.add_argument("--out", help="override output_dir")
        s.add_argument("--threads", type=int)
        s.set_defaults(func=func)

    s = sub.add_parser("report", help="render the matrix from a report directory")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--format", choices=["csv", "md"], default="md")
    s.add_argument("--out")
    s.set_defaults(func=cmd_report)
    return p


INPUT_ERRORS = (ConfigError, IngestError, ScenarioError, CheckpointError, ShapeError, ValueError, OSError)
RUNTIME_ERRORS = (TrainingError, UpdateError, AttackError, FloatingPointError, ArithmeticError, RuntimeError)


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except IngestError as exc:
        print(f"error: {exc}", file=sys.stderr)
        for line in exc.diagnostics:
            print(f"  {line}", file=sys.stderr)
        return EXIT_INPUT
    except RUNTIME_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
