"""Report files, the append-only index and the transferability matrix."""

from __future__ import annotations

import csv
import fcntl
import io
import json
import math
import os
import threading
from pathlib import Path
from typing import Iterable, List, Sequence

from ..errors import ConfigError
from .runner import ScenarioReport

INDEX_NAME = "index.jsonl"
MATRIX_COLUMNS = ("scenario", "sn", "tn", "attack", "params", "asr_sn", "asr_tn", "psnr", "l1", "linf", "transferable", "seconds")

_index_lock = threading.Lock()


def report_path(directory, report: ScenarioReport) -> Path:
    return Path(directory) / f"{report.fingerprint}.json"


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def write_report(directory, report: ScenarioReport, extra: dict = None) -> Path:
    """Write ``<fingerprint>.json`` and append one line to the index.

    Args:
        directory: output directory, created if missing.
        report: the case report.
        extra: additional top-level sections (for example a defense block).

    Returns:
        Path of the report file.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    body = report.to_dict()
    if extra:
        body.update(extra)
    path = report_path(directory, report)
    _atomic_write(path, json.dumps(body, indent=2, sort_keys=True) + "\n")
    entry = {
        "fingerprint": report.fingerprint,
        "file": path.name,
        "scenario": report.case.scenario.value,
        "sn": str(report.case.sn),
        "tn": str(report.case.tn),
        "attack": report.case.attack.kind.value,
        "params": report.case.attack.params_label(),
        "created_at": report.created_at,
    }
    append_index(directory, entry)
    return path


def append_index(directory, entry: dict) -> None:
    line = json.dumps(entry, sort_keys=True) + "\n"
    with _index_lock:
        with open(Path(directory) / INDEX_NAME, "a", encoding="utf-8") as fh:
            fcntl.flock(fh, fcntl.LOCK_EX)
            try:
                fh.write(line)
                fh.flush()
            finally:
                fcntl.flock(fh, fcntl.LOCK_UN)


def read_report(path) -> ScenarioReport:
    try:
        return ScenarioReport.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"{path}: not a scenario report ({exc})") from None


def load_reports(directory) -> List[ScenarioReport]:
    """All case reports in a directory, one per fingerprint, in index order when available."""
    directory = Path(directory)
    if not directory.is_dir():
        raise ConfigError(f"report directory {directory} does not exist")
    names: List[str] = []
    index = directory / INDEX_NAME
    if index.exists():
        for line in index.read_text(encoding="utf-8").splitlines():
            if line.strip():
                name = json.loads(line)["file"]
                if name not in names and (directory / name).exists():
                    names.append(name)
    for path in sorted(directory.glob("*.json")):
        if path.name not in names:
            names.append(path.name)
    reports = []
    for name in names:
        body = json.loads((directory / name).read_text(encoding="utf-8"))
        if "case" in body and "metrics" in body:
            reports.append(ScenarioReport.from_dict(body))
    return reports


def _fmt(v) -> str:
    if v is None:
        return "undefined"
    if isinstance(v, bool):
        return "yes" if v else "no"
    if isinstance(v, float):
        if math.isinf(v):
            return "inf"
        if math.isnan(v):
            return "nan"
        return f"{v:.4f}"
    return str(v)


def matrix_rows(reports: Iterable[ScenarioReport]) -> List[dict]:
    """One row per distinct case fingerprint, in first-seen order."""
    rows, seen = [], set()
    for r in reports:
        if r.fingerprint in seen:
            continue
        seen.add(r.fingerprint)
        m = r.metrics
        rows.append(
            {
                "scenario": r.case.scenario.value,
                "sn": str(r.case.sn),
                "tn": str(r.case.tn),
                "attack": r.case.attack.kind.value,
                "params": r.case.attack.params_label(),
                "asr_sn": m.asr_sn,
                "asr_tn": m.asr_tn,
                "psnr": m.mean_psnr_db,
                "l1": m.mean_l1,
                "linf": m.mean_linf,
                "transferable": m.transferable,
                "seconds": r.attack_wall_clock_s,
            }
        )
    return rows


def render_csv(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(MATRIX_COLUMNS)
    for row in rows:
        writer.writerow([_fmt(row[c]) for c in MATRIX_COLUMNS])
    return buf.getvalue()


def render_markdown(rows: Sequence[dict]) -> str:
    """Markdown table; rows whose TN success rate exceeds the threshold are bold."""
    lines = ["| " + " | ".join(MATRIX_COLUMNS) + " |", "|" + "---|" * len(MATRIX_COLUMNS)]
    for row in rows:
        cells = [_fmt(row[c]) for c in MATRIX_COLUMNS]
        if row["transferable"]:
            cells = [f"**{c}**" for c in cells]
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def write_matrix(directory, rows: Sequence[dict]) -> tuple:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    csv_path, md_path = directory / "matrix.csv", directory / "matrix.md"
    _atomic_write(csv_path, render_csv(rows))
    _atomic_write(md_path, render_markdown(rows))
    return csv_path, md_path
