"""Command-line scenario runner.

Usage::

    scatterlab run scenarios.ini [--output-dir DIR] [--threads N] [--verbose]
    scatterlab list-fixtures
    scatterlab schema

A scenario file is INI text with one section per scenario named
``[scenario.<id>]``.  Each section sets ``kind`` (or a catalogue ``fixture``
that supplies it) and kind-specific parameters; see ``scatterlab schema``.
Each scenario writes ``report.json``, ``summary.txt`` and CSV tables into
``<output-dir>/<id>/``.  The exit status is 1 when a theorem-backed check
fails, 2 for configuration errors and 0 otherwise.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import logging
import math
import os
import re
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import scenarios

log = logging.getLogger("scatterlab")

SECTION_PREFIX = "scenario."
DEFAULT_OUTPUT = "scatterlab-output"


class ConfigError(ValueError):
    """Configuration problem, with a file/line location when one is known."""


# -- serialization --------------------------------------------------------------------

def to_jsonable(obj):
    """Convert numpy scalars/arrays and non-finite floats into JSON-safe values."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if obj is None or isinstance(obj, (int, str)):
        return obj
    return str(obj)


def atomic_write(path: Path, text: str) -> None:
    """Write ``text`` to ``path`` through a temporary file and a rename."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


# -- configuration -----------------------------------------------------------------------

def _line_of(text: str, section: str, key: str | None = None) -> int | None:
    lines = text.splitlines()
    header = re.compile(r"^\s*\[\s*" + re.escape(section) + r"\s*\]\s*$")
    start = next((i for i, ln in enumerate(lines) if header.match(ln)), None)
    if start is None or key is None:
        return None if start is None else start + 1
    pat = re.compile(r"^\s*" + re.escape(key) + r"\s*[=:]")
    for i in range(start + 1, len(lines)):
        if lines[i].lstrip().startswith("["):
            break
        if pat.match(lines[i]):
            return i + 1
    return start + 1


def load_config(path) -> list[tuple[str, dict]]:
    """Parse a scenario file into ``(id, resolved parameters)`` pairs.

    Raises:
        ConfigError: syntax errors (with line numbers), unknown sections,
            kinds, fixtures or parameters, and unparsable values.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read ({exc.strerror})") from exc
    parser = configparser.ConfigParser(interpolation=None, default_section="__defaults__")
    parser.optionxform = str
    try:
        parser.read_string(text, source=str(path))
    except configparser.ParsingError as exc:
        where = ", ".join(f"line {ln}" for ln, _ in exc.errors)
        raise ConfigError(f"{path}: parse error at {where}") from exc
    except (configparser.DuplicateSectionError, configparser.DuplicateOptionError) as exc:
        raise ConfigError(f"{path}:{exc.lineno}: {exc.message.splitlines()[0]}") from exc
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: key-value line before any [scenario.<id>] header") from exc
    out = []
    for section in parser.sections():
        if not section.startswith(SECTION_PREFIX) or len(section) == len(SECTION_PREFIX):
            raise ConfigError(f"{path}:{_line_of(text, section)}: section [{section}] must be named [scenario.<id>]")
        sid = section[len(SECTION_PREFIX):]
        raw = dict(parser.items(section))
        try:
            params = scenarios.resolve(raw)
        except scenarios.ScenarioError as exc:
            key = re.search(r"parameter(?:\(s\))? (?:for kind '[^']*': )?'?([A-Za-z_]+)", str(exc))
            line = _line_of(text, section, key.group(1) if key else None)
            raise ConfigError(f"{path}:{line}: [{section}] {exc}") from exc
        out.append((sid, params))
    return out


# -- running --------------------------------------------------------------------------------

def _summary(sid: str, params: dict, res: scenarios.ScenarioResult) -> str:
    lines = [f"scenario {sid} ({params['kind']})"]
    if params.get("fixture"):
        lines.append(f"fixture: {params['fixture']}")
    for c in res.checks:
        tag = "theorem" if c.theorem_backed else "info"
        lines.append(f"  [{'PASS' if c.passed else 'FAIL'}] {c.name} ({tag})")
    for key in sorted(res.results):
        val = res.results[key]
        if isinstance(val, (int, float, str, bool)) or val is None:
            lines.append(f"  {key}: {val}")
        elif isinstance(val, dict) and "verdict" in val:
            lines.append(f"  {key}: {val['verdict']} (value {val['value']})")
        elif isinstance(val, list) and val and isinstance(val[0], dict) and "verdict" in val[0]:
            # sweeps over s_values emit one record per (s, metric), s-major
            s_vals = params.get("s_values") or []
            per_s = len(val) // len(s_vals) if s_vals and len(val) % len(s_vals) == 0 else 0
            for i, rec in enumerate(val):
                at = f" at s={s_vals[i // per_s]:g}" if per_s else ""
                lines.append(f"  {rec['criterion_id']}{at}: {rec['verdict']} (value {rec['value']})")
    for note in res.notes:
        lines.append(f"  note: {note}")
    status = "FAILED" if res.failed_theorem_checks else "ok"
    lines.append(f"status: {status}")
    return "\n".join(lines) + "\n"


def run_one(sid: str, params: dict, out_root: Path, threads: int = 1) -> scenarios.ScenarioResult:
    """Run a resolved scenario and write its artifacts under ``out_root/sid``."""
    res = scenarios.run_scenario(params, threads=threads)
    record = {
        "scenario": sid,
        "kind": params["kind"],
        "parameters": params,
        "results": res.results,
        "checks": [{"name": c.name, "passed": c.passed, "theorem_backed": c.theorem_backed, "detail": c.detail}
                   for c in res.checks],
        "notes": res.notes,
        "status": "fail" if res.failed_theorem_checks else "pass",
    }
    folder = out_root / sid
    atomic_write(folder / "report.json", json.dumps(to_jsonable(record), sort_keys=True, indent=2) + "\n")
    atomic_write(folder / "summary.txt", _summary(sid, params, res))
    for name, (header, rows) in sorted(res.tables.items()):
        atomic_write(folder / f"{name}.csv", _csv_text(header, rows))
    return res


def cmd_run(args) -> int:
    try:
        items = load_config(args.file)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if not items:
        print("nothing to do")
        return 0
    failed = []
    for sid, params in items:
        root = Path(args.output_dir or params.get("output_dir") or DEFAULT_OUTPUT)
        log.info("running %s (%s)", sid, params["kind"])
        try:
            res = run_one(sid, params, root, threads=args.threads)
        except scenarios.ScenarioError as exc:
            print(f"error: [scenario.{sid}] {exc}", file=sys.stderr)
            return 2
        status = "FAIL" if res.failed_theorem_checks else "ok"
        print(f"{sid}: {status} ({len(res.checks)} checks) -> {root / sid}")
        if res.failed_theorem_checks:
            failed.append(sid)
            for name in res.failed_theorem_checks:
                print(f"  failed theorem-backed check: {name}", file=sys.stderr)
    return 1 if failed else 0


def cmd_list_fixtures(args) -> int:
    rows = [(fx.name, fx.category, fx.kind or "-", fx.oracle, fx.description) for fx in scenarios.FIXTURES.values()]
    widths = [max(len(r[k]) for r in rows + [("name", "category", "kind", "oracle", "description")]) for k in range(4)]
    head = ("name", "category", "kind", "oracle", "description")
    print("  ".join(h.ljust(w) for h, w in zip(head[:4], widths)) + "  " + head[4])
    for r in rows:
        print("  ".join(v.ljust(w) for v, w in zip(r[:4], widths)) + "  " + r[4])
    return 0


def cmd_schema(args) -> int:
    print(json.dumps(scenarios.schema_document(), sort_keys=True, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scatterlab", description="Run metric-perturbation scenarios.")
    parser.add_argument("--verbose", "-v", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run every scenario in a config file")
    run.add_argument("file", help="INI file with [scenario.<id>] sections")
    run.add_argument("--output-dir", default=None, help=f"artifact root (default: {DEFAULT_OUTPUT})")
    run.add_argument("--threads", type=int, default=1, help="worker threads for Monte Carlo chunks")
    run.add_argument("--verbose", "-v", action="store_true", default=argparse.SUPPRESS)
    run.set_defaults(func=cmd_run)
    lf = sub.add_parser("list-fixtures", help="print the fixture catalogue")
    lf.set_defaults(func=cmd_list_fixtures)
    sc = sub.add_parser("schema", help="print the scenario parameter schema as JSON")
    sc.set_defaults(func=cmd_schema)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(args, "threads", 1) < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return 2
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
