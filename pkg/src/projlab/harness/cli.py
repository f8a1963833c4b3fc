"""Command line entry point: ``projlab run | list-scenarios | describe | sweep``."""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import logging
import math
import os
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from .. import __version__
from ..classical import SamplingError
from ..meanforce import CoverageError, EmptyBinWarning, ResolutionError
from ..quantum import ConditioningError, EigenvalueFloorWarning
from ..tcl import GeneratorGapWarning
from . import scenarios
from .config import ConfigError, SCHEMAS, load, parameter_path, validate
from .pipelines import run_pipeline, table

OUTPUT_ENV = "PROJLAB_OUTPUT_ROOT"
EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 2, 3
FAILURE_MARKER = "FAILED"

WARNING_COUNTERS = {
    EigenvalueFloorWarning: "eigenvalue_floor",
    EmptyBinWarning: "empty_bins",
    GeneratorGapWarning: "singular_times",
}

log = logging.getLogger("projlab.harness")


def jsonable(obj):
    """Recursively convert numpy scalars/arrays; non-finite floats become ``None``."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    return obj


def dumps(obj) -> str:
    return json.dumps(jsonable(obj), sort_keys=True, indent=2, ensure_ascii=False,
                      allow_nan=False) + "\n"


def resolve_config(ref: str) -> dict:
    """A config file path, or the id of a built-in scenario."""
    path = Path(ref)
    if path.exists():
        return load(path)
    if ref in scenarios.BUILTIN:
        return scenarios.builtin(ref)
    raise ConfigError(f"no config file or built-in scenario named {ref!r}")


def execute(cfg: dict):
    """Run a validated config; returns ``(result, warning_counts, seconds)``."""
    counts = {name: 0 for name in WARNING_COUNTERS.values()}
    counts["other"] = 0
    start = time.perf_counter()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            result = run_pipeline(cfg)
        finally:
            for w in caught:
                counts[WARNING_COUNTERS.get(w.category, "other")] += 1
    return result, counts, time.perf_counter() - start


def _write(path: Path, text: str, written: dict) -> None:
    data = text.encode("utf-8")
    path.write_bytes(data)
    written[path.name] = hashlib.sha256(data).hexdigest()


def run_to_directory(cfg: dict, out: Path) -> int:
    """Execute and persist; returns the exit code."""
    out.mkdir(parents=True, exist_ok=True)
    marker = out / FAILURE_MARKER
    if marker.exists():
        marker.unlink()
    written: dict = {}
    report = {"artifact_version": __version__, "scenario": cfg}
    try:
        result, counts, seconds = execute(cfg)
    except (ConditioningError, ArithmeticError, CoverageError, ResolutionError, SamplingError) as exc:
        code, status = EXIT_NUMERICAL, "numerical_error"
        err = exc
    except ValueError as exc:
        code, status = EXIT_VALIDATION, "validation_error"
        err = exc
    else:
        report.update(status="ok", results=result.results, headline=result.headline,
                      warnings=counts, tables=sorted(result.tables))
        for name in sorted(result.tables):
            _write(out / name, result.tables[name], written)
        _write(out / "report.json", dumps(report), written)
        _write(out / "MANIFEST.json", dumps({"files": written}), {})
        (out / "timing.json").write_text(dumps({"wall_clock_seconds": seconds}), encoding="utf-8")
        log.info("wrote %s", out)
        return EXIT_OK
    report.update(status=status, error=f"{type(err).__name__}: {err}")
    _write(out / "report.json", dumps(report), written)
    _write(out / "MANIFEST.json", dumps({"files": written}), {})
    marker.write_text(f"{type(err).__name__}: {err}\n", encoding="utf-8")
    print(f"error: {err}", file=sys.stderr)
    return code


def default_out(cfg: dict) -> Path:
    return Path(os.environ.get(OUTPUT_ENV, "runs")) / f"{cfg['id']}-seed{cfg['seed']}"


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_run(args) -> int:
    cfg = resolve_config(args.config)
    if args.seed is not None:
        cfg = validate({**cfg, "seed": args.seed})
    out = Path(args.out) if args.out else default_out(cfg)
    return run_to_directory(cfg, out)


def cmd_list(args) -> int:
    for sid in scenarios.list_ids():
        cfg = scenarios.builtin(sid)
        print(f"{sid:34s} {cfg['kind']}")
    return EXIT_OK


def cmd_describe(args) -> int:
    if args.id not in scenarios.BUILTIN:
        print(f"error: unknown scenario {args.id!r}; see `projlab list-scenarios`", file=sys.stderr)
        return EXIT_VALIDATION
    cfg = scenarios.builtin(args.id)
    print(f"{cfg['id']} ({cfg['kind']}, seed {cfg['seed']})")
    print()
    print(cfg["description"])
    print()
    print("configuration:")
    print(dumps({k: v for k, v in cfg.items() if k != "description"}), end="")
    return EXIT_OK


def _parse_values(text: str) -> list:
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if not parts:
        raise ConfigError("sweep needs at least one value")
    try:
        return [float(p) for p in parts]
    except ValueError:
        raise ConfigError(f"sweep values must be numeric, got {text!r}") from None


def cmd_sweep(args) -> int:
    base = resolve_config(args.config)
    if args.seed is not None:
        base = validate({**base, "seed": args.seed})
    section, key = parameter_path(base, args.param)
    values = _parse_values(args.values)
    configs = []
    for v in values:
        raw = copy.deepcopy(base)
        default = SCHEMAS[base["kind"]][0 if section == "physical" else 1][key]
        raw[section][key] = int(v) if isinstance(default, int) and not isinstance(default, bool) else v
        raw["id"] = f"{base['id']}-{key}={v:g}"
        configs.append(validate(raw))
    out = Path(args.out) if args.out else (Path(os.environ.get(OUTPUT_ENV, "runs"))
                                           / f"{base['id']}-sweep-{key}-seed{base['seed']}")
    out.mkdir(parents=True, exist_ok=True)
    rows, columns, code = [], [], EXIT_OK
    for v, cfg in zip(values, configs):
        sub = out / f"{key}={v:g}"
        rc = run_to_directory(cfg, sub)
        code = max(code, rc)
        headline = {}
        if rc == EXIT_OK:
            headline = json.loads((sub / "report.json").read_text(encoding="utf-8"))["headline"]
        for c in headline:
            if c not in columns:
                columns.append(c)
        rows.append((v, rc, headline))
    body = [[v, rc] + [_num(h.get(c)) for c in columns] for v, rc, h in rows]
    text = table([key, "exit_code"] + columns, body)
    (out / "sweep.csv").write_text(text, encoding="utf-8")
    print(text, end="")
    return code


def _num(x):
    if x is None:
        return float("nan")
    return x


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="projlab", description=(
        "Run projection-operator verification scenarios and write JSON/CSV reports."))
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a scenario config (or built-in scenario id)")
    p.add_argument("config")
    p.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV}/<id>-seed<seed>)")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("list-scenarios", help="list built-in scenarios")
    p.set_defaults(func=cmd_list)

    p = sub.add_parser("describe", help="describe a built-in scenario")
    p.add_argument("id")
    p.set_defaults(func=cmd_describe)

    p = sub.add_parser("sweep", help="run a scenario for several values of one parameter")
    p.add_argument("config")
    p.add_argument("--param", required=True)
    p.add_argument("--values", required=True, help="comma-separated numbers")
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
