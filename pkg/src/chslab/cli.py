"""Command-line driver.

    chslab <experiment> [--config FILE] [--seed U64] [--workers INT] [--out DIR] [key=value ...]

Configuration is layered: experiment defaults, then the config file (TOML,
or a manifest.json from an earlier run), then --seed, then key=value
overrides. The fully resolved configuration is written to manifest.json.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time
from pathlib import Path

from . import __version__
from ._backend import BACKEND
from .experiments import EXPERIMENTS, Outcome, run_named

EXIT_PASS = 0
EXIT_FAIL = 2
EXIT_BLOWUP = 3
EXIT_USAGE = 64
EXIT_CANTCREAT = 73

U64_MAX = 2 ** 64 - 1

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - depends on interpreter
    import tomli as tomllib


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _epilog() -> str:
    lines = ["experiments and results.csv columns (order is frozen):"]
    for exp in EXPERIMENTS.values():
        lines.append(f"  {exp.name:17s} {exp.summary}")
        lines.append(f"  {'':17s} columns: {', '.join(exp.columns)}")
    lines.append("")
    lines.append("exit status: 0 pass, 2 assertion failed, 3 blow-up, 64 usage, 73 output not writable")
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="chslab", description="Stochastic Cahn-Hilliard verification experiments.",
                epilog=_epilog(), formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("experiment", help="experiment name (see below)")
    p.add_argument("--config", type=Path, help="TOML config or manifest.json to rerun")
    p.add_argument("--seed", type=int, default=None, help="64-bit run seed (default 0)")
    p.add_argument("--workers", type=int, default=1, help="worker processes (results do not depend on it)")
    p.add_argument("--out", type=Path, default=None, help="output directory (default chslab-out/<experiment>)")
    p.add_argument("overrides", nargs="*", metavar="key=value", help="config overrides")
    return p


# ---------------------------------------------------------------- config


def _coerce(key: str, raw: str, default):
    try:
        if isinstance(default, bool):
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, (list, dict)):
            return json.loads(raw)
        if default is None:
            return None if raw.lower() in ("none", "null", "") else int(raw)
        return raw
    except (ValueError, json.JSONDecodeError) as err:
        raise UsageError(f"bad value for {key}: {raw!r}") from err


def _normalise(key: str, value, default):
    """Bring file values onto the default's type (TOML ints for floats, etc.)."""
    if isinstance(default, float) and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if isinstance(default, bool) and not isinstance(value, bool):
        raise UsageError(f"{key} must be a boolean")
    return value


def load_config_file(path: Path) -> tuple[dict, dict]:
    """Return (config table, top-level extras such as seed / experiment)."""
    try:
        text = path.read_bytes()
    except OSError as err:
        raise UsageError(f"cannot read config {path}: {err}") from err
    try:
        if path.suffix == ".json":
            data = json.loads(text)
        else:
            data = tomllib.loads(text.decode())
    except (ValueError, UnicodeDecodeError) as err:
        raise UsageError(f"cannot parse config {path}: {err}") from err
    if not isinstance(data, dict):
        raise UsageError("config must be a table")
    table = data.get("config", {k: v for k, v in data.items() if k not in ("seed", "experiment", "version")})
    extras = {k: data[k] for k in ("seed", "experiment") if k in data}
    return table, extras


def resolve(name: str, config_path: Path | None, seed: int | None, overrides: list[str]) -> tuple[dict, int]:
    exp = EXPERIMENTS[name]
    cfg = dict(exp.defaults)
    file_seed = None
    if config_path is not None:
        table, extras = load_config_file(config_path)
        if "experiment" in extras and extras["experiment"] != name:
            raise UsageError(f"config was written for {extras['experiment']!r}, not {name!r}")
        for k, v in table.items():
            if k not in cfg:
                raise UsageError(f"unknown config key {k!r} for {name}")
            cfg[k] = _normalise(k, v, exp.defaults[k])
        file_seed = extras.get("seed")
    for item in overrides:
        if "=" not in item:
            raise UsageError(f"override {item!r} is not key=value")
        k, v = item.split("=", 1)
        k = k.strip()
        if k not in cfg:
            raise UsageError(f"unknown config key {k!r} for {name}")
        cfg[k] = _coerce(k, v, exp.defaults[k])
    final_seed = seed if seed is not None else (file_seed if file_seed is not None else 0)
    if not isinstance(final_seed, int) or not 0 <= final_seed <= U64_MAX:
        raise UsageError("seed must be an integer in [0, 2^64)")
    return cfg, final_seed


# ---------------------------------------------------------------- output


def _clean(x):
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if hasattr(x, "item"):
        return _clean(x.item())
    return x


def dumps(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n"


def _cell(v) -> str:
    if isinstance(v, float):
        return repr(v)
    if hasattr(v, "item"):
        return _cell(v.item())
    return str(v)


def csv_text(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_cell(v) for v in r])
    return buf.getvalue()


def prepare_out(path: Path) -> None:
    try:
        path.mkdir(parents=True, exist_ok=True)
        probe = path / ".chslab-write-probe"
        probe.write_bytes(b"")
        probe.unlink()
    except OSError as err:
        raise PermissionError(str(err)) from err


def write_outputs(out: Path, name: str, cfg: dict, seed: int, outcome: Outcome) -> None:
    manifest = {"experiment": name, "seed": seed, "config": cfg, "version": __version__}
    report = {"experiment": name, "seed": seed, "status": outcome.status,
              "assertions": outcome.assertions, "details": outcome.details}
    if outcome.blowup is not None:
        report["blowup"] = outcome.blowup
    (out / "manifest.json").write_text(dumps(manifest))
    (out / "results.csv").write_text(csv_text(outcome.columns, outcome.rows))
    for fname, (cols, rows) in sorted(outcome.extra.items()):
        (out / fname).write_text(csv_text(cols, rows))
    (out / "report.json").write_text(dumps(report))


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_intermixed_args(argv)
    if args.experiment not in EXPERIMENTS:
        parser.print_usage(sys.stderr)
        print(f"chslab: unknown experiment {args.experiment!r}; choose from "
              f"{', '.join(EXPERIMENTS)}", file=sys.stderr)
        return EXIT_USAGE
    if args.workers < 1:
        parser.print_usage(sys.stderr)
        print("chslab: --workers must be at least 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg, seed = resolve(args.experiment, args.config, args.seed, args.overrides)
    except UsageError as err:
        parser.print_usage(sys.stderr)
        print(f"chslab: {err}", file=sys.stderr)
        return EXIT_USAGE
    out = args.out if args.out is not None else Path("chslab-out") / args.experiment
    try:
        prepare_out(out)
    except PermissionError as err:
        print(f"chslab: cannot write to {out}: {err}", file=sys.stderr)
        return EXIT_CANTCREAT
    start = time.perf_counter()
    try:
        outcome = run_named(args.experiment, cfg, seed, args.workers)
    except ValueError as err:
        # invalid parameter combinations surface as usage errors
        print(f"chslab: {err}", file=sys.stderr)
        return EXIT_USAGE
    try:
        write_outputs(out, args.experiment, cfg, seed, outcome)
    except OSError as err:
        print(f"chslab: cannot write to {out}: {err}", file=sys.stderr)
        return EXIT_CANTCREAT
    elapsed = time.perf_counter() - start
    print(f"{args.experiment}: {outcome.status} ({elapsed:.1f} s, backend {BACKEND}) -> {out}",
          file=sys.stderr)
    for a in outcome.assertions:
        print(f"  [{'ok' if a['passed'] else 'FAIL'}] {a['name']}: {a['measured']!r} "
              f"(tolerance {a['tolerance']!r})", file=sys.stderr)
    if outcome.blowup is not None:
        return EXIT_BLOWUP
    return EXIT_PASS if outcome.status == "pass" else EXIT_FAIL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
