"""Command-line front end.

::

    floquet-lindblad run scenario.toml [--out data.csv] [--format json]
    floquet-lindblad preset fig1 [--out fig1.csv] [--jobs 4]
    floquet-lindblad scaling --model model1 --omegas 4 8 16 32
    floquet-lindblad converge scenario.toml --levels 2 4 8 --kind steady

Exit codes: 0 on success, 1 on usage or configuration errors, 2 if any
method or sweep point failed numerically (the remaining output is still
written).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__
from .config import PRESETS, ConfigError, expand_sweep, load_config, parse_number, preset_path
from .errors import FloquetLindbladError
from .study import convergence_study, run_scenario, scaling_study

log = logging.getLogger("floquet_lindblad")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2


def _configure_logging():
    level = os.environ.get("FLOQUET_LINDBLAD_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def _output_path(config, out: str | None, fmt: str, suffix: str) -> Path:
    if out is not None:
        base = Path(out)
    elif config.output_path:
        base = Path(config.base_dir) / config.output_path
    else:
        base = Path(f"{config.name}.{fmt}")
    base = base.with_suffix(f".{fmt}")
    if suffix:
        base = base.with_name(f"{base.stem}_{suffix}{base.suffix}")
    return base


def _run_one(item):
    suffix, config, path, fmt, seed = item
    report = run_scenario(config)
    if seed is not None:
        report.config["seed"] = seed
    report.write(path, fmt)
    return suffix, str(path), report.errors


def _run_config(config, args) -> int:
    overrides = {}
    if args.tol is not None:
        overrides["tol"] = args.tol
    if args.format is not None:
        overrides["output_format"] = args.format
    config = config.with_overrides(**overrides)
    fmt = config.output_format
    items = [(suffix, cfg, _output_path(config, args.out, fmt, suffix), fmt, args.seed)
             for suffix, cfg in expand_sweep(config)]
    if args.jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_run_one, items))
    else:
        results = [_run_one(item) for item in items]
    status = EXIT_OK
    for suffix, path, errors in results:
        print(path)
        for method, msg in errors.items():
            print(f"error [{suffix or config.name}] {method}: {msg}", file=sys.stderr)
            status = EXIT_NUMERICAL
    return status


def cmd_run(args) -> int:
    return _run_config(load_config(args.config), args)


def cmd_preset(args) -> int:
    config = load_config(preset_path(args.name))
    # Preset files live inside the package; write next to the caller instead.
    config = config.with_overrides(base_dir=".")
    return _run_config(config, args)


def cmd_scaling(args) -> int:
    params = {}
    for item in args.param or []:
        key, _, value = item.partition("=")
        if not value:
            raise ConfigError(f"--param expects key=value, got {item!r}")
        params[key] = parse_number(value, f"--param {key}")
    try:
        table = scaling_study(args.model, params, [parse_number(w, "--omegas") for w in args.omegas],
                              args.n_periods, tol=args.tol or 1e-10)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    text = table.to_csv() if (args.format or "csv") == "csv" else json.dumps({
        "omega": table.omegas.tolist(), "amplitude": table.amplitudes.tolist(), "slope": table.slope,
        "slope_stderr": table.slope_stderr, "confidence_width": table.confidence_width,
        "failures": {str(k): v for k, v in table.failures.items()}, "version": __version__,
    }, indent=1)
    _emit(text, args.out)
    return EXIT_NUMERICAL if table.failures else EXIT_OK


def cmd_converge(args) -> int:
    config = load_config(args.config)
    if args.tol is not None:
        config = config.with_overrides(tol=args.tol)
    try:
        table = convergence_study(config, args.levels, args.kind)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if (args.format or "csv") == "csv":
        text = table.to_csv()
    else:
        text = json.dumps({"kind": table.kind, "levels": table.levels, "residuals": table.residuals,
                           "differences": table.differences, "flags": table.flags}, indent=1)
    _emit(text, args.out)
    return EXIT_NUMERICAL if any(table.flags) else EXIT_OK


def _emit(text: str, out: str | None):
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        with open(out, "w", newline="\n") as fh:
            fh.write(text)
        print(out)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="output file (sweep points get a _param=value suffix)")
    common.add_argument("--format", choices=("csv", "json"), help="override the output format")
    common.add_argument("--jobs", type=int, default=1, help="parallel sweep points")
    common.add_argument("--seed", type=int, help="recorded in the output metadata")
    common.add_argument("--tol", type=float, help="propagation tolerance")

    parser = argparse.ArgumentParser(prog="floquet-lindblad", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", parents=[common], help="run a scenario file")
    p.add_argument("config")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("preset", parents=[common], help="run a bundled figure preset")
    p.add_argument("name", choices=PRESETS)
    p.set_defaults(func=cmd_preset)

    p = sub.add_parser("scaling", parents=[common], help="micromotion amplitude versus drive frequency")
    p.add_argument("--model", choices=("model1", "model2"), default="model1")
    p.add_argument("--omegas", nargs="+", default=["4", "8", "16", "32"])
    p.add_argument("--param", action="append", metavar="KEY=VALUE", help="model parameter (repeatable)")
    p.add_argument("--n-periods", type=int, default=None, help="settling periods (default: 60/gamma)")
    p.set_defaults(func=cmd_scaling)

    p = sub.add_parser("converge", parents=[common], help="truncation convergence table")
    p.add_argument("config")
    p.add_argument("--levels", type=int, nargs="+", required=True)
    p.add_argument("--kind", choices=("steady", "micromotion", "magnus"), default="steady")
    p.set_defaults(func=cmd_converge)
    return parser


def main(argv=None) -> int:
    _configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    if getattr(args, "jobs", 1) < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FloquetLindbladError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
