"""Command-line front end: ``ttnflow <experiment> --tree ... [options]``.

Results are written as CSV (to ``--out`` or stdout) with all reals printed
to 17 significant digits; a short summary goes to stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import fields

from .experiments import (EXPERIMENTS, ConfigError, ExperimentConfig, ExperimentResult,
                          expand_preset, run)
from .tree import PRESETS

DEFAULTS = {
    "seed": 0,
    "t_end": 1.0,
    "step_sizes": (0.1, 0.01, 0.001),
}

_KEYS = {f.name for f in fields(ExperimentConfig)}
_ALIASES = {"out": "output_path", "t-end": "t_end", "step-sizes": "step_sizes",
            "b-norms": "b_norms"}


def _float_list(text):
    try:
        return tuple(float(v) for v in str(text).split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated reals, got {text!r}") from None


def _int_or_map(text):
    """An integer, or a JSON object mapping leaf labels or subtree specs to integers."""
    text = str(text).strip()
    if text.startswith("{"):
        return {str(k): int(v) for k, v in json.loads(text).items()}
    return int(text)


def config_from_mapping(data) -> ExperimentConfig:
    """Validated config from a mapping (e.g. a parsed JSON file)."""
    data = {_ALIASES.get(k, k): v for k, v in dict(data).items() if v is not None}
    unknown = sorted(set(data) - _KEYS)
    if unknown:
        raise ConfigError(unknown[0], "unknown configuration key")
    for key in ("experiment", "tree"):
        if key not in data:
            raise ConfigError(key, "required")
    tree = str(data["tree"])
    if tree in PRESETS:
        spec, n, r = expand_preset(tree)
        data["tree"] = spec
        data.setdefault("dims", n)
        data.setdefault("ranks", r)
    for key, value in DEFAULTS.items():
        data.setdefault(key, value)
    for key in ("dims", "ranks"):
        value = data.get(key)
        if isinstance(value, dict):
            data[key] = {(int(k) if key == "dims" and str(k).isdigit() else str(k)): int(v)
                         for k, v in value.items()}
    for key in ("step_sizes", "b_norms", "sigma_mins"):
        if key in data:
            value = data[key]
            if isinstance(value, str):
                value = _float_list(value)
            try:
                data[key] = tuple(float(v) for v in value)
            except (TypeError, ValueError):
                raise ConfigError(key, f"expected a list of reals, got {value!r}") from None
    for key, kind in (("seed", int), ("t_end", float), ("als_sweeps", int), ("h_ref", float),
                      ("rho", float), ("gamma", float)):
        if key in data:
            try:
                data[key] = kind(data[key])
            except (TypeError, ValueError):
                raise ConfigError(key, f"expected {kind.__name__}, got {data[key]!r}") from None
    return ExperimentConfig(**data)


def build_parser():
    p = argparse.ArgumentParser(
        prog="ttnflow",
        description="Run tree tensor network integrator experiments and emit CSV.")
    p.add_argument("experiment", nargs="?", choices=EXPERIMENTS)
    p.add_argument("--config", help="JSON file with configuration keys; flags override it")
    p.add_argument("--tree", help="tree spec such as '[[1,3,5],[4,2],6]' or a preset name "
                                  f"({', '.join(PRESETS)})")
    p.add_argument("--dims", type=_int_or_map, help="leaf dimension (integer or JSON map)")
    p.add_argument("--ranks", type=_int_or_map,
                   help="subtree rank (integer or JSON map over non-root subtrees)")
    p.add_argument("--seed", type=int)
    p.add_argument("--t-end", dest="t_end", type=float)
    p.add_argument("--step-sizes", dest="step_sizes", type=_float_list)
    p.add_argument("--b-norms", dest="b_norms", type=_float_list)
    p.add_argument("--sigma-mins", dest="sigma_mins", type=_float_list)
    p.add_argument("--path", choices=("auto", "dense", "factored"))
    p.add_argument("--als-sweeps", dest="als_sweeps", type=int)
    p.add_argument("--rho", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--h-ref", dest="h_ref", type=float)
    p.add_argument("--field", choices=("rotating", "zero"))
    p.add_argument("--fault", choices=("skip-k-qr",))
    p.add_argument("--out", dest="output_path")
    return p


def parse_config(argv=None) -> ExperimentConfig:
    """Config from command-line arguments, a JSON file path, or a mapping."""
    if isinstance(argv, dict):
        return config_from_mapping(argv)
    if isinstance(argv, str):
        with open(argv) as fh:
            return config_from_mapping(json.load(fh))
    args = build_parser().parse_args(argv)
    data = {}
    if args.config:
        with open(args.config) as fh:
            data.update(json.load(fh))
    for key, value in vars(args).items():
        if key != "config" and value is not None:
            data[key] = value
    return config_from_mapping(data)


def format_value(v):
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def to_csv(result: ExperimentResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(result.header)
    for row in result.rows:
        w.writerow([format_value(v) for v in row])
    return buf.getvalue()


def main(argv=None):
    try:
        cfg = parse_config(argv)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"ttnflow: error: {exc}", file=sys.stderr)
        return 2
    result = run(cfg)
    text = to_csv(result)
    if cfg.output_path:
        with open(cfg.output_path, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    for key, value in result.summary.items():
        print(f"{key}: {value}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
