"""``vhardy`` command line.

Exit codes: 0 when every check passes, 1 when a check fails (the first
failing witness goes to stderr), 2 on configuration errors.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from .experiments import EXPERIMENTS, ConfigError, run_experiment, write_report

SUITES = sorted(EXPERIMENTS)


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as e:
        raise ConfigError("$", f"invalid JSON at line {e.lineno}: {e.msg}") from None
    except OSError as e:
        raise ConfigError("$", f"cannot read config: {e}") from None


def _run(name: str | None, args) -> int:
    cfg = _load_config(args.config)
    if not isinstance(cfg, dict):
        raise ConfigError("$", "config must be a JSON object")
    if name is not None:
        if cfg.get("experiment", name) != name:
            raise ConfigError("$.experiment", f"config names {cfg['experiment']!r}, "
                                              f"subcommand is {name!r}")
        cfg["experiment"] = name
    if args.seed is not None:
        cfg["seed"] = args.seed
    out = args.out or cfg.get("output") or "vhardy_out"
    rep = run_experiment(cfg)
    paths = write_report(rep, out)
    status = "PASS" if rep.passed else "FAIL"
    print(f"{rep.experiment}: {status} ({len(rep.rows)} rows, config {rep.config_hash}, "
          f"{rep.seconds:.1f} s)")
    for p in paths[:2]:
        print(f"  wrote {p}")
    if not rep.passed:
        print(f"first failing witness: {rep.witness}", file=sys.stderr)
        return 1
    return 0


def _verify(args) -> int:
    from .decomposition import Atom, Molecule, verify_atom, verify_molecule
    from .exponent import default_moment_order, make_exponent
    from .grid import Ball, read_vgf

    cfg = _load_config(args.config)
    for key in ("input", "center", "radius", "exponent", "q", "s", "eps", "c_slack"):
        val = getattr(args, key)
        if val is not None:
            cfg[key] = val
    for key in ("input", "center", "radius", "exponent"):
        if key not in cfg:
            raise ConfigError(f"$.{key}", "missing")
    if not (isinstance(cfg["radius"], (int, float)) and cfg["radius"] > 0):
        raise ConfigError("$.radius", "must be positive")
    c_slack = float(cfg.get("c_slack", 1.0))
    if not c_slack > 0:
        raise ConfigError("$.c_slack", "must be positive")
    try:
        f = read_vgf(cfg["input"])
    except (OSError, ValueError) as e:
        raise ConfigError("$.input", str(e)) from None
    center = cfg["center"]
    center = [float(c) for c in (center if isinstance(center, list) else str(center).split(","))]
    if len(center) != f.grid.dim:
        raise ConfigError("$.center", f"needs {f.grid.dim} coordinates")
    ball = Ball(tuple(center), float(cfg["radius"]))
    expo = cfg["exponent"]
    if isinstance(expo, str):
        try:
            expo = json.loads(expo)
        except json.JSONDecodeError:
            raise ConfigError("$.exponent", "must be a number or a recipe object") from None
    try:
        p = make_exponent(expo, f.grid)
    except (ValueError, KeyError, TypeError) as e:
        raise ConfigError("$.exponent", str(e)) from None
    q = float(cfg.get("q", 2.0))
    s = cfg.get("s")
    s = default_moment_order(p) if s is None else int(s)
    if args.kind == "atom":
        rep = verify_atom(Atom(f, ball, q, s), p, q, s, c_slack)
        row = {"kind": "atom", "passed": rep.passed, "support_ok": rep.support_ok,
               "size_ratio": rep.size_ratio, "moment_residual": rep.moment_residual}
    else:
        eps = cfg.get("eps")
        if eps is None:
            raise ConfigError("$.eps", "molecules need a decay rate")
        rep = verify_molecule(Molecule(f, ball, q, s, float(eps)), p, q, s, float(eps), c_slack)
        row = {"kind": "molecule", "passed": rep.passed, "decay_ok": rep.decay_ok,
               "worst_decay_ratio": max(rep.decay_ratios) if rep.decay_ratios else 0.0,
               "moment_residual": rep.moment_residual, "tail_fraction": rep.tail_fraction}
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(row.keys())
    w.writerow([repr(float(v)) if isinstance(v, float) else v for v in row.values()])
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        with open(Path(args.out) / "verify.csv", "w", newline="") as fh:
            cw = csv.writer(fh, lineterminator="\n")
            cw.writerow(row.keys())
            cw.writerow([repr(float(v)) if isinstance(v, float) else v for v in row.values()])
    if not rep.passed:
        print(f"first failing witness: {rep}", file=sys.stderr)
        return 1
    return 0


def _common(p):
    p.add_argument("--config", help="JSON configuration file")
    p.add_argument("--seed", type=int, help="override the configured seed")
    p.add_argument("--out", help="output directory (default: vhardy_out)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="vhardy", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run the experiment named in a config file")
    p.add_argument("config_file", nargs="?", help="JSON configuration file")
    _common(p)
    for name in SUITES:
        _common(sub.add_parser(name, help=f"run the {name} suite"))
    p = sub.add_parser("verify", help="check a VGF1 field against the atom or molecule rules")
    _common(p)
    p.add_argument("--kind", choices=("atom", "molecule"), required=True)
    p.add_argument("--input", help="VGF1 file")
    p.add_argument("--center", help="comma-separated ball centre")
    p.add_argument("--radius", type=float)
    p.add_argument("--exponent", help="constant exponent or JSON recipe")
    p.add_argument("--q", type=float)
    p.add_argument("--s", type=int)
    p.add_argument("--eps", type=float)
    p.add_argument("--c-slack", dest="c_slack", type=float)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.seed is not None and args.seed < 0:
        print("config error: $.seed: must be a nonnegative integer", file=sys.stderr)
        return 2
    try:
        if args.command == "verify":
            return _verify(args)
        if args.command == "run":
            if args.config_file and args.config:
                raise ConfigError("$", "give the config once, positionally or with --config")
            args.config = args.config_file or args.config
            if args.config is None:
                raise ConfigError("$", "run needs a config file")
            return _run(None, args)
        return _run(args.command, args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (ValueError, AssertionError) as e:
        print(f"first failing witness: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
