"""Reproducible experiment suites.

Each suite takes a validated configuration dict and returns a
:class:`Report`.  The command line and the acceptance tests run the same
suites, so a CSV written by one can be regenerated by the other.
"""
from __future__ import annotations

import copy
import csv
import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .banks import bank_generate, band_limited_noise, wave_packet
from .exponent import make_exponent
from .grid import Ball, GridFunction, GridSpec, build_scale_stack, default_ladder, write_vgf
from .norms import luxemburg_norm, modular, quasinorm_axiom_report, weak_norm

__all__ = ["Report", "ConfigError", "EXPERIMENTS", "DEFAULTS", "validate_config",
           "merge_config", "config_hash", "run_experiment", "write_report"]


class ConfigError(ValueError):
    """Schema violation; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass
class Report:
    experiment: str
    rows: list
    summary: dict
    checks: list = field(default_factory=list)  # (name, passed, detail)
    config_hash: str = ""
    seconds: float = 0.0
    fields: dict = field(default_factory=dict)  # name -> GridFunction, written as VGF1
    decompositions: dict = field(default_factory=dict)  # input id -> AtomicDecomposition

    @property
    def passed(self) -> bool:
        return all(ok for _, ok, _ in self.checks)

    @property
    def witness(self) -> str | None:
        for name, ok, detail in self.checks:
            if not ok:
                return f"{name}: {detail}"
        return None

    def check(self, name: str, ok, detail=""):
        self.checks.append((name, bool(ok), str(detail)))


# ---------------------------------------------------------------------------
# configuration

_GRID_1D = {"dim": 1, "half_width": 16.0, "points": 512}

DEFAULTS = {
    "norm": {"grid": _GRID_1D, "exponents": [0.5, 1.0, 2.0, 3.0],
             "variable_exponent": {"kind": "smooth", "p0": 0.4, "p1": 2.5, "x0": -4, "x1": 4},
             "balls": 25, "functions": 200, "tolerances": {"modular": 1e-10}},
    "weaknorm": {"grid": _GRID_1D,
                 "variable_exponent": {"kind": "smooth", "p0": 0.5, "p1": 1.8, "x0": -4, "x1": 4},
                 "functions": 100, "powers": [0.5, 2.0, 3.0],
                 "banks": [{"kind": "piecewise", "size": 20}, {"kind": "indicators", "size": 10},
                           {"kind": "spikes", "size": 10}, {"kind": "bandlimited", "size": 10}],
                 "tolerances": {"power": 1e-10}},
    "axioms": {"grid": {"dim": 1, "half_width": 16.0, "points": 256},
               "exponents": [{"kind": "affine", "p0": 0.4, "p1": 0.9, "x0": -6, "x1": 6},
                             {"kind": "smooth", "p0": 0.6, "p1": 2.5, "x0": -4, "x1": 4}],
               "trials": 500},
    "maximal": {"grid": _GRID_1D, "oracle_points": 128, "oracle_functions": 5,
                "exponent": {"kind": "smooth", "p0": 0.5, "p1": 1.5, "x0": -4, "x1": 4},
                "balls": 20, "betas": [2.0, 4.0]},
    "vector": {"grid": _GRID_1D, "resolutions": [256, 512], "seeds": [0, 1, 2, 3, 4],
               "family": 6, "bank": 12, "r": 2.0, "band": 1.5,
               "exponents": {"strong": {"kind": "smooth", "p0": 1.5, "p1": 3.0, "x0": -4, "x1": 4},
                             "weak": {"kind": "smooth", "p0": 1.5, "p1": 3.0, "x0": -4, "x1": 4},
                             "endpoint": {"kind": "smooth", "p0": 1.0, "p1": 2.0, "x0": -4, "x1": 4}}},
    "equiv-report": {"grid": _GRID_1D, "refine": 2, "size": 30,
                     "exponent": {"kind": "smooth", "p0": 0.7, "p1": 1.5, "x0": -4, "x1": 4},
                     "stability": 2.0},
    "lp": {"grid": _GRID_1D, "grid2d": {"dim": 2, "half_width": 8.0, "points": 128},
           "chain_grid2d": {"dim": 2, "half_width": 8.0, "points": 64},
           "p_minus": 0.5, "noise": 5, "band": [0.25, 1.2], "band2d": [0.4, 0.85],
           "peetre_a": 2.0, "tolerances": {"calderon_residual": 0.01, "plancherel": 0.02}},
    "sqfun": {"grid": _GRID_1D, "refine": 2, "size": 20,
              "exponent": {"kind": "smooth", "p0": 0.6, "p1": 1.2, "x0": -4, "x1": 4},
              "stability": 2.0},
    "atomize": {"grid": {"dim": 1, "half_width": 16.0, "points": 1024}, "ladder": [-2, 4],
                "exponent": 0.5, "packets": 4, "noise": 4, "q": 2.0, "band_spread": 4.0,
                "tolerances": {"reconstruction": 1e-2, "slack": 4.0}},
    "molsplit": {"grid": _GRID_1D, "exponent": {"kind": "smooth", "p0": 0.5, "p1": 0.9,
                                                "x0": -2, "x1": 2},
                 "size": 10, "q": 2.0, "grid2d": {"dim": 2, "half_width": 8.0, "points": 128},
                 "size2d": 2, "tolerances": {"sum": 1e-8, "moments": 1e-9, "atom": 1e-10,
                                             "slack": 4.0}},
    "czop": {"grid": _GRID_1D, "sweep_grid": {"dim": 1, "half_width": 32.0, "points": 4096},
             "kernel": "hilbert", "exponent": 0.5, "scales": [-3, 3],
             "centers": [-2.0, -1.0, 0.0, 1.0, 2.0], "band": 3.0,
             "tolerances": {"indicator": 0.02}},
}


def _err(path, msg):
    raise ConfigError(path, msg)


def _validate_grid(g, path):
    if not isinstance(g, dict):
        _err(path, "must be an object")
    for key in ("dim", "half_width", "points"):
        if key not in g:
            _err(f"{path}.{key}", "missing")
    if g["dim"] not in (1, 2):
        _err(f"{path}.dim", "must be 1 or 2")
    if not (isinstance(g["half_width"], (int, float)) and g["half_width"] > 0):
        _err(f"{path}.half_width", "must be a positive number")
    n = g["points"]
    if not (isinstance(n, int) and n >= 2 and n & (n - 1) == 0):
        _err(f"{path}.points", "must be a power of two")


def _validate_tol(t, path):
    if not isinstance(t, dict):
        _err(path, "must be an object")
    for k, v in t.items():
        if not (isinstance(v, (int, float)) and not isinstance(v, bool) and v > 0):
            _err(f"{path}.{k}", f"tolerance must be positive, got {v!r}")


def _validate_recipe(r, path, dim):
    if isinstance(r, bool) or not isinstance(r, (int, float, dict)):
        _err(path, "exponent must be a number or a recipe object")
    try:
        make_exponent(r, GridSpec(dim, 4.0, 16))
    except (ValueError, KeyError, TypeError) as e:
        _err(path, f"bad exponent recipe: {e}")


def validate_config(cfg: dict) -> dict:
    """Check a configuration and return it merged with the suite defaults.

    Raises
    ------
    ConfigError
        On any schema violation, naming the field path.
    """
    if not isinstance(cfg, dict):
        _err("$", "config must be a JSON object")
    name = cfg.get("experiment")
    if name is None:
        _err("$.experiment", "missing")
    if name not in EXPERIMENTS:
        _err("$.experiment", f"unknown experiment {name!r}; choose from {sorted(EXPERIMENTS)}")
    allowed = set(DEFAULTS[name]) | {"experiment", "seed", "output"}
    for k in cfg:
        if k not in allowed:
            _err(f"$.{k}", "unknown field")
    seed = cfg.get("seed", 0)
    if not (isinstance(seed, int) and not isinstance(seed, bool) and seed >= 0):
        _err("$.seed", "must be a nonnegative integer")
    merged = merge_config(name, cfg)
    for k, v in merged.items():
        if k.startswith("grid") or k.endswith("grid"):
            _validate_grid(v, f"$.{k}")
        if k == "tolerances":
            _validate_tol(v, f"$.{k}")
    dim = merged.get("grid", {}).get("dim", 1)
    for k, v in merged.items():
        if k in ("exponent", "variable_exponent"):
            _validate_recipe(v, f"$.{k}", dim)
        elif k == "exponents":
            items = v.items() if isinstance(v, dict) else enumerate(v)
            for j, r in items:
                _validate_recipe(r, f"$.{k}[{j!r}]" if isinstance(j, int) else f"$.{k}.{j}", dim)
    for k in ("size", "functions", "trials", "balls", "noise", "packets", "bank", "family"):
        if k in merged and not (isinstance(merged[k], int) and merged[k] > 0):
            _err(f"$.{k}", "must be a positive integer")
    return merged


def merge_config(name: str, cfg: dict) -> dict:
    out = copy.deepcopy(DEFAULTS[name])
    for k, v in cfg.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = {**out[k], **v}
        else:
            out[k] = copy.deepcopy(v)
    out["experiment"] = name
    out.setdefault("seed", 0)
    return out


def config_hash(cfg: dict) -> str:
    blob = json.dumps({k: v for k, v in cfg.items() if k != "output"}, sort_keys=True,
                      separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _grid(g: dict, points: int | None = None) -> GridSpec:
    return GridSpec(int(g["dim"]), float(g["half_width"]), int(points or g["points"]),
                    float(g.get("margin", 0.125)))


# ---------------------------------------------------------------------------
# suites

def exp_norm(cfg) -> Report:
    """Indicator norms for constant exponents and the modular identity."""
    g = _grid(cfg["grid"])
    rep = Report("norm", [], {})
    rng = np.random.default_rng(cfg["seed"])
    worst_ind = 0.0
    per_p = {}
    for p0 in cfg["exponents"]:
        p = make_exponent(float(p0), g)
        for b in range(cfg["balls"]):
            c = g.axis()[rng.integers(g.points // 4, 3 * g.points // 4)]
            r = float(rng.uniform(4 * g.spacing, g.half_width / 4))
            ball = Ball((c,), r)
            val = luxemburg_norm(ball.indicator(g), p).value
            exact = ball.volume ** (1 / p0)
            rel = abs(val - exact) / exact
            bound = 2 * g.spacing / ball.volume
            worst_ind = max(worst_ind, rel / bound)
            per_p[p0] = max(per_p.get(p0, 0.0), rel / bound)
            rep.rows.append({"case": "indicator", "p": p0, "radius": r, "value": val,
                             "exact": exact, "rel_error": rel, "bound": bound})
    rep.check("indicator-exactness", worst_ind <= 1.0, f"worst error/bound {worst_ind:.3g}")
    p = make_exponent(cfg["variable_exponent"], g)
    from .banks import random_piecewise
    worst_mod = 0.0
    for i in range(cfg["functions"]):
        f = random_piecewise(g, rng, pieces=int(rng.integers(1, 12)))
        nr = luxemburg_norm(f, p)
        res = abs(modular(f / nr.value, p) - 1.0)
        worst_mod = max(worst_mod, res)
        rep.rows.append({"case": "modular", "p": "variable", "radius": "", "value": nr.value,
                         "exact": "", "rel_error": res, "bound": cfg["tolerances"]["modular"]})
    rep.check("modular-residual", worst_mod <= cfg["tolerances"]["modular"], f"{worst_mod:.3g}")
    rep.summary = {"worst_indicator_ratio": worst_ind, "worst_modular_residual": worst_mod,
                   **{f"indicator_ratio_p{p0}": v for p0, v in per_p.items()}}
    return rep


def exp_weaknorm(cfg) -> Report:
    g = _grid(cfg["grid"])
    rep = Report("weaknorm", [], {})
    rng = np.random.default_rng(cfg["seed"])
    p = make_exponent(cfg["variable_exponent"], g)
    from .banks import random_piecewise
    worst = 0.0
    for i in range(cfg["functions"]):
        f = random_piecewise(g, rng, pieces=int(rng.integers(1, 12)))
        s = float(cfg["powers"][i % len(cfg["powers"])])
        lhs = weak_norm(f.abs() ** s, p).value
        rhs = weak_norm(f, p.scaled(s)).value ** s
        err = abs(lhs - rhs) / rhs
        worst = max(worst, err)
        rep.rows.append({"case": "power", "id": f"pc{i}", "s": s, "lhs": lhs, "rhs": rhs,
                         "error": err})
    rep.check("power-identity", worst <= cfg["tolerances"]["power"], f"{worst:.3g}")
    bad = 0
    for spec in cfg["banks"]:
        for fid, f in bank_generate(spec, cfg["seed"], g, p):
            w, s_ = weak_norm(f, p).value, luxemburg_norm(f, p).value
            ok = w <= s_ * (1 + 1e-12)
            bad += not ok
            rep.rows.append({"case": "weak<=strong", "id": fid, "s": "", "lhs": w, "rhs": s_,
                             "error": max(w - s_, 0.0)})
    rep.check("weak<=strong", bad == 0, f"{bad} violations")
    x = g.axis()
    with np.errstate(divide="ignore"):
        inv = np.where(x != 0, 1.0 / np.abs(np.where(x != 0, x, 1.0)), 0.0)
    val = weak_norm(GridFunction(g, inv), make_exponent(1.0, g)).value
    rep.rows.append({"case": "inverse-x", "id": "1/|x|", "s": "", "lhs": val, "rhs": 2.0,
                     "error": abs(val - 2.0)})
    rep.check("inverse-x", abs(val - 2.0) <= 3 * g.spacing, f"value {val!r}")
    rep.summary = {"worst_power_error": worst, "inverse_x": val}
    return rep


def exp_axioms(cfg) -> Report:
    g = _grid(cfg["grid"])
    rep = Report("axioms", [], {})
    exps = cfg["exponents"]
    per = [cfg["trials"] // len(exps)] * len(exps)
    per[0] += cfg["trials"] - sum(per)
    total = 0
    for k, (recipe, n) in enumerate(zip(exps, per)):
        p = make_exponent(recipe, g)
        ar = quasinorm_axiom_report(p, trials=n, seed=cfg["seed"] * 1000 + k)
        for name, count in sorted(ar.checks.items()):
            nv = sum(1 for v in ar.violations if v[0].startswith(name))
            total += nv
            rep.rows.append({"exponent": k, "p_minus": p.p_minus, "p_plus": p.p_plus,
                             "check": name, "trials": count, "violations": nv})
        extra = [v for v in ar.violations if not any(v[0].startswith(c) for c in ar.checks)]
        total += len(extra)
    rep.check("axioms", total == 0, f"{total} violations")
    rep.summary = {"trials": cfg["trials"], "violations": total}
    return rep


def exp_maximal(cfg) -> Report:
    from .maximal import dilation_bound_check, hl_maximal, hl_maximal_bruteforce
    from .banks import random_piecewise
    rep = Report("maximal", [], {})
    rng = np.random.default_rng(cfg["seed"])
    go = _grid(cfg["grid"], cfg["oracle_points"])
    mism = 0
    below = 0
    for i in range(cfg["oracle_functions"]):
        f = random_piecewise(go, rng, pieces=6)
        f = f.like(np.round(4 * f.samples))  # integer data: both routes are exact
        fast = hl_maximal(f).samples
        slow = hl_maximal_bruteforce(f)
        d = float(np.abs(fast - slow).max())
        mism += d != 0.0
        below += int(np.sum(fast < np.abs(f.samples)))
        rep.rows.append({"case": "oracle", "id": i, "value": d, "beta": "", "violations": 0})
    rep.check("bruteforce-oracle", mism == 0, f"{mism} mismatching functions")
    rep.check("Mf>=|f|", below == 0, f"{below} nodes")
    g = _grid(cfg["grid"])
    p = make_exponent(cfg["exponent"], g)
    r = p.p_underline / 2
    viol = 0
    for b in range(cfg["balls"]):
        c = g.axis()[rng.integers(g.points // 3, 2 * g.points // 3)]
        rho = int(rng.integers(1, g.points // 16))
        ball = Ball((c,) * g.dim, (rho + 0.5) * g.spacing)
        mf = hl_maximal(ball.indicator(g)).samples
        for beta in cfg["betas"]:
            nv, worst = dilation_bound_check(ball, beta, r, g, mf)
            viol += nv
            rep.rows.append({"case": "dilation", "id": b, "value": worst, "beta": beta,
                             "violations": nv})
    rep.check("dilation-bound", viol == 0, f"{viol} violations")
    rep.summary = {"oracle_mismatches": mism, "dilation_violations": viol}
    return rep


def exp_vector(cfg) -> Report:
    from .maximal import hl_maximal, vector_maximal_check
    from .banks import random_piecewise
    rep = Report("vector", [], {})
    consts = {k: [] for k in cfg["exponents"]}
    for N in cfg["resolutions"]:
        g = _grid(cfg["grid"], N)
        for seed in cfg["seeds"]:
            rng = np.random.default_rng([cfg["seed"], seed])
            fams = []
            for _ in range(cfg["bank"]):
                fs = [random_piecewise(g, rng, pieces=int(rng.integers(2, 8)), nonneg=True)
                      for _ in range(cfg["family"])]
                fams.append((fs, [hl_maximal(f).samples for f in fs]))
            for kind, recipe in cfg["exponents"].items():
                p = make_exponent(recipe, g)
                c = max(vector_maximal_check(fs, cfg["r"], p, kind, mfs) for fs, mfs in fams)
                consts[kind].append(c)
                rep.rows.append({"kind": kind, "points": N, "seed": seed, "constant": c})
    for kind, cs in consts.items():
        cs = np.array(cs)
        spread = float(cs.max() / cs.min())
        rep.summary[f"{kind}_constant_max"] = float(cs.max())
        rep.summary[f"{kind}_spread"] = spread
        rep.check(f"{kind}-stable", np.all(np.isfinite(cs)) and spread <= cfg["band"],
                  f"spread {spread:.4g}")
    return rep


def _analytic_bank(g: GridSpec, size: int, seed: int, p) -> list:
    """Resolution-independent bank: wave packets, Gaussian derivatives, smooth bumps."""
    rng = np.random.default_rng([seed, 77])
    out = []
    from .maximal import GaussDerivative
    for i in range(size):
        kind = i % 3
        c = rng.uniform(-2, 2, g.dim)
        if kind == 0:
            mag = rng.uniform(0.3, 0.8)
            w = [mag] if g.dim == 1 else [mag, 0.0]
            f = wave_packet(g, c, rng.uniform(0.8, 1.6), w, rng.uniform(0, 2 * np.pi),
                            rng.uniform(0.5, 2.0))
        elif kind == 1:
            order = (int(rng.integers(1, 3)),) + (0,) * (g.dim - 1)
            psi = GaussDerivative(g.dim, order, rng.uniform(0.5, 1.5))
            f = GridFunction(g, psi.evaluate(*[x - ci for x, ci in zip(g.coords(), c)]))
            f = f / float(np.abs(f.samples).max())
        else:
            s = rng.uniform(0.6, 1.5)
            r2 = sum((x - ci) ** 2 for x, ci in zip(g.coords(), c))
            f = GridFunction(g, rng.uniform(0.5, 2.0) * np.exp(-r2 / (2 * s * s)))
        out.append((f"an{i}", f))
    return out


def exp_equiv(cfg) -> Report:
    from .maximal import ProbeFamily, maximal_equivalence_report, maximal_ladder
    rep = Report("equiv-report", [], {})
    bands = []
    for N in (cfg["grid"]["points"], cfg["grid"]["points"] * cfg["refine"]):
        g = _grid(cfg["grid"], N)
        p = make_exponent(cfg["exponent"], g)
        bank = _analytic_bank(g, cfg["size"], cfg["seed"], p)
        probes = ProbeFamily.for_exponent(p)
        res = maximal_equivalence_report(bank, p, probes, maximal_ladder(g))
        for row in res["rows"]:
            rep.rows.append({"points": N, **row})
        bands.append(res["band"])
        rep.summary[f"band_{N}"] = res["band"]
    change = max(bands) / min(bands)
    rep.summary["band_change"] = change
    rep.check("band-finite", all(np.isfinite(b) for b in bands), bands)
    rep.check("band-stable", change <= cfg["stability"], f"band change {change:.4g}")
    return rep


def exp_lp(cfg) -> Report:
    from .lp import (default_lambda, g_function, make_admissible_profile, pointwise_chains,
                     uncovered_energy)
    rep = Report("lp", [], {})
    rng = np.random.default_rng(cfg["seed"])
    tol = cfg["tolerances"]
    lam = default_lambda(cfg["p_minus"])
    for key, band, chain_key in (("grid", cfg["band"], None),
                                 ("grid2d", cfg["band2d"], "chain_grid2d")):
        g = _grid(cfg[key])
        phi = make_admissible_profile(cfg["p_minus"], g, tol=1.0)
        res = phi.calderon_residual
        rep.check(f"calderon-{g.dim}d", res <= tol["calderon_residual"], f"{res:.3g}")
        rep.rows.append({"case": "calderon", "dim": g.dim, "id": "", "value": res,
                         "violations": ""})
        ks = default_ladder(g)
        worst = 0.0
        chain_bad = 0
        for i in range(cfg["noise"]):
            f = band_limited_noise(g, rng, band=tuple(band))
            st = build_scale_stack(f, phi, *ks)
            ratio = float(np.linalg.norm(g_function(st).samples) / np.linalg.norm(f.samples))
            worst = max(worst, abs(ratio - 1))
            rep.rows.append({"case": "plancherel", "dim": g.dim, "id": i, "value": ratio,
                             "violations": uncovered_energy(st)})
            if chain_key is None:
                ch = pointwise_chains(st, lam, cfg["peetre_a"])
                nbad = ch["g<=ga"] + ch["S<=glam"] + ch["S<=ga"]
                chain_bad += nbad
                rep.rows.append({"case": "chains", "dim": g.dim, "id": i, "value": ch["nodes"],
                                 "violations": nbad})
        rep.check(f"plancherel-{g.dim}d", worst <= tol["plancherel"], f"worst {worst:.3g}")
        if chain_key is not None:
            gc = _grid(cfg[chain_key])
            phic = make_admissible_profile(cfg["p_minus"], gc, tol=1.0)
            kc = default_ladder(gc)
            for i in range(2):
                f = band_limited_noise(gc, rng, band=(0.3, 1.5))
                ch = pointwise_chains(build_scale_stack(f, phic, *kc), lam, cfg["peetre_a"])
                nbad = ch["g<=ga"] + ch["S<=glam"] + ch["S<=ga"]
                chain_bad += nbad
                rep.rows.append({"case": "chains", "dim": 2, "id": i, "value": ch["nodes"],
                                 "violations": nbad})
        rep.check(f"chains-{g.dim}d", chain_bad == 0, f"{chain_bad} exceptions")
        rep.summary[f"plancherel_worst_{g.dim}d"] = worst
        rep.summary[f"calderon_residual_{g.dim}d"] = res
    return rep


def exp_sqfun(cfg) -> Report:
    from .lp import default_lambda, g_function, g_lambda_star, lusin_area, make_admissible_profile
    from .maximal import ProbeFamily, maximal_ladder, weak_hardy_norm
    rep = Report("sqfun", [], {})
    names = ("S", "g", "glam")
    bands = {}
    for N in (cfg["grid"]["points"], cfg["grid"]["points"] * cfg["refine"]):
        g = _grid(cfg["grid"], N)
        p = make_exponent(cfg["exponent"], g)
        phi = make_admissible_profile(p.p_minus, g)
        lam = default_lambda(p.p_minus)
        probes = ProbeFamily.for_exponent(p)
        ks = default_ladder(g)
        ratios = {k: [] for k in names}
        for fid, f in _analytic_bank(g, cfg["size"], cfg["seed"], p):
            st = build_scale_stack(f, phi, *ks)
            wh = weak_hardy_norm(f, p, probes, maximal_ladder(g))
            vals = {"S": lusin_area(st), "g": g_function(st), "glam": g_lambda_star(st, lam)}
            row = {"points": N, "id": fid, "weak_hardy": wh}
            for k in names:
                r = weak_norm(vals[k], p).value / wh
                ratios[k].append(r)
                row[k] = r
            rep.rows.append(row)
        for k in names:
            a = np.array(ratios[k])
            bands.setdefault(k, []).append((float(a.min()), float(a.max())))
            rep.summary[f"{k}_band_{N}"] = [float(a.min()), float(a.max())]
    for k in names:
        (lo0, hi0), (lo1, hi1) = bands[k]
        change = max(hi1 / hi0, hi0 / hi1, lo1 / lo0, lo0 / lo1)
        rep.summary[f"{k}_band_change"] = change
        rep.check(f"{k}-band-stable", np.isfinite(change) and change <= cfg["stability"],
                  f"endpoint change {change:.4g}")
    return rep


def exp_atomize(cfg) -> Report:
    from .decomposition import atomic_decompose, decomposition_weak_norm, reconstruct
    from .lp import make_admissible_profile
    from .maximal import ProbeFamily, maximal_ladder, weak_hardy_norm
    rep = Report("atomize", [], {})
    g = _grid(cfg["grid"])
    p = make_exponent(cfg["exponent"], g)
    phi = make_admissible_profile(p.p_minus, g)
    probes = ProbeFamily.for_exponent(p)
    tol = cfg["tolerances"]
    rng = np.random.default_rng(cfg["seed"])
    inputs = []
    for i in range(cfg["packets"]):
        c = rng.uniform(-1, 1, g.dim)
        w = [rng.uniform(1.3, 1.7)] + [0.0] * (g.dim - 1)
        inputs.append((f"wp{i}", wave_packet(g, c, rng.uniform(0.5, 0.8), w,
                                             rng.uniform(0, 2 * np.pi))))
    for i in range(cfg["noise"]):
        inputs.append((f"bl{i}", band_limited_noise(g, rng, band=(1.0, 2.0), extent=2.0)))
    ratios = []
    all_ok = True
    for fid, f in inputs:
        d = atomic_decompose(f, p, phi, tuple(cfg["ladder"]), q=cfg["q"], c_slack=tol["slack"])
        rec = reconstruct(d)
        err = float(np.linalg.norm(rec.samples - f.samples) / np.linalg.norm(f.samples))
        ok = all(r.passed for r in d.reports)
        all_ok &= ok
        wn = decomposition_weak_norm(d, p)
        wh = weak_hardy_norm(f, p, probes, maximal_ladder(g))
        ratios.append(wn / wh)
        rep.decompositions[fid] = d
        rep.rows.append({"id": fid, "atoms": len(d), "levels": len(d.level_norms),
                         "max_slack": max(r.size_ratio for r in d.reports),
                         "max_moment": max(r.moment_residual for r in d.reports),
                         "tent_visits": d.tent_max_visits, "reconstruction": err,
                         "decomposition_norm": wn, "weak_hardy": wh, "ratio": wn / wh})
        rep.check(f"{fid}-reconstruction", err <= tol["reconstruction"], f"{err:.3g}")
        rep.check(f"{fid}-tents-disjoint", d.tent_max_visits <= 1, d.tent_max_visits)
    rep.check("atoms-verified", all_ok, "an emitted atom failed verification")
    lo, hi = min(ratios), max(ratios)
    rep.summary = {"ratio_band": [lo, hi], "ratio_spread": hi / lo}
    rep.check("norm-band", hi / lo <= cfg["band_spread"], f"spread {hi / lo:.4g}")
    return rep


def exp_molsplit(cfg) -> Report:
    from .decomposition import (Molecule, molecule_split, synthesize_atom, synthesize_molecule,
                                verify_molecule)
    rep = Report("molsplit", [], {})
    tol = cfg["tolerances"]
    for key, size in (("grid", cfg["size"]), ("grid2d", cfg["size2d"])):
        g = _grid(cfg[key])
        p = make_exponent(cfg["exponent"], g)
        rng = np.random.default_rng([cfg["seed"], g.dim])
        cases = []
        for i in range(size):
            r = float(max(2.0 ** rng.uniform(-3, -2), 2.5 * g.spacing))
            ball = Ball(tuple(rng.uniform(-1, 1, g.dim)), r)
            mol = synthesize_molecule(g, ball, p, q=cfg["q"], rng=rng)
            cases.append((f"mol{g.dim}d{i}", mol, False))
        ball = Ball((0.0,) * g.dim, 4 * g.spacing if g.dim == 2 else 0.25)
        a = synthesize_atom(g, ball, p, q=cfg["q"], rng=rng)
        # an atom is a molecule for every decay rate; a fast rate keeps the box budget small
        cases.append((f"atom{g.dim}d", Molecule(a.samples, ball, a.q, a.s, 12.0), True))
        for cid, mol, is_atom in cases:
            vr = verify_molecule(mol, p)
            sp = molecule_split(mol, p, c_slack=tol["slack"])
            m = mol.samples.samples
            err = float(np.abs(sp.sum() - m).max() / np.abs(m).max())
            ok = all(r.passed for r in sp.reports)
            rep.rows.append({"id": cid, "dim": g.dim, "molecule_ok": vr.passed,
                             "pieces": len(sp.atoms), "sum_error": err,
                             "projection_moments": sp.projection_moment_residual,
                             "max_projection": max(sp.projection_norms),
                             "max_slack": max(r.size_ratio for r in sp.reports),
                             "merged_tail": sp.merged_tail, "pieces_ok": ok})
            rep.check(f"{cid}-sum", err <= tol["sum"], f"{err:.3g}")
            rep.check(f"{cid}-moments", sp.projection_moment_residual <= tol["moments"],
                      f"{sp.projection_moment_residual:.3g}")
            rep.check(f"{cid}-pieces", ok, "a piece failed verification")
            if is_atom:
                pk = max(sp.projection_norms) / float(np.abs(m).max())
                rep.check(f"{cid}-identity", pk <= tol["atom"], f"projection {pk:.3g}")
    rep.summary = {"worst_sum_error": max(r["sum_error"] for r in rep.rows),
                   "worst_projection_moments": max(r["projection_moments"] for r in rep.rows),
                   "worst_piece_slack": max(r["max_slack"] for r in rep.rows),
                   "merged_tails": sum(bool(r["merged_tail"]) for r in rep.rows)}
    return rep


def exp_czop(cfg) -> Report:
    from .cz import (KERNELS, apply_convolutional, critical_boundedness_experiment,
                     hilbert_indicator, indicator_samples, l2_calibration,
                     verify_kernel_regularity)
    rep = Report("czop", [], {})
    kern = KERNELS[cfg["kernel"]]()
    reg = verify_kernel_regularity(kern)
    rep.summary["regularity_constants"] = reg["constants"]
    rep.check("kernel-regularity", reg["passed"], reg["constants"])
    g = _grid(cfg["grid"])
    if kern.name == "hilbert":
        x = g.axis()
        T = apply_convolutional(kern, indicator_samples(g)).Tf
        rep.fields["indicator_image"] = T
        T = T.samples
        ex = hilbert_indicator(x)
        away = np.minimum(np.abs(x - 1), np.abs(x + 1)) > g.spacing * (1 + 1e-9)
        err = float(np.abs(T - ex)[away].max() / np.abs(ex[away]).max())
        rep.summary["indicator_error"] = err
        rep.check("indicator-formula", err <= cfg["tolerances"]["indicator"], f"{err:.3g}")
    cal = l2_calibration(kern, g, seed=cfg["seed"])
    rep.summary["l2_noise"] = cal["noise"]
    rep.summary["l2_spectral"] = cal["spectral"]
    gs = _grid(cfg["sweep_grid"])
    p = make_exponent(cfg["exponent"], gs)
    lo, hi = cfg["scales"]
    try:
        res = critical_boundedness_experiment(
            kern, p, gs, scales=tuple(2.0 ** k for k in range(lo, hi + 1)),
            centers=tuple(cfg["centers"]), seed=cfg["seed"], band_factor=cfg["band"])
    except AssertionError as e:
        rep.check("preconditions", False, e)
        return rep
    rep.rows = res["rows"]
    rep.summary.update({"weak_spread": res["weak_spread"], "strong_spread": res["strong_spread"],
                        "vanishing_moment_residual": res["moments"]})
    rep.check("vanishing-moments", res["moments"] <= 1e-3, f"{res['moments']:.3g}")
    rep.check("weak-uniform", res["passed"], f"spread {res['weak_spread']:.4g}")
    return rep


EXPERIMENTS = {
    "norm": exp_norm, "weaknorm": exp_weaknorm, "axioms": exp_axioms, "maximal": exp_maximal,
    "vector": exp_vector, "equiv-report": exp_equiv, "lp": exp_lp, "sqfun": exp_sqfun,
    "atomize": exp_atomize, "molsplit": exp_molsplit, "czop": exp_czop,
}


def run_experiment(cfg: dict) -> Report:
    """Validate, run and stamp a report with the config hash and wall time."""
    merged = validate_config(cfg)
    t0 = time.perf_counter()
    rep = EXPERIMENTS[merged["experiment"]](merged)
    rep.seconds = time.perf_counter() - t0
    rep.config_hash = config_hash(merged)
    return rep


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (list, tuple)):
        return " ".join(_fmt(u) for u in v)
    return str(v)


def write_report(rep: Report, out_dir) -> list:
    """Write ``<experiment>.csv`` (rows), ``<experiment>_summary.csv`` and any fields.

    Every row carries the config hash and toolkit version; wall time is not
    written, so identical runs give identical bytes.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    base = rep.experiment.replace("-", "_")
    cols = []
    for r in rep.rows:
        for k in r:
            if k not in cols:
                cols.append(k)
    path = out / f"{base}.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["config_hash", "version", *cols])
        for r in rep.rows:
            w.writerow([rep.config_hash, __version__, *(_fmt(r.get(c, "")) for c in cols)])
    paths.append(path)
    path = out / f"{base}_summary.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["config_hash", "version", "key", "value"])
        for k, v in rep.summary.items():
            w.writerow([rep.config_hash, __version__, k, _fmt(v)])
        for name, ok, detail in rep.checks:
            w.writerow([rep.config_hash, __version__, f"check:{name}",
                        ("PASS " if ok else "FAIL ") + detail])
    paths.append(path)
    for name, f in sorted(rep.fields.items()):
        path = out / f"{base}_{name}.vgf"
        write_vgf(path, f)
        paths.append(path)
    if rep.decompositions:
        from .decomposition import write_manifest
        for fid, d in sorted(rep.decompositions.items()):
            paths.append(write_manifest(d, out / f"{base}_{fid}"))
    return paths
