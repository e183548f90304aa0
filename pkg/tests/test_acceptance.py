"""Acceptance criteria, one test each.

Every test prints a single ``PASS``/``FAIL`` line with the measured
quantities and wall time.  Run directly (``python tests/test_acceptance.py``)
for the table alone.
"""
import tempfile
import time
from pathlib import Path

import pytest

from vhardy.experiments import run_experiment, write_report

_CACHE = {}
_OUT = Path(tempfile.mkdtemp(prefix="vhardy_accept_"))

# criterion number -> (suite, runtime limit in seconds, title)
CRITERIA = {
    1: ("norm", 10, "norm exactness"),
    2: ("weaknorm", 20, "weak-norm identities"),
    3: ("axioms", 30, "quasi-norm axioms"),
    4: ("maximal", 30, "maximal operator"),
    5: ("vector", 60, "vector-valued inequalities"),
    6: ("equiv-report", 120, "maximal-characterization bands"),
    7: ("lp", 60, "Littlewood-Paley calibration"),
    8: ("sqfun", 180, "square-function bands"),
    9: ("atomize", 180, "atomic decomposition"),
    10: ("molsplit", 60, "molecule splitting"),
    11: ("czop", 300, "CZ critical experiment"),
}


def _suite(name):
    if name not in _CACHE:
        rep = run_experiment({"experiment": name, "seed": 0})
        paths = write_report(rep, _OUT / "first" / name)
        _CACHE[name] = (rep, paths)
    return _CACHE[name]


def _line(n, title, ok, detail):
    return f"[criterion {n:2d}] {'PASS' if ok else 'FAIL'} {title}: {detail}"


def _emit(capsys, text):
    if capsys is None:
        print(text)
    else:
        with capsys.disabled():
            print("\n" + text)


def _check(n, capsys=None):
    name, limit, title = CRITERIA[n]
    rep, _ = _suite(name)
    fast = rep.seconds <= limit
    ok = rep.passed and fast
    summary = ", ".join(f"{k}={_short(v)}" for k, v in rep.summary.items())
    why = "" if rep.passed else f" | witness {rep.witness}"
    _emit(capsys, _line(n, title, ok, f"{rep.seconds:.1f}s/{limit}s | {summary}{why}"))
    return ok, rep, fast


def _short(v):
    if isinstance(v, float):
        return f"{v:.4g}"
    if isinstance(v, (list, tuple)):
        return "[" + " ".join(_short(u) for u in v) + "]"
    return str(v)


@pytest.mark.parametrize("n", sorted(CRITERIA))
def test_criterion(n, capsys):
    ok, rep, fast = _check(n, capsys)
    assert rep.passed, rep.witness
    assert fast, f"runtime {rep.seconds:.1f}s over {CRITERIA[n][1]}s"


def _determinism(capsys=None):
    t0 = time.perf_counter()
    mismatched = []
    for name, _, _ in CRITERIA.values():
        _, first = _suite(name)
        rep = run_experiment({"experiment": name, "seed": 0})
        second = write_report(rep, _OUT / "second" / name)
        for a, b in zip(first, second):
            if a.is_dir() or a.name == "manifest.csv":
                pa, pb = sorted(a.parent.rglob("*")), sorted(b.parent.rglob("*"))
            else:
                pa, pb = [a], [b]
            for x, y in zip(pa, pb):
                if x.is_file() and x.read_bytes() != y.read_bytes():
                    mismatched.append(str(x.relative_to(_OUT)))
        if len(first) != len(second):
            mismatched.append(name)
    ok = not mismatched
    detail = f"{len(CRITERIA)} suites rerun in {time.perf_counter() - t0:.1f}s"
    if mismatched:
        detail += f" | differing: {mismatched[:5]}"
    _emit(capsys, _line(12, "determinism", ok, detail))
    return ok, mismatched


def test_criterion_12_determinism(capsys):
    ok, mismatched = _determinism(capsys)
    assert ok, mismatched


if __name__ == "__main__":
    for n in sorted(CRITERIA):
        _check(n)
    _determinism()
