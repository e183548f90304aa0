import json
import subprocess
import sys

import numpy as np
import pytest

from vhardy.cli import main
from vhardy.decomposition import synthesize_atom
from vhardy.exponent import make_exponent
from vhardy.experiments import ConfigError, config_hash, validate_config
from vhardy.grid import Ball, GridFunction, GridSpec, write_vgf


def _cfg(tmp_path, data, name="c.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


def test_run_passing_suite(tmp_path, capsys):
    cfg = _cfg(tmp_path, {"experiment": "weaknorm", "functions": 10})
    assert main(["run", cfg, "--out", str(tmp_path / "o")]) == 0
    lines = (tmp_path / "o" / "weaknorm.csv").read_text().splitlines()
    h = validate_config({"experiment": "weaknorm", "functions": 10})
    assert all(line.startswith(config_hash(h)) for line in lines[1:])


def test_subcommand_seed_override_changes_hash(tmp_path):
    assert main(["norm", "--seed", "3", "--out", str(tmp_path / "a")]) in (0, 1)
    assert main(["norm", "--seed", "4", "--out", str(tmp_path / "b")]) in (0, 1)
    a = (tmp_path / "a" / "norm.csv").read_text().splitlines()[1].split(",")[0]
    b = (tmp_path / "b" / "norm.csv").read_text().splitlines()[1].split(",")[0]
    assert a != b


@pytest.mark.parametrize("bad,path", [
    ({"experiment": "norm", "tolerances": {"modular": -1}}, "$.tolerances.modular"),
    ({"experiment": "nope"}, "$.experiment"),
    ({}, "$.experiment"),
    ({"experiment": "norm", "grid": {"dim": 1, "half_width": 4.0, "points": 100}},
     "$.grid.points"),
    ({"experiment": "norm", "colour": 1}, "$.colour"),
    ({"experiment": "axioms", "exponents": [{"kind": "affine", "p0": -1, "p1": 1}]},
     "$.exponents[0]"),
    ({"experiment": "lp", "seed": -2}, "$.seed"),
])
def test_schema_violations_exit_2(tmp_path, capsys, bad, path):
    assert main(["run", _cfg(tmp_path, bad)]) == 2
    assert path in capsys.readouterr().err
    with pytest.raises(ConfigError):
        validate_config(bad)


def test_malformed_json_exit_2(tmp_path, capsys):
    p = tmp_path / "x.json"
    p.write_text("{not json")
    assert main(["run", str(p)]) == 2


def test_adversarial_kernel_exit_1(tmp_path, capsys):
    cfg = _cfg(tmp_path, {"experiment": "czop", "kernel": "oscillating"})
    assert main(["run", cfg, "--out", str(tmp_path / "o")]) == 1
    err = capsys.readouterr().err
    assert "kernel-regularity" in err
    summary = (tmp_path / "o" / "czop_summary.csv").read_text()
    assert "regularity_constants" in summary and "FAIL" in summary


def test_identical_runs_are_byte_identical(tmp_path):
    cfg = _cfg(tmp_path, {"experiment": "maximal", "balls": 4, "oracle_functions": 2})
    for d in ("a", "b"):
        assert main(["run", cfg, "--out", str(tmp_path / d)]) == 0
    for name in ("maximal.csv", "maximal_summary.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_verify_atom_and_molecule(tmp_path, capsys):
    g = GridSpec(1, 16.0, 512)
    p = make_exponent(0.5, g)
    a = synthesize_atom(g, Ball((0.0,), 0.5), p, rng=np.random.default_rng(0))
    write_vgf(tmp_path / "a.vgf", a.samples)
    args = ["verify", "--kind", "atom", "--input", str(tmp_path / "a.vgf"), "--center", "0",
            "--radius", "0.5", "--exponent", "0.5"]
    assert main(args) == 0
    assert "True" in capsys.readouterr().out
    write_vgf(tmp_path / "b.vgf", GridFunction(g, a.samples.samples + 1e-3 * (np.abs(g.axis()) < 0.5)))
    args[4] = str(tmp_path / "b.vgf")
    assert main(args) == 1
    assert main(["verify", "--kind", "molecule", "--input", str(tmp_path / "a.vgf"),
                 "--center", "0", "--radius", "0.5", "--exponent", "0.5", "--eps", "12"]) == 0
    assert main(["verify", "--kind", "molecule", "--input", str(tmp_path / "a.vgf"),
                 "--center", "0", "--radius", "0.5", "--exponent", "0.5"]) == 2


def test_console_script_installed(tmp_path):
    out = subprocess.run([sys.executable, "-m", "vhardy.cli", "--help"], capture_output=True,
                         text=True)
    assert out.returncode == 0 and "equiv-report" in out.stdout
