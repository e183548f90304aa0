import csv

import numpy as np
import pytest

from vhardy.banks import band_limited_noise, bank_generate, wave_packet
from vhardy.decomposition import (Atom, AtomicDecomposition, DecompositionEntry, Molecule,
                                  annuli, atomic_decompose, decomposition_weak_norm, moments,
                                  molecule_split, reconstruct, atom_sum_bound_check,
                                  synthesize_atom, synthesize_molecule, verify_atom,
                                  verify_molecule, write_manifest)
from vhardy.exponent import make_exponent
from vhardy.grid import Ball, DyadicCube, GridFunction, GridSpec, read_vgf
from vhardy.lp import make_admissible_profile
from vhardy.norms import indicator_norm

VAR = {"kind": "smooth", "p0": 0.5, "p1": 0.9, "x0": -2, "x1": 2}


def test_synthesized_atoms_verify(g1, rng):
    p = make_exponent(VAR, g1)
    for c in (-1.0, 0.0, 1.3):
        a = synthesize_atom(g1, Ball((c,), 0.5), p, rng=rng)
        rep = verify_atom(a, p, c_slack=1.0)
        assert rep.passed, rep
        assert rep.size_ratio == pytest.approx(0.9)


def test_verifier_catches_each_violation(g1, rng):
    p = make_exponent(0.5, g1)
    ball = Ball((0.0,), 0.5)
    a = synthesize_atom(g1, ball, p, rng=rng)
    base = a.samples.samples
    # moment violation
    shifted = base + 0.01 * np.abs(base).max() * ball.indicator(g1).samples
    rep = verify_atom(Atom(GridFunction(g1, shifted), ball, a.q, a.s), p)
    assert not rep.moments_ok and not rep.passed
    # support violation
    leak = base.copy()
    leak[np.argmax(g1.axis() > 2)] = 1e-3
    rep = verify_atom(Atom(GridFunction(g1, leak), ball, a.q, a.s), p)
    assert not rep.support_ok and rep.support_excess == pytest.approx(1e-3)
    # size violation
    rep = verify_atom(Atom(GridFunction(g1, 2 * base), ball, a.q, a.s), p, c_slack=1.0)
    assert not rep.size_ok and rep.size_ratio == pytest.approx(1.8)


def test_moments_of_symmetric_function(g1):
    ball = Ball((0.0,), 1.0)
    even = ball.indicator(g1).samples * (1 - g1.axis() ** 2)
    m = moments(even, g1, ball, 3)
    assert abs(m[1]) < 1e-14 and abs(m[3]) < 1e-14 and m[0] > 0


def test_annuli_partition_box(g1):
    us = annuli(g1, Ball((0.3,), 0.25))
    total = np.sum(us, axis=0)
    assert np.all(total == 1)


def test_synthesized_molecules_verify(g1, rng):
    p = make_exponent(VAR, g1)
    for _ in range(3):
        m = synthesize_molecule(g1, Ball((rng.uniform(-1, 1),), 0.2), p, rng=rng)
        assert verify_molecule(m, p).passed


@pytest.mark.parametrize("seed", [0, 1, 2, 3])
def test_molecule_split_identity(g1, seed):
    p = make_exponent(VAR, g1)
    rng = np.random.default_rng(seed)
    m = synthesize_molecule(g1, Ball((rng.uniform(-1, 1),), float(rng.uniform(0.125, 0.25))),
                            p, rng=rng)
    sp = molecule_split(m, p)
    ref = m.samples.samples
    assert np.abs(sp.sum() - ref).max() <= 1e-8 * np.abs(ref).max()
    assert sp.projection_moment_residual <= 1e-9
    assert all(r.passed for r in sp.reports)


def test_atom_as_molecule_returns_itself(g1, rng):
    p = make_exponent(VAR, g1)
    ball = Ball((0.0,), 0.25)
    a = synthesize_atom(g1, ball, p, rng=rng)
    sp = molecule_split(Molecule(a.samples, ball, a.q, a.s, 12.0), p)
    peak = np.abs(a.samples.samples).max()
    assert max(sp.projection_norms) <= 1e-10 * peak
    k0 = sp.labels.index(("k", 0))
    np.testing.assert_allclose(sp.coefficients[k0] * sp.atoms[k0].samples.samples,
                               a.samples.samples, atol=1e-12 * peak)


def test_molecule_tail_budget_guard(g1, rng):
    p = make_exponent(VAR, g1)
    ball = Ball((0.0,), 2.0)
    a = synthesize_atom(g1, ball, p, rng=rng)
    with pytest.raises(ValueError):
        molecule_split(Molecule(a.samples, ball, a.q, a.s, 0.5), p)


def test_bank_atoms_deterministic_with_vanishing_integral(g1):
    p = make_exponent(VAR, g1)
    spec = {"kind": "atoms", "size": 5, "q": 2.0}
    b1 = bank_generate(spec, 7, g1, p)
    b2 = bank_generate(spec, 7, g1, p)
    for (i1, f1), (i2, f2) in zip(b1, b2):
        assert i1 == i2 and np.array_equal(f1.samples, f2.samples)
        v = f1.samples
        assert abs(v.sum()) <= 1e-10 * np.abs(v).sum()


def test_single_entry_weak_norm(g1):
    p = make_exponent(2.0, g1)
    ball = Ball((0.0,), 1.0)
    a = Atom(ball.indicator(g1), ball, 2.0, 0)
    d = AtomicDecomposition(g1, [DecompositionEntry(0, 0, 1.0, a, DyadicCube(4, (8,), 2.0))],
                            {}, {}, [])
    assert decomposition_weak_norm(d, p) == pytest.approx(ball.measure(g1) ** 0.5)
    assert decomposition_weak_norm(d, p) == pytest.approx(indicator_norm(ball.mask(g1), p))


@pytest.fixture(scope="module")
def decomp_setup():
    g = GridSpec(1, 16.0, 1024)
    p = make_exponent(0.5, g)
    return g, p, make_admissible_profile(0.5, g)


def test_atomic_decomposition_packet(decomp_setup):
    g, p, phi = decomp_setup
    f = wave_packet(g, [0.2], 0.7, [1.5], 0.3)
    d = atomic_decompose(f, p, phi, (-2, 4))
    assert len(d) > 0
    assert all(r.passed for r in d.reports)
    assert d.tent_max_visits == 1
    err = np.linalg.norm(reconstruct(d).samples - f.samples) / np.linalg.norm(f.samples)
    assert err <= 1e-2
    # linear in the input: the decomposition of 3f is the decomposition of f rescaled
    d3 = atomic_decompose(3.0 * f, p, phi, (-2, 4))
    err3 = np.linalg.norm(reconstruct(d3).samples - 3 * f.samples) / np.linalg.norm(3 * f.samples)
    assert err3 <= 1e-2


def test_atomic_decomposition_noise(decomp_setup):
    g, p, phi = decomp_setup
    f = band_limited_noise(g, np.random.default_rng(8), band=(1.0, 2.0), extent=2.0)
    d = atomic_decompose(f, p, phi, (-2, 4))
    assert all(r.passed for r in d.reports) and d.tent_max_visits == 1
    assert decomposition_weak_norm(d, p) > 0


def test_out_of_band_input_rejected(decomp_setup):
    g, p, phi = decomp_setup
    x = g.axis()
    f = GridFunction(g, np.exp(-(x / 4) ** 2))  # mostly below the ladder band
    with pytest.raises(ValueError):
        atomic_decompose(f, p, phi, (-2, 4))


def test_manifest_roundtrip(decomp_setup, tmp_path):
    g, p, phi = decomp_setup
    f = wave_packet(g, [0.0], 0.6, [1.5])
    d = atomic_decompose(f, p, phi, (-2, 4))
    path = write_manifest(d, tmp_path)
    rows = list(csv.DictReader(open(path)))
    assert len(rows) == len(d)
    total = sum(float(r["lambda"]) * read_vgf(tmp_path / r["file"]).samples for r in rows)
    assert np.allclose(total, reconstruct(d).samples, atol=1e-14)


def test_atom_sum_bound(g1, rng):
    p = make_exponent(VAR, g1)
    balls, coefs, fs = [], [], []
    for _ in range(6):
        b = Ball((rng.uniform(-3, 3),), rng.uniform(0.2, 1.0))
        a = synthesize_atom(g1, b, p, rng=rng)
        v = a.samples.samples
        meas = b.measure(g1)
        fs.append(v / (np.sqrt((v ** 2).sum() * g1.spacing) / meas ** 0.5))
        balls.append(b)
        coefs.append(rng.uniform(0.5, 2))
    out = atom_sum_bound_check(balls, coefs, fs, 0.5, p, 2.0)
    assert out["size_ok"] and np.isfinite(out["ratio"]) and out["ratio"] > 0
    with pytest.raises(ValueError):
        atom_sum_bound_check(balls, coefs, fs, 0.9, p, 2.0)
