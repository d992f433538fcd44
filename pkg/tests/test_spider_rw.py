import math
from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, settings

from spiderchain.errors import DegenerateDirection, HypothesisViolated, OutOfSupport, ZeroInSupport
from spiderchain.km_spectral import eval_matrix_polys, km_block
from spiderchain.oracle import power_block
from spiderchain.quadrature import integrate, total_mass
from spiderchain.spider_rw import (
    Recurrence,
    RWParams,
    recurrence_diagnostic,
    rw_atoms,
    rw_classify,
    rw_density,
    rw_m_minus1,
    rw_polys,
    rw_stieltjes,
    rw_stieltjes_rationalized,
    rw_thresholds,
    rw_weight,
    second_atom_location,
    support,
)
from spiderchain.stieltjes import cf_limit, stieltjes_weight

from conftest import constant_walks

SYMMETRIC = RWParams(2, F(1, 4), F(1, 2), F(1, 4), (F(1, 2), F(1, 4), F(1, 4)))
TRANSIENT = RWParams(2, F(3, 10), F(1, 2), F(1, 5), (F(1, 2), F(1, 4), F(1, 4)))


def residue(params, point, radius, points=4096):
    """Mass of the atom at ``point``: minus the contour average of (z - point) B(z)."""
    theta = 2 * np.pi * (np.arange(points) + 0.5) / points
    z = point + radius * np.exp(1j * theta)
    vals = np.array([(zz - point) * rw_stieltjes_rationalized(params, zz) for zz in z])
    return -vals.mean(axis=0).real


def test_support_examples(rw3):
    assert support(SYMMETRIC) == (0.0, 1.0)
    lo, hi = support(rw3)
    assert abs(lo - 0.1027864) < 1e-7 and abs(hi - 0.9972136) < 1e-7
    lo, hi = support(RWParams(1, 0.3, 0.4, 0.3, (0.5, 0.5)))
    assert hi == 1.0 and lo < hi


def test_transform_at_zero_is_m_minus1(rw3, weight3):
    M = rw_m_minus1(rw3)
    np.testing.assert_allclose(M, rw_stieltjes(rw3, 0.0), atol=1e-12)
    np.testing.assert_allclose(M, stieltjes_weight(weight3, 0.0), atol=1e-8)
    np.testing.assert_allclose(M, M.T, atol=1e-15)


def test_m_minus1_needs_zero_outside_support():
    with pytest.raises(ZeroInSupport):
        rw_m_minus1(SYMMETRIC)


def test_density_examples(rw3):
    lo, hi = support(rw3)
    W = rw_density(rw3, 0.5)
    np.testing.assert_allclose(W, W.T, atol=1e-15)
    assert np.linalg.eigvalsh(W).min() >= -1e-12
    assert np.abs(rw_density(rw3, hi)).max() == 0.0
    # square-root vanishing at the edge
    near, nearer = rw_density(rw3, hi - 1e-8), rw_density(rw3, hi - 1e-12)
    np.testing.assert_allclose(nearer, near / 100, rtol=1e-3)
    with pytest.raises(OutOfSupport):
        rw_density(rw3, 0.05)


def test_density_is_positive_semidefinite(rw3):
    lo, hi = support(rw3)
    for x in np.linspace(lo, hi, 101)[1:-1]:
        W = rw_density(rw3, x)
        assert np.linalg.eigvalsh(W).min() >= -1e-12 * max(1.0, np.abs(W).max())


def test_first_diagonal_total_mass(weight3):
    assert abs(total_mass(weight3)[0, 0] - 1.0) < 1e-9


def test_atoms_of_the_example(rw3):
    rep = rw_atoms(rw3)
    assert rep.at_one.location == 1.0
    assert abs(rep.at_one.coefficient - 1 / 11) < 1e-15
    assert abs(rep.at_z2.location - 1 / 12) < 1e-15
    # the coefficient of the z2 atom is 8/33 (see the residue check below)
    assert abs(rep.at_z2.coefficient - 8 / 33) < 1e-15
    np.testing.assert_allclose(rep.at_z2.direction, [-1, 5 / 6, 5 / 6])


def test_atom_masses_are_residues(rw3):
    rep = rw_atoms(rw3)
    np.testing.assert_allclose(residue(rw3, 1 / 12, 0.01), rep.at_z2.mass, atol=1e-10)
    # atom at 1 sits beyond the support edge at 0.9972
    np.testing.assert_allclose(residue(rw3, 1.0, 0.002), rep.at_one.mass, atol=1e-10)


@settings(max_examples=30, deadline=None)
@given(constant_walks())
def test_atom_masses_match_residues(rw):
    rep = rw_atoms(rw, strict=False)
    lo, hi = support(rw)
    for atom in rep.atoms:
        gap = min(abs(atom.location - lo), abs(atom.location - hi))
        others = [abs(atom.location - o.location) for o in rep.atoms if o is not atom]
        radius = 0.5 * min([gap] + others)
        if radius < 1e-3:
            continue
        np.testing.assert_allclose(residue(rw, atom.location, radius), atom.mass, atol=1e-8)
        assert np.linalg.eigvalsh(atom.mass).min() >= -1e-12
        assert 0.0 <= atom.coefficient <= 1.0


def test_no_atoms_when_transient_and_small_gap():
    rep = rw_atoms(TRANSIENT)
    assert (1 - 0.5 - 0.3) ** 2 <= 0.3 * 0.2
    assert rep.atoms == ()


def test_no_atom_at_one_when_null():
    assert rw_atoms(SYMMETRIC).at_one is None


def test_degenerate_direction():
    params = RWParams(2, F(1, 5), F(11, 20), F(1, 4), (F(4, 5), F(1, 10), F(1, 10)))
    with pytest.raises(DegenerateDirection):
        rw_atoms(params)
    assert rw_atoms(params, strict=False).at_z2 is None


def test_second_atom_location(rw3):
    assert abs(second_atom_location(rw3) - 1 / 12) < 1e-15


def test_poly_examples(rw3, chain3):
    x = np.linspace(-1, 1, 5)
    np.testing.assert_array_equal(rw_polys(rw3, 0, x)[0], np.broadcast_to(np.eye(3), (5, 3, 3)))
    assert abs(rw_polys(rw3, 1, 0.55)[1][1, 1]) < 1e-15
    np.testing.assert_allclose(rw_polys(rw3, 12, x), eval_matrix_polys(chain3, 12, x), rtol=1e-12, atol=1e-12)


def test_classification_examples(rw3):
    assert rw_classify(rw3) is Recurrence.POSITIVE_RECURRENT
    assert rw_classify(SYMMETRIC) is Recurrence.NULL_RECURRENT
    assert rw_classify(RWParams(2, 0.3, 0.5, 0.2, (0.5, 0.25, 0.25))) is Recurrence.TRANSIENT
    assert rw_classify(RWParams(2, 0.25, 0.5, 0.25 + 1e-15, (0.5, 0.25, 0.25))) is Recurrence.NULL_RECURRENT
    assert rw_classify(RWParams(2, F(1, 4), F(1, 2), F(1, 4) + F(1, 10**20), (0.5, 0.25, 0.25))) is Recurrence.POSITIVE_RECURRENT


@settings(max_examples=60, deadline=None)
@given(constant_walks())
def test_positive_recurrence_iff_atom_at_one(rw):
    positive = rw_classify(rw) is Recurrence.POSITIVE_RECURRENT
    assert positive == (rw_atoms(rw, strict=False).at_one is not None)


def test_recurrence_diagnostic_tracks_classification(rw3):
    assert recurrence_diagnostic(rw3)["divergent"]
    assert recurrence_diagnostic(SYMMETRIC)["divergent"]
    assert not recurrence_diagnostic(TRANSIENT)["divergent"]


def test_threshold_examples(rw3, chain3):
    th = rw_thresholds(rw3)
    printed = ((19 - math.sqrt(41)) / 64, (19 - math.sqrt(41)) / 48, (95 - 5 * math.sqrt(41)) / 192)
    assert th.method == "closed_form" and th.feasible
    for got, expect, leg in zip(th.values, printed, (1, 2, 3)):
        assert abs(got - expect) < 1e-12
        assert abs(got - cf_limit(chain3, leg).value) < 1e-12


def test_threshold_at_zero_discriminant():
    # a = (1 - sqrt(c))^2 with c = 4/25
    params = RWParams(2, F(9, 25), F(12, 25), F(4, 25), (F(1, 2), F(1, 4), F(1, 4)))
    th = rw_thresholds(params)
    assert th.method == "closed_form"
    for m, value in enumerate(th.values, start=1):
        assert abs(value - float(params.alpha[m]) * (1 + 9 / 25 - 4 / 25) / (2 * 9 / 25)) < 1e-15


def test_threshold_fallback_reports_failed_hypothesis():
    with pytest.raises(HypothesisViolated):
        rw_thresholds(RWParams(2, 0.4, 0.4, 0.2, (0.5, 0.25, 0.25)))


def test_infeasible_alpha0(rw3):
    a, c = 0.2, 0.25
    bound = (1 - a + c - math.sqrt((1 + c - a) ** 2 - 4 * c)) / 2
    a0 = bound - 0.05
    rest = (1 - a0) / 3
    th = rw_thresholds(RWParams(3, a, 1 - a - c, c, (a0, rest, rest, rest)))
    assert not th.feasible and sum(th.values) >= 1


@settings(max_examples=40, deadline=None)
@given(constant_walks())
def test_total_mass_is_inverse_potential(rw):
    expect = np.diag([1.0] + [rw.rates[2] / a for a in rw.alphas[1:rw.N]])
    np.testing.assert_allclose(total_mass(rw_weight(rw)), expect, atol=1e-8)


@settings(max_examples=8, deadline=None)
@given(constant_walks(max_legs=3))
def test_km_reproduces_matrix_powers(rw):
    chain = rw.chain()
    W = rw_weight(rw)
    for i, j, n in ((0, 0, 3), (1, 2, 5), (2, 0, 4), (0, 1, 1)):
        got = km_block(chain, W, i, j, n)
        np.testing.assert_allclose(got, power_block(chain, max(i, j) + n + 1, n, i, j), atol=1e-8)
