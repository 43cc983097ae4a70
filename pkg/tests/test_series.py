from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from latgas.enumeration import Torus, canonical_counts
from latgas.lattice import builtin_model
from latgas.series import (
    composition_log,
    exp_series,
    gaunt_fisher_coefficients,
    log_series,
    mayer_coefficients,
    stabilization_report,
)


def test_log_series_examples():
    assert log_series([1, 1], 3) == [1, Fraction(-1, 2), Fraction(1, 3)]
    assert log_series([1, 2, 1], 3) == [2, -1, Fraction(2, 3)]
    assert log_series([1, 2, Fraction(1, 2)], 2) == [2, Fraction(-3, 2)]
    with pytest.raises(ValueError):
        log_series([2, 1], 2)


@given(st.lists(st.fractions(max_denominator=20).filter(lambda f: abs(f) < 50), min_size=1, max_size=6))
def test_log_exp_roundtrip(tail):
    a = [Fraction(1)] + tail
    K = len(tail)
    ell = log_series(a, K)
    assert ell == composition_log(a, K)
    assert exp_series(ell, K) == a


def test_monomer_dimer_gf():
    md = builtin_model("monomer-dimer")
    for L in (4, 6, 8, 10, 12):
        p = canonical_counts(md, Torus(md.lattice, (L,)))
        c = gaunt_fisher_coefficients(p.defect_counts(), 2, L, 2)
        assert c[1] == Fraction(L, 8)
    p4 = canonical_counts(md, Torus(md.lattice, (4,)))
    assert gaunt_fisher_coefficients(p4.defect_counts(), 2, 4, 2)[2] == Fraction(-3, 8)


def test_mayer_ring():
    md = builtin_model("monomer-dimer")
    p = canonical_counts(md, Torus(md.lattice, (4,)))
    # log(1 + 4z + 2z^2) = 4z - 6z^2 + ...
    b = mayer_coefficients(p, 2)
    assert b[1] == 1 and b[2] == Fraction(-6, 4)


def test_stabilization():
    md = builtin_model("monomer-dimer")
    regions = [Torus(md.lattice, (L,)) for L in (4, 6, 8, 10, 12)]
    rep = stabilization_report(md, regions, "gaunt_fisher_c", 1, tau=2)
    assert rep["stabilization"][1]["verdict"] == "diverging"
    assert abs(rep["stabilization"][1]["growth_exponent"] - 1) < 1e-9
    with pytest.raises(ValueError):
        stabilization_report(md, regions[:2], "mayer_b", 1)


def test_diamond_torus_stabilizes():
    d = builtin_model("hyperdiamond-2d")
    regions = [Torus(d.lattice, (L, L)) for L in (4, 6, 8)]
    rep = stabilization_report(d, regions, "gaunt_fisher_c", 2, tau=2)
    assert rep["stabilization"][1] == {"verdict": "stable", "value": "1/2", "first_stable_volume": 16}
    assert rep["stabilization"][2]["value"] == "-1/4"
