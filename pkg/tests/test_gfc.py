import itertools
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from latgas.enumeration import FugacityMap, anchor_box_window
from latgas.gfc import (
    GFc,
    BZParams,
    IncompleteEnumeration,
    bulk_c_k,
    bulk_gfcs,
    bz_certificate,
    check_gfc,
    compute_N,
    enumerate_gfcs,
    enumerate_gfcs_by_support,
    extract_gfcs,
    extraction_completeness,
    gfc_activity,
    hole_decomposition,
    truncated_cluster_log,
    ursell,
    ursell_bruteforce,
    verify_gfc_identity,
)
from latgas.lattice import LatticeKind, ModelError, builtin_model

SQ = LatticeKind("hypercubic", 2)


def _tiles(window, family, label):
    L = family.sublattice(label)
    return sorted(x for x in window.sites if L.contains(x))


def test_extraction(diamond):
    m, fam = diamond
    w = anchor_box_window(m, fam, 1, (10, 10), nu=1)
    X = _tiles(w, fam, 1)
    assert extract_gfcs(m, fam, w, X) == []
    one = extract_gfcs(m, fam, w, [x for x in X if x != (5, 5)])
    assert len(one) == 1
    g = one[0]
    assert g.size == 14 and len(g.particles) == 6 and not g.holes
    assert check_gfc(m, fam, g) is None
    assert gfc_activity(m, fam, g, FugacityMap(Fraction(3))) == Fraction(1, 3)
    two = extract_gfcs(m, fam, w, [x for x in X if x not in ((3, 3), (7, 7))])
    assert sorted(g.size for g in two) == [14, 14]


def test_hole_decomposition():
    disk = {(x, y) for x in range(3) for y in range(3)}
    assert hole_decomposition(SQ, disk)[1] == []
    ring = {(x, y) for x in range(5) for y in range(5)} - {(x, y) for x in (1, 2, 3) for y in (1, 2, 3)}
    assert len(hole_decomposition(SQ, ring)[1]) == 1
    ambient = {(x, y) for x in range(-1, 4) for y in range(-1, 4)}
    with pytest.raises(ModelError, match="margin"):
        hole_decomposition(SQ, disk, ambient=ambient)


def _gfc(*sites):
    return GFc(frozenset(sites), frozenset(), 1)


def test_ursell_small_cases():
    a, b, c = _gfc((0, 0)), _gfc((1, 0)), _gfc((2, 0))
    far = _gfc((10, 10))
    assert ursell([a], SQ) == 1
    assert ursell([a, far], SQ) == 0
    assert ursell([a, b], SQ) == -1
    assert ursell([a, b, c], SQ) == 1
    # a repeated element is incompatible with itself
    assert ursell([a, a], SQ) == Fraction(-1, 2)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3)), min_size=1, max_size=5))
def test_ursell_matches_bruteforce(points):
    items = [_gfc(p) for p in points]
    assert ursell(items, SQ) == ursell_bruteforce(items, SQ)


def test_window_oracle_small(diamond):
    m, fam = diamond
    w = anchor_box_window(m, fam, 1, (4, 4), nu=2)
    assert enumerate_gfcs(m, fam, w, 2) == enumerate_gfcs_by_support(m, fam, w, 16) == []


@pytest.mark.slow
def test_window_oracle_vacancy(diamond):
    m, fam = diamond
    w = anchor_box_window(m, fam, 1, (5, 5), nu=2)
    fast = enumerate_gfcs(m, fam, w, 2)
    assert [g.size for g in fast] == [14]
    assert [g.key() for g in enumerate_gfcs_by_support(m, fam, w, 16)] == [g.key() for g in fast]
    assert enumerate_gfcs(m, fam, w, 2, size_cutoff=13) == []


@pytest.mark.parametrize("mu,nu,ext", [(1, 2, (6, 6)), (2, 1, (6, 6))])
def test_extraction_completeness(diamond, mu, nu, ext):
    m, fam = diamond
    w = anchor_box_window(m, fam, mu, ext, nu=nu)
    gfcs = enumerate_gfcs(m, fam, w, nu)
    rep = extraction_completeness(m, fam, w, gfcs)
    assert rep["complete"] and rep["extracted"] == rep["enumerated"]


def test_identity_and_refusal(diamond):
    m, fam = diamond
    w = anchor_box_window(m, fam, 1, (5, 5), nu=2)
    for z in (Fraction(3), Fraction(7, 2), Fraction(100)):
        r = verify_gfc_identity(m, fam, w, z)
        assert r["passed"] and r["lhs"] == r["rhs"]
    with pytest.raises(IncompleteEnumeration):
        verify_gfc_identity(m, fam, w, 3, size_cutoff=5)
    rigid = anchor_box_window(m, fam, 1, (4, 4), nu=1)
    r = verify_gfc_identity(m, fam, rigid, 3)
    assert r["lhs"] == r["rhs"] == 1 and r["gfcs"] == 0


def test_truncated_cluster_log(diamond):
    m, fam = diamond
    w = anchor_box_window(m, fam, 2, (6, 6), nu=1)
    r0 = truncated_cluster_log(m, fam, w, 100, 0)
    assert r0["truncated"] == 0.0
    r = truncated_cluster_log(m, fam, w, 100, 3)
    assert r["monotone"] and r["errors_by_order"][-1] < r["errors_by_order"][0]


def test_bulk_generator(diamond):
    m, fam = diamond
    vac = bulk_gfcs(m, fam, 1, 2)
    assert [g.size for g in vac] == [14]
    assert all(check_gfc(m, fam, g) is None for g in bulk_gfcs(m, fam, 1, 4))
    assert len(bulk_gfcs(m, fam, 1, 4)) == 19


def test_bulk_c3_matches_torus(diamond):
    m, fam = diamond
    assert bulk_c_k(m, fam, 1, 3)["coefficients"] == [Fraction(1, 2), Fraction(-1, 4), Fraction(2, 3)]


def test_certificate(diamond):
    m, fam = diamond
    assert compute_N(m) == 8
    p = BZParams.for_model(m)
    assert p.chi == 4 and p.rho_m == Fraction(1, 2)
    low = bz_certificate(m, fam, 1, 1, p, 20)
    assert not low["passed"] and low["delta"] >= 1
    high = bz_certificate(m, fam, 1, 10 ** 40, p, 20)
    assert high["passed"] and high["min_margin_sum"] > 0
    with pytest.raises(ValueError):
        BZParams(Fraction(1, 2), Fraction(1, 2), 8, 4, Fraction(1, 2))
