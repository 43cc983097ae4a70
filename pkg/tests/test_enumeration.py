import itertools
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from latgas.enumeration import (
    BoundaryError,
    BudgetExceeded,
    FugacityMap,
    PoleError,
    Torus,
    Window,
    anchor_box_window,
    boundary_forced_sites,
    box_window,
    canonical_counts,
    defect_counts,
    density,
    partition_function,
    partition_polynomial,
    tiled_window,
    truncated_correlation,
)
from latgas.lattice import builtin_model, covered_sites, footprint_at


def _ring_brute(L):
    out = [0] * (L // 2 + 1)
    for bits in range(1 << L):
        if all(not (bits >> i & 1 and bits >> ((i + 1) % L) & 1) for i in range(L)):
            out[bin(bits).count("1")] += 1
    return out


def test_ring_counts():
    md = builtin_model("monomer-dimer")
    assert canonical_counts(md, Torus(md.lattice, (4,))).coefficients == (1, 4, 2)
    assert canonical_counts(md, Torus(md.lattice, (6,))).coefficients == (1, 6, 9, 2)
    for L in range(3, 15):
        assert list(canonical_counts(md, Torus(md.lattice, (L,))).coefficients) == _ring_brute(L)


def test_empty_region():
    m = builtin_model("cross")
    assert canonical_counts(m, Window(m.lattice, frozenset())).coefficients == (1,)


def test_defect_counts():
    md = builtin_model("monomer-dimer")
    q = defect_counts(canonical_counts(md, Torus(md.lattice, (4,))))
    assert q == [2, 4, 1]
    q8 = defect_counts(canonical_counts(md, Torus(md.lattice, (8,))))
    assert q8[1] == 16 and q8[2] == 20 and q8[-1] == 1


def test_partition_values():
    md = builtin_model("monomer-dimer")
    ring = Torus(md.lattice, (4,))
    v, p = partition_polynomial(md, ring, FugacityMap(Fraction(3)))
    assert v == 1 + 12 + 18 and p.coefficients == (1, 4, 2)
    d = builtin_model("hyperdiamond-2d")
    assert partition_function(d, box_window(d.lattice, (4, 4)), FugacityMap(0)) == 1


@pytest.mark.parametrize("name,ext", [("hyperdiamond-2d", (4, 4)), ("hyperdiamond-2d", (6, 6)),
                                      ("hyperdiamond-2d", (5, 3)), ("cross", (5, 5)),
                                      ("hexagon", (3, 3)), ("hexagon", (6, 6)),
                                      ("poly-a", (4, 4))])
def test_transfer_matches_dfs(name, ext):
    m = builtin_model(name)
    for region in (Torus(m.lattice, ext), box_window(m.lattice, ext)):
        try:
            tm = canonical_counts(m, region, "transfer")
        except BoundaryError:
            continue
        assert tm.coefficients == canonical_counts(m, region, "dfs").coefficients


@settings(max_examples=25, deadline=None)
@given(st.sets(st.tuples(st.integers(0, 4), st.integers(0, 4)), min_size=1, max_size=14))
def test_weighted_sum_matches_counts(sites):
    m = builtin_model("hyperdiamond-2d")
    w = Window(m.lattice, frozenset(sites))
    p = canonical_counts(m, w, "dfs")
    assert partition_function(m, w, FugacityMap(Fraction(2))) == p.evaluate(Fraction(2))


def test_forced_sites(diamond):
    m, fam = diamond
    w = anchor_box_window(m, fam, 1, (4, 4), nu=1)
    forced, _ = boundary_forced_sites(m, w)
    assert len(forced) == 8
    single = tiled_window(m, fam, footprint_at(m, (0, 0)), nu=fam.label_of([(0, 0)])[0])
    assert boundary_forced_sites(m, single)[0] == [(0, 0)]
    with pytest.raises(BoundaryError):
        boundary_forced_sites(m, Torus(m.lattice, (4, 4)))


def test_fully_forced_window(diamond):
    m, fam = diamond
    w = anchor_box_window(m, fam, 1, (4, 4), nu=1)
    z = FugacityMap(Fraction(5, 3))
    assert partition_function(m, w, z) == Fraction(5, 3) ** 8


def test_budget(monkeypatch):
    monkeypatch.setenv("LATGAS_BUDGET", "10")
    m = builtin_model("hyperdiamond-2d")
    with pytest.raises(BudgetExceeded):
        canonical_counts(m, Torus(m.lattice, (8, 8)))


def test_pole():
    md = builtin_model("monomer-dimer")
    # a dimer on a 2-site free box: 1 + z vanishes at z = -1
    w = box_window(md.lattice, (2,))
    with pytest.raises(PoleError):
        density(md, w, FugacityMap(Fraction(-1)), (0,))


def _brute_density(md, L, z, sites):
    tot = Fraction(0)
    num = Fraction(0)
    for bits in range(1 << L):
        if any(bits >> i & 1 and bits >> ((i + 1) % L) & 1 for i in range(L)):
            continue
        w = z ** bin(bits).count("1")
        tot += w
        if all(bits >> s & 1 for s in sites):
            num += w
    return num / tot


def test_density_and_correlation():
    md = builtin_model("monomer-dimer")
    ring = Torus(md.lattice, (6,))
    z = Fraction(1)
    assert density(md, ring, FugacityMap(z), (0,)) == _brute_density(md, 6, z, [0])
    r2 = _brute_density(md, 6, z, [0, 3]) - _brute_density(md, 6, z, [0]) ** 2
    assert truncated_correlation(md, ring, FugacityMap(z), [(0,), (3,)]) == r2
