import pytest

from latgas.coverings import (
    CoveringError,
    certify_non_sliding,
    connected_configs,
    isolating_completions,
    perfect_coverings,
    sublattice_membership,
)
from latgas.lattice import ModelError, builtin_model, covered_sites, refine_mesh


def test_covering_counts():
    assert perfect_coverings(builtin_model("hyperdiamond-2d"), 4).tau == 2
    assert perfect_coverings(builtin_model("hexagon"), 6).tau == 3


def test_cross_membership(cross):
    _, fam = cross
    L1 = next(s for s in fam.sublattices if sublattice_membership(s, (0, 0))
              and sublattice_membership(s, (1, 2)))
    assert not sublattice_membership(L1, (1, 0))
    for s in fam.sublattices:
        assert all(sublattice_membership(s, o) for o in s.offsets)


def test_domino_is_unbounded():
    with pytest.raises(CoveringError) as exc:
        perfect_coverings(builtin_model("domino"), 8)
    assert exc.value.kind == "sliding"
    assert "unbounded covering family" in str(exc.value)


def test_no_covering():
    # a 3-cell L on a 2x2 block cannot be paired with the period bound 2
    m = builtin_model("hyperdiamond-2d")
    with pytest.raises(CoveringError) as exc:
        perfect_coverings(m, 1)
    assert exc.value.kind == "no covering"


def test_cross_completions():
    c = builtin_model("cross")
    single = isolating_completions(c, [(0, 0)])
    assert len(single) == 2
    assert isolating_completions(c, [(0, 0), (3, 0)]) == []
    assert len(isolating_completions(c, [(0, 0), (1, 2)])) == 1
    with pytest.raises(ModelError):
        isolating_completions(c, [(0, 0), (10, 0)])


def test_completions_live_in_one_covering(cross):
    c, fam = cross
    for Xp in isolating_completions(c, [(0, 0)]):
        assert len(fam.label_of(Xp)) == 1


def test_connected_configs_counts():
    for name in ("cross", "hyperdiamond-2d", "hexagon"):
        assert len(list(connected_configs(builtin_model(name), 1))) == 1
    # pairs up to negation: left-packed, right-packed and stacked, two orientations each
    assert len(list(connected_configs(builtin_model("cross"), 2))) == 6


def _brute_pairs(model):
    """Difference vectors with disjoint, touching footprints, modulo negation."""
    from latgas.lattice import footprint_at, touches
    r = 2 * model.reach + 2
    out = set()
    for dx in range(-r, r + 1):
        for dy in range(-r, r + 1):
            v = (dx, dy)
            if v == (0, 0) or v in model.exclusion:
                continue
            if touches(model.lattice, footprint_at(model, (0, 0)), footprint_at(model, v)):
                out.add(max(v, (-dx, -dy)))
    return out


@pytest.mark.parametrize("name", ["cross", "hyperdiamond-2d", "hexagon"])
def test_connected_pairs_match_brute_force(name):
    m = builtin_model(name)
    got = {max(c[1], tuple(-t for t in c[1])) for c in connected_configs(m, 2)}
    assert got == _brute_pairs(m)


def test_non_sliding_certificates(diamond):
    m, fam = diamond
    rep = certify_non_sliding(m, fam, 4)
    assert rep["passed"] and not rep["violations"]


def test_polyominoes_non_sliding():
    for name in ("poly-a", "poly-b", "poly-c", "poly-d"):
        m = builtin_model(name)
        fam = perfect_coverings(m, 10)
        rep = certify_non_sliding(m, fam, 2)
        assert rep["passed"], name


def test_refined_cross_coverings():
    m = refine_mesh(builtin_model("cross"), 2)
    assert len(m.footprint) == 20
    fam = perfect_coverings(m, 12)
    assert fam.tau == 40


def test_one_dimensional_rejected():
    m = builtin_model("monomer-dimer")
    fam = perfect_coverings(m, 4)
    with pytest.raises(ModelError):
        certify_non_sliding(m, fam, 2)
