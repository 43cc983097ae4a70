import json

import pytest
from hypothesis import given, strategies as st

from latgas.enumeration import Torus
from latgas.lattice import (
    LatticeKind,
    ModelError,
    builtin_model,
    compatible,
    covered_sites,
    empty_sites,
    footprint_at,
    graph_distance,
    load_model,
    model_from_json,
    refine_mesh,
)

sites2 = st.tuples(st.integers(-20, 20), st.integers(-20, 20))


def test_graph_distance_basics():
    sq = LatticeKind("hypercubic", 2)
    tri = LatticeKind("triangular", 2)
    assert graph_distance((3, 4), (3, 4), lattice=sq) == 0
    assert graph_distance((0, 0), (1, 1), lattice=sq) == 2
    for v in tri.neighbor_offsets:
        assert graph_distance((0, 0), v, lattice=tri) == 1


@given(sites2, sites2)
def test_square_distance_is_manhattan(a, b):
    sq = LatticeKind("hypercubic", 2)
    assert graph_distance(a, b, lattice=sq) == abs(a[0] - b[0]) + abs(a[1] - b[1])


@given(sites2, sites2, sites2)
def test_triangular_distance_triangle_inequality(a, b, c):
    tri = LatticeKind("triangular", 2)
    d = lambda p, q: graph_distance(p, q, lattice=tri)
    assert d(a, c) <= d(a, b) + d(b, c)
    assert d(a, b) == d(b, a)


def test_footprints():
    assert footprint_at(builtin_model("hyperdiamond-2d"), (0, 0)) == {(0, 0), (0, 1)}
    assert footprint_at(builtin_model("cross"), (0, 0)) == {(0, 0), (1, 0), (-1, 0), (0, 1), (0, -1)}


def test_compatibility():
    c = builtin_model("cross")
    d = builtin_model("hyperdiamond-2d")
    assert compatible(c, (0, 0), (2, 1))
    assert not compatible(c, (0, 0), (2, 0))
    assert not compatible(d, (0, 0), (1, 0))


@given(sites2)
def test_cross_compatibility_matches_overlap(delta):
    c = builtin_model("cross")
    overlap = bool(footprint_at(c, (0, 0)) & footprint_at(c, delta))
    assert compatible(c, (0, 0), delta) == (not overlap)


def test_empty_sites():
    m = builtin_model("hyperdiamond-2d")
    t = Torus(m.lattice, (4, 4))
    even = [x for x in t.all_sites() if (x[1] - x[0]) % 2 == 0]
    assert len(covered_sites(m, even)) == 16
    assert empty_sites(m, t, even) == set()
    assert empty_sites(m, t, []) == set(t.all_sites())
    assert empty_sites(m, t, even[1:]) == footprint_at(m, even[0])
    with pytest.raises(ModelError):
        empty_sites(m, t, [(0, 0), (1, 0)])


def test_refine_mesh():
    c = builtin_model("cross")
    assert refine_mesh(c, 1) is c
    assert len(refine_mesh(c, 2).footprint) == 20
    with pytest.raises(ModelError):
        refine_mesh(c, 0)


def test_model_schema_names_field(tmp_path):
    with pytest.raises(ModelError, match="lattice"):
        model_from_json({"footprint": [[0, 0]]})
    with pytest.raises(ModelError, match="footprint"):
        model_from_json({"lattice": {"kind": "hypercubic"}, "footprint": []})
    f = tmp_path / "m.json"
    f.write_text(json.dumps({"name": "mono", "lattice": {"kind": "hypercubic", "dimension": 2},
                             "footprint": [[0, 0]]}))
    assert load_model(str(f)).footprint == ((0, 0),)
