"""Lattice geometry and hard-core model definitions.

A model is a lattice plus a particle footprint (the sites covered by a
particle, relative to its anchor) and an explicit exclusion set (the anchor
differences that are forbidden).  Sites are plain integer tuples.
"""

from __future__ import annotations

import itertools
import json
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Optional

import jsonschema

Site = tuple


class ModelError(ValueError):
    """Raised for malformed models or invalid configurations."""


@dataclass(frozen=True)
class LatticeKind:
    kind: str = "hypercubic"
    dim: int = 2

    def __post_init__(self):
        if self.kind not in ("hypercubic", "triangular"):
            raise ModelError(f"lattice.kind: unknown lattice kind {self.kind!r}")
        if self.kind == "triangular" and self.dim != 2:
            raise ModelError("lattice.dimension: triangular lattice is 2-dimensional")
        if self.dim < 1:
            raise ModelError("lattice.dimension: must be >= 1")

    @property
    def neighbor_offsets(self) -> tuple:
        if self.kind == "triangular":
            return ((1, 0), (-1, 0), (0, 1), (0, -1), (1, -1), (-1, 1))
        offs = []
        for i in range(self.dim):
            for s in (1, -1):
                v = [0] * self.dim
                v[i] = s
                offs.append(tuple(v))
        return tuple(offs)

    @property
    def coordination(self) -> int:
        return len(self.neighbor_offsets)

    def distance(self, delta) -> int:
        """Graph distance of a displacement on the infinite lattice."""
        if self.kind == "triangular":
            dq, dr = delta
            return (abs(dq) + abs(dr) + abs(dq + dr)) // 2
        return sum(abs(c) for c in delta)

    def neighbors(self, site):
        for v in self.neighbor_offsets:
            yield add(site, v)

    def point_group(self):
        """Integer matrices (as tuples of rows) of the lattice point symmetries."""
        if self.kind == "triangular":
            # rotation by 60 degrees and a reflection, in axial coordinates
            rot = ((0, -1), (1, 1))
            ref = ((0, 1), (1, 0))
            mats = []
            m = ((1, 0), (0, 1))
            for _ in range(6):
                mats.append(m)
                mats.append(_matmul(m, ref))
                m = _matmul(rot, m)
            return list(dict.fromkeys(mats))
        d = self.dim
        mats = []
        for perm in itertools.permutations(range(d)):
            for signs in itertools.product((1, -1), repeat=d):
                rows = []
                for i in range(d):
                    row = [0] * d
                    row[perm[i]] = signs[i]
                    rows.append(tuple(row))
                mats.append(tuple(rows))
        return mats


def _matmul(a, b):
    n = len(a)
    return tuple(
        tuple(sum(a[i][k] * b[k][j] for k in range(n)) for j in range(n)) for i in range(n)
    )


def apply_matrix(m, v):
    return tuple(sum(r[k] * v[k] for k in range(len(v))) for r in m)


def add(a, b):
    return tuple(x + y for x, y in zip(a, b))


def sub(a, b):
    return tuple(x - y for x, y in zip(a, b))


def neg(a):
    return tuple(-x for x in a)


def scale(a, m):
    return tuple(m * x for x in a)


def difference_set(offsets) -> frozenset:
    return frozenset(sub(s, t) for s in offsets for t in offsets)


@dataclass(frozen=True)
class ModelSpec:
    """A hard-core lattice particle model.

    ``exclusion`` holds every anchor difference ``x - x'`` for which two
    particles cannot coexist; it always contains the zero vector and the
    footprint difference set.
    """

    lattice: LatticeKind
    footprint: tuple
    exclusion: frozenset
    mesh: int = 1
    name: str = "custom"

    def __post_init__(self):
        fp = tuple(sorted(set(tuple(s) for s in self.footprint)))
        object.__setattr__(self, "footprint", fp)
        object.__setattr__(self, "exclusion", frozenset(tuple(e) for e in self.exclusion))
        d = self.lattice.dim
        if not fp:
            raise ModelError("footprint: must be nonempty")
        if any(len(s) != d for s in fp) or any(len(e) != d for e in self.exclusion):
            raise ModelError("footprint: offset dimension does not match lattice dimension")
        if tuple([0] * d) not in self.exclusion:
            raise ModelError("exclusion: must contain the zero vector")
        if any(neg(e) not in self.exclusion for e in self.exclusion):
            raise ModelError("exclusion: must be closed under negation")
        if not difference_set(fp) <= self.exclusion:
            raise ModelError("exclusion: must contain the footprint difference set")
        if self.mesh < 1:
            raise ModelError("mesh: must be a positive integer")

    @property
    def dim(self) -> int:
        return self.lattice.dim

    @property
    def zero(self):
        return tuple([0] * self.dim)

    @property
    def max_density(self):
        from fractions import Fraction

        return Fraction(1, len(self.footprint))

    @property
    def exclusion_nonzero(self):
        z = self.zero
        return tuple(sorted(e for e in self.exclusion if e != z))

    @property
    def reach(self) -> int:
        """Largest coordinate magnitude among exclusion offsets and footprint."""
        vals = [abs(c) for e in self.exclusion for c in e]
        vals += [abs(c) for s in self.footprint for c in s]
        return max(vals)

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "lattice": {"kind": self.lattice.kind, "dimension": self.lattice.dim},
            "footprint": [list(s) for s in self.footprint],
            "exclusion": [list(e) for e in sorted(self.exclusion)],
            "mesh": self.mesh,
        }


def footprint_at(model: ModelSpec, x) -> frozenset:
    return frozenset(add(x, s) for s in model.footprint)


def covered_sites(model: ModelSpec, anchors: Iterable) -> set:
    out = set()
    for x in anchors:
        out.update(add(x, s) for s in model.footprint)
    return out


def compatible(model: ModelSpec, x, xp, region=None) -> bool:
    """Hard-core weight: True iff particles at ``x`` and ``xp`` can coexist."""
    if region is not None:
        x, xp = region.reduce(x), region.reduce(xp)
        if x == xp:
            return False
        return not region.offset_excluded(model, sub(x, xp))
    if x == xp:
        return False
    return sub(x, xp) not in model.exclusion


def is_configuration(model: ModelSpec, anchors, region=None) -> bool:
    anchors = list(anchors)
    for i, a in enumerate(anchors):
        for b in anchors[i + 1:]:
            if not compatible(model, a, b, region):
                return False
    return True


def graph_distance(a, b, region=None, lattice: Optional[LatticeKind] = None) -> int:
    """Shortest neighbor-path length between two sites.

    With a torus region the coordinates wrap; otherwise the distance is taken
    on the infinite lattice.
    """
    lat = lattice if lattice is not None else getattr(region, "lattice", None)
    if lat is None:
        raise ModelError("graph_distance needs a lattice or a region")
    if region is not None and hasattr(region, "extents"):
        return region.distance(a, b)
    if region is not None and hasattr(region, "sites"):
        if a not in region.sites or b not in region.sites:
            raise ModelError("graph_distance: site outside window")
    return lat.distance(sub(a, b))


def set_distance(lattice: LatticeKind, A, B) -> int:
    """Graph distance between two finite site sets (BFS from the smaller)."""
    A, B = set(A), set(B)
    if not A or not B:
        raise ModelError("set_distance of an empty set")
    if A & B:
        return 0
    if len(A) > len(B):
        A, B = B, A
    # closed-form is cheap when both sets are small
    if len(A) * len(B) <= 4096:
        return min(lattice.distance(sub(a, b)) for a in A for b in B)
    seen = set(A)
    frontier = deque((a, 0) for a in A)
    while frontier:
        s, dist = frontier.popleft()
        for n in lattice.neighbors(s):
            if n in seen:
                continue
            if n in B:
                return dist + 1
            seen.add(n)
            frontier.append((n, dist + 1))
    raise AssertionError("unreachable")


def within(lattice: LatticeKind, sites, radius: int = 1) -> set:
    """All sites at graph distance <= radius from the given set."""
    out = set(sites)
    shell = set(sites)
    for _ in range(radius):
        nxt = set()
        for s in shell:
            for n in lattice.neighbors(s):
                if n not in out:
                    nxt.add(n)
        out |= nxt
        shell = nxt
    return out


def touches(lattice: LatticeKind, A, B) -> bool:
    """True iff Delta(A, B) <= 1."""
    B = B if isinstance(B, (set, frozenset)) else set(B)
    for a in A:
        if a in B:
            return True
        for n in lattice.neighbors(a):
            if n in B:
                return True
    return False


def components(lattice: LatticeKind, sites) -> list:
    """Connected components (lattice adjacency), in deterministic order."""
    rest = set(sites)
    out = []
    for s in sorted(rest):
        if s not in rest:
            continue
        comp = {s}
        rest.discard(s)
        stack = [s]
        while stack:
            u = stack.pop()
            for n in lattice.neighbors(u):
                if n in rest:
                    rest.discard(n)
                    comp.add(n)
                    stack.append(n)
        out.append(frozenset(comp))
    return out


def is_connected(lattice: LatticeKind, sites) -> bool:
    sites = set(sites)
    return len(sites) > 0 and len(components(lattice, sites)) == 1


def empty_sites(model: ModelSpec, region, X) -> set:
    """Region sites left uncovered by the configuration ``X``."""
    X = list(X)
    if not is_configuration(model, X, region if hasattr(region, "extents") else None):
        raise ModelError("empty_sites: configuration has an incompatible pair")
    if hasattr(region, "extents"):
        covered = {region.reduce(s) for s in covered_sites(model, X)}
    else:
        covered = covered_sites(model, X)
    return set(region.all_sites()) - covered


def refine_mesh(model: ModelSpec, m: int) -> ModelSpec:
    """Subdivide every cell of a polyomino model into m^d cells."""
    if m < 1:
        raise ModelError("refine_mesh: m must be a positive integer")
    if model.lattice.kind != "hypercubic":
        raise ModelError("refine_mesh: only hypercubic polyomino models can be refined")
    if m == 1:
        return model
    d = model.dim
    fine = set()
    for c in model.footprint:
        for sub_cell in itertools.product(range(m), repeat=d):
            fine.add(add(scale(c, m), sub_cell))
    excl = set(difference_set(fine))
    excl.update(scale(e, m) for e in model.exclusion)
    return ModelSpec(
        lattice=model.lattice,
        footprint=tuple(sorted(fine)),
        exclusion=frozenset(excl),
        mesh=model.mesh * m,
        name=f"{model.name}@mesh{model.mesh * m}",
    )


# -- built-in models -----------------------------------------------------------

def polyomino(cells, name, lattice=None) -> ModelSpec:
    lattice = lattice or LatticeKind("hypercubic", len(next(iter(cells))))
    cells = tuple(sorted(tuple(c) for c in cells))
    return ModelSpec(lattice, cells, difference_set(cells), 1, name)


def hyperdiamond(d: int) -> ModelSpec:
    lat = LatticeKind("hypercubic", d)
    zero = tuple([0] * d)
    top = tuple([0] * (d - 1) + [1])
    excl = {zero} | set(lat.neighbor_offsets)
    return ModelSpec(lat, (zero, top), frozenset(excl), 1, f"hyperdiamond-{d}d")


def nearest_neighbor_1d() -> ModelSpec:
    lat = LatticeKind("hypercubic", 1)
    return ModelSpec(lat, ((0,), (1,)), frozenset({(0,), (1,), (-1,)}), 1, "monomer-dimer")


def hexagon() -> ModelSpec:
    lat = LatticeKind("triangular", 2)
    excl = {(0, 0)} | set(lat.neighbor_offsets)
    return ModelSpec(lat, ((0, 0), (1, 0), (0, 1)), frozenset(excl), 1, "hexagon")


CROSS_CELLS = ((0, 0), (1, 0), (-1, 0), (0, 1), (0, -1))

# Four extra non-sliding polyominoes; shapes fixed by the covering and
# non-sliding searches run in the test suite.
POLYOMINOES = {
    "poly-a": ((0, 0), (0, 1), (0, 2), (1, 1)),
    "poly-b": ((0, 0), (0, 1), (1, 0), (2, -1), (2, 0)),
    "poly-c": ((0, 0), (0, 1), (1, 0), (2, 0), (3, -1), (3, 0)),
    "poly-d": ((0, 0), (0, 1), (0, 2), (1, 1), (2, 0), (2, 1), (2, 2)),
}


def builtin_model(name: str) -> ModelSpec:
    if name == "hyperdiamond-2d":
        return hyperdiamond(2)
    if name == "hyperdiamond-3d":
        return hyperdiamond(3)
    if name == "cross":
        return polyomino(CROSS_CELLS, "cross")
    if name == "hexagon":
        return hexagon()
    if name in ("monomer-dimer", "nn-1d"):
        return nearest_neighbor_1d()
    if name == "domino":
        return polyomino(((0, 0), (1, 0)), "domino")
    if name in POLYOMINOES:
        return polyomino(POLYOMINOES[name], name)
    raise ModelError(f"unknown built-in model {name!r}")


BUILTIN_NAMES = ("hyperdiamond-2d", "hyperdiamond-3d", "cross", "hexagon",
                 "poly-a", "poly-b", "poly-c", "poly-d", "monomer-dimer", "domino")


MODEL_SCHEMA = {
    "type": "object",
    "required": ["lattice", "footprint"],
    "properties": {
        "name": {"type": "string"},
        "lattice": {
            "type": "object",
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["hypercubic", "triangular"]},
                "dimension": {"type": "integer", "minimum": 1},
            },
        },
        "footprint": {
            "type": "array", "minItems": 1,
            "items": {"type": "array", "items": {"type": "integer"}},
        },
        "exclusion": {
            "type": "array",
            "items": {"type": "array", "items": {"type": "integer"}},
        },
        "mesh": {"type": "integer", "minimum": 1},
    },
}


def model_from_json(data: dict) -> ModelSpec:
    try:
        jsonschema.validate(data, MODEL_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = ".".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ModelError(f"{where}: {exc.message}") from None
    lat = LatticeKind(data["lattice"]["kind"], data["lattice"].get("dimension", 2))
    fp = [tuple(s) for s in data["footprint"]]
    if "exclusion" in data:
        excl = frozenset(tuple(e) for e in data["exclusion"])
    else:
        excl = difference_set(fp)
    model = ModelSpec(lat, tuple(fp), excl, 1, data.get("name", "custom"))
    mesh = data.get("mesh", 1)
    if mesh != 1:
        model = refine_mesh(model, mesh)
    return model


def load_model(spec: str) -> ModelSpec:
    """Built-in name, or path to a JSON model file."""
    if spec in BUILTIN_NAMES:
        return builtin_model(spec)
    try:
        with open(spec) as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise ModelError(f"unknown model {spec!r} (not a built-in name or a file)") from None
    return model_from_json(data)
