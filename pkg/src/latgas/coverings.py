"""Perfect coverings, isolating completions and the non-sliding certificate."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from math import gcd

from .lattice import (
    ModelError, ModelSpec, add, apply_matrix, components, covered_sites,
    footprint_at, is_configuration, sub, touches, within,
)


class CoveringError(RuntimeError):
    """No perfect covering exists, or the covering family is unbounded."""

    def __init__(self, kind, message, witness=None):
        super().__init__(message)
        self.kind = kind
        self.witness = witness


# -- integer lattices ------------------------------------------------------------

def hermite_basis(generators, d):
    """Upper-triangular basis (positive pivots, reduced above) of the lattice
    spanned by integer ``generators``, which must have full rank ``d``."""
    rows = [list(g) for g in generators if any(g)]
    basis = []
    for col in range(d):
        pivot_rows = [r for r in rows if r[col] != 0]
        rest = [r for r in rows if r[col] == 0]
        while len(pivot_rows) > 1:
            pivot_rows.sort(key=lambda r: abs(r[col]))
            p = pivot_rows[0]
            nxt = [p]
            for r in pivot_rows[1:]:
                q = r[col] // p[col]
                r = [a - q * b for a, b in zip(r, p)]
                if r[col] != 0:
                    nxt.append(r)
                elif any(r):
                    rest.append(r)
            pivot_rows = nxt
        if not pivot_rows:
            raise ValueError("generators do not span a full-rank lattice")
        p = pivot_rows[0]
        if p[col] < 0:
            p = [-a for a in p]
        basis.append(p)
        rows = rest
    for i in range(d):
        for j in range(i):
            q = basis[j][i] // basis[i][i]
            basis[j] = [a - q * b for a, b in zip(basis[j], basis[i])]
    return tuple(tuple(r) for r in basis)


def reduce_mod_basis(basis, v):
    v = list(v)
    for i, row in enumerate(basis):
        q = v[i] // row[i]
        v = [a - q * b for a, b in zip(v, row)]
    return tuple(v)


def in_lattice(basis, v) -> bool:
    v = list(v)
    for i, row in enumerate(basis):
        if v[i] % row[i]:
            return False
        q = v[i] // row[i]
        v = [a - q * b for a, b in zip(v, row)]
    return not any(v)


@dataclass(frozen=True)
class Sublattice:
    """A periodic set of anchors: ``offsets + span(basis)``.

    A genuine lattice covering has a single offset; coverings that are unions
    of several cosets carry one offset per coset.
    """

    basis: tuple
    offsets: tuple

    def contains(self, x) -> bool:
        r = reduce_mod_basis(self.basis, x)
        return r in self.offsets

    @property
    def index(self) -> int:
        n = 1
        for i, row in enumerate(self.basis):
            n *= row[i]
        return n

    @property
    def density(self):
        from fractions import Fraction

        return Fraction(len(self.offsets), self.index)

    def minimal_period(self) -> int:
        d = len(self.basis)
        n = 1
        while True:
            if all(in_lattice(self.basis, tuple(n if j == i else 0 for j in range(d)))
                   for i in range(d)):
                return n
            n += 1

    def points_in(self, sites):
        return {s for s in sites if self.contains(s)}

    def image(self, matrix, shift) -> "Sublattice":
        d = len(self.basis)
        basis = hermite_basis([apply_matrix(matrix, b) for b in self.basis], d)
        offs = sorted({reduce_mod_basis(basis, add(apply_matrix(matrix, o), shift))
                       for o in self.offsets})
        return Sublattice(basis, tuple(offs))

    def to_json(self):
        return {"basis": [list(b) for b in self.basis],
                "offsets": [list(o) for o in self.offsets]}


def sublattice_membership(s: Sublattice, x) -> bool:
    return s.contains(x)


def sublattice_from_torus(anchors, L, d) -> Sublattice:
    anchors = set(anchors)
    gens = [tuple(L if j == i else 0 for j in range(d)) for i in range(d)]
    base = min(anchors)
    for a in anchors:
        t = sub(a, base)
        t = tuple(c % L for c in t)
        if all(tuple((c + tc) % L for c, tc in zip(b, t)) in anchors for b in anchors):
            gens.append(t)
    basis = hermite_basis(gens, d)
    offs = sorted({reduce_mod_basis(basis, a) for a in anchors})
    return Sublattice(basis, tuple(offs))


@dataclass
class CoveringFamily:
    model: ModelSpec
    sublattices: list
    period_bound: int
    _maps: dict = field(default=None, repr=False)

    @property
    def tau(self) -> int:
        return len(self.sublattices)

    def label_of(self, anchors) -> list:
        """1-based labels of every sublattice containing all the anchors."""
        return [i + 1 for i, s in enumerate(self.sublattices)
                if all(s.contains(a) for a in anchors)]

    def sublattice(self, label: int) -> Sublattice:
        return self.sublattices[label - 1]

    def index_of(self, s: Sublattice):
        for i, t in enumerate(self.sublattices):
            if t == s:
                return i + 1
        return None

    def symmetry_maps(self) -> dict:
        """For each ordered pair (mu, nu) an isometry x -> R x + t mapping
        L_mu onto L_nu, with the induced label permutation."""
        if self._maps is not None:
            return self._maps
        lat = self.model.lattice
        group = [R for R in lat.point_group()
                 if {apply_matrix(R, e) for e in self.model.exclusion} == self.model.exclusion]
        maps = {}
        for mu, smu in enumerate(self.sublattices, 1):
            for nu, snu in enumerate(self.sublattices, 1):
                found = None
                for R in group:
                    rotated = smu.image(R, self.model.zero)
                    if rotated.basis != snu.basis or len(rotated.offsets) != len(snu.offsets):
                        continue
                    for off in snu.offsets:
                        shift = sub(off, rotated.offsets[0])
                        if smu.image(R, shift) != snu:
                            continue
                        perm = {}
                        for k, sk in enumerate(self.sublattices, 1):
                            perm[k] = self.index_of(sk.image(R, shift))
                        if None in perm.values():
                            continue
                        found = (R, shift, perm)
                        break
                    if found:
                        break
                maps[(mu, nu)] = found
        self._maps = maps
        return maps

    def to_json(self):
        return {
            "model": self.model.name,
            "tau": self.tau,
            "period_bound": self.period_bound,
            "sublattices": [s.to_json() for s in self.sublattices],
        }


def _torus_tilings(model: ModelSpec, L: int, limit: int):
    d = model.dim
    cells = list(itertools.product(range(L), repeat=d))
    index = {c: i for i, c in enumerate(cells)}
    n = len(cells)
    fp = model.footprint

    def red(v):
        return tuple(c % L for c in v)

    excl_mod = {red(e) for e in model.exclusion_nonzero}
    zero = model.zero
    if zero in excl_mod or len({red(s) for s in fp}) != len(fp):
        return []
    covered = [False] * n
    anchors = set()
    found = []

    def fits(a):
        cs = []
        for s in fp:
            i = index[red(add(a, s))]
            if covered[i]:
                return None
            cs.append(i)
        for e in excl_mod:
            if red(add(a, e)) in anchors:
                return None
        return cs

    def search(start):
        if len(found) > limit:
            return
        i = start
        while i < n and covered[i]:
            i += 1
        if i == n:
            found.append(frozenset(anchors))
            return
        c = cells[i]
        for s in fp:
            a = red(sub(c, s))
            cs = fits(a)
            if cs is None:
                continue
            for j in cs:
                covered[j] = True
            anchors.add(a)
            search(i + 1)
            anchors.discard(a)
            for j in cs:
                covered[j] = False

    search(0)
    return found


def perfect_coverings(model: ModelSpec, period_bound: int, max_coverings: int = 512) -> CoveringFamily:
    """All periodic perfect coverings with periods up to ``period_bound``.

    Raises ``CoveringError`` with kind ``"no covering"`` when nothing tiles, or
    ``"sliding"`` when the family looks unbounded (a covering whose minimal
    period reaches the bound, or more than ``max_coverings`` coverings).
    """
    d = model.dim
    found = {}
    for L in range(1, period_bound + 1):
        if (L ** d) % len(model.footprint):
            continue
        tilings = _torus_tilings(model, L, max_coverings)
        for t in tilings:
            s = sublattice_from_torus(t, L, d)
            found.setdefault(s, L)
            if len(found) > max_coverings:
                raise CoveringError(
                    "sliding", "sliding: unbounded covering family "
                    f"(more than {max_coverings} coverings with period <= {L})")
    if not found:
        raise CoveringError("no covering", f"no covering: no periodic perfect covering "
                                           f"with period <= {period_bound}")
    subs = sorted(found, key=lambda s: (s.offsets, s.basis))
    at_bound = [s for s in subs if s.minimal_period() >= period_bound]
    if at_bound:
        raise CoveringError(
            "sliding", "sliding: unbounded covering family (coverings with period "
            f"at the bound {period_bound})", witness=at_bound[0].to_json())
    return CoveringFamily(model, subs, period_bound)


# -- isolating completions -------------------------------------------------------

def _candidate_anchors(model: ModelSpec, target_sites):
    out = set()
    for t in target_sites:
        for s in model.footprint:
            out.add(sub(t, s))
    return out


def union_connected(model: ModelSpec, X) -> bool:
    U = covered_sites(model, X)
    return len(components(model.lattice, U)) == 1


def isolating_completions(model: ModelSpec, X) -> list:
    """Every X' containing X whose extra particles touch the union of X's
    footprints and which leaves no empty site within distance 1 of it."""
    X = [tuple(x) for x in X]
    if not X:
        raise ModelError("isolating_completions: X must be nonempty")
    if not is_configuration(model, X):
        raise ModelError("isolating_completions: X is not a valid configuration")
    if not union_connected(model, X):
        raise ModelError("isolating_completions: X is not connected")
    lat = model.lattice
    U = covered_sites(model, X)
    shell = sorted(within(lat, U, 1) - U)
    cands = []
    for a in _candidate_anchors(model, shell):
        fa = footprint_at(model, a)
        if fa & U:
            continue
        if all(sub(a, x) not in model.exclusion for x in X):
            cands.append((a, fa))
    by_site = {s: [] for s in shell}
    for a, fa in cands:
        for s in fa:
            if s in by_site:
                by_site[s].append((a, fa))
    covered = set(U)
    chosen = []
    results = []

    def search():
        target = next((s for s in shell if s not in covered), None)
        if target is None:
            results.append(tuple(sorted(X + chosen)))
            return
        for a, fa in by_site[target]:
            if fa & covered:
                continue
            if any(sub(a, b) in model.exclusion for b in chosen):
                continue
            chosen.append(a)
            covered.update(fa)
            search()
            covered.difference_update(fa)
            chosen.pop()

    search()
    return sorted(set(results))


def completion_window(model: ModelSpec, X):
    """Footprint hull dilated by 2 * (footprint diameter + 1)."""
    lat = model.lattice
    U = covered_sites(model, X)
    diam = max(lat.distance(sub(a, b)) for a in model.footprint for b in model.footprint)
    return within(lat, U, 2 * (diam + 1))


def completion_is_isolating(model: ModelSpec, X, Xp) -> bool:
    """Literal check of the defining conditions on a finite window."""
    lat = model.lattice
    U = covered_sites(model, X)
    if not set(X) <= set(Xp) or not is_configuration(model, Xp):
        return False
    for x in set(Xp) - set(X):
        if not touches(lat, footprint_at(model, x), U):
            return False
    window = completion_window(model, X)
    empty = window - covered_sites(model, Xp)
    return not touches(lat, empty, U)


# -- connected configuration classes ---------------------------------------------

def _canonical(anchors):
    m = min(anchors)
    return tuple(sorted(sub(a, m) for a in anchors))


def connected_configs(model: ModelSpec, n: int):
    """Translation classes of connected n-particle configurations, each once,
    as the lexicographically minimal translate (smallest anchor at the origin)."""
    if n < 1:
        raise ModelError("connected_configs: n must be >= 1")
    level = {(model.zero,)}
    for _ in range(n - 1):
        nxt = set()
        for conf in level:
            U = covered_sites(model, conf)
            near = within(model.lattice, U, 1)
            for a in _candidate_anchors(model, near):
                if a in conf:
                    continue
                if any(sub(a, b) in model.exclusion for b in conf):
                    continue
                if not touches(model.lattice, footprint_at(model, a), U):
                    continue
                nxt.add(_canonical(conf + (a,)))
        level = nxt
    yield from sorted(level)


# -- certificate -------------------------------------------------------------------

def certify_non_sliding(model: ModelSpec, family: CoveringFamily, max_particles: int) -> dict:
    """Bounded non-sliding certificate: checks every connected class with at
    most ``max_particles`` particles."""
    if model.dim < 2:
        raise ModelError("certify_non_sliding: only lattices of dimension >= 2 are supported")
    if max_particles < 1:
        raise ModelError("certify_non_sliding: max_particles must be >= 1")
    classes = []
    violations = []
    for n in range(1, max_particles + 1):
        for conf in connected_configs(model, n):
            comps = isolating_completions(model, conf)
            labels = []
            ok = True
            for Xp in comps:
                lab = family.label_of(Xp)
                labels.append(lab)
                if len(lab) != 1:
                    ok = False
                    violations.append({"X": [list(a) for a in conf],
                                       "X_prime": [list(a) for a in Xp],
                                       "labels": lab})
            classes.append({"n": n, "X": [list(a) for a in conf],
                            "completions": len(comps),
                            "labels": [l[0] if len(l) == 1 else l for l in labels],
                            "ok": ok})
    return {
        "model": model.name,
        "tau": family.tau,
        "max_particles": max_particles,
        "classes_checked": len(classes),
        "classes": classes,
        "violations": violations,
        "passed": not violations,
        "verdict": (f"non-sliding up to {max_particles} particles" if not violations
                    else "sliding violation"),
    }
