"""Gaunt-Fisher configurations (contours), their activities, and the
cluster expansion built on them.

A GFc is stored as (support, interior particles, external label, hole
labels).  Geometry on the infinite lattice is handled in finite boxes with a
margin wide enough that nothing outside can interact with the support.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

from .coverings import CoveringError, CoveringFamily, reduce_mod_basis
from .enumeration import (
    FugacityMap,
    Window,
    _Ensemble,
    boundary_forced_sites,
    canonical_counts,
    configurations,
    partition_function,
)
from .lattice import (
    ModelError,
    ModelSpec,
    add,
    set_distance,
    components,
    covered_sites,
    footprint_at,
    sub,
    touches,
    within,
)


class IncompleteEnumeration(RuntimeError):
    """GFc list not certified complete; identity checks refuse to pass."""


@dataclass(frozen=True)
class GFc:
    support: frozenset
    particles: frozenset
    nu: int
    holes: tuple = ()      # ((frozenset hole, label), ...), sorted

    @property
    def size(self) -> int:
        return len(self.support)

    def key(self):
        return (tuple(sorted(self.support)), tuple(sorted(self.particles)), self.nu,
                tuple((tuple(sorted(h)), lab) for h, lab in self.holes))

    def translate(self, t) -> "GFc":
        return GFc(frozenset(add(s, t) for s in self.support),
                   frozenset(add(x, t) for x in self.particles), self.nu,
                   _sorted_holes((frozenset(add(s, t) for s in h), lab) for h, lab in self.holes))

    def exponent(self, family: CoveringFamily) -> int:
        """|Gamma cap L_nu| - |X_gamma|: the power of y in the activity prefactor."""
        lat = family.sublattice(self.nu)
        return sum(1 for s in self.support if lat.contains(s)) - len(self.particles)

    def to_json(self):
        return {"support": [list(s) for s in sorted(self.support)],
                "particles": [list(x) for x in sorted(self.particles)],
                "nu": self.nu,
                "holes": [{"sites": [list(s) for s in sorted(h)], "label": lab}
                          for h, lab in self.holes]}


def _sorted_holes(items) -> tuple:
    return tuple(sorted(items, key=lambda hl: (min(hl[0]), hl[1])))


def _box(sites, pad: int):
    sites = list(sites)
    d = len(sites[0])
    lo = [min(s[i] for s in sites) - pad for i in range(d)]
    hi = [max(s[i] for s in sites) + pad for i in range(d)]
    return lo, hi


def _box_sites(lo, hi) -> set:
    return set(itertools.product(*(range(a, b + 1) for a, b in zip(lo, hi))))


def _diam(model: ModelSpec) -> int:
    lat = model.lattice
    return max(lat.distance(sub(a, b)) for a in model.footprint for b in model.footprint)


def _margin(model: ModelSpec) -> int:
    return 2 * model.reach + _diam(model) + 3


def hole_decomposition(lattice, support, ambient=None, margin: int = 2):
    """(exterior, holes) of a connected finite support.

    ``ambient`` is an optional finite site set standing in for the infinite
    lattice; by default a box around the support padded by ``margin``.  The
    exterior is the complement component touching the ambient frontier.
    """
    support = set(support)
    if not support:
        raise ModelError("hole_decomposition: empty support")
    if ambient is None:
        lo, hi = _box(support, max(margin, 2))
        ambient = _box_sites(lo, hi)
    ambient = set(ambient)
    if not support <= ambient:
        raise ModelError("hole_decomposition: support leaves the ambient region")
    frontier = {s for s in ambient if any(n not in ambient for n in lattice.neighbors(s))}
    if touches(lattice, support, frontier):
        raise ModelError("hole_decomposition: margin too small (support within distance 1 of the frontier)")
    comps = components(lattice, ambient - support)
    exterior = [c for c in comps if c & frontier]
    if len(exterior) != 1:
        raise ModelError("hole_decomposition: ambient region is not simply connected")
    holes = sorted((c for c in comps if not c & frontier), key=min)
    return exterior[0], holes


def phantom_particles(model: ModelSpec, family: CoveringFamily, gamma: GFc, radius=None) -> set:
    """Particles covering the exterior (label nu) and the holes (their
    labels), restricted to sites within ``radius`` of the support."""
    radius = model.reach + 2 * _diam(model) + 2 if radius is None else radius
    region = within(model.lattice, gamma.support, radius)
    inside_holes = set()
    out = set()
    for h, lab in gamma.holes:
        inside_holes |= h
        lat = family.sublattice(lab)
        out.update(x for x in h if lat.contains(x))
    ext = family.sublattice(gamma.nu)
    out.update(x for x in region if x not in gamma.support and x not in inside_holes
               and ext.contains(x))
    return out


def check_gfc(model: ModelSpec, family: CoveringFamily, gamma: GFc) -> Optional[str]:
    """None if ``gamma`` satisfies the definition, else the failed condition."""
    lat = model.lattice
    G = gamma.support
    X = sorted(gamma.particles)
    for x in X:
        if not footprint_at(model, x) <= G:
            return "interior particle leaves the support"
    for i, a in enumerate(X):
        for b in X[i + 1:]:
            if sub(a, b) in model.exclusion:
                return "interior particles overlap"
    ph = phantom_particles(model, family, gamma)
    ph_near = ph
    for p in ph_near:
        if footprint_at(model, p) & G:
            return "phantom particle intersects the support"
    for x in X:
        for e in model.exclusion:
            if add(x, e) in ph:
                return "interior particle incompatible with phantom"
    # empty sites can only occur near the support
    region = within(lat, G, _diam(model) + 1)
    covered = covered_sites(model, X) | covered_sites(model, ph_near)
    empty = region - covered
    # the support holds every empty site (it is the empty set plus halos)
    if not empty <= G:
        return "empty site outside the support"
    for x in X:
        fx = footprint_at(model, x)
        if not touches(lat, fx, empty):
            return "interior particle does not touch empty space"
    for p in ph_near:
        if touches(lat, footprint_at(model, p), empty):
            return "phantom particle touches empty space"
    return None


# -- extraction --------------------------------------------------------------------

def _extract(model: ModelSpec, family: CoveringFamily, particles, halo_particles, region,
             ambient) -> list:
    """GFcs of a configuration.

    ``particles``: every particle in ``ambient`` (configuration plus the
    surrounding perfect covering); ``region``: sites whose emptiness counts;
    ``halo_particles``: particles allowed in halos.
    """
    lat = model.lattice
    fp = {x: footprint_at(model, x) for x in particles}
    covered = set()
    for f in fp.values():
        covered |= f
    empty = set(region) - covered
    if not empty:
        return []
    U = set(empty)
    halo_set = set(halo_particles)
    site_owner = {}
    for x, f in fp.items():
        for s in f:
            site_owner[s] = x
    for e in empty:
        for n in lat.neighbors(e):
            y = site_owner.get(n)
            if y is not None and y in halo_set:
                U |= fp[y]
    supports = components(lat, U)
    rest = components(lat, set(ambient) - U)
    frontier = {s for s in ambient if any(n not in ambient for n in lat.neighbors(s))}
    kappa_label = []
    for kap in rest:
        inside = [x for x, f in fp.items() if f <= kap]
        if not inside:
            kappa_label.append(None)
            continue
        bar = set(inside)
        inside_cov = set()
        for x in inside:
            inside_cov |= fp[x]
        for y, f in fp.items():
            if y not in bar and touches(lat, f, inside_cov):
                bar.add(y)
        labels = family.label_of(sorted(bar))
        if len(labels) != 1:
            raise CoveringError("sliding", "sliding violation: covered component without a unique phase",
                                witness={"particles": [list(x) for x in sorted(bar)], "labels": labels})
        kappa_label.append(labels[0])
    out = []
    for G in supports:
        ext_comp = None
        holes = []
        for comp in components(lat, set(ambient) - G):
            if comp & frontier:
                ext_comp = comp
            else:
                holes.append(comp)

        def label_touching(area):
            labs = {kappa_label[i] for i, kap in enumerate(rest)
                    if kap <= area and kappa_label[i] is not None and touches(lat, kap, G)}
            if len(labs) != 1:
                raise CoveringError("sliding", "sliding violation: ambiguous phase next to a support",
                                    witness={"support": [list(s) for s in sorted(G)],
                                             "labels": sorted(labs)})
            return labs.pop()

        nu = label_touching(ext_comp)
        hl = _sorted_holes((frozenset(h), label_touching(h)) for h in holes)
        X = frozenset(x for x, f in fp.items() if f <= G)
        out.append(GFc(frozenset(G), X, nu, hl))
    return sorted(out, key=GFc.key)


def extract_gfcs(model: ModelSpec, family: CoveringFamily, window: Window, X) -> list:
    """GFcs of a configuration X of a nu-boundary window (all labels)."""
    if window.nu is None:
        raise ModelError("extract_gfcs: window needs a nu-phase boundary")
    X = [tuple(x) for x in X]
    pad = _margin(model)
    lo, hi = _box(window.sites, pad)
    ambient = _box_sites(lo, hi)
    phase = family.sublattice(window.nu)
    lo2, hi2 = _box(window.sites, pad + model.reach + 1)
    phantoms = [p for p in _box_sites(lo2, hi2) if p not in window.sites and phase.contains(p)]
    # boundary particles outside the window neighbour empty sites too, so
    # they join halos like any other particle
    return _extract(model, family, X + phantoms, X + phantoms, window.sites, ambient)


# -- activities --------------------------------------------------------------------

class _HoleCache:
    """Partition functions of holes under a given phase, memoized."""

    def __init__(self, model: ModelSpec, family: CoveringFamily):
        self.model = model
        self.family = family
        self._windows = {}
        self._values = {}
        self._series = {}

    def window(self, hole, label) -> Window:
        key = (hole, label)
        w = self._windows.get(key)
        if w is None:
            w = Window(self.model.lattice, frozenset(hole), None, None, label,
                       self.family.sublattice(label))
            self._windows[key] = w
        return w

    def value(self, hole, label, fug: FugacityMap):
        key = (hole, label, fug.z, tuple(sorted(fug.overrides.items())))
        v = self._values.get(key)
        if v is None:
            v = partition_function(self.model, self.window(hole, label), fug)
            self._values[key] = v
        return v

    def defect_series(self, hole, label) -> list:
        key = (hole, label)
        v = self._series.get(key)
        if v is None:
            v = canonical_counts(self.model, self.window(hole, label)).defect_counts()
            self._series[key] = v
        return v


def z_nu(family: CoveringFamily, nu: int, sites, fug: FugacityMap):
    lat = family.sublattice(nu)
    out = 1
    for s in sites:
        if lat.contains(s):
            out = out * fug.at(s)
    return out


def gfc_activity(model: ModelSpec, family: CoveringFamily, gamma: GFc, fug: FugacityMap,
                 cache: Optional[_HoleCache] = None):
    """zeta(gamma) at the given fugacities (exact when they are rational)."""
    cache = cache or _HoleCache(model, family)
    num = 1
    for x in gamma.particles:
        num = num * fug.at(x)
    val = Fraction(num) / Fraction(z_nu(family, gamma.nu, gamma.support, fug)) \
        if _exact(fug) else num / z_nu(family, gamma.nu, gamma.support, fug)
    for h, lab in gamma.holes:
        if lab == gamma.nu:
            continue
        a = cache.value(h, lab, fug)
        b = cache.value(h, gamma.nu, fug)
        val = val * (Fraction(a) / Fraction(b) if _exact(fug) else a / b)
    return val


def _exact(fug: FugacityMap) -> bool:
    vals = [fug.z] + list(fug.overrides.values())
    return all(isinstance(v, (int, Fraction)) for v in vals)


def series_div(a, b, K: int) -> list:
    """Truncated power-series quotient a/b to order K (b[0] != 0)."""
    a = [Fraction(x) for x in a] + [Fraction(0)] * (K + 1)
    b = [Fraction(x) for x in b] + [Fraction(0)] * (K + 1)
    if b[0] == 0:
        raise ZeroDivisionError("series_div: zero constant term")
    q = [Fraction(0)] * (K + 1)
    for k in range(K + 1):
        s = a[k] - sum(q[j] * b[k - j] for j in range(k))
        q[k] = s / b[0]
    return q


def series_mul(a, b, K: int) -> list:
    out = [Fraction(0)] * (K + 1)
    for i, x in enumerate(a[:K + 1]):
        if x:
            for j, y in enumerate(b[:K + 1 - i]):
                out[i + j] += x * y
    return out


def activity_series(model: ModelSpec, family: CoveringFamily, gamma: GFc, K: int,
                    cache: Optional[_HoleCache] = None) -> list:
    """zeta(gamma) at uniform fugacity as a truncated series in y = 1/z."""
    cache = cache or _HoleCache(model, family)
    e = gamma.exponent(family)
    out = [Fraction(0)] * (K + 1)
    if e > K:
        return out
    if e < 0:
        raise ArithmeticError("negative activity exponent")
    out[e] = Fraction(1)
    for h, lab in gamma.holes:
        if lab == gamma.nu:
            continue
        ratio = series_div(cache.defect_series(h, lab), cache.defect_series(h, gamma.nu), K)
        out = series_mul(out, ratio, K)
    return out


# -- window enumeration --------------------------------------------------------------

def _connected_subsets(vertices, neighbors, max_size: int):
    """Every connected vertex subset with at most max_size elements, each
    once (extension-set enumeration with a fixed vertex order)."""
    order = sorted(vertices)
    rank = {s: i for i, s in enumerate(order)}
    nbrs = {s: [n for n in neighbors(s) if n in rank] for s in order}

    def extend(subset, frontier, ext, root):
        yield subset
        if len(subset) == max_size:
            return
        ext = list(ext)
        while ext:
            w = ext.pop()
            new = [u for u in nbrs[w] if rank[u] > root and u not in subset and u not in frontier]
            yield from extend(subset | {w}, frontier | set(new), ext + new, root)

    for v in order:
        r = rank[v]
        start = [u for u in nbrs[v] if rank[u] > r]
        yield from extend(frozenset([v]), set(start) | {v}, start, r)


class _WindowContext:
    """Constraints a nu-window puts on GFcs: allowed anchors inside, forced
    boundary particles, and the fixed phase outside."""

    def __init__(self, model: ModelSpec, family: CoveringFamily, window: Window):
        if window.nu is None:
            raise ModelError("window needs a nu-phase boundary")
        self.window = window
        self.sites = window.sites
        ens = _Ensemble(model, window)
        self.allowed = set(ens.anchors)
        forced, _ = boundary_forced_sites(model, window)
        self.phase = family.sublattice(window.nu)
        self.free = set(window.sites) - covered_sites(model, forced)
        lat = model.lattice
        near = within(lat, self.free, model.reach + _diam(model) + 1)
        self.touching = [p for p in near if p not in self.sites and self.phase.contains(p)
                         and touches(lat, footprint_at(model, p), self.free)]
        self.region = set(self.free) | covered_sites(model, self.touching)

    def anchor_ok(self, x) -> bool:
        return x in self.allowed or (x not in self.sites and self.phase.contains(x))

    def mandatory(self, x) -> bool:
        return x not in self.sites and self.phase.contains(x)

    def fugacity(self, fug: FugacityMap) -> FugacityMap:
        """Boundary particles outside the window carry weight 1."""
        return _MaskedFugacity(fug, self.sites)


class _MaskedFugacity(FugacityMap):
    def __init__(self, base: FugacityMap, sites):
        super().__init__(base.z, dict(base.overrides))
        self._sites = sites

    def at(self, x):
        return super().at(x) if tuple(x) in self._sites else 1


def _candidates_for_support(model: ModelSpec, family: CoveringFamily, G, nu, ctx=None):
    """All GFcs with support G and external label nu (within a window when
    ``ctx`` is given)."""
    lat = model.lattice
    ext_lat = family.sublattice(nu)
    near = within(lat, G, model.reach + _diam(model) + 1)
    exterior, holes = hole_decomposition(lat, G)
    # exterior phase particles must stay off the support: cheap rejection first
    for p in near:
        if p in exterior and ext_lat.contains(p) and footprint_at(model, p) & G:
            return []
    if ctx is not None and any(not h <= ctx.free for h in holes):
        return []
    out = []
    for labels in itertools.product(range(1, family.tau + 1), repeat=len(holes)):
        hl = _sorted_holes((frozenset(h), lab) for h, lab in zip(holes, labels))
        base = GFc(frozenset(G), frozenset(), nu, hl)
        ph = phantom_particles(model, family, base)
        if any(footprint_at(model, p) & G for p in ph if p in near):
            continue
        cands = {sub(s, f) for s in G for f in model.footprint}
        cands = sorted(x for x in cands if footprint_at(model, x) <= G
                       and not any(add(x, e) in ph for e in model.exclusion))
        must = []
        if ctx is not None:
            must = [x for x in cands if ctx.mandatory(x)]
            cands = [x for x in cands if ctx.anchor_ok(x) and not ctx.mandatory(x)]
            outside = {s for s in G if s not in ctx.sites}
        n = len(cands)
        conf = []
        for i, a in enumerate(cands):
            m = 0
            for j, b in enumerate(cands):
                if i != j and sub(a, b) in model.exclusion:
                    m |= 1 << j
            conf.append(m)
        blocked0 = 0
        for i, a in enumerate(cands):
            if any(sub(a, b) in model.exclusion for b in must):
                blocked0 |= 1 << i
        if any(sub(a, b) in model.exclusion for a, b in itertools.combinations(must, 2)):
            continue

        def subsets(k, chosen, blocked):
            if k == n:
                yield chosen
                return
            yield from subsets(k + 1, chosen, blocked)
            if not blocked >> k & 1:
                yield from subsets(k + 1, chosen | (1 << k), blocked | conf[k])

        for mask in subsets(0, 0, blocked0):
            X = frozenset([cands[i] for i in range(n) if mask >> i & 1] + must)
            if ctx is not None and not outside <= covered_sites(model, X):
                continue
            g = GFc(frozenset(G), X, nu, hl)
            if check_gfc(model, family, g) is None:
                out.append(g)
    return out


def window_free_region(model: ModelSpec, window: Window) -> set:
    """Sites of the window not covered by the boundary-forced particles."""
    forced, _ = boundary_forced_sites(model, window)
    return set(window.sites) - covered_sites(model, forced)


def enumerate_gfcs_by_support(model: ModelSpec, family: CoveringFamily, window: Window,
                              size_cutoff: int) -> list:
    """Definitional enumeration: every connected support up to the cutoff,
    every particle set and hole labelling, kept when the three defining
    conditions hold.  Exponential in the cutoff; an oracle for small sizes."""
    ctx = _WindowContext(model, family, window)
    out = []
    for G in _connected_subsets(ctx.region, model.lattice.neighbors, size_cutoff):
        out.extend(_candidates_for_support(model, family, G, window.nu, ctx))
    return sorted(out, key=GFc.key)


def enumerate_gfcs(model: ModelSpec, family: CoveringFamily, window: Window, nu: int = None,
                   size_cutoff: int = None) -> list:
    """All nu-GFcs of the window with support size <= size_cutoff.

    A GFc is fixed by the configuration it describes: the nu covering with a
    set T of its particles removed, plus other particles S placed where T
    was.  Removable particles are the non-forced nu-particles of the window,
    so every (T, S) is visited and the result is checked against the
    definition.
    """
    nu = window.nu if nu is None else nu
    if window.nu != nu:
        window = window.with_boundary(family, nu)
    ctx = _WindowContext(model, family, window)
    cutoff = len(ctx.region) if size_cutoff is None else size_cutoff
    lat = model.lattice
    forced, _ = boundary_forced_sites(model, window)
    forced = set(forced)
    tiles = [x for x in sorted(ctx.allowed) if ctx.phase.contains(x) and x not in forced]
    fps = {x: footprint_at(model, x) for x in tiles}
    reach = 2 * _diam(model) + 5
    tile_nbrs = {x: [y for y in tiles if y != x and set_distance(lat, fps[x], fps[y]) <= reach]
                 for x in tiles}
    pad = _margin(model)
    lo, hi = _box(window.sites, pad)
    ambient = _box_sites(lo, hi)
    r = _diam(model) + 1
    inner = _box_sites([a + r for a in lo], [b - r for b in hi])
    nu_all = [p for p in ambient if ctx.phase.contains(p)]
    others = [x for x in sorted(ctx.allowed) if not ctx.phase.contains(x)]
    seen = {}
    for T in _connected_subsets(tiles, tile_nbrs.__getitem__, len(tiles)):
        area = set()
        for t in T:
            area |= fps[t]
        if len(area) > cutoff:
            continue
        cands = [x for x in others if footprint_at(model, x) <= area
                 and all(add(x, e) in T or not ctx.phase.contains(add(x, e))
                         for e in model.exclusion)]
        n = len(cands)
        conf = [sum(1 << j for j, b in enumerate(cands) if j != i and sub(a, b) in model.exclusion)
                for i, a in enumerate(cands)]
        base = [p for p in nu_all if p not in T]

        def subsets(k, chosen, blocked):
            if k == n:
                yield chosen
                return
            yield from subsets(k + 1, chosen, blocked)
            if not blocked >> k & 1:
                yield from subsets(k + 1, chosen | (1 << k), blocked | conf[k])

        for mask in subsets(0, 0, 0):
            S = [cands[i] for i in range(n) if mask >> i & 1]
            found = _extract(model, family, base + S, base + S, inner, ambient)
            if len(found) != 1:
                continue
            g = found[0]
            if g.nu != nu or g.size > cutoff or g.particles & forced:
                continue
            if any(not h <= ctx.free for h, _ in g.holes):
                continue
            if g.key() in seen:
                continue
            if check_gfc(model, family, g) is None:
                seen[g.key()] = g
    return sorted(seen.values(), key=GFc.key)


def incompatible(g1: GFc, g2: GFc, lattice) -> bool:
    """Supports at distance <= 1 (their union is connected)."""
    a, b = (g1.support, g2.support) if len(g1.support) <= len(g2.support) else (g2.support, g1.support)
    return touches(lattice, a, b)


def _polymer_sum(weights, conflicts) -> object:
    """Sum over independent sets of the conflict graph of prod weights."""
    n = len(weights)
    nbr = [(1 << i) | conflicts[i] for i in range(n)]
    memo = {0: 1}
    import sys

    limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(limit, 4 * n + 1000))

    def rec(S):
        r = memo.get(S)
        if r is not None:
            return r
        low = S & -S
        v = low.bit_length() - 1
        r = rec(S ^ low) + weights[v] * rec(S & ~nbr[v])
        memo[S] = r
        return r

    try:
        return rec((1 << n) - 1)
    finally:
        sys.setrecursionlimit(limit)


def _conflict_masks(gfcs, lattice) -> list:
    n = len(gfcs)
    masks = [0] * n
    for i in range(n):
        for j in range(i + 1, n):
            if incompatible(gfcs[i], gfcs[j], lattice):
                masks[i] |= 1 << j
                masks[j] |= 1 << i
    return masks


def verify_gfc_identity(model: ModelSpec, family: CoveringFamily, window: Window, z,
                        size_cutoff: int = None, gfcs=None) -> dict:
    """Xi_nu(z) / z_nu(window) against the hard-core polymer sum over GFcs."""
    if window.nu is None:
        raise ModelError("verify_gfc_identity: window needs a nu-phase boundary")
    ctx = _WindowContext(model, family, window)
    if size_cutoff is not None and size_cutoff < len(ctx.region):
        raise IncompleteEnumeration(
            f"cutoff {size_cutoff} below the support region size {len(ctx.region)}; "
            "enumeration not complete")
    fug = z if isinstance(z, FugacityMap) else FugacityMap(Fraction(z))
    if gfcs is None:
        gfcs = enumerate_gfcs(model, family, window, window.nu)
    cache = _HoleCache(model, family)
    lhs = Fraction(partition_function(model, window, fug)) / Fraction(
        z_nu(family, window.nu, window.sites, fug))
    wfug = ctx.fugacity(fug)
    weights = [gfc_activity(model, family, g, wfug, cache) for g in gfcs]
    rhs = _polymer_sum(weights, _conflict_masks(gfcs, model.lattice))
    return {"lhs": lhs, "rhs": Fraction(rhs), "passed": lhs == rhs, "gfcs": len(gfcs),
            "support_region": len(ctx.region), "z": fug.z}


def extraction_completeness(model: ModelSpec, family: CoveringFamily, window: Window, gfcs) -> dict:
    """Extract GFcs from every admissible configuration and confirm that every
    nu-labelled one is in the enumerated list."""
    keys = {g.key() for g in gfcs}
    missing = []
    seen = set()
    n_conf = 0
    for X in configurations(model, window):
        n_conf += 1
        for g in extract_gfcs(model, family, window, X):
            if g.nu != window.nu:
                continue
            seen.add(g.key())
            if g.key() not in keys:
                missing.append(g)
    return {"configurations": n_conf, "extracted": len(seen), "enumerated": len(keys),
            "missing": [g.to_json() for g in missing[:5]], "complete": not missing}


# -- Ursell function -----------------------------------------------------------------

def _multiset_graph(items, lattice):
    """Incompatibility adjacency masks of a list of GFcs (repeats allowed;
    a GFc is incompatible with itself)."""
    n = len(items)
    adj = [0] * n
    for i in range(n):
        for j in range(i + 1, n):
            if items[i].key() == items[j].key() or incompatible(items[i], items[j], lattice):
                adj[i] |= 1 << j
                adj[j] |= 1 << i
    return adj


def _multiplicity_factorial(items) -> int:
    counts = {}
    for g in items:
        counts[g.key()] = counts.get(g.key(), 0) + 1
    out = 1
    for c in counts.values():
        out *= math.factorial(c)
    return out


def ursell_from_graph(adj, n: int) -> int:
    """Sum over connected graphs on n vertices of prod over edges of
    (Phi - 1), where Phi - 1 = -1 on incompatible pairs and 0 otherwise.

    Uses C(S) = F(S) - sum_{min S in B, B != S} C(B) F(S \\ B), F(S) being the
    sum over all graphs on S: 1 if S has no incompatible pair, else 0.
    """
    if n == 0:
        return 0
    full = (1 << n) - 1
    indep = {}

    def F(S):
        r = indep.get(S)
        if r is None:
            r = 1
            T = S
            while T:
                low = T & -T
                i = low.bit_length() - 1
                if adj[i] & S:
                    r = 0
                    break
                T ^= low
            indep[S] = r
        return r

    C = {}
    for S in sorted(range(1, full + 1), key=lambda s: bin(s).count("1")):
        low = S & -S
        rest = S ^ low
        total = F(S)
        sub_ = (rest - 1) & rest if rest else 0
        while rest:
            # B = low | sub_ runs over proper subsets of S containing its minimum
            B = low | sub_
            total -= C[B] * F(S ^ B)
            if sub_ == 0:
                break
            sub_ = (sub_ - 1) & rest
        C[S] = total
    return C[full]


def ursell(items, lattice) -> Fraction:
    """Phi^T of a multiset of GFcs (given as a list, repeats = multiplicity)."""
    items = list(items)
    if not items:
        raise ValueError("ursell: empty multiset")
    if len(items) > 12:
        raise ValueError("ursell: multiset over budget (n > 12)")
    adj = _multiset_graph(items, lattice)
    return Fraction(ursell_from_graph(adj, len(items)), _multiplicity_factorial(items))


def ursell_bruteforce(items, lattice) -> Fraction:
    """Same quantity by summing over every edge subset (n <= 6)."""
    items = list(items)
    n = len(items)
    if n > 6:
        raise ValueError("ursell_bruteforce: n > 6")
    adj = _multiset_graph(items, lattice)
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    total = 0
    for mask in range(1 << len(pairs)):
        edges = [pairs[k] for k in range(len(pairs)) if mask >> k & 1]
        w = 1
        for i, j in edges:
            w *= -1 if adj[i] >> j & 1 else 0
            if w == 0:
                break
        if w == 0:
            continue
        parent = list(range(n))

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for i, j in edges:
            parent[find(i)] = find(j)
        if len({find(i) for i in range(n)}) == 1:
            total += w
    return Fraction(total, _multiplicity_factorial(items))


# -- infinite-volume GFcs ------------------------------------------------------------

def _ball(lattice, r: int) -> list:
    d = lattice.dim
    out = []
    for v in itertools.product(range(-r, r + 1), repeat=d):
        if any(v) and lattice.distance(v) <= r:
            out.append(v)
    return out


def fundamental_domain(sub_lattice) -> list:
    """One representative per coset of the translation lattice of a sublattice."""
    d = len(sub_lattice.basis)
    P = sub_lattice.minimal_period()
    return sorted({reduce_mod_basis(sub_lattice.basis, v)
                   for v in itertools.product(range(P), repeat=d)})


def bulk_gfcs(model: ModelSpec, family: CoveringFamily, nu: int, max_empty: int,
              max_support: int = None) -> list:
    """One representative per translation class of the nu-GFcs on the infinite
    lattice with at most ``max_empty`` empty sites and support at most
    ``max_support`` (default (N + 1) * max_empty, the largest support that many
    empty sites can carry).  Representatives have their smallest empty site in
    the fundamental domain of the nu-sublattice.

    Depth-first search over local configurations: starting from one empty
    site, every site next to an empty site and every site of a displaced
    nu-particle must be empty or covered by a particle of the GFc; everything
    left over is covered by the nu-phase.  Holes therefore carry label nu.
    """
    lat = model.lattice
    phase = family.sublattice(nu)
    excl = model.exclusion_nonzero
    if max_support is None:
        max_support = (compute_N(model) + 1) * max_empty
    owners = {}

    def owner(q):
        p = owners.get(q)
        if p is None:
            p = next(sub(q, f) for f in model.footprint if phase.contains(sub(q, f)))
            owners[q] = p
        return p

    out = {}

    def finish(e0, empty, parts):
        G = set(empty)
        for x in parts:
            G |= footprint_at(model, x)
        for x in parts:
            if not touches(lat, footprint_at(model, x), empty):
                return
        if not _connected(lat, G):
            return
        _, holes = hole_decomposition(lat, G)
        hl = _sorted_holes((frozenset(h), nu) for h in holes)
        g = GFc(frozenset(G), frozenset(parts), nu, hl)
        if g.key() not in out and check_gfc(model, family, g) is None:
            out[g.key()] = g

    visited = set()
    reach = _diam(model) + 2

    def search(e0, empty, parts, covered, absent, required):
        state = (empty, parts)
        if state in visited:
            return
        visited.add(state)
        if not required:
            finish(e0, empty, parts)
            # a further empty site whose halo can reach the current support
            if len(empty) < max_empty:
                done = set(empty) | set(covered)
                for q in sorted(within(lat, done, reach) - done):
                    if q > e0 and len(done) < max_support:
                        ne, na, nr = _add_empty(q, empty, covered, absent, frozenset())
                        search(e0, ne, parts, covered, na, nr)
            return
        q = min(required)
        rest = required - {q}
        # q left empty
        if q > e0 and len(empty) < max_empty and len(covered) + len(empty) < max_support:
            ne, na, nr = _add_empty(q, empty, covered, absent, rest)
            search(e0, ne, parts, covered, na, nr)
        # q covered by a particle of the GFc
        for f in model.footprint:
            x = sub(q, f)
            if x in absent:
                continue
            fx = footprint_at(model, x)
            if any(s in empty or s in covered for s in fx):
                continue
            if len(covered) + len(empty) + len(fx) > max_support:
                continue
            if any(add(x, e) in parts for e in excl):
                continue
            new_cov = dict(covered)
            for s_ in fx:
                new_cov[s_] = x
            new_abs = set(absent)
            req = set(rest)
            for e in excl:
                p = add(x, e)
                if phase.contains(p) and p not in new_abs:
                    new_abs.add(p)
                    req.update(s_ for s_ in footprint_at(model, p)
                               if s_ not in empty and s_ not in new_cov)
            req -= set(fx)
            search(e0, empty, parts | {x}, new_cov, frozenset(new_abs), frozenset(req))

    def _add_empty(q, empty, covered, absent, required):
        empty = empty | {q}
        req = set(required)
        req.discard(q)
        new_abs = set(absent)
        p = owner(q)
        if p not in new_abs:
            new_abs.add(p)
            req.update(s_ for s_ in footprint_at(model, p) if s_ not in empty and s_ not in covered)
        req.update(n for n in lat.neighbors(q) if n not in empty and n not in covered)
        return empty, frozenset(new_abs), frozenset(req)

    for e0 in fundamental_domain(phase):
        empty, absent, req = _add_empty(e0, frozenset(), {}, frozenset(), frozenset())
        search(e0, empty, frozenset(), {}, absent, req)
    return sorted(out.values(), key=GFc.key)


def _connected(lattice, sites) -> bool:
    return len(components(lattice, sites)) == 1


def _translation_in(phase, t) -> bool:
    from .coverings import in_lattice

    return in_lattice(phase.basis, t)


def incompatible_translates(lattice, phase, gamma: GFc, rep: GFc) -> list:
    """Translations t of the nu-sublattice with rep + t incompatible with gamma."""
    shell = within(lattice, gamma.support, 1)
    ts = {sub(a, b) for a in shell for b in rep.support}
    return sorted(t for t in ts if _translation_in(phase, t)
                  and touches(lattice, gamma.support, {add(s, t) for s in rep.support}))


def _canonical_cluster(items, phase):
    m = min(min(g.support) for g in items)
    t = sub(reduce_mod_basis(phase.basis, m), m)
    moved = [g.translate(t) for g in items]
    return tuple(sorted((g.key() for g in moved))), moved


def bulk_clusters(model: ModelSpec, family: CoveringFamily, nu: int, reps, exponents,
                  K: int) -> list:
    """One representative per translation class of every connected multiset of
    nu-GFcs with total exponent <= K.  ``exponents[i]`` is the y-order of
    reps[i]."""
    lat = model.lattice
    phase = family.sublattice(nu)
    rep_of = {}
    for i, r in enumerate(reps):
        rep_of[r.key()] = i
    found = {}

    def class_of(g):
        # index of the representative g is a translate of
        e = min(g.support - covered_sites(model, g.particles))
        t = sub(reduce_mod_basis(phase.basis, e), e)
        return rep_of[g.translate(t).key()]

    def grow(items, order_left):
        key, moved = _canonical_cluster(items, phase)
        if key in found:
            return
        found[key] = moved
        for g in list(items):
            for j, r in enumerate(reps):
                if exponents[j] > order_left:
                    continue
                for t in incompatible_translates(lat, phase, g, r):
                    grow(items + [r.translate(t)], order_left - exponents[j])

    for i, r in enumerate(reps):
        if exponents[i] <= K:
            grow([r], K - exponents[i])
    out = []
    for key, items in sorted(found.items()):
        out.append([class_of(g) for g in items] and items)
    return out


def _series_product(series_list, K):
    out = [Fraction(1)] + [Fraction(0)] * K
    for s in series_list:
        out = series_mul(out, s, K)
    return out


def bulk_c_k(model: ModelSpec, family: CoveringFamily, nu: int, K: int) -> dict:
    """Per-site high-fugacity coefficients c_1..c_K from the bulk cluster
    expansion, exact rationals.

    GFc exponents equal rho_m |E| (empty sites), so order K needs GFcs with
    at most K / rho_m empty sites, hence supports of at most
    (N + 1) K / rho_m sites.
    """
    rho = model.max_density
    max_empty = int(Fraction(K) / rho)
    cache = _HoleCache(model, family)
    reps = bulk_gfcs(model, family, nu, max_empty)
    series = [activity_series(model, family, g, K, cache) for g in reps]
    exps = []
    for g, s in zip(reps, series):
        nz = [k for k, v in enumerate(s) if v]
        e = g.exponent(family)
        if e < 1:
            raise ArithmeticError(f"non-positive GFc exponent {e}: sliding model?")
        exps.append(nz[0] if nz else K + 1)
    keep = [i for i in range(len(reps)) if exps[i] <= K]
    reps = [reps[i] for i in keep]
    series = [series[i] for i in keep]
    exps = [exps[i] for i in keep]
    phase = family.sublattice(nu)
    index = phase.index
    by_key = {r.key(): s for r, s in zip(reps, series)}
    total = [Fraction(0)] * (K + 1)
    clusters = bulk_clusters(model, family, nu, reps, exps, K)
    for items in clusters:
        ser = []
        for g in items:
            e = min(g.support - covered_sites(model, g.particles))
            t = sub(reduce_mod_basis(phase.basis, e), e)
            ser.append(by_key[g.translate(t).key()])
        phi = ursell(items, model.lattice)
        prod = _series_product(ser, K)
        for k in range(K + 1):
            total[k] += phi * prod[k]
    c = [v / index for v in total[1:]]
    return {"nu": nu, "K": K, "coefficients": c, "gfc_classes": len(reps),
            "clusters": len(clusters), "max_empty": max_empty,
            "support_bound": (compute_N(model) + 1) * max_empty}


# -- finite-window cluster expansion ------------------------------------------------

def window_clusters(gfcs, lattice, max_size: int):
    """Connected multisets (as sorted index tuples) of at most max_size GFcs."""
    n = len(gfcs)
    adj = _conflict_masks(gfcs, lattice)
    seen = set()
    stack = [(i,) for i in range(n)]
    while stack:
        c = stack.pop()
        if c in seen:
            continue
        seen.add(c)
        if len(c) == max_size:
            continue
        members = set(c)
        cand = set(members)
        for i in members:
            m = adj[i]
            while m:
                low = m & -m
                cand.add(low.bit_length() - 1)
                m ^= low
        for j in cand:
            stack.append(tuple(sorted(c + (j,))))
    return sorted(seen, key=lambda c: (len(c), c))


def truncated_cluster_log(model: ModelSpec, family: CoveringFamily, window: Window, z,
                          max_cluster_size: int, gfcs=None) -> dict:
    """Cluster sum up to max_cluster_size against the exact log(Xi_nu / z_nu)."""
    import mpmath

    fug = z if isinstance(z, FugacityMap) else FugacityMap(Fraction(z))
    ctx = _WindowContext(model, family, window)
    if gfcs is None:
        gfcs = enumerate_gfcs(model, family, window)
    cache = _HoleCache(model, family)
    wfug = ctx.fugacity(fug)
    zeta = [Fraction(gfc_activity(model, family, g, wfug, cache)) for g in gfcs]
    exact_ratio = Fraction(partition_function(model, window, fug)) / Fraction(
        z_nu(family, window.nu, window.sites, fug))
    with mpmath.workdps(40):
        exact = mpmath.log(mpmath.mpf(exact_ratio.numerator) / exact_ratio.denominator)
        partial = []
        total = Fraction(0)
        clusters = window_clusters(gfcs, model.lattice, max_cluster_size) if max_cluster_size else []
        for size in range(1, max_cluster_size + 1):
            for c in clusters:
                if len(c) != size:
                    continue
                items = [gfcs[i] for i in c]
                w = ursell(items, model.lattice)
                for i in c:
                    w *= zeta[i]
                total += w
            partial.append(float(abs(mpmath.mpf(total.numerator) / total.denominator - exact)))
        return {"exact_log": float(exact), "truncated": float(mpmath.mpf(total.numerator) / total.denominator),
                "errors_by_order": partial,
                "monotone": all(b <= a for a, b in zip(partial, partial[1:])),
                "gfcs": len(gfcs)}


# -- convergence certificate -----------------------------------------------------

def compute_N(model: ModelSpec) -> int:
    """Largest volume of the particles neighbouring one site (over all
    configurations), by exhaustive search."""
    lat = model.lattice
    x = model.zero
    near = within(lat, {x}, 1) - {x}
    cands = sorted({sub(s, f) for s in near for f in model.footprint
                    if x not in footprint_at(model, sub(s, f))})
    best = 0

    def rec(k, chosen, vol):
        nonlocal best
        best = max(best, vol)
        for i in range(k, len(cands)):
            y = cands[i]
            if any(sub(y, c) in model.exclusion for c in chosen):
                continue
            rec(i + 1, chosen + [y], vol + len(model.footprint))

    rec(0, [], 0)
    return best


@dataclass(frozen=True)
class BZParams:
    theta: Fraction
    xi: Fraction
    N: int
    chi: int
    rho_m: Fraction
    varsigma: Fraction = Fraction(1)

    def __post_init__(self):
        if not (0 < self.theta < 1 and 0 < self.xi < 1 and self.theta + self.xi < 1):
            raise ValueError("BZParams: need theta, xi in (0,1) with theta + xi < 1")
        if self.varsigma < 1:
            raise ValueError("BZParams: varsigma must be >= 1")

    @classmethod
    def for_model(cls, model: ModelSpec, theta=Fraction(1, 4), xi=Fraction(1, 4), varsigma=1):
        return cls(Fraction(theta), Fraction(xi), compute_N(model), model.lattice.coordination,
                   model.max_density, Fraction(varsigma))

    def log_alpha(self, z) -> float:
        return (math.log(float(self.varsigma)) + self.chi
                - float(self.rho_m) / (self.N + 1) * _log_abs(z))

    def alpha(self, z) -> float:
        return math.exp(self.log_alpha(z))

    def delta(self, z) -> float:
        return float(self.varsigma) * math.exp((1 - float(self.theta + self.xi)) * self.log_alpha(z))


def _log_abs(z) -> float:
    if isinstance(z, Fraction):
        return math.log(z.numerator) - math.log(z.denominator)
    return math.log(abs(z))


def bz_certificate(model: ModelSpec, family: CoveringFamily, nu: int, z, params: BZParams,
                   size_cutoff: int) -> dict:
    """Check the two cluster-expansion conditions on every nu-GFc class with
    support at most size_cutoff (truncated neighbour sums; the tail beyond the
    cutoff is bounded geometrically and reported separately)."""
    z = Fraction(z)
    la = params.log_alpha(z)
    alpha = math.exp(la)
    delta = params.delta(z)
    report = {"z": str(z), "alpha": alpha, "delta": delta, "theta": str(params.theta),
              "xi": str(params.xi), "varsigma": str(params.varsigma), "N": params.N,
              "chi": params.chi, "rho_m": str(params.rho_m), "size_cutoff": size_cutoff}
    if delta >= 1:
        report.update(passed=False, reason="delta >= 1", checked=0)
        return report
    reps = bulk_gfcs(model, family, nu, size_cutoff, max_support=size_cutoff)
    cache = _HoleCache(model, family)
    fug = FugacityMap(z)
    phase = family.sublattice(nu)
    lat = model.lattice
    zeta = [abs(float(gfc_activity(model, family, g, fug, cache))) for g in reps]
    th, xi = float(params.theta), float(params.xi)

    def a_of(g):
        return -th * g.size * la

    def weight(i):
        g = reps[i]
        return zeta[i] * math.exp(-(th + xi) * g.size * la)

    rows = []
    ok = True
    factor = delta / abs(math.log(1 - delta))
    for i, g in enumerate(reps):
        w = weight(i)
        neigh = 0.0
        for j, r in enumerate(reps):
            neigh += len(incompatible_translates(lat, phase, g, r)) * weight(j)
        bound = factor * a_of(g)
        c1 = w <= delta
        c2 = neigh <= bound
        ok = ok and c1 and c2
        rows.append({"support_size": g.size, "activity": zeta[i], "weighted": w,
                     "margin_activity": delta - w, "neighbour_sum": neigh,
                     "neighbour_bound": bound, "margin_sum": bound - neigh,
                     "passed": c1 and c2})
    # GFcs beyond the cutoff: |zeta| e^{a+d} <= varsigma alpha^{(1-theta-xi)|Gamma|}, and
    # alpha already carries the e^chi entropy factor per site
    q = math.exp((1 - th - xi) * la)
    tail = float(params.varsigma) * q ** (size_cutoff + 1) / (1 - q) if q < 1 else math.inf
    report.update(passed=ok and bool(reps), checked=len(reps), rows=rows,
                  min_margin_activity=min((r["margin_activity"] for r in rows), default=None),
                  min_margin_sum=min((r["margin_sum"] for r in rows), default=None),
                  tail_bound_per_site=tail,
                  caveat="neighbour sums truncated at the size cutoff")
    return report
