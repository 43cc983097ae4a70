"""Exact enumeration on finite regions.

Two independent counting routes are provided:

* a row transfer matrix for tori and free rectangular boxes, with
  multi-modular integer arithmetic (numpy) recombined by CRT;
* a memoized independent-set recursion on the conflict graph, which also
  evaluates weighted sums for densities and correlations.

Windows with a fixed nu-phase boundary are handled by explicit depth-first
enumeration of the admissible configurations.
"""

from __future__ import annotations

import itertools
import math
import os
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Optional

import numpy as np

from .coverings import CoveringFamily, Sublattice
from .lattice import (
    LatticeKind,
    ModelError,
    ModelSpec,
    add,
    components,
    covered_sites,
    footprint_at,
    is_connected,
    sub,
    within,
)

DEFAULT_BUDGET = 1 << 26


class BudgetExceeded(RuntimeError):
    """State space or enumeration size exceeds the configured budget."""


class BoundaryError(ValueError):
    """Boundary condition incompatible with the region or inconsistent."""


class PoleError(ZeroDivisionError):
    """Partition function vanishes at the evaluation point."""


def state_budget() -> int:
    return int(os.environ.get("LATGAS_BUDGET", DEFAULT_BUDGET))


# -- regions -------------------------------------------------------------------

@lru_cache(maxsize=None)
def _reduced_exclusion(model: ModelSpec, extents: tuple) -> frozenset:
    return frozenset(tuple(c % L for c, L in zip(e, extents)) for e in model.exclusion)


@dataclass(frozen=True)
class Torus:
    lattice: LatticeKind
    extents: tuple

    def __post_init__(self):
        ext = tuple(int(L) for L in self.extents)
        object.__setattr__(self, "extents", ext)
        if len(ext) != self.lattice.dim:
            raise ModelError("region.torus: number of extents does not match dimension")
        if any(L < 1 for L in ext):
            raise ModelError("region.torus: extents must be positive")

    @property
    def volume(self) -> int:
        return math.prod(self.extents)

    def reduce(self, s):
        return tuple(c % L for c, L in zip(s, self.extents))

    def all_sites(self):
        return list(itertools.product(*(range(L) for L in self.extents)))

    def offset_excluded(self, model: ModelSpec, diff) -> bool:
        return self.reduce(diff) in _reduced_exclusion(model, self.extents)

    def self_excluded(self, model: ModelSpec) -> bool:
        """True if a particle conflicts with its own periodic image."""
        z = model.zero
        return any(self.reduce(e) == z for e in model.exclusion_nonzero)

    def distance(self, a, b) -> int:
        delta = self.reduce(sub(a, b))
        best = None
        for shift in itertools.product((-1, 0), repeat=len(delta)):
            v = tuple(c + s * L for c, s, L in zip(delta, shift, self.extents))
            dist = self.lattice.distance(v)
            best = dist if best is None else min(best, dist)
        return best

    def describe(self) -> str:
        return "torus " + "x".join(map(str, self.extents))

    def to_json(self):
        return {"torus": list(self.extents)}


@dataclass(frozen=True, eq=False)
class Window:
    """A finite site set of the infinite lattice.

    ``tiling`` is the sublattice whose footprints tile the window (None for
    an untiled free box used only for counting), ``nu``/``phase`` describe a
    fixed-phase boundary condition (None for free boundary).
    """

    lattice: LatticeKind
    sites: frozenset
    tiling: Optional[Sublattice] = None
    mu: Optional[int] = None
    nu: Optional[int] = None
    phase: Optional[Sublattice] = None

    @property
    def volume(self) -> int:
        return len(self.sites)

    def reduce(self, s):
        return s

    def all_sites(self):
        return sorted(self.sites)

    def offset_excluded(self, model: ModelSpec, diff) -> bool:
        return tuple(diff) in model.exclusion

    def box_extents(self):
        """Extents if the window is a box anchored at the origin, else None."""
        if not self.sites:
            return None
        d = self.lattice.dim
        lo = [min(s[i] for s in self.sites) for i in range(d)]
        hi = [max(s[i] for s in self.sites) for i in range(d)]
        if any(lo):
            return None
        ext = tuple(h + 1 for h in hi)
        if math.prod(ext) != len(self.sites):
            return None
        return ext

    def describe(self) -> str:
        tag = "free" if self.nu is None else f"nu={self.nu}"
        return f"window |L|={len(self.sites)} ({tag})"

    def to_json(self):
        out = {"sites": [list(s) for s in sorted(self.sites)]}
        if self.mu is not None:
            out["mu"] = self.mu
        if self.nu is not None:
            out["nu"] = self.nu
        return {"window": out}

    def with_boundary(self, family: CoveringFamily, nu: Optional[int]) -> "Window":
        if nu is None:
            return Window(self.lattice, self.sites, self.tiling, self.mu)
        return Window(self.lattice, self.sites, self.tiling, self.mu, nu, family.sublattice(nu))


def box_window(lattice: LatticeKind, extents) -> Window:
    """Free-boundary box [0, L_1) x ... (not required to be tiled)."""
    sites = frozenset(itertools.product(*(range(L) for L in extents)))
    return Window(lattice, sites)


def _holes(lattice: LatticeKind, sites) -> list:
    """Finite components of the complement of ``sites``."""
    sites = set(sites)
    d = lattice.dim
    lo = [min(s[i] for s in sites) - 1 for i in range(d)]
    hi = [max(s[i] for s in sites) + 1 for i in range(d)]
    box = set(itertools.product(*(range(a, b + 1) for a, b in zip(lo, hi))))
    comp = components(lattice, box - sites)
    corner = tuple(lo)
    return [c for c in comp if corner not in c]


def tiling_anchors(model: ModelSpec, sublattice: Sublattice, sites) -> Optional[list]:
    """Anchors of ``sublattice`` whose footprints tile ``sites`` exactly, or None."""
    sites = set(sites)
    cand = {sub(s, f) for s in sites for f in model.footprint}
    anchors = sorted(x for x in cand if sublattice.contains(x) and footprint_at(model, x) <= sites)
    covered = []
    for x in anchors:
        covered.extend(footprint_at(model, x))
    if len(covered) == len(sites) and set(covered) == sites:
        return anchors
    return None


def tiled_window(model: ModelSpec, family: CoveringFamily, sites, mu: Optional[int] = None,
                 nu: Optional[int] = None) -> Window:
    """Validated window: bounded, connected, simply connected, and tiled."""
    sites = frozenset(tuple(s) for s in sites)
    lat = model.lattice
    if not sites:
        return Window(lat, sites, None, mu, None, None)
    if not is_connected(lat, sites):
        raise ModelError("region.window: site set is not connected")
    if _holes(lat, sites):
        raise ModelError("region.window: complement is not connected")
    labels = [mu] if mu is not None else list(range(1, family.tau + 1))
    for lab in labels:
        if lab < 1 or lab > family.tau:
            raise ModelError(f"region.window.mu: label {lab} out of range 1..{family.tau}")
        if tiling_anchors(model, family.sublattice(lab), sites) is not None:
            w = Window(lat, sites, family.sublattice(lab), lab)
            if nu is not None:
                if nu < 1 or nu > family.tau:
                    raise ModelError(f"region.window.nu: label {nu} out of range 1..{family.tau}")
                w = w.with_boundary(family, nu)
            return w
    raise ModelError("region.window: site set is not tiled by the requested sublattice")


def anchor_box_window(model: ModelSpec, family: CoveringFamily, mu: int, extents,
                      nu: Optional[int] = None) -> Window:
    """Union of the footprints of all L_mu anchors in a box [0, n_1) x ..."""
    lat = family.sublattice(mu)
    anchors = [x for x in itertools.product(*(range(n) for n in extents)) if lat.contains(x)]
    sites = covered_sites(model, anchors)
    return tiled_window(model, family, sites, mu=mu, nu=nu)


def region_from_json(model: ModelSpec, data: dict, family: Optional[CoveringFamily] = None):
    if not isinstance(data, dict):
        raise ModelError("region: expected an object")
    if "torus" in data:
        return Torus(model.lattice, tuple(data["torus"]))
    if "box" in data:
        return box_window(model.lattice, tuple(data["box"]))
    if "window" in data:
        w = data["window"]
        if family is None:
            raise ModelError("region.window: a covering family is required")
        nu = w.get("nu")
        if "anchor_box" in w:
            return anchor_box_window(model, family, w.get("mu", 1), w["anchor_box"], nu)
        if "sites" not in w:
            raise ModelError("region.window: needs 'sites' or 'anchor_box'")
        return tiled_window(model, family, [tuple(s) for s in w["sites"]], w.get("mu"), nu)
    raise ModelError("region: expected one of 'torus', 'box', 'window'")


def check_commensurate(torus: Torus, family: CoveringFamily):
    """Reject tori whose extents are not multiples of every covering period."""
    for s in family.sublattices:
        p = s.minimal_period()
        if any(L % p for L in torus.extents):
            raise ModelError(
                f"region.torus: extents {list(torus.extents)} not commensurate with covering period {p}")


# -- polynomials and fugacities ------------------------------------------------

@dataclass(frozen=True)
class PartitionPolynomial:
    coefficients: tuple
    region: object = None

    @property
    def n_max(self) -> int:
        return len(self.coefficients) - 1

    def evaluate(self, z):
        acc = 0
        for c in reversed(self.coefficients):
            acc = acc * z + c
        return acc

    def defect_counts(self) -> list:
        return list(reversed(self.coefficients))

    def to_json(self):
        return {"n_max": self.n_max, "coefficients": [str(c) for c in self.coefficients]}


def defect_counts(p: PartitionPolynomial) -> list:
    """Q(k) = Z(N_max - k)."""
    return p.defect_counts()


def _trim(coeffs) -> tuple:
    coeffs = list(coeffs)
    while len(coeffs) > 1 and coeffs[-1] == 0:
        coeffs.pop()
    return tuple(int(c) for c in coeffs)


@dataclass
class FugacityMap:
    z: object = 1
    overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        self.overrides = {tuple(k): v for k, v in self.overrides.items()}

    def at(self, x):
        return self.overrides.get(tuple(x), self.z)

    @property
    def uniform(self) -> bool:
        return not self.overrides


# -- conflict graph ------------------------------------------------------------

class _Ensemble:
    """Admissible configurations of a region as a conflict graph.

    For nu-boundary windows the forced particles are fixed up front and the
    remaining "critical" sites (next to a forced footprint, not covered by
    forced or phantom particles) must be covered by the free particles.
    """

    def __init__(self, model: ModelSpec, region):
        self.model = model
        self.region = region
        self.explicit = isinstance(region, Window) and region.nu is not None
        if self.explicit:
            self.forced, self.phantoms = boundary_forced_sites(model, region)
        else:
            self.forced, self.phantoms = [], []
        self.anchors = _allowed_anchors(model, region, self.phantoms)
        self.index = {a: i for i, a in enumerate(self.anchors)}
        self.nbr = _conflict_masks(model, region, self.anchors)
        n = len(self.anchors)
        self.fmask = 0
        self.start = (1 << n) - 1
        self.cover = [0] * n        # critical sites covered by each anchor
        self.coverers = []          # anchors covering each critical site
        self.feasible = True
        if self.explicit:
            self._setup_boundary()
        self._memo = {}
        self._configs = None

    def _setup_boundary(self):
        model, anchors, nbr = self.model, self.anchors, self.nbr
        for x in self.forced:
            i = self.index.get(x)
            if i is None:
                raise BoundaryError("inconsistent boundary: forced particle overlaps the exterior phase")
            if self.fmask & nbr[i]:
                raise BoundaryError("inconsistent boundary: forced particles overlap")
            self.fmask |= 1 << i
        blocked = 0
        for i in range(len(anchors)):
            if self.fmask >> i & 1:
                blocked |= nbr[i]
        self.start = ((1 << len(anchors)) - 1) & ~blocked
        covered = covered_sites(model, self.phantoms) | covered_sites(model, self.forced)
        need = set()
        for x in self.forced:
            need |= within(model.lattice, footprint_at(model, x), 1)
        self.critical = sorted(need - covered)
        for c_idx, c in enumerate(self.critical):
            m = 0
            for i in range(len(anchors)):
                if self.start >> i & 1 and c in footprint_at(model, anchors[i]):
                    m |= 1 << i
                    self.cover[i] |= 1 << c_idx
            if not m:
                self.feasible = False
            self.coverers.append(m)

    def key(self, x):
        return self.region.reduce(tuple(x))

    def _run(self, memo, S, need, leaf, step):
        """Memoized sum over independent subsets of S covering every site in
        ``need``; ``step(v, skip, take)`` combines the two branches."""
        nbr, cover, coverers = self.nbr, self.cover, self.coverers
        limit = sys.getrecursionlimit()
        sys.setrecursionlimit(max(limit, 4 * len(self.anchors) + 1000))
        budget = state_budget()

        def rec(S, need):
            key = (S, need)
            r = memo.get(key)
            if r is not None:
                return r
            m = need
            while m:
                low = m & -m
                if not coverers[low.bit_length() - 1] & S:
                    return None
                m ^= low
            if S == 0:
                return leaf
            if len(memo) > budget:
                raise BudgetExceeded(f"enumeration: more than {budget} memo states")
            low = S & -S
            v = low.bit_length() - 1
            r = step(v, rec(S ^ low, need), rec(S & ~nbr[v], need & ~cover[v]))
            memo[key] = r
            return r

        try:
            return rec(S, need)
        finally:
            sys.setrecursionlimit(limit)

    def _all_need(self):
        return (1 << len(self.coverers)) - 1

    def counts(self) -> tuple:
        if not self.feasible:
            raise BoundaryError("inconsistent boundary: no admissible configuration")
        memo = self._memo.setdefault("poly", {})

        def step(v, skip, take):
            skip = skip or ()
            take = take or ()
            out = [0] * max(len(skip), len(take) + 1)
            for k, c in enumerate(skip):
                out[k] += c
            for k, c in enumerate(take):
                out[k + 1] += c
            return tuple(out) or None

        r = self._run(memo, self.start, self._all_need(), (1,), step)
        if r is None:
            raise BoundaryError("inconsistent boundary: no admissible configuration")
        return _trim((0,) * len(self.forced) + tuple(r))

    def configs(self):
        if self._configs is None:
            self._configs = list(_omega_configs(self))
        return self._configs

    def weighted(self, fug: FugacityMap, require=()):
        """Sum of prod z over admissible configurations containing ``require``."""
        weights = [fug.at(a) for a in self.anchors]
        S, need = self.start, self._all_need()
        pre = 1
        for i in range(len(self.anchors)):
            if self.fmask >> i & 1:
                pre = pre * weights[i]
        if not self.feasible:
            return 0
        for i in sorted({self.index.get(self.key(x)) for x in require}, key=lambda v: (v is None, v)):
            if i is None:
                return 0
            if self.fmask >> i & 1:
                continue
            if not S >> i & 1:
                return 0
            S &= ~self.nbr[i]
            need &= ~self.cover[i]
            pre = pre * weights[i]
        wkey = (fug.z, tuple(sorted(fug.overrides.items())))
        memo = self._memo.setdefault(wkey, {})

        def step(v, skip, take):
            if take is None:
                return skip
            t = weights[v] * take
            return t if skip is None else skip + t

        r = self._run(memo, S, need, 1, step)
        return 0 if r is None else pre * r


def _allowed_anchors(model: ModelSpec, region, phantoms=()) -> list:
    if isinstance(region, Torus):
        if region.self_excluded(model):
            return []
        return region.all_sites()
    sites = region.sites
    if region.nu is None:
        cand = {sub(s, f) for s in sites for f in model.footprint}
        return sorted(x for x in cand if footprint_at(model, x) <= sites)
    phantom_set = set(phantoms)
    out = []
    for x in sorted(sites):
        if all(sub(x, p) not in model.exclusion for p in _near(model, x, phantom_set)):
            out.append(x)
    return out


def _near(model: ModelSpec, x, points: set):
    for e in model.exclusion:
        p = add(x, e)
        if p in points:
            yield p


def _conflict_masks(model: ModelSpec, region, anchors) -> list:
    index = {a: i for i, a in enumerate(anchors)}
    nbr = []
    for i, a in enumerate(anchors):
        m = 1 << i
        for e in model.exclusion_nonzero:
            j = index.get(region.reduce(add(a, e)))
            if j is not None:
                m |= 1 << j
        nbr.append(m)
    return nbr


# -- nu-boundary windows -------------------------------------------------------

def boundary_forced_sites(model: ModelSpec, window) -> tuple:
    """(forced anchors B_nu, phantom anchors X_nu within the interaction margin)."""
    if isinstance(window, Torus):
        raise BoundaryError("boundary_forced_sites: a torus has no boundary")
    if window.nu is None or window.phase is None:
        raise BoundaryError("boundary_forced_sites: window has no nu-phase boundary")
    sites = window.sites
    if not sites:
        return [], []
    lat = window.lattice
    phase = window.phase
    forced = []
    for x in sorted(sites):
        if not phase.contains(x):
            continue
        if any(s not in sites for s in within(lat, footprint_at(model, x), 1)):
            forced.append(x)
    margin = 2 * model.reach + 2
    d = lat.dim
    lo = [min(s[i] for s in sites) - margin for i in range(d)]
    hi = [max(s[i] for s in sites) + margin for i in range(d)]
    phantoms = [p for p in itertools.product(*(range(a, b + 1) for a, b in zip(lo, hi)))
                if p not in sites and phase.contains(p)]
    return forced, phantoms


def _omega_configs(ens: _Ensemble):
    """Bitmasks (over ens.anchors) of every configuration in Omega_nu, by plain
    depth-first search (the oracle for the memoized route)."""
    model, anchors, nbr = ens.model, ens.anchors, ens.nbr
    if not ens.feasible:
        return
    free = [i for i in range(len(anchors)) if ens.start >> i & 1]
    crit = set(ens.critical)
    n = len(free)

    def rec(k, chosen, taken):
        if k == n:
            covered = covered_sites(model, [anchors[i] for i in range(len(anchors)) if chosen >> i & 1])
            if crit <= covered:
                yield chosen
            return
        i = free[k]
        if not taken >> i & 1:
            yield from rec(k + 1, chosen | (1 << i), taken | nbr[i])
        yield from rec(k + 1, chosen, taken)

    blocked = 0
    for i in range(len(anchors)):
        if ens.fmask >> i & 1:
            blocked |= nbr[i]
    yield from rec(0, ens.fmask, blocked)


# -- transfer matrix -----------------------------------------------------------

def _is_prime(n: int) -> bool:
    if n < 2:
        return False
    for q in (2, 3, 5, 7, 11, 13):
        if n % q == 0:
            return n == q
    d, r = n - 1, 0
    while d % 2 == 0:
        d //= 2
        r += 1
    for a in (2, 3, 5, 7, 11, 13, 17):
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(r - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def _primes_below(n: int, count: int) -> list:
    out = []
    c = n - 1
    while len(out) < count:
        if _is_prime(c):
            out.append(c)
        c -= 1
    return out


def _crt(residues, primes) -> int:
    x, m = 0, 1
    for r, p in zip(residues, primes):
        t = ((int(r) - x) * pow(m, -1, p)) % p
        x += m * t
        m *= p
    return x


def _row_sets(width, in_row_nbr, allowed_mask, budget):
    """All independent subsets (bitmasks) of a row's in-row conflict graph."""
    out = []

    def rec(j, chosen, blocked):
        if len(out) > budget:
            raise BudgetExceeded(f"transfer matrix: more than {budget} row states")
        if j == width:
            out.append(chosen)
            return
        rec(j + 1, chosen, blocked)
        if allowed_mask >> j & 1 and not blocked >> j & 1:
            rec(j + 1, chosen | (1 << j), blocked | in_row_nbr[j])

    rec(0, 0, 0)
    return out


def _transfer_counts(model: ModelSpec, region) -> Optional[tuple]:
    """Z(k) by a row transfer matrix along axis 0, or None if not applicable."""
    torus = isinstance(region, Torus)
    if torus:
        ext = region.extents
        if region.self_excluded(model):
            return (1,)
    else:
        if region.nu is not None:
            return None
        ext = region.box_extents()
        if ext is None:
            return None
    h = max(e[0] for e in model.exclusion)
    L0, rest = ext[0], ext[1:]
    if torus and L0 <= 2 * h:
        return None
    budget = state_budget()
    row_sites = list(itertools.product(*(range(L) for L in rest)))
    pos = {s: j for j, s in enumerate(row_sites)}
    width = len(row_sites)

    def target(j, e_rest):
        t = add(row_sites[j], e_rest) if rest else ()
        if torus:
            t = tuple(c % L for c, L in zip(t, rest))
        return pos.get(t)

    by_k = {k: [e[1:] for e in model.exclusion_nonzero if e[0] == k] for k in range(h + 1)}
    in_row = []
    for j in range(width):
        m = 0
        for e in by_k[0]:
            t = target(j, e)
            if t is not None:
                m |= 1 << t
        in_row.append(m)

    # anchors allowed in row i (footprint inside the box for free boundary)
    full = (1 << width) - 1
    if torus:
        row_allowed = [full] * L0
    else:
        fps = model.footprint
        row_allowed = []
        for i in range(L0):
            m = 0
            for j, s in enumerate(row_sites):
                x = (i,) + s
                if all(0 <= c < L for f in fps for c, L in zip(add(x, f), ext)):
                    m |= 1 << j
            row_allowed.append(m)
    union_allowed = 0
    for m in row_allowed:
        union_allowed |= m
    rows = _row_sets(width, in_row, union_allowed, budget)
    R = len(rows)
    pop = np.array([bin(r).count("1") for r in rows], dtype=np.int64)

    def shadow(r, k):
        m = 0
        j = r
        while j:
            low = j & -j
            b = low.bit_length() - 1
            for e in by_k[k]:
                t = target(b, e)
                if t is not None:
                    m |= 1 << t
            j ^= low
        return m

    shadows = {k: [shadow(r, k) for r in rows] for k in range(1, h + 1)}

    def ok(a, b, k):
        # row a sits k rows before row b
        return k > h or not shadows[k][a] & rows[b]

    if h == 0:
        states = [(r,) for r in range(R)]
        h_eff = 1
    else:
        h_eff = h
        states = [()]
        for depth in range(h_eff):
            nxt = []
            for st in states:
                for r in range(R):
                    if all(ok(st[i], r, len(st) - i) for i in range(len(st))):
                        nxt.append(st + (r,))
            states = nxt
            if len(states) > budget:
                raise BudgetExceeded(f"transfer matrix: more than {budget} profile states")
    S = len(states)
    sidx = {st: i for i, st in enumerate(states)}
    trans = np.zeros((S, S), dtype=np.int64)
    for a, st in enumerate(states):
        for r in range(R):
            if all(ok(st[i], r, h_eff - i) for i in range(h_eff)) or h == 0:
                b = sidx.get(st[1:] + (r,))
                if b is not None:
                    trans[a, b] = 1
    state_pop = np.array([sum(int(pop[r]) for r in st) for st in states], dtype=np.int64)
    last_pop = np.array([int(pop[st[-1]]) for st in states], dtype=np.int64)
    n_fp = len(model.footprint)
    volume = math.prod(ext)
    D = volume // n_fp + 2
    # residues stay below 2**21, so float64 matrix products (BLAS) are exact
    nprimes = max(1, (volume + 2) // 20 + 1)
    primes = _primes_below(1 << 21, nprimes)
    transT = trans.T.astype(np.float64)

    def allowed_states(i):
        # states whose newest row is allowed in row i
        m = row_allowed[i]
        return np.array([rows[st[-1]] & ~m == 0 for st in states])

    def shift_rows(W):
        # W[state, ..., degree] shifted right by the newest row's occupation
        out = np.zeros_like(W)
        for c in np.unique(last_pop):
            sel = last_pop == c
            if c == 0:
                out[sel] = W[sel]
            else:
                out[sel, ..., c:] = W[sel, ..., :-c]
        return out

    if torus:
        wrap = np.zeros((S, S), dtype=bool)  # wrap[final, start]
        for s, st in enumerate(states):
            for f, ft in enumerate(states):
                good = True
                for i in range(h_eff):          # final row L-h_eff+i
                    for j in range(h_eff):      # start row j
                        k = h_eff - i + j
                        if k <= h and not ok(ft[i], st[j], k):
                            good = False
                wrap[f, s] = good

    results = []
    for p in primes:
        if torus:
            # batch over start states (rows 0..h-1); V[state, start, degree]
            V = np.zeros((S, S, D))
            for s in range(S):
                V[s, s, state_pop[s]] = 1
            for _ in range(L0 - h_eff):
                V = np.fmod(transT @ V.reshape(S, -1), p).reshape(S, S, D)
                V = shift_rows(V)
            tot = np.fmod((V * wrap[:, :, None]).sum(axis=(0, 1)), p)
        else:
            empty = sidx[tuple([rows.index(0)] * h_eff)]
            V = np.zeros((S, D))
            V[empty, 0] = 1
            for i in range(L0):
                V = np.fmod(transT @ V, p)
                V = shift_rows(V)
                V[~allowed_states(i)] = 0
            tot = np.fmod(V.sum(axis=0), p)
        results.append(tot.astype(np.int64))
    coeffs = [_crt([r[k] for r in results], primes) for k in range(D)]
    return _trim(coeffs)


def _sweep_orders(model: ModelSpec, region):
    """Axis orders to try for the sweep: identity first, then each axis moved
    to the front (only hypercubic lattices, whose axes are interchangeable)."""
    d = model.dim
    orders = [tuple(range(d))]
    if model.lattice.kind == "hypercubic":
        for a in range(1, d):
            orders.append((a,) + tuple(i for i in range(d) if i != a))
    return orders


def _permute_axes(model: ModelSpec, region, perm):
    if perm == tuple(range(model.dim)):
        return model, region

    def p(v):
        return tuple(v[i] for i in perm)

    pm = ModelSpec(model.lattice, tuple(p(f) for f in model.footprint),
                   frozenset(p(e) for e in model.exclusion), model.mesh, model.name)
    if isinstance(region, Torus):
        return pm, Torus(region.lattice, p(region.extents))
    return pm, Window(region.lattice, frozenset(p(s) for s in region.sites), nu=region.nu)


def _dfs_counts(ens: _Ensemble) -> tuple:
    if ens.explicit:
        return ens.counts()
    n = len(ens.anchors)
    memo = {0: (1,)}
    nbr = ens.nbr
    budget = state_budget()
    limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(limit, 4 * n + 1000))

    def rec(S):
        r = memo.get(S)
        if r is not None:
            return r
        if len(memo) > budget:
            raise BudgetExceeded(f"depth-first enumeration: more than {budget} memo states")
        low = S & -S
        v = low.bit_length() - 1
        a = rec(S ^ low)
        b = rec(S & ~nbr[v])
        m = max(len(a), len(b) + 1)
        out = [0] * m
        for k, c in enumerate(a):
            out[k] += c
        for k, c in enumerate(b):
            out[k + 1] += c
        r = tuple(out)
        memo[S] = r
        return r

    try:
        return _trim(rec((1 << n) - 1))
    finally:
        sys.setrecursionlimit(limit)


def canonical_counts(model: ModelSpec, region, method: str = "auto") -> PartitionPolynomial:
    """Exact Z(k), k = 0..N_max.

    ``method`` is "transfer", "dfs" or "auto" (transfer matrix when the region
    is a torus or a box, depth-first otherwise).
    """
    if method not in ("auto", "transfer", "dfs"):
        raise ValueError(f"unknown method {method!r}")
    if isinstance(region, Window) and region.nu is None and not region.sites:
        return PartitionPolynomial((1,), region)
    if method in ("auto", "transfer"):
        coeffs = None
        for perm in _sweep_orders(model, region):
            coeffs = _transfer_counts(*_permute_axes(model, region, perm))
            if coeffs is not None:
                break
        if coeffs is not None:
            return PartitionPolynomial(coeffs, region)
        if method == "transfer":
            raise BoundaryError("transfer matrix needs a torus (longer than twice the "
                                "exclusion range) or a free box")
    ens = _Ensemble(model, region)
    return PartitionPolynomial(_dfs_counts(ens), region)


# -- weighted quantities -------------------------------------------------------

_ENSEMBLES = {}


def _ensemble(model: ModelSpec, region) -> _Ensemble:
    key = (model, id(region))
    ens = _ENSEMBLES.get(key)
    if ens is None or ens.region is not region:
        if len(_ENSEMBLES) > 64:
            _ENSEMBLES.clear()
        ens = _Ensemble(model, region)
        _ENSEMBLES[key] = ens
    return ens


def partition_function(model: ModelSpec, region, fug: FugacityMap):
    """Sum over admissible configurations of prod z(x), exactly."""
    return _ensemble(model, region).weighted(fug)


def partition_polynomial(model: ModelSpec, region, fug: Optional[FugacityMap] = None):
    """(value, polynomial) with the polynomial given only for uniform fugacity."""
    fug = fug or FugacityMap()
    if fug.uniform:
        p = canonical_counts(model, region)
        return p.evaluate(fug.z), p
    return partition_function(model, region, fug), None


def _ratio(num, den):
    if den == 0:
        raise PoleError("partition function vanishes at this fugacity")
    if isinstance(num, (int, Fraction)) and isinstance(den, (int, Fraction)):
        return Fraction(num) / Fraction(den)
    return num / den


def density(model: ModelSpec, region, fug: FugacityMap, x) -> object:
    """rho_1(x): probability that a particle is anchored at x."""
    ens = _ensemble(model, region)
    xi = ens.weighted(fug)
    return _ratio(ens.weighted(fug, [x]), xi)


def _set_partitions(items):
    items = list(items)
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in _set_partitions(rest):
        yield [[first]] + part
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1:]


def truncated_correlation(model: ModelSpec, region, fug: FugacityMap, sites) -> object:
    """Joint cumulant of the occupation indicators at the given anchors."""
    sites = [tuple(s) for s in sites]
    if not 1 <= len(sites) <= 4:
        raise ValueError("truncated_correlation: between 1 and 4 sites")
    if len(set(sites)) != len(sites):
        raise ValueError("truncated_correlation: sites must be distinct")
    ens = _ensemble(model, region)
    xi = ens.weighted(fug)
    if xi == 0:
        raise PoleError("partition function vanishes at this fugacity")
    moments = {}

    def moment(block):
        key = tuple(sorted(block))
        if key not in moments:
            moments[key] = _ratio(ens.weighted(fug, key), xi)
        return moments[key]

    total = 0
    for part in _set_partitions(sites):
        m = len(part)
        term = (-1) ** (m - 1) * math.factorial(m - 1)
        for block in part:
            term = term * moment(block)
        total += term
    return total


def configurations(model: ModelSpec, region):
    """Every admissible configuration as a sorted tuple of anchors (small regions)."""
    ens = _ensemble(model, region)
    if ens.explicit:
        for cfg in ens.configs():
            yield tuple(a for i, a in enumerate(ens.anchors) if cfg >> i & 1)
        return
    n = len(ens.anchors)

    def rec(k, chosen, taken):
        if k == n:
            yield chosen
            return
        yield from rec(k + 1, chosen, taken)
        if not taken >> k & 1:
            yield from rec(k + 1, chosen + (ens.anchors[k],), taken | ens.nbr[k])

    yield from rec(0, (), 0)
