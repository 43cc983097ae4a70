"""Lee-Yang zeros of partition polynomials.

Roots are found by simultaneous Aberth-Ehrlich iteration in mpmath and come
with Weierstrass-type inclusion disks: the disk of radius n*|W_i| around the
i-th approximation, W_i = p(z_i) / (a_n prod_{j!=i} (z_i - z_j)), and any
connected union of k such disks contains exactly k roots.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from fractions import Fraction

import mpmath

from .enumeration import PartitionPolynomial


@dataclass
class ZeroSet:
    zeros: list            # mpc, nonzero roots
    zero_multiplicity: int # roots at the origin (nu-boundary polynomials)
    residuals: list        # |p(xi)|
    radii: list            # inclusion radii
    clusters: list         # lists of indices whose disks overlap
    iterations: int
    dps: int

    @property
    def certified(self) -> bool:
        """Every root isolated in its own inclusion disk."""
        return all(len(c) == 1 for c in self.clusters)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["re", "im", "modulus", "residual"])
        for z, r in zip(self.zeros, self.residuals):
            w.writerow([mpmath.nstr(z.real, 20), mpmath.nstr(z.imag, 20),
                        mpmath.nstr(abs(z), 20), mpmath.nstr(r, 5)])
        return buf.getvalue()


def _horner(coeffs, z):
    acc = mpmath.mpc(0)
    for c in reversed(coeffs):
        acc = acc * z + c
    return acc


def _horner_d(coeffs, z):
    p = mpmath.mpc(0)
    dp = mpmath.mpc(0)
    for c in reversed(coeffs):
        dp = dp * z + p
        p = p * z + c
    return p, dp


def find_zeros(coeffs, dps: int = None, tol=None, max_iter: int = 500) -> ZeroSet:
    """All complex roots of sum coeffs[k] z^k (exact integer/rational input)."""
    coeffs = [Fraction(c) for c in coeffs]
    while len(coeffs) > 1 and coeffs[-1] == 0:
        coeffs.pop()
    m = 0
    while m < len(coeffs) - 1 and coeffs[m] == 0:
        m += 1
    coeffs = coeffs[m:]
    n = len(coeffs) - 1
    if dps is None:
        digits = max(len(str(abs(c.numerator))) + len(str(c.denominator)) for c in coeffs)
        dps = max(40, 2 * digits + 20)
    with mpmath.workdps(dps):
        a = [mpmath.mpf(c.numerator) / c.denominator for c in coeffs]
        if n == 0:
            return ZeroSet([], m, [], [], [], 0, dps)
        eps = mpmath.mpf(10) ** (-(dps - 10)) if tol is None else mpmath.mpf(tol)
        # initial points on a circle with the geometric-mean radius
        r0 = abs(a[0] / a[-1]) ** (mpmath.mpf(1) / n)
        z = [r0 * mpmath.expj(2 * mpmath.pi * (k + mpmath.mpf(1) / 4) / n) for k in range(n)]
        it = 0
        for it in range(1, max_iter + 1):
            biggest = mpmath.mpf(0)
            for i in range(n):
                p, dp = _horner_d(a, z[i])
                if p == 0:
                    continue
                ratio = p / dp
                s = mpmath.fsum(1 / (z[i] - z[j]) for j in range(n) if j != i)
                w = ratio / (1 - ratio * s)
                z[i] -= w
                biggest = max(biggest, abs(w) / max(abs(z[i]), eps))
            if biggest < eps:
                break
        residuals = [abs(_horner(a, zi)) for zi in z]
        radii = []
        for i in range(n):
            den = a[-1]
            for j in range(n):
                if j != i:
                    den *= z[i] - z[j]
            radii.append(n * abs(_horner(a, z[i]) / den))
        clusters = _overlap_clusters(z, radii)
        order = sorted(range(n), key=lambda i: (float(abs(z[i])), float(mpmath.arg(z[i]))))
        remap = {old: new for new, old in enumerate(order)}
        return ZeroSet([z[i] for i in order], m, [residuals[i] for i in order],
                       [radii[i] for i in order],
                       sorted(sorted(remap[i] for i in c) for c in clusters), it, dps)


def _overlap_clusters(z, radii):
    n = len(z)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if abs(z[i] - z[j]) <= radii[i] + radii[j]:
                parent[find(i)] = find(j)
    groups = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    return list(groups.values())


def _rel(lhs, rhs):
    scale = max(abs(rhs), mpmath.mpf(10) ** (-mpmath.mp.dps + 5))
    return abs(lhs - rhs) / scale


def verify_zero_identities(p: PartitionPolynomial, zs: ZeroSet, volume: int, tau: int,
                           K: int = None) -> dict:
    """Check prod(-xi) = 1/Q(0), and c_k, b_k against power sums of the zeros.

    Returns the worst relative residuals; the caller compares them to its
    tolerance.
    """
    from .series import gaunt_fisher_coefficients, mayer_coefficients

    if zs.zero_multiplicity:
        raise ValueError("zero identities need Xi(0) = 1 (free or periodic boundary)")
    n = p.n_max
    K = n if K is None else K
    q = p.defect_counts()
    c = gaunt_fisher_coefficients(q, tau, volume, K)
    b = mayer_coefficients(p, K, volume)
    with mpmath.workdps(zs.dps):
        prod = mpmath.mpf(1)
        for xi in zs.zeros:
            prod *= -xi
        prod_res = _rel(prod, mpmath.mpf(1) / q[0])
        c_res, b_res = [], []
        for k in range(1, K + 1):
            s = mpmath.fsum(xi ** k for xi in zs.zeros)
            si = mpmath.fsum(xi ** (-k) for xi in zs.zeros)
            ck = mpmath.mpf(c[k].numerator) / c[k].denominator
            bk = mpmath.mpf(b[k].numerator) / b[k].denominator
            c_res.append(float(_rel(-s / (k * volume), ck)))
            b_res.append(float(_rel(-si / (k * volume), bk)))
        return {
            "product_residual": float(prod_res),
            "c_residuals": c_res,
            "b_residuals": b_res,
            "max_residual": max([float(prod_res)] + c_res + b_res),
        }


def annulus_summary(zs: ZeroSet) -> dict:
    """Radii bounding the zeros: the low-fugacity series converges for
    |z| < r_min and the high-fugacity one for |y| < 1/r_max."""
    if not zs.zeros:
        return {"r_min": None, "r_max": None, "degree": 0}
    mods = [abs(z) for z in zs.zeros]
    r_min, r_max = min(mods), max(mods)
    return {
        "degree": len(zs.zeros),
        "r_min": float(r_min),
        "r_max": float(r_max),
        "low_fugacity_radius_bound": float(r_min),
        "high_fugacity_radius_bound": float(1 / r_max),
        "certified": zs.certified,
        "max_inclusion_radius": float(max(zs.radii)),
    }
