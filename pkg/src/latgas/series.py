"""Exact rational series: log-series, Mayer and Gaunt-Fisher coefficients."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .enumeration import PartitionPolynomial, canonical_counts


@dataclass(frozen=True)
class SeriesCoeffs:
    kind: str              # "mayer_b" or "gaunt_fisher_c"
    values: tuple          # exact rationals, k = 1..K
    region: str = ""
    volume: int = 0
    tau: int = None

    def __getitem__(self, k):
        # 1-based, matching b_k / c_k
        if k < 1:
            raise IndexError(k)
        return self.values[k - 1]

    @property
    def K(self) -> int:
        return len(self.values)

    def to_json(self):
        out = {"kind": self.kind, "K": self.K,
               "coefficients": [rat_str(v) for v in self.values],
               "region": self.region, "volume": self.volume}
        if self.tau is not None:
            out["tau"] = self.tau
        return out


def rat_str(q) -> str:
    q = Fraction(q)
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


def log_series(a, K: int) -> list:
    """[l_1..l_K] with log(sum a_k t^k) = sum l_k t^k, by Newton's recursion."""
    a = [Fraction(x) for x in a]
    if not a or a[0] != 1:
        raise ValueError("log_series: constant term must be 1")
    a = a + [Fraction(0)] * max(0, K + 1 - len(a))
    ell = [Fraction(0)] * (K + 1)
    for k in range(1, K + 1):
        s = k * a[k]
        for j in range(1, k):
            s -= j * ell[j] * a[k - j]
        ell[k] = s / k
    return ell[1:]


def exp_series(ell, N: int) -> list:
    """[a_0..a_N] with sum a_k t^k = exp(sum l_k t^k); inverse of log_series."""
    ell = [Fraction(0)] + [Fraction(x) for x in ell]
    ell += [Fraction(0)] * max(0, N + 1 - len(ell))
    a = [Fraction(1)] + [Fraction(0)] * N
    for k in range(1, N + 1):
        a[k] = sum(j * ell[j] * a[k - j] for j in range(1, k + 1)) / k
    return a


def composition_log(a, K: int, scale=1) -> list:
    """log(1 + sum_{k>=1} a_k t^k / scale) via the alternating sum over
    compositions k_1 + ... + k_n = k; independent of log_series."""
    tail = [Fraction(0)] + [Fraction(x) for x in a[1:K + 1]]
    tail += [Fraction(0)] * (K + 1 - len(tail))
    out = [Fraction(0)] * (K + 1)
    power = [Fraction(1)] + [Fraction(0)] * K   # (sum_{k>=1} a_k t^k)^n, truncated
    for n in range(1, K + 1):
        nxt = [Fraction(0)] * (K + 1)
        for i, c in enumerate(power):
            if c:
                for j in range(1, K + 1 - i):
                    if tail[j]:
                        nxt[i + j] += c * tail[j]
        power = nxt
        coef = Fraction((-1) ** (n + 1), n) / Fraction(scale) ** n
        for k in range(n, K + 1):
            out[k] += coef * power[k]
    return out[1:]


def _volume(p: PartitionPolynomial, volume):
    if volume is not None:
        return volume
    reg = p.region
    if reg is None or not hasattr(reg, "volume"):
        raise ValueError("region volume unknown; pass volume explicitly")
    return reg.volume


def mayer_coefficients(p: PartitionPolynomial, K: int, volume=None) -> SeriesCoeffs:
    """b_k = [z^k] log Xi / |L|, by both routes (they must agree)."""
    if K > p.n_max:
        raise ValueError(f"K={K} exceeds N_max={p.n_max}")
    V = _volume(p, volume)
    a = list(p.coefficients)
    newton = log_series(a, K)
    comp = composition_log(a, K)
    if newton != comp:
        raise ArithmeticError("Mayer coefficients: Newton and composition routes disagree")
    desc = p.region.describe() if hasattr(p.region, "describe") else ""
    return SeriesCoeffs("mayer_b", tuple(x / V for x in newton), desc, V)


def gaunt_fisher_coefficients(q, tau: int, volume: int, K: int, region: str = "") -> SeriesCoeffs:
    """c_k from defect counts Q(k) with tau factored out."""
    q = list(q)
    if q[0] <= 0:
        raise ValueError("gaunt_fisher_coefficients: Q(0) must be positive")
    if K > len(q) - 1:
        raise ValueError(f"K={K} exceeds N_max={len(q) - 1}")
    comp = composition_log(q, K, scale=tau)
    newton = log_series([1] + [Fraction(x, tau) for x in q[1:]], K)
    if newton != comp:
        raise ArithmeticError("Gaunt-Fisher coefficients: composition and Newton routes disagree")
    return SeriesCoeffs("gaunt_fisher_c", tuple(x / volume for x in comp), region, volume, tau)


def region_series(model, region, kind: str, K: int, tau=None) -> SeriesCoeffs:
    p = canonical_counts(model, region)
    if kind == "mayer_b":
        return mayer_coefficients(p, K)
    if kind == "gaunt_fisher_c":
        if tau is None:
            raise ValueError("gaunt_fisher_c needs tau")
        return gaunt_fisher_coefficients(p.defect_counts(), tau, region.volume, K,
                                         region.describe())
    raise ValueError(f"unknown series kind {kind!r}")


def stabilization_report(model, regions, kind: str, K: int, tau=None) -> dict:
    """Per-k verdict across a growing family of regions.

    "stable" when the exact coefficient is identical on the two largest
    regions, otherwise "diverging" with a log-log growth exponent.
    """
    if len(regions) < 3:
        raise ValueError("stabilization_report: need at least 3 regions")
    vols = [r.volume for r in regions]
    if any(b <= a for a, b in zip(vols, vols[1:])):
        raise ValueError("stabilization_report: volumes must be strictly increasing")
    series = [region_series(model, r, kind, K, tau) for r in regions]
    report = {}
    for k in range(1, K + 1):
        vals = [s[k] for s in series]
        if vals[-1] == vals[-2]:
            first = len(vals) - 1
            while first > 0 and vals[first - 1] == vals[-1]:
                first -= 1
            report[k] = {"verdict": "stable", "value": rat_str(vals[-1]),
                         "first_stable_volume": vols[first]}
        else:
            pts = [(v, abs(float(c))) for v, c in zip(vols, vals) if c != 0]
            slope = None
            if len(pts) >= 2:
                x = np.log([v for v, _ in pts])
                y = np.log([c for _, c in pts])
                slope = float(np.polyfit(x, y, 1)[0])
            report[k] = {"verdict": "diverging", "growth_exponent": slope,
                         "values": [rat_str(v) for v in vals]}
    return {"kind": kind, "K": K, "volumes": vols,
            "series": [s.to_json() for s in series], "stabilization": report}
