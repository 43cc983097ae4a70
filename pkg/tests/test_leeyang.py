from fractions import Fraction

import mpmath
import numpy as np
import pytest

from latgas.enumeration import Torus, canonical_counts
from latgas.lattice import builtin_model
from latgas.leeyang import annulus_summary, find_zeros, verify_zero_identities


def test_linear_and_quadratic():
    zs = find_zeros([1, 1])
    assert len(zs.zeros) == 1 and abs(zs.zeros[0] + 1) < 1e-30
    zs = find_zeros([1, 4, 2])
    s = mpmath.sqrt(2) / 2
    got = sorted(float(z.real) for z in zs.zeros)
    assert got == pytest.approx([float(-1 - s), float(-1 + s)], abs=1e-15)
    assert all(abs(z.imag) < 1e-30 for z in zs.zeros)
    a = annulus_summary(zs)
    assert a["r_min"] == pytest.approx(float(1 - s)) and a["r_max"] == pytest.approx(float(1 + s))


def test_zero_at_origin():
    zs = find_zeros([0, 0, 1, 1])
    assert zs.zero_multiplicity == 2 and len(zs.zeros) == 1


def test_against_numpy():
    coeffs = [1, 7, 3, 11, 2, 5]
    zs = find_zeros(coeffs)
    ref = np.roots(coeffs[::-1])
    got = np.array([complex(z) for z in zs.zeros])
    for r in ref:
        assert np.min(np.abs(got - r)) < 1e-10
    assert zs.certified


@pytest.mark.parametrize("name,ext", [("monomer-dimer", (4,)), ("monomer-dimer", (10,)),
                                      ("hyperdiamond-2d", (4, 4))])
def test_identities(name, ext):
    m = builtin_model(name)
    t = Torus(m.lattice, ext)
    p = canonical_counts(m, t)
    zs = find_zeros(p.coefficients)
    rep = verify_zero_identities(p, zs, t.volume, 2)
    assert rep["max_residual"] < 1e-9


def test_csv():
    text = find_zeros([1, 4, 2]).to_csv()
    assert text.splitlines()[0] == "re,im,modulus,residual"
    assert len(text.splitlines()) == 3
