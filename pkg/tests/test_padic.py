import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ultracoral.padic import (
    BranchIndex,
    IndexLattice,
    LatticeError,
    ball_members,
    digits,
    divergence_level,
    from_digits,
    kozyrev_basis,
    kozyrev_vector,
    ultrametric_norm,
    valuation,
)


@pytest.mark.parametrize("n,p,expected", [(12, 2, 2), (0, 3, math.inf), (7, 7, 1), (-8, 2, 3), (5, 3, 0)])
def test_valuation(n, p, expected):
    assert valuation(n, p) == expected


@pytest.mark.parametrize("i,j,p,expected", [(1, 3, 2, Fraction(1, 2)), (5, 5, 3, 0), (0, 4, 2, Fraction(1, 4))])
def test_ultrametric_norm(i, j, p, expected):
    assert ultrametric_norm(i, j, p) == expected


@pytest.mark.parametrize("i,j,expected", [(0, 1, 0), (1, 3, 1), (2, 2, 3)])
def test_divergence_level(i, j, expected):
    assert divergence_level(i, j, 2, 3) == expected


def test_lattice_rejects_bad_parameters():
    with pytest.raises(LatticeError):
        IndexLattice(4, 2)
    with pytest.raises(LatticeError):
        IndexLattice(2, -1)
    with pytest.raises(LatticeError):
        IndexLattice(2, 21)
    assert IndexLattice(2, 20).size == 2**20


def test_lattice_enumerates_indices():
    lat = IndexLattice(3, 2)
    assert list(lat) == list(range(9))
    assert 8 in lat and 9 not in lat
    with pytest.raises(LatticeError):
        lat.check(9)


@given(st.integers(2, 7).filter(lambda p: p in (2, 3, 5, 7)), st.integers(0, 6), st.data())
def test_digits_round_trip(p, m, data):
    value = data.draw(st.integers(0, p**m - 1))
    b = BranchIndex(value, p, m)
    assert from_digits(b.digits, p) == value
    assert BranchIndex.from_digits(b.digits, p) == b
    assert digits(value, p, m) == b.digits


def test_ultrametric_inequality_exhaustive():
    p, m = 2, 6
    n = p**m
    norm = np.array([[float(ultrametric_norm(i, j, p)) for j in range(n)] for i in range(n)])
    for j in range(n):
        # |i-k| <= max(|i-j|, |j-k|) for all i, k
        assert np.all(norm <= np.maximum(norm[:, [j]], norm[[j], :]) + 0.0)


@given(st.sampled_from([2, 3, 5]), st.integers(1, 5), st.data())
def test_norm_matches_divergence_level(p, m, data):
    i = data.draw(st.integers(0, p**m - 1))
    j = data.draw(st.integers(0, p**m - 1))
    k = divergence_level(i, j, p, m)
    if i == j:
        assert k == m
    else:
        assert ultrametric_norm(i, j, p) == Fraction(1, p**k)
        bi, bj = BranchIndex(i, p, m), BranchIndex(j, p, m)
        assert bi.digits[:k] == bj.digits[:k] and bi.digits[k] != bj.digits[k]


def test_ball_members_examples():
    assert ball_members(0, 1, IndexLattice(2, 2)) == [0, 2]
    assert ball_members(3, 0, IndexLattice(2, 2)) == [0, 1, 2, 3]
    assert ball_members(3, 2, IndexLattice(2, 2)) == [3]
    with pytest.raises(LatticeError):
        ball_members(0, 3, IndexLattice(2, 2))


@pytest.mark.parametrize("p,m", [(2, 4), (3, 3), (5, 2)])
def test_balls_partition_lattice(p, m):
    lat = IndexLattice(p, m)
    for k in range(m + 1):
        balls = {tuple(ball_members(c, k, lat)) for c in lat}
        assert len(balls) == p**k
        flat = sorted(itertools.chain.from_iterable(balls))
        assert flat == list(lat)
        assert all(len(b) == p ** (m - k) for b in balls)


def test_kozyrev_examples():
    assert kozyrev_vector(IndexLattice(2, 1), 0, 1).tolist() == [1, -1]
    assert kozyrev_vector(IndexLattice(2, 2), 0, 1).tolist() == [1, -1, 1, -1]
    assert kozyrev_vector(IndexLattice(2, 2), -1, 1, 0).tolist() == [1, 0, -1, 0]


def test_kozyrev_rejects_unresolvable():
    lat = IndexLattice(2, 2)
    with pytest.raises(LatticeError):
        kozyrev_vector(lat, -2, 1)
    with pytest.raises(LatticeError):
        kozyrev_vector(lat, 1, 1)
    with pytest.raises(LatticeError):
        kozyrev_vector(lat, 0, 2)


@pytest.mark.parametrize("p,m", [(2, 5), (3, 3), (5, 2)])
def test_kozyrev_vectors_orthogonal(p, m):
    lat = IndexLattice(p, m)
    vecs = [v for *_, v in kozyrev_basis(lat)]
    assert len(vecs) == p**m - 1
    V = np.array([np.ones(p**m)] + vecs)
    G = V.conj() @ V.T
    assert np.allclose(G - np.diag(np.diag(G)), 0, atol=1e-10)
