from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ultracoral.padic import IndexLattice, kozyrev_basis, ultrametric_norm
from ultracoral.vladimirov import (
    DiffusionOperator,
    apply_dense,
    apply_fast,
    build_generator,
    expected_spectrum,
    kappa,
    kappa_exact,
    mu,
    mu_exact,
)


@pytest.mark.parametrize("p,a,k", [(2, 2, Fraction(24, 7)), (3, 2, Fraction(108, 13)), (2, 5, Fraction(1984, 63))])
def test_kappa(p, a, k):
    assert kappa_exact(p, a) == k
    assert kappa(p, a) == pytest.approx(float(k), rel=1e-15)


@pytest.mark.parametrize("p,a,v", [(2, 2, Fraction(4, 7)), (2, 5, Fraction(32, 63)), (3, 2, Fraction(9, 13))])
def test_mu(p, a, v):
    assert mu_exact(p, a) == v
    assert mu(p, a) == pytest.approx(float(v), rel=1e-15)


def test_non_integer_alpha_uses_float_formula():
    assert kappa_exact(2, 1.5) is None
    assert kappa(2, 1.5) == pytest.approx((2**1.5 - 1) / (1 - 2**-2.5))
    assert mu(3, 0.5) == pytest.approx(3**0.5 * 2 / (3**1.5 - 1))


def test_alpha_must_be_positive():
    with pytest.raises(ValueError):
        kappa(2, 0)
    with pytest.raises(ValueError):
        build_generator(2, 2, -1)


def test_generator_small_examples():
    A = build_generator(2, 1, 2)
    assert np.allclose(A.entries * 7, [[-12, 12], [12, -12]], atol=1e-13)
    assert build_generator(2, 0, 2).entries.tolist() == [[0.0]]
    A = build_generator(2, 2, 2)
    assert A.entries[0, 2] == pytest.approx(48 / 7)
    assert A.entries[0, 1] == pytest.approx(6 / 7)
    assert A.entries[0, 0] == pytest.approx(-60 / 7)


@pytest.mark.parametrize("p,m,alpha", [(2, 3, 2), (3, 2, 1.5), (5, 2, 2)])
def test_generator_matches_entry_formula(p, m, alpha):
    A = build_generator(p, m, alpha)
    k = kappa(p, alpha)
    n = p**m
    for i in range(n):
        for j in range(n):
            if i != j:
                ref = k * p**-m / float(ultrametric_norm(i, j, p)) ** (alpha + 1)
                assert A.entries[i, j] == pytest.approx(ref, rel=1e-13)


@pytest.mark.parametrize("p,m,alpha", [(2, 4, 2), (3, 3, 5), (2, 5, 1.7)])
def test_generator_invariants(p, m, alpha):
    A = build_generator(p, m, alpha)
    E = A.entries
    assert np.array_equal(E, E.T)
    off = E[~np.eye(E.shape[0], dtype=bool)]
    assert np.all(off > 0)
    assert np.all(np.diag(E) < 0)
    scale = np.abs(np.diag(E)).max()
    assert np.all(np.abs(A.row_sums()) <= 1e-12 * max(1.0, scale))


def test_apply_dense_examples():
    A = build_generator(2, 1, 2)
    assert np.allclose(apply_dense(A, [1, 0]), [-12 / 7, 12 / 7])
    assert np.allclose(apply_dense(A, [1, -1]), [-24 / 7, 24 / 7])
    assert np.allclose(apply_dense(A, [3.0, 3.0]), 0)
    with pytest.raises(ValueError):
        apply_dense(A, [1, 2, 3])


@settings(deadline=None, max_examples=30)
@given(st.sampled_from([(2, 4), (3, 3), (5, 2)]), st.sampled_from([1.0, 2.0, 5.0, 0.7]),
       st.integers(0, 2**32 - 1))
def test_dissipative_and_conservative(pm, alpha, seed):
    p, m = pm
    A = build_generator(p, m, alpha)
    x = np.random.default_rng(seed).normal(size=p**m)
    y = A.apply(x)
    scale = np.abs(A.entries).max() * np.abs(x).sum()
    assert abs(y.sum()) < 1e-12 * scale
    assert x @ y <= 1e-12 * scale


@pytest.mark.parametrize("m", range(1, 11))
def test_fast_matches_dense(m):
    rng = np.random.default_rng(m)
    A = build_generator(2, m, 2)
    X = rng.normal(size=(100, 2**m))
    fast = apply_fast(2, m, 2, X)
    dense = apply_dense(A, X)
    rel = np.linalg.norm(fast - dense, axis=1) / np.linalg.norm(dense, axis=1)
    assert rel.max() < 1e-12


@pytest.mark.parametrize("p,m,alpha", [(3, 4, 5), (5, 3, 1.3), (7, 2, 2)])
def test_fast_matches_dense_other_primes(p, m, alpha):
    x = np.random.default_rng(0).normal(size=p**m)
    d = apply_dense(build_generator(p, m, alpha), x)
    assert np.linalg.norm(apply_fast(p, m, alpha, x) - d) / np.linalg.norm(d) < 1e-12


def test_fast_constant_and_eigenvector():
    assert np.allclose(apply_fast(2, 6, 2, np.ones(64)), 0, atol=1e-10)
    x = np.array([1.0, -1, 1, -1])
    assert np.allclose(apply_fast(2, 2, 2, x), -24 / 7 * x)


def test_operator_switches_paths():
    assert not DiffusionOperator(2, 6, 2).fast
    assert DiffusionOperator(2, 7, 2).fast
    x = np.random.default_rng(1).normal(size=128)
    a = DiffusionOperator(2, 7, 2, fast=True).apply(x)
    b = DiffusionOperator(2, 7, 2, fast=False).apply(x)
    assert np.allclose(a, b, rtol=1e-12, atol=1e-9)


def test_restricted_operator_conserves_and_freezes():
    op = DiffusionOperator(2, 3, 2)
    live = np.array([1, 1, 0, 1, 1, 0, 1, 1], dtype=bool)
    x = np.random.default_rng(2).uniform(size=8)
    y = op.apply_restricted(x, live)
    assert np.all(y[~live] == 0)
    assert abs(y.sum()) < 1e-12 * np.abs(y).sum()
    # equals the generator with the frozen rows and columns removed
    E = build_generator(2, 3, 2).entries[np.ix_(live, live)].copy()
    np.fill_diagonal(E, 0)
    np.fill_diagonal(E, -E.sum(axis=1))
    assert np.allclose(y[live], E @ x[live])


def test_expected_spectrum_examples():
    assert expected_spectrum(2, 1, 2, exact=True) == [(0, 1), (Fraction(-24, 7), 1)]
    assert expected_spectrum(2, 2, 2, exact=True)[2] == (Fraction(-108, 7), 2)
    assert expected_spectrum(2, 3, 2, exact=True)[3] == (Fraction(-444, 7), 4)
    for p, m in [(2, 5), (3, 4)]:
        assert sum(k for _, k in expected_spectrum(p, m, 2)) == p**m


@pytest.mark.parametrize("p,m,alpha", [(2, 4, 2), (3, 3, 2), (3, 3, 5), (2, 3, 1.5)])
def test_kozyrev_vectors_are_eigenvectors(p, m, alpha):
    A = build_generator(p, m, alpha)
    lat = IndexLattice(p, m)
    mu_ = mu(p, alpha)
    for r, j, n, psi in kozyrev_basis(lat):
        lam = -(p ** ((1 - r) * alpha) - mu_)
        res = A.entries @ psi - lam * psi
        assert np.linalg.norm(res) / np.linalg.norm(psi) < 1e-10 * max(1.0, abs(lam))
        # real and imaginary parts are eigenvectors on their own
        for part in (psi.real, psi.imag):
            if np.any(part):
                assert np.linalg.norm(A.entries @ part - lam * part) < 1e-10 * max(1.0, abs(lam)) * np.linalg.norm(part)
