"""Spectral verification of the generator against its closed-form spectrum.

Two routes are offered. ``numerical_spectrum`` clusters the float64
eigenvalues from ``numpy.linalg.eigh``. Its absolute error grows like
``eps * ||A||``, which for p=3, alpha=5 is far above 1e-8. ``certified_spectrum``
starts from the same float eigenvalues of the integer pattern, rounds them to
integer candidates and then proves them exactly:

* ``prod_c (B - c I) == 0`` over the integers, checked modulo enough primes
  that the Chinese remainder bound covers every entry. B is symmetric, so
  this shows the eigenvalues lie in the candidate set.
* multiplicities solve the Vandermonde system ``sum_c k_c c**j = tr(B**j)``
  with the traces reconstructed exactly by CRT.

The result is a list of exact rationals (``scale * c``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .vladimirov import GeneratorMatrix, build_generator, expected_spectrum


class SpectrumError(RuntimeError):
    """Certification of the spectrum failed."""


def _is_probable_prime(n: int) -> bool:
    # deterministic Miller-Rabin for n < 3.3e24
    if n < 2:
        return False
    small = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41)
    for q in small:
        if n % q == 0:
            return n == q
    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for a in small:
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(s - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def _primes_below(limit: int):
    q = limit - 1
    while q > 2:
        if _is_probable_prime(q):
            yield q
        q -= 1


def _matmul_mod(a: np.ndarray, b: np.ndarray, q: int) -> np.ndarray:
    # entries < q with n*q**2 < 2**53: BLAS accumulates exact integers
    return np.fmod(a @ b, q)


def _crt(residues: list[int], moduli: list[int]) -> int:
    """Symmetric CRT lift of residues to the integer of smallest magnitude."""
    x, M = 0, 1
    for r, q in zip(residues, moduli):
        t = ((r - x) * pow(M, -1, q)) % q
        x += M * t
        M *= q
    return x - M if x > M // 2 else x


def _inf_norm(B: np.ndarray) -> int:
    return int(max(sum(abs(int(v)) for v in row) for row in B))


def certified_spectrum(A: GeneratorMatrix) -> list[tuple[Fraction, int]]:
    """Exact eigenvalues of A with multiplicities, largest first.

    Requires ``A.exact`` (integer alpha, pattern below 2**53).
    """
    if not A.exact:
        raise SpectrumError("certification needs an exact integer pattern")
    n = A.size
    B = A.pattern
    vals = np.linalg.eigvalsh(B)
    cands = sorted({int(round(v)) for v in vals})

    norm_B = _inf_norm(B)
    # |entries of prod (B - cI)| <= prod ||B - cI||_inf ; |tr B^j| <= n ||B||^j
    bound_prod = math.prod(norm_B + abs(c) for c in cands)
    bound_tr = n * norm_B ** max(len(cands) - 1, 0)
    bound = 2 * max(bound_prod, bound_tr) + 1

    q_limit = math.isqrt(2**53 // max(n, 1))
    moduli: list[int] = []
    tr_res: list[list[int]] = []
    M = 1
    for q in _primes_below(q_limit):
        if M > bound:
            break
        Bq = np.fmod(B, q)
        Bq[Bq < 0] += q
        eye = np.eye(n)
        prod = None
        for c in cands:
            factor = np.fmod(Bq - (c % q) * eye, q)
            factor[factor < 0] += q
            prod = factor if prod is None else _matmul_mod(prod, factor, q)
        if np.any(prod != 0):
            raise SpectrumError(f"minimal polynomial check failed modulo {q}")
        traces = [n % q]
        power = eye
        for _ in range(1, len(cands)):
            power = _matmul_mod(power, Bq, q)
            traces.append(int(np.trace(power)) % q)
        moduli.append(q)
        tr_res.append(traces)
        M *= q

    traces = [_crt([t[j] for t in tr_res], moduli) for j in range(len(cands))]
    mults = _solve_vandermonde(cands, traces)
    for c, k in zip(cands, mults):
        if k.denominator != 1 or k < 0:
            raise SpectrumError(f"non-integral multiplicity {k} for eigenvalue {c}")
    if sum(mults) != n:
        raise SpectrumError("multiplicities do not sum to the matrix size")
    scale = Fraction(A.scale)
    out = [(scale * c, int(k)) for c, k in zip(cands, mults) if k > 0]
    out.sort(key=lambda item: item[0], reverse=True)
    return out


def _solve_vandermonde(nodes: list[int], rhs: list[int]) -> list[Fraction]:
    size = len(nodes)
    rows = [[Fraction(c) ** j for c in nodes] + [Fraction(rhs[j])] for j in range(size)]
    for col in range(size):
        pivot = next(r for r in range(col, size) if rows[r][col] != 0)
        rows[col], rows[pivot] = rows[pivot], rows[col]
        for r in range(size):
            if r != col and rows[r][col] != 0:
                f = rows[r][col] / rows[col][col]
                rows[r] = [a - f * b for a, b in zip(rows[r], rows[col])]
    return [rows[i][size] / rows[i][i] for i in range(size)]


def numerical_spectrum(A: GeneratorMatrix, rtol: float = 1e-6) -> list[tuple[float, int]]:
    """Cluster float64 eigenvalues of A; returns (mean, count) largest first."""
    vals = np.sort(np.linalg.eigvalsh(A.entries))[::-1]
    clusters: list[list[float]] = []
    for v in vals:
        if clusters and abs(v - clusters[-1][-1]) <= rtol * max(1.0, abs(v)):
            clusters[-1].append(v)
        else:
            clusters.append([v])
    return [(float(np.mean(c)), len(c)) for c in clusters]


@dataclass(frozen=True)
class SpectrumRow:
    eigenvalue: float
    multiplicity: int
    expected: float
    abs_error: float
    numeric_eigenvalue: float
    method: str


@dataclass(frozen=True)
class SpectrumReport:
    p: int
    m: int
    alpha: float
    rows: tuple[SpectrumRow, ...]
    multiplicities_match: bool

    @property
    def max_abs_error(self) -> float:
        return max((r.abs_error for r in self.rows), default=0.0)

    def ok(self, tol: float = 1e-8) -> bool:
        return self.multiplicities_match and self.max_abs_error < tol


def verify_spectrum(p: int, m: int, alpha: float, A: GeneratorMatrix | None = None) -> SpectrumReport:
    """Compare the computed spectrum of A(p, m, alpha) with the closed form."""
    A = A or build_generator(p, m, alpha)
    numeric = numerical_spectrum(A)
    if A.exact:
        computed = certified_spectrum(A)
        expected = expected_spectrum(p, m, alpha, exact=True)
        method = "certified"
    else:
        computed = numeric
        expected = expected_spectrum(p, m, alpha)
        method = "float64"

    rows = []
    match = len(computed) == len(expected)
    for lam, k in computed:
        # pair each computed cluster with the nearest closed-form eigenvalue
        ref, ref_k = min(expected, key=lambda e: abs(e[0] - lam))
        match = match and ref_k == k
        err = abs(lam - ref)
        num = min((v for v, _ in numeric), key=lambda v: abs(v - float(lam)))
        rows.append(SpectrumRow(float(lam), k, float(ref), float(err), num, method))
    return SpectrumReport(p, m, float(alpha), tuple(rows), match)
