"""Discretised Vladimirov diffusion generator on G_m.

The generator ``A`` acts on level-m locally constant functions and is the
*dissipative* form: ``A_ij = kappa * p**-m / |i-j|_p**(alpha+1)`` off the
diagonal, zero row sums, so ``du/dt = A u`` relaxes ``u`` towards its mean.

``A`` factors as ``scale * pattern`` with ``scale = kappa * p**-m`` and
``pattern[i, j] = p**(k * (alpha + 1))`` where ``k`` is the divergence level
of ``i`` and ``j``. For integer ``alpha`` the pattern is an integer matrix and
the scale an exact rational, which is what the spectral certification in
:mod:`ultracoral.spectrum` relies on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property

import numpy as np

from .padic import IndexLattice

# Above this many compartments DiffusionOperator switches to apply_fast.
FAST_THRESHOLD = 64

_EXACT_LIMIT = 2**53


def _check_alpha(alpha: float) -> None:
    if not alpha > 0:
        raise ValueError(f"alpha must be > 0, got {alpha}")


def _integer_alpha(alpha: float) -> int | None:
    a = float(alpha)
    return int(a) if a.is_integer() else None


def kappa_exact(p: int, alpha: float) -> Fraction | None:
    """``(p**a - 1) / (1 - p**(-a-1))`` as a Fraction, or None for non-integer a."""
    _check_alpha(alpha)
    a = _integer_alpha(alpha)
    if a is None:
        return None
    return Fraction(p**a - 1) / (1 - Fraction(1, p ** (a + 1)))


def mu_exact(p: int, alpha: float) -> Fraction | None:
    _check_alpha(alpha)
    a = _integer_alpha(alpha)
    if a is None:
        return None
    return Fraction(p**a * (p - 1), p ** (a + 1) - 1)


def kappa(p: int, alpha: float) -> float:
    """Normalisation of the Vladimirov kernel, positive for alpha > 0.

    >>> round(kappa(2, 2), 6)
    3.428571
    """
    exact = kappa_exact(p, alpha)
    if exact is not None:
        return float(exact)
    return (p**alpha - 1.0) / (1.0 - p ** (-alpha - 1.0))


def mu(p: int, alpha: float) -> float:
    """Spectral shift ``p**a (p-1) / (p**(a+1) - 1)`` of the operator restricted to Z_p."""
    exact = mu_exact(p, alpha)
    if exact is not None:
        return float(exact)
    return p**alpha * (p - 1.0) / (p ** (alpha + 1.0) - 1.0)


def _level_powers(p: int, m: int, alpha: float) -> tuple[list, bool]:
    """``p**(k(alpha+1))`` for k = 0..m-1, as ints when that is exact."""
    a = _integer_alpha(alpha)
    if a is not None:
        ints = [p ** (k * (a + 1)) for k in range(m)]
        # the diagonal is the largest magnitude in the pattern
        diag = sum(w * (p - 1) * p ** (m - k - 1) for k, w in enumerate(ints))
        if diag < _EXACT_LIMIT:
            return ints, True
    return [float(p) ** (k * (alpha + 1.0)) for k in range(m)], False


def _scale(p: int, m: int, alpha: float) -> Fraction | float:
    exact = kappa_exact(p, alpha)
    if exact is not None:
        return exact / p**m
    return kappa(p, alpha) * float(p) ** (-m)


def divergence_matrix(p: int, m: int) -> np.ndarray:
    """``K[i, j]`` = number of leading base-p digits shared by i and j."""
    n = p**m
    idx = np.arange(n)
    K = np.zeros((n, n), dtype=np.int64)
    for k in range(1, m + 1):
        mod = idx % p**k
        K += mod[:, None] == mod[None, :]
    return K


def level_weights(p: int, m: int, alpha: float) -> np.ndarray:
    """Coupling ``A_ij`` for a pair diverging at digit k, for k = 0..m-1."""
    powers, _ = _level_powers(p, m, alpha)
    s = _scale(p, m, alpha)
    if isinstance(s, Fraction):
        return np.array([float(s * w) for w in powers], dtype=float)
    return np.array([s * w for w in powers], dtype=float)


def diagonal_value(p: int, m: int, alpha: float) -> float:
    """The common diagonal entry ``A_ii`` (identical for every i)."""
    powers, _ = _level_powers(p, m, alpha)
    s = _scale(p, m, alpha)
    total = sum(w * (p - 1) * p ** (m - k - 1) for k, w in enumerate(powers))
    return -float(s * total)


@dataclass(frozen=True, eq=False)
class GeneratorMatrix:
    """Dense generator for given (p, m, alpha).

    ``entries`` is the float view ``scale * pattern``. When ``exact`` is set
    the pattern holds integers below 2**53 and ``scale`` is a Fraction, so
    the pair represents the matrix without rounding.
    """

    p: int
    m: int
    alpha: float
    kappa: float
    mu: float
    scale: Fraction | float
    pattern: np.ndarray = field(repr=False)
    exact: bool

    @property
    def size(self) -> int:
        return self.p**self.m

    @cached_property
    def entries(self) -> np.ndarray:
        out = float(self.scale) * self.pattern
        # the diagonal is rounded independently of the float scale product
        np.fill_diagonal(out, diagonal_value(self.p, self.m, self.alpha))
        out.setflags(write=False)
        return out

    def row_sums(self) -> np.ndarray:
        """Row sums of A, computed exactly when the representation is exact."""
        if self.exact:
            sums = [float(self.scale * int(r)) for r in self.pattern.sum(axis=1)]
            return np.array(sums)
        return np.array([math.fsum(row) for row in self.entries])

    def apply(self, x: np.ndarray) -> np.ndarray:
        return apply_dense(self, x)


def build_generator(p: int, m: int, alpha: float) -> GeneratorMatrix:
    """Build the dense generator A on G_m.

    >>> build_generator(2, 1, 2).entries * 7
    array([[-12.,  12.],
           [ 12., -12.]])
    """
    _check_alpha(alpha)
    lattice = IndexLattice(p, m)
    n = lattice.size
    powers, exact = _level_powers(p, m, alpha)
    K = divergence_matrix(p, m)
    table = np.array(powers + [0], dtype=float)
    pattern = table[K]
    diag = sum(w * (p - 1) * p ** (m - k - 1) for k, w in enumerate(powers))
    np.fill_diagonal(pattern, -float(diag) if n > 0 else 0.0)
    pattern.setflags(write=False)
    return GeneratorMatrix(
        p=p,
        m=m,
        alpha=float(alpha),
        kappa=kappa(p, alpha),
        mu=mu(p, alpha),
        scale=_scale(p, m, alpha),
        pattern=pattern,
        exact=exact,
    )


def apply_dense(A: GeneratorMatrix, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != A.size:
        raise ValueError(f"vector length {x.shape[-1]} != p**m = {A.size}")
    return x @ A.entries.T if x.ndim > 1 else A.entries @ x


def _fast(weights: np.ndarray, diag: float, p: int, m: int, x: np.ndarray) -> np.ndarray:
    if m == 0:
        return np.zeros_like(x)
    lead = x.shape[:-1]
    # ball sums S_k for k = m..0, S_k[b] over indices congruent to b mod p**k
    sums = [x]
    for k in range(m - 1, -1, -1):
        sums.append(sums[-1].reshape(*lead, p, p**k).sum(axis=-2))
    sums.reverse()
    reps = (1,) * len(lead) + (p,)
    # sum_k W_k (S_k - S_{k+1}) telescoped into (W_k - W_{k-1}) S_k
    acc = weights[0] * sums[0]
    for k in range(1, m):
        acc = np.tile(acc, reps) + (weights[k] - weights[k - 1]) * sums[k]
    acc = np.tile(acc, reps)
    return acc - (weights[m - 1] - diag) * x


def apply_fast(p: int, m: int, alpha: float, x) -> np.ndarray:
    """Matrix-free ``A @ x`` in O(p**m) using ultrametric ball sums.

    ``x`` may carry leading batch axes; the lattice runs along the last axis.
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != p**m:
        raise ValueError(f"vector length {x.shape[-1]} != p**m = {p**m}")
    return _fast(level_weights(p, m, alpha), diagonal_value(p, m, alpha), p, m, x)


class DiffusionOperator:
    """A applied dense at small sizes and matrix-free above FAST_THRESHOLD."""

    def __init__(self, p: int, m: int, alpha: float, fast: bool | None = None):
        _check_alpha(alpha)
        self.lattice = IndexLattice(p, m)
        self.p, self.m, self.alpha = p, m, float(alpha)
        self.size = self.lattice.size
        self.fast = self.size > FAST_THRESHOLD if fast is None else fast
        self._weights = level_weights(p, m, alpha)
        self._diag = diagonal_value(p, m, alpha)
        self._dense = None if self.fast else build_generator(p, m, alpha).entries

    def apply(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.size:
            raise ValueError(f"vector length {x.shape[-1]} != p**m = {self.size}")
        if self.fast:
            return _fast(self._weights, self._diag, self.p, self.m, x)
        return x @ self._dense.T if x.ndim > 1 else self._dense @ x

    def apply_restricted(self, x, live: np.ndarray | None) -> np.ndarray:
        """Apply the generator restricted to the compartments in ``live``.

        Couplings to compartments outside ``live`` are dropped and the diagonal
        recomputed, so the restricted operator still conserves mass; rows
        outside ``live`` are zero.
        """
        if live is None or live.all():
            return self.apply(x)
        mask = live.astype(float)
        x = np.asarray(x, dtype=float)
        out = self.apply(x * mask) - x * self.apply(mask)
        return out * mask


def expected_spectrum(p: int, m: int, alpha: float, exact: bool = False):
    """Closed-form eigenvalues of A with multiplicities, largest first.

    Wavelets supported on balls of radius p**r (r = 0..-(m-1)) have
    eigenvalue ``-(p**((1-r) alpha) - mu)`` with multiplicity
    ``(p-1) p**(-r)``; the constant vector gives 0.
    """
    _check_alpha(alpha)
    mu_e = mu_exact(p, alpha) if exact else None
    if exact and mu_e is None:
        raise ValueError("exact spectrum needs integer alpha")
    out = [(Fraction(0) if exact else 0.0, 1)]
    for s in range(m):
        if exact:
            a = _integer_alpha(alpha)
            lam = -(p ** ((1 + s) * a) - mu_e)
        else:
            lam = -(float(p) ** ((1 + s) * alpha) - mu(p, alpha))
        out.append((lam, (p - 1) * p**s))
    return out
