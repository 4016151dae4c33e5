"""Integer p-adic arithmetic on the truncated tree G_m.

Branch indices are plain Python ints in ``[0, p**m)``; their base-p digits
(least significant first) spell the path from the root of the p-ary tree,
so two indices share a ball of radius ``p**-k`` iff their first ``k``
digits agree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator

import numpy as np

# Upper bound on p**m; a dense generator at this size would already be
# far beyond desk-scale memory, the fast operator is still fine.
MAX_COMPARTMENTS = 2**20


class LatticeError(ValueError):
    """Invalid lattice parameters or an index outside the lattice."""


def is_prime(n: int) -> bool:
    if n < 2:
        return False
    if n < 4:
        return True
    if n % 2 == 0:
        return False
    return all(n % d for d in range(3, math.isqrt(n) + 1, 2))


def valuation(n: int, p: int) -> int | float:
    """Return ord_p(n), the largest k with p**k dividing n.

    ``math.inf`` is returned for ``n == 0``.

    >>> valuation(12, 2)
    2
    >>> valuation(0, 3)
    inf
    """
    if p < 2:
        raise LatticeError(f"p must be >= 2, got {p}")
    if n == 0:
        return math.inf
    n = abs(n)
    k = 0
    while n % p == 0:
        n //= p
        k += 1
    return k


def ultrametric_norm(i: int, j: int, p: int) -> Fraction:
    """Exact p-adic distance ``|i - j|_p`` as a rational."""
    k = valuation(int(i) - int(j), p)
    if k == math.inf:
        return Fraction(0)
    return Fraction(1, p**k)


def divergence_level(i: int, j: int, p: int, m: int) -> int:
    """Smallest digit position where ``i`` and ``j`` differ, or ``m`` if equal."""
    i, j = int(i), int(j)
    for k in range(m):
        if i % p != j % p:
            return k
        i //= p
        j //= p
    return m


def digits(value: int, p: int, m: int) -> tuple[int, ...]:
    out = []
    for _ in range(m):
        value, d = divmod(value, p)
        out.append(d)
    return tuple(out)


def from_digits(ds, p: int) -> int:
    value = 0
    for d in reversed(tuple(ds)):
        if not 0 <= d < p:
            raise LatticeError(f"digit {d} out of range for p={p}")
        value = value * p + d
    return value


@dataclass(frozen=True)
class IndexLattice:
    """The p**m representatives of the balls of radius p**-m in Z_p."""

    p: int
    m: int
    cap: int = MAX_COMPARTMENTS

    def __post_init__(self):
        if not is_prime(self.p):
            raise LatticeError(f"p must be prime, got {self.p}")
        if self.m < 0:
            raise LatticeError(f"m must be >= 0, got {self.m}")
        if self.p**self.m > self.cap:
            raise LatticeError(
                f"p**m = {self.p}**{self.m} exceeds the compartment cap {self.cap}"
            )

    @property
    def size(self) -> int:
        return self.p**self.m

    def __len__(self) -> int:
        return self.size

    def __iter__(self) -> Iterator[int]:
        return iter(range(self.size))

    def __contains__(self, value) -> bool:
        return isinstance(value, (int, np.integer)) and 0 <= value < self.size

    def index(self, value: int) -> BranchIndex:
        return BranchIndex(int(value), self.p, self.m)

    def check(self, value: int) -> int:
        if value not in self:
            raise LatticeError(f"index {value} not in G_{self.m} for p={self.p}")
        return int(value)


@dataclass(frozen=True, order=True)
class BranchIndex:
    value: int
    p: int
    m: int

    def __post_init__(self):
        if not 0 <= self.value < self.p**self.m:
            raise LatticeError(f"index {self.value} not in [0, {self.p}**{self.m})")

    @classmethod
    def from_digits(cls, ds, p: int) -> BranchIndex:
        ds = tuple(ds)
        return cls(from_digits(ds, p), p, len(ds))

    @property
    def digits(self) -> tuple[int, ...]:
        return digits(self.value, self.p, self.m)

    def prefix(self, k: int) -> int:
        """Representative of the enclosing ball of radius p**-k."""
        return self.value % self.p**k

    def __int__(self) -> int:
        return self.value


def ball_members(center: int, k: int, lattice: IndexLattice) -> list[int]:
    """All lattice indices congruent to ``center`` mod ``p**k``."""
    if not 0 <= k <= lattice.m:
        raise LatticeError(f"ball level {k} outside [0, {lattice.m}]")
    step = lattice.p**k
    return list(range(int(center) % step, lattice.size, step))


def kozyrev_vector(lattice: IndexLattice, r: int, j: int, n: int = 0) -> np.ndarray:
    """Values of the wavelet Psi_{r,j,n} on the lattice representatives.

    The support is the ball ``{x : x = n mod p**(-r)}``. On it the character
    is evaluated relative to the ball representative, giving
    ``exp(2 pi i j x_s / p)`` with ``x_s`` the digit of ``x`` at position
    ``s = -r``. This differs from the textbook wavelet by a constant phase and
    the ``p**(-r/2)`` normalisation, neither of which matters for eigenvector
    tests. For ``p == 2`` the result is a real +-1 pattern.
    """
    p = lattice.p
    if r > 0:
        raise LatticeError(f"r must be <= 0 inside Z_p, got {r}")
    if 1 - r > lattice.m:
        raise LatticeError(f"r={r} needs level >= {1 - r}, lattice has m={lattice.m}")
    if not 1 <= j <= p - 1:
        raise LatticeError(f"j must lie in 1..{p - 1}, got {j}")
    s = -r
    if not 0 <= n < p**s:
        raise LatticeError(f"ball selector n={n} outside [0, {p**s})")

    x = np.arange(lattice.size)
    support = (x % p**s) == n
    digit = (x // p**s) % p
    phase = (j * digit) % p
    if p == 2:
        return np.where(support, np.where(phase == 0, 1.0, -1.0), 0.0)
    roots = np.exp(2j * np.pi * np.arange(p) / p)
    return np.where(support, roots[phase], 0.0)


def kozyrev_basis(lattice: IndexLattice):
    """Yield ``(r, j, n, vector)`` for every wavelet resolvable on the lattice.

    Together with the constant vector these give ``p**m`` mutually orthogonal
    vectors.
    """
    p = lattice.p
    for s in range(lattice.m):
        for j in range(1, p):
            for n in range(p**s):
                yield -s, j, n, kozyrev_vector(lattice, -s, j, n)
