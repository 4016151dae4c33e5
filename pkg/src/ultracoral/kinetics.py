"""Dimensionless calcification kinetics.

State variables are scaled carbonate ``u``, calcium ``v`` and calcium
carbonate ``w``. With ``s = v - u + beta`` (scaled bicarbonate) the rates are::

    f = -u (u - v + sigma - beta)
    g = -eta v s**2
    h = +eta v s**2
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ParameterError(ValueError):
    """A parameter violates its physical range."""


@dataclass(frozen=True)
class KineticParams:
    """Dimensionless parameters.

    ``eta == 0`` is accepted as a degenerate variant with precipitation
    switched off. ``beta >= 0`` is rejected unless ``allow_nonnegative_beta``
    is set, in which case results are outside the analysed regime.
    """

    d: float = 0.1
    eta: float = 1.0
    beta: float = -0.2
    sigma: float = 1.0
    kappa_sp: float = 1.0
    allow_nonnegative_beta: bool = False

    def __post_init__(self):
        if not self.d > 0:
            raise ParameterError(f"d must be positive, got {self.d}")
        if not self.eta >= 0:
            raise ParameterError(f"eta must be non-negative, got {self.eta}")
        if not self.sigma > 0:
            raise ParameterError(f"sigma must be positive, got {self.sigma}")
        if not self.kappa_sp > 0:
            raise ParameterError(f"kappa_sp must be positive, got {self.kappa_sp}")
        if not self.beta < 0 and not self.allow_nonnegative_beta:
            raise ParameterError(f"beta must be negative, got {self.beta}")

    @property
    def out_of_regime(self) -> bool:
        return self.beta >= 0


@dataclass(frozen=True)
class PhysicalParams:
    k1_prime: float
    k2: float
    d1: float
    d2: float
    z0: float
    u0: float
    v0: float

    def __post_init__(self):
        for name in ("k1_prime", "k2", "d1", "d2", "z0", "u0", "v0"):
            value = getattr(self, name)
            if not value > 0:
                raise ParameterError(f"{name} must be positive, got {value}")

    @property
    def c(self) -> float:
        """Initial carbonate/calcium imbalance ``u0 - v0``."""
        return self.u0 - self.v0


@dataclass(frozen=True)
class SpeciesState:
    u: float
    v: float
    w: float = 0.0

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.u, self.v, self.w)


def nondimensionalize(phys: PhysicalParams, kappa_sp: float = 1.0,
                      allow_nonnegative_beta: bool = False):
    """Map physical parameters to ``(KineticParams, concentration_scale, time_scale)``.

    Physical concentration = dimensionless * ``concentration_scale`` and
    physical time = dimensionless * ``time_scale``.
    """
    d1, k1 = phys.d1, phys.k1_prime
    kp = KineticParams(
        d=phys.d2 / d1,
        eta=d1 * phys.k2 / k1**2,
        beta=phys.c * k1 / d1,
        sigma=phys.z0 * k1 / d1,
        kappa_sp=kappa_sp,
        allow_nonnegative_beta=allow_nonnegative_beta,
    )
    return kp, d1 / k1, 1.0 / d1


def reaction_rates(u, v, kp: KineticParams):
    """Return ``(f, g, h)``; works elementwise on arrays."""
    s = v - u + kp.beta
    h = kp.eta * v * s * s
    f = -u * (u - v + kp.sigma - kp.beta)
    return f, -h, h


def jacobian(u: float, v: float, kp: KineticParams) -> np.ndarray:
    """Jacobian of ``(f, g)`` with respect to ``(u, v)``."""
    s = v - u + kp.beta
    eta = kp.eta
    return np.array([
        [-(u - v + kp.sigma - kp.beta) - u, u],
        [2 * eta * v * s, -eta * s * s - 2 * eta * v * s],
    ])


@dataclass(frozen=True)
class Equilibrium:
    point: tuple[float, float]
    eigenvalues: tuple[float, float]
    classification: str


def classify(eigenvalues) -> str:
    re = np.real(np.asarray(eigenvalues))
    if np.any(re > 0):
        return "unstable"
    if np.all(re < 0):
        return "asymptotically stable"
    return "non-hyperbolic (center-manifold stable)"


def equilibria(kp: KineticParams) -> list[Equilibrium]:
    """Non-negative equilibria of the reaction system in (u, v).

    Both points have ``u = 0`` so the Jacobian is lower triangular there and
    its eigenvalues are the diagonal entries.
    """
    out = []
    for point in ((0.0, 0.0), (0.0, -kp.beta)):
        J = jacobian(*point, kp)
        # +0.0 turns a signed zero into 0.0
        eig = (float(J[0, 0]) + 0.0, float(J[1, 1]) + 0.0)
        out.append(Equilibrium(point, eig, classify(eig)))
    return out


def saturation_index(u, v, kappa_sp: float):
    """Omega = u v / kappa_sp on dimensionless concentrations."""
    if not kappa_sp > 0:
        raise ParameterError(f"kappa_sp must be positive, got {kappa_sp}")
    return u * v / kappa_sp
