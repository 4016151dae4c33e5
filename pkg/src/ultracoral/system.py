"""The coupled 3 p**m ODE system for one hierarchy level.

The flat state vector is ``[u_0..u_{n-1}, v_0..v_{n-1}, w_0..w_{n-1}]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kinetics import KineticParams, reaction_rates, saturation_index
from .vladimirov import DiffusionOperator


@dataclass
class LevelState:
    time: float
    u: np.ndarray
    v: np.ndarray
    w: np.ndarray
    level: int
    # compartments that still evolve; frozen ones keep their state
    live: np.ndarray | None = None
    # compartments monitored for a v = w crossing
    active: np.ndarray | None = None

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        self.w = np.asarray(self.w, dtype=float)
        n = self.u.size
        if not self.v.size == self.w.size == n:
            raise ValueError("u, v, w must have equal length")
        if self.live is None:
            self.live = np.ones(n, dtype=bool)
        if self.active is None:
            self.active = np.ones(n, dtype=bool)

    @property
    def size(self) -> int:
        return self.u.size

    def flat(self) -> np.ndarray:
        return np.concatenate([self.u, self.v, self.w])

    @classmethod
    def from_flat(cls, time, y, level, live=None, active=None) -> LevelState:
        u, v, w = np.split(np.asarray(y, dtype=float), 3)
        return cls(time, u, v, w, level, live, active)


def _derivative(u, v, kp: KineticParams, op: DiffusionOperator, live):
    f, g, h = reaction_rates(u, v, kp)
    du = op.apply_restricted(u, live) + f
    dv = kp.d * op.apply_restricted(v, live) + g
    dw = h
    if live is not None and not live.all():
        du = du * live
        dv = dv * live
        dw = dw * live
    return du, dv, dw


def rhs(state: LevelState, kp: KineticParams, op: DiffusionOperator):
    """Time derivatives ``(du, dv, dw)`` of a level state."""
    if state.size != op.size:
        raise ValueError(f"state has {state.size} compartments, operator {op.size}")
    return _derivative(state.u, state.v, kp, op, state.live)


def make_rhs(kp: KineticParams, op: DiffusionOperator, live: np.ndarray | None = None):
    """Flat ``f(t, y)`` for the integrator."""
    n = op.size
    live = None if live is None or live.all() else live.copy()

    def f(t, y):
        du, dv, dw = _derivative(y[:n], y[n:2 * n], kp, op, live)
        return np.concatenate([du, dv, dw])

    return f


def crossing_event(i: int, n: int):
    """``v_i - w_i``; fires when it drops from positive to nonpositive."""

    def g(t, y):
        return y[n + i] - y[2 * n + i]

    g.direction = -1
    g.terminal = True
    return g


def crossing_events(indices, n: int, terminal: bool = True):
    """Vector form of :func:`crossing_event` for several compartments at once."""
    idx = np.asarray(indices, dtype=int)

    def g(t, y):
        return y[n + idx] - y[2 * n + idx]

    g.direction = -1
    g.terminal = terminal
    g.indices = idx
    return g


def saturation_events(indices, n: int, kappa_sp: float, threshold: float = 1.0):
    """Diagnostic ``Omega_i - threshold``; non-terminal."""
    idx = np.asarray(indices, dtype=int)

    def g(t, y):
        return saturation_index(y[idx], y[n + idx], kappa_sp) - threshold

    g.direction = -1
    g.terminal = False
    g.indices = idx
    return g


@dataclass(frozen=True)
class EventRecord:
    branch: int
    kind: str  # "crossing" | "saturation"
    time: float
    u: float
    v: float
    w: float
    omega: float
    degenerate: bool = field(default=False)
