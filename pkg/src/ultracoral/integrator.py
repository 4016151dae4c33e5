"""Dormand-Prince 5(4) integration with PI step control and event location.

Events are callables ``g(t, y)`` returning a scalar or a 1-D array (one
event per component). Optional attributes, as in scipy:

``direction``
    -1 fires on a positive-to-nonpositive change, +1 on the reverse,
    0 on either (default).
``terminal``
    stop the integration at the event (default False).

A ``direction == -1`` event that is already nonpositive at ``t0`` fires at
``t0`` and is flagged degenerate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Dormand-Prince tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
# 5th-order minus embedded 4th-order weights
_E = np.array([
    71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40,
])
# Shampine's quartic continuous extension: y(t + th) = y + h K^T P [th, th^2, th^3, th^4]
_P = np.array([
    [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0, 0, 0, 0],
    [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])

_SAFETY = 0.9
_FAC_MIN = 0.2
_FAC_MAX = 10.0
_BETA = 0.04  # PI stabilisation exponent
_EXPO = 0.2 - 0.75 * _BETA


@dataclass(frozen=True)
class SolverConfig:
    rtol: float = 1e-8
    atol: float = 1e-10
    h_init: float = 1e-3
    h_min: float = 1e-12
    h_max: float = 10.0
    max_steps: int = 1_000_000
    event_tol: float = 1e-9

    def __post_init__(self):
        if not (self.rtol > 0 and self.atol > 0):
            raise ValueError("rtol and atol must be positive")
        if not 0 < self.h_min <= self.h_init <= self.h_max:
            raise ValueError("need 0 < h_min <= h_init <= h_max")
        if not self.max_steps > 0:
            raise ValueError("max_steps must be positive")
        if not self.event_tol > 0:
            raise ValueError("event_tol must be positive")


@dataclass(frozen=True)
class EventHit:
    event: int
    component: int
    t: float
    y: np.ndarray = field(repr=False)
    degenerate: bool = False


@dataclass
class Trajectory:
    """Samples at t0, at every accepted step end and at every located event.

    A terminal event truncates its step, so the event sample replaces that
    step's end point.
    """

    t: np.ndarray
    y: np.ndarray
    events: list[EventHit]
    status: str  # "completed" | "event"
    n_accepted: int
    n_rejected: int

    @property
    def t_final(self) -> float:
        return float(self.t[-1])

    @property
    def y_final(self) -> np.ndarray:
        return self.y[-1]


class IntegrationError(RuntimeError):
    """Integration stopped early; ``partial`` holds everything up to the last valid state."""

    def __init__(self, message: str, partial: Trajectory):
        super().__init__(message)
        self.partial = partial


class StepBudgetExceeded(IntegrationError):
    pass


class StepSizeUnderflow(IntegrationError):
    pass


class _Dense:
    __slots__ = ("t", "h", "y", "Q")

    def __init__(self, t, h, y, K):
        self.t, self.h, self.y = t, h, y
        self.Q = K.T @ _P

    def __call__(self, t):
        x = (t - self.t) / self.h
        return self.y + self.h * (self.Q @ np.array([x, x * x, x**3, x**4]))


def _step(fun, t, y, f0, h):
    K = np.empty((7, y.size))
    K[0] = f0
    for s in range(1, 7):
        dy = np.dot(_A[s], K[:s]) * h
        K[s] = fun(t + _C[s] * h, y + dy)
    y_new = y + h * (_B @ K)
    # for DP the 7th stage is evaluated at y_new (FSAL)
    err = h * (_E @ K)
    return y_new, err, K


def _as_events(events):
    out = []
    for ev in events or ():
        out.append((ev, int(getattr(ev, "direction", 0)), bool(getattr(ev, "terminal", False))))
    return out


def _eval(ev, t, y) -> np.ndarray:
    return np.atleast_1d(np.asarray(ev(t, y), dtype=float))


def _crossed(g0, g1, direction):
    if direction < 0:
        return (g0 > 0) & (g1 <= 0)
    if direction > 0:
        return (g0 < 0) & (g1 >= 0)
    return ((g0 > 0) & (g1 <= 0)) | ((g0 < 0) & (g1 >= 0))


def _locate(ev, comp, direction, dense, t_lo, t_hi, tol):
    """Bisect on the interpolant; returns the right end of the final bracket."""
    g_lo = _eval(ev, t_lo, dense(t_lo))[comp]
    while t_hi - t_lo > tol:
        t_mid = 0.5 * (t_lo + t_hi)
        if t_mid in (t_lo, t_hi):
            break
        g_mid = _eval(ev, t_mid, dense(t_mid))[comp]
        if _crossed(np.array([g_lo]), np.array([g_mid]), direction)[0]:
            t_hi = t_mid
        else:
            t_lo, g_lo = t_mid, g_mid
    return t_hi


def integrate(fun, y0, t0: float, t_end: float, cfg: SolverConfig | None = None,
              events=None) -> Trajectory:
    """Integrate ``y' = fun(t, y)`` from ``t0`` to ``t_end`` (``t_end > t0``)."""
    cfg = cfg or SolverConfig()
    evs = _as_events(events)
    t = float(t0)
    y = np.array(y0, dtype=float)
    ts, ys = [t], [y.copy()]
    hits: list[EventHit] = []
    n_acc = n_rej = 0

    def result(status):
        return Trajectory(np.array(ts), np.array(ys), hits, status, n_acc, n_rej)

    g_prev = [_eval(ev, t, y) for ev, _, _ in evs]
    stop = False
    for k, (ev, direction, terminal) in enumerate(evs):
        if direction < 0:
            for c in np.flatnonzero(g_prev[k] <= 0):
                hits.append(EventHit(k, int(c), t, y.copy(), degenerate=True))
                stop = stop or terminal
    if stop:
        return result("event")
    if t_end <= t:
        return result("completed")

    f0 = np.asarray(fun(t, y), dtype=float)
    h = min(cfg.h_init, cfg.h_max, t_end - t)
    fac_old = 1e-4
    while t < t_end:
        if n_acc + n_rej >= cfg.max_steps:
            raise StepBudgetExceeded(f"step budget {cfg.max_steps} exhausted at t={t}", result("failed"))
        if h < cfg.h_min:
            raise StepSizeUnderflow(f"step size {h:.3e} below h_min at t={t}", result("failed"))
        last = t + h >= t_end
        if last:
            h = t_end - t
        with np.errstate(over="ignore", invalid="ignore"):
            y_new, err, K = _step(fun, t, y, f0, h)
        scale = cfg.atol + cfg.rtol * np.maximum(np.abs(y), np.abs(y_new))
        err_norm = float(np.max(np.abs(err) / scale)) if y.size else 0.0
        if not np.isfinite(err_norm):
            err_norm = 1e10

        if err_norm <= 1.0:
            fac11 = err_norm**_EXPO
            fac = fac11 / fac_old**_BETA
            fac = min(1 / _FAC_MIN, max(1 / _FAC_MAX, fac / _SAFETY))
            h_next = min(h / fac, cfg.h_max)
            fac_old = max(err_norm, 1e-4)
            n_acc += 1
            t_new = t_end if last else t + h
            dense = _Dense(t, h, y, K)

            step_hits = []
            g_new = [_eval(ev, t_new, y_new) for ev, _, _ in evs]
            for k, (ev, direction, terminal) in enumerate(evs):
                for c in np.flatnonzero(_crossed(g_prev[k], g_new[k], direction)):
                    te = _locate(ev, c, direction, dense, t, t_new, cfg.event_tol)
                    step_hits.append((te, k, int(c), terminal))
            step_hits.sort()
            t_stop = next((te for te, _, _, term in step_hits if term), None)
            if t_stop is not None:
                y_stop = dense(t_stop)
                # components that crossed within [t, t_stop] all fire at t_stop
                for te, k, c, _ in step_hits:
                    if te < t_stop:
                        hits.append(EventHit(k, c, te, dense(te)))
                for k, (ev, direction, terminal) in enumerate(evs):
                    g_stop = _eval(ev, t_stop, y_stop)
                    for c in np.flatnonzero(_crossed(g_prev[k], g_stop, direction)):
                        if not any(kk == k and cc == c and te < t_stop for te, kk, cc, _ in step_hits):
                            hits.append(EventHit(k, int(c), t_stop, y_stop.copy()))
                ts.append(t_stop)
                ys.append(y_stop)
                return result("event")
            for te, k, c, _ in step_hits:
                ye = dense(te)
                hits.append(EventHit(k, c, te, ye))
                ts.append(te)
                ys.append(ye)
            t, y = t_new, y_new
            f0 = K[6]
            g_prev = g_new
            ts.append(t)
            ys.append(y.copy())
            h = h_next
        else:
            n_rej += 1
            fac11 = err_norm**_EXPO
            h = h / min(1 / _FAC_MIN, fac11 / _SAFETY)
    return result("completed")
