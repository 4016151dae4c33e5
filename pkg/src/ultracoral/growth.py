"""Event-driven branching growth on the p-adic tree.

Each hierarchy level is one coupled integration over ``p**m`` compartments.
Compartment ``i`` at level ``m`` has children ``i + c * p**m`` at level
``m + 1``, so a branch's base-p digits (least significant first) are its
path from the root.

Per level:

* active compartments are watched for their first ``v = w`` crossing;
  a crossed compartment is frozen (removed from the diffusion coupling and
  its kinetics stopped) until the level ends;
* the level ends at the last crossing or when ``t_max_level`` runs out;
* a crossing with ``Omega >= omega_threshold`` splits the branch into ``p``
  daughters with ``w = 0``, otherwise the branch halts;
* halted and never-crossing branches carry into the next level as ``p``
  continuation compartments holding ``1/p`` of their state each. These
  diffuse and react but are not watched and add no tree edges.

Branch lifetimes are measured from the start of the branch's level to its
crossing, which is the span over which it actually evolved.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterator

import numpy as np

from .integrator import IntegrationError, SolverConfig, integrate
from .kinetics import KineticParams, SpeciesState, saturation_index
from .system import (
    EventRecord,
    LevelState,
    crossing_events,
    make_rhs,
    saturation_events,
)
from .vladimirov import DiffusionOperator


class GrowthError(RuntimeError):
    """A level integration failed; ``tree`` holds the levels completed so far."""

    def __init__(self, message: str, tree: CoralTree | None = None,
                 cause: IntegrationError | None = None):
        super().__init__(message)
        self.tree = tree
        self.cause = cause


@dataclass(frozen=True)
class GrowthConfig:
    seed: int = 0
    theta_delta: float = 0.1
    m_max: int = 4
    omega_threshold: float = 1.0
    t_max_level: float = 500.0
    log_saturation: bool = False
    p: int = 2
    alpha: float = 2.0
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        if not 0 <= self.theta_delta < 0.5:
            raise ValueError(f"theta_delta must lie in [0, 0.5), got {self.theta_delta}")
        if not self.m_max >= 0:
            raise ValueError(f"m_max must be >= 0, got {self.m_max}")
        if not self.omega_threshold > 0:
            raise ValueError(f"omega_threshold must be positive, got {self.omega_threshold}")
        if not self.t_max_level > 0:
            raise ValueError(f"t_max_level must be positive, got {self.t_max_level}")
        if not (isinstance(self.seed, (int, np.integer)) and self.seed >= 0):
            raise ValueError(f"seed must be a non-negative integer, got {self.seed}")


# ---------------------------------------------------------------- randomness

def branch_rng(seed: int, path) -> np.random.Generator:
    """Independent generator keyed by ``(seed, path)``.

    The key fully determines the stream, so evaluation order never matters.
    """
    path = tuple(int(d) for d in path)
    ss = np.random.SeedSequence([int(seed), len(path), *path])
    return np.random.Generator(np.random.Philox(ss))


def draw_theta(rng: np.random.Generator, delta: float = 0.1) -> float:
    if delta == 0:
        return 0.5
    return float(rng.uniform(0.5 - delta, 0.5 + delta))


def split_weights(rng: np.random.Generator, p: int, delta: float) -> list[float]:
    """Share of the parent given to each of ``p`` daughters."""
    if p == 2:
        theta = draw_theta(rng, delta)
        return [theta, 1.0 - theta]
    if delta == 0:
        return [1.0 / p] * p
    x = rng.uniform(0.5 - delta, 0.5 + delta, size=p)
    return list(x / x.sum())


def _split_amount(total: float, weights) -> list[float]:
    if len(weights) == 2:
        # larger share rounded once; the smaller is an exact difference
        theta = weights[0]
        big = max(theta, 1.0 - theta) * total
        small = total - big
        return [small, big] if theta < 0.5 else [big, small]
    # shares quantised to ulp(total) keep every partial sum exact
    q = math.ulp(total) if total else 0.0
    head = [round(w * total / q) * q if q else 0.0 for w in weights[:-1]]
    return head + [total - math.fsum(head)]


def split_state(parent: SpeciesState, theta: float) -> tuple[SpeciesState, SpeciesState]:
    """Two daughters with shares ``theta`` and ``1 - theta`` of u and v, w reset.

    ``a.u + b.u == parent.u`` holds exactly in floating point.
    """
    if not 0 < theta < 1:
        raise ValueError(f"theta must lie in (0, 1), got {theta}")
    ua, ub = _split_amount(parent.u, [theta, 1 - theta])
    va, vb = _split_amount(parent.v, [theta, 1 - theta])
    return SpeciesState(ua, va, 0.0), SpeciesState(ub, vb, 0.0)


def split_state_p(parent: SpeciesState, weights) -> list[SpeciesState]:
    us = _split_amount(parent.u, weights)
    vs = _split_amount(parent.v, weights)
    return [SpeciesState(u, v, 0.0) for u, v in zip(us, vs)]


def _even_shares(x: float, p: int) -> list[float]:
    part = x / p
    return [part] * (p - 1) + [x - part * (p - 1)]


# ---------------------------------------------------------------- tree

@dataclass
class BranchNode:
    path: tuple[int, ...]
    birth_time: float
    level_start: float
    birth_state: SpeciesState
    crossing_time: float | None = None
    crossing_state: SpeciesState | None = None
    omega: float | None = None
    halted: bool = False
    truncated: bool = False
    lifetime: float | None = None
    continuation: bool = False
    children: list[BranchNode] = field(default_factory=list)

    @property
    def depth(self) -> int:
        return len(self.path)

    def walk(self) -> Iterator[BranchNode]:
        yield self
        for c in self.children:
            yield from c.walk()


@dataclass
class LevelSummary:
    level: int
    t_start: float
    t_end: float
    compartments: int
    active: int
    events: list[EventRecord]
    t: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)
    n_accepted: int = 0


@dataclass
class CoralTree:
    root: BranchNode
    p: int
    final_level: int
    levels: list[LevelSummary]
    config: dict

    def nodes(self) -> Iterator[BranchNode]:
        return self.root.walk()

    def leaves(self) -> list[BranchNode]:
        return [n for n in self.nodes() if not n.children]


# ---------------------------------------------------------------- level run

@dataclass
class LevelResult:
    crossings: dict[int, EventRecord]
    events: list[EventRecord]
    final: LevelState
    t_end: float
    t: np.ndarray
    y: np.ndarray
    n_accepted: int


def _record(kind, comp, t, y, n, kappa_sp, degenerate=False) -> EventRecord:
    u, v, w = float(y[comp]), float(y[n + comp]), float(y[2 * n + comp])
    return EventRecord(comp, kind, float(t), u, v, w,
                       float(saturation_index(u, v, kappa_sp)), degenerate)


def run_level(state: LevelState, kp: KineticParams, op: DiffusionOperator,
              cfg: GrowthConfig) -> LevelResult:
    """Integrate one level until every active compartment has crossed or time runs out."""
    n = state.size
    if n != op.size:
        raise ValueError(f"state has {n} compartments, operator {op.size}")
    t = float(state.time)
    t_limit = t + cfg.t_max_level
    y = state.flat()
    live = state.live.copy()
    pending = np.flatnonzero(state.active & state.live)
    watch_sat = pending.copy() if cfg.log_saturation else np.array([], dtype=int)
    crossings: dict[int, EventRecord] = {}
    events: list[EventRecord] = []
    ts, ys = [np.array([t])], [y[None, :]]
    n_acc = 0

    while pending.size:
        evs = [crossing_events(pending, n)]
        if watch_sat.size:
            evs.append(saturation_events(watch_sat, n, kp.kappa_sp, cfg.omega_threshold))
        try:
            tr = integrate(make_rhs(kp, op, live), y, t, t_limit, cfg.solver, evs)
        except IntegrationError as exc:
            exc.level_events = events
            raise
        n_acc += tr.n_accepted
        ts.append(tr.t[1:])
        ys.append(tr.y[1:])
        crossed = []
        for hit in tr.events:
            if hit.event == 0:
                comp = int(pending[hit.component])
                rec = _record("crossing", comp, hit.t, hit.y, n, kp.kappa_sp, hit.degenerate)
                crossings[comp] = rec
                crossed.append(comp)
            else:
                comp = int(watch_sat[hit.component])
                rec = _record("saturation", comp, hit.t, hit.y, n, kp.kappa_sp, hit.degenerate)
                watch_sat = watch_sat[watch_sat != comp]
            events.append(rec)
        t, y = tr.t_final, tr.y_final
        if tr.status == "completed":
            break
        live[crossed] = False
        pending = np.setdiff1d(pending, crossed)
        watch_sat = np.setdiff1d(watch_sat, crossed)

    final = LevelState.from_flat(t, y, state.level, live, state.active)
    return LevelResult(crossings, events, final, t, np.concatenate(ts),
                       np.concatenate(ys), n_acc)


# ---------------------------------------------------------------- growth loop

def _config_echo(cfg: GrowthConfig, kp: KineticParams, ic: SpeciesState) -> dict:
    s = cfg.solver
    return {
        "growth": {
            "seed": int(cfg.seed), "theta_delta": cfg.theta_delta, "m_max": cfg.m_max,
            "omega_threshold": cfg.omega_threshold, "t_max_level": cfg.t_max_level,
            "log_saturation": cfg.log_saturation,
        },
        "model": {
            "p": cfg.p, "alpha": cfg.alpha, "d": kp.d, "eta": kp.eta, "beta": kp.beta,
            "sigma": kp.sigma, "kappa_sp": kp.kappa_sp,
            "allow_nonnegative_beta": kp.allow_nonnegative_beta,
            "u0": ic.u, "v0": ic.v, "w0": ic.w,
        },
        "solver": {
            "rtol": s.rtol, "atol": s.atol, "h_init": s.h_init, "h_min": s.h_min,
            "h_max": s.h_max, "max_steps": s.max_steps, "event_tol": s.event_tol,
        },
        "frozen_after_crossing": True,
        "out_of_regime": kp.out_of_regime,
    }


def grow(cfg: GrowthConfig, kp: KineticParams, ic: SpeciesState) -> CoralTree:
    """Run the level-by-level branching simulation from a single root branch."""
    p = cfg.p
    root = BranchNode((), 0.0, 0.0, ic)
    tree = CoralTree(root, p, 0, [], _config_echo(cfg, kp, ic))
    # owner[i]: the branch node watched in compartment i, None for continuations
    owner: list[BranchNode | None] = [root]
    state = LevelState(0.0, [ic.u], [ic.v], [ic.w], 0)

    for m in range(cfg.m_max + 1):
        n = p**m
        op = DiffusionOperator(p, m, cfg.alpha)
        try:
            res = run_level(state, kp, op, cfg)
        except IntegrationError as exc:
            raise GrowthError(f"level {m}: {exc}", tree, exc) from exc
        t_start = state.time
        tree.levels.append(LevelSummary(
            m, t_start, res.t_end, n, int(state.active.sum()), res.events,
            res.t, res.y, res.n_accepted,
        ))
        tree.final_level = m

        splitting = []
        for i, node in enumerate(owner):
            if node is None:
                continue
            rec = res.crossings.get(i)
            if rec is None:
                node.halted = True
                node.truncated = True
                node.lifetime = res.t_end - node.level_start
                continue
            node.crossing_time = rec.time
            node.crossing_state = SpeciesState(rec.u, rec.v, rec.w)
            node.omega = rec.omega
            node.lifetime = rec.time - node.level_start
            if rec.omega >= cfg.omega_threshold:
                splitting.append(i)
            else:
                node.halted = True

        if m == cfg.m_max or not splitting:
            break

        # synchronise: the next level starts when this one ended
        t_sync = res.t_end
        y = res.final
        size = p ** (m + 1)
        u, v, w = np.empty(size), np.empty(size), np.empty(size)
        active = np.zeros(size, dtype=bool)
        next_owner: list[BranchNode | None] = [None] * size
        split_set = set(splitting)
        for i in range(n):
            slots = [i + c * n for c in range(p)]
            node = owner[i]
            if i in split_set:
                weights = split_weights(branch_rng(cfg.seed, node.path), p, cfg.theta_delta)
                daughters = split_state_p(node.crossing_state, weights)
                for c, (slot, ds) in enumerate(zip(slots, daughters)):
                    u[slot], v[slot], w[slot] = ds.u, ds.v, ds.w
                    child = BranchNode(node.path + (c,), node.crossing_time, t_sync, ds)
                    node.children.append(child)
                    next_owner[slot] = child
                    active[slot] = True
            else:
                if node is not None:
                    node.continuation = True
                for slot, a, b, c_ in zip(slots, _even_shares(y.u[i], p),
                                          _even_shares(y.v[i], p), _even_shares(y.w[i], p)):
                    u[slot], v[slot], w[slot] = a, b, c_
        owner = next_owner
        state = LevelState(t_sync, u, v, w, m + 1, None, active)
    return tree


# ---------------------------------------------------------------- metrics

@dataclass(frozen=True)
class TreeMetrics:
    min_lifetime: float
    max_lifetime: float
    mean_lifetime: float
    relative_range: float
    leaf_count: int
    depth: int
    count: int


def lifetime_stats(lifetimes) -> tuple[float, float, float, float]:
    """``(min, max, mean, (max - min) / mean)``."""
    ls = list(lifetimes)
    if not ls:
        raise ValueError("no lifetimes")
    lo, hi = min(ls), max(ls)
    mean = math.fsum(ls) / len(ls)
    return lo, hi, mean, (hi - lo) / mean if mean else 0.0


def tree_metrics(tree: CoralTree, min_depth: int = 0) -> TreeMetrics:
    """Lifetime statistics over branch nodes at depth >= ``min_depth``."""
    nodes = [nd for nd in tree.nodes() if nd.depth >= min_depth and nd.lifetime is not None]
    if not nodes:
        raise ValueError(f"tree has no branches at depth >= {min_depth}")
    lo, hi, mean, rel = lifetime_stats(nd.lifetime for nd in nodes)
    return TreeMetrics(
        lo, hi, mean, rel,
        leaf_count=len(tree.leaves()),
        depth=max(nd.depth for nd in tree.nodes()),
        count=len(nodes),
    )


def _grow_one(args):
    cfg, kp, ic = args
    return grow(cfg, kp, ic)


def grow_ensemble(seeds, cfg: GrowthConfig, kp: KineticParams, ic: SpeciesState,
                  workers: int = 1) -> list[CoralTree]:
    """One independent tree per seed, optionally in worker processes."""
    jobs = [(replace(cfg, seed=int(s)), kp, ic) for s in seeds]
    if workers <= 1:
        return [_grow_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_grow_one, jobs))
