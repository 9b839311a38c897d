"""Asynchronous operation driven by per-agent event times (no delays)."""

from __future__ import annotations

from dataclasses import dataclass
from math import ceil
from typing import Sequence

import numpy as np

from .errors import ContractViolation
from .graphs import Digraph, GraphSchedule, compose_all
from .sync_engine import (
    DEFAULT_TOL,
    Problem,
    Trace,
    _as_states,
    _record,
    error_reference,
    finalize_errors,
    init_states,
    sync_step,
)

GAP_SLACK = 1e-12


@dataclass(frozen=True)
class EventSchedule:
    """Strictly increasing event times per agent with gap bounds ``[T_i, T_bar_i]``."""

    times: tuple[np.ndarray, ...]
    T: tuple[float, ...]
    T_bar: tuple[float, ...]

    def __post_init__(self):
        if not (len(self.times) == len(self.T) == len(self.T_bar)):
            raise ContractViolation("need times and gap bounds for every agent")
        for i, (ts, lo, hi) in enumerate(zip(self.times, self.T, self.T_bar)):
            if not 0 < lo < hi:
                raise ContractViolation(f"agent {i}: need 0 < T < T_bar, got ({lo}, {hi})")
            if len(ts) == 0:
                raise ContractViolation(f"agent {i} has no events")
            gaps = np.diff(ts)
            if (gaps < lo - GAP_SLACK).any() or (gaps > hi + GAP_SLACK).any():
                raise ContractViolation(f"agent {i}: event gaps leave [{lo}, {hi}]")

    @classmethod
    def from_times(cls, times: Sequence[Sequence[float]], T: Sequence[float],
                   T_bar: Sequence[float]) -> "EventSchedule":
        arrs = tuple(np.asarray(ts, dtype=float) for ts in times)
        return cls(arrs, tuple(float(x) for x in T), tuple(float(x) for x in T_bar))

    @property
    def m(self) -> int:
        return len(self.times)


def generate_schedule(m: int, T: Sequence[float], T_bar: Sequence[float], horizon: float,
                      seed: int) -> EventSchedule:
    """Seeded event times up to time ``horizon``.

    First events are uniform in ``[0, T_bar_i]``; gaps are uniform in
    ``[T_i, T_bar_i]``.
    """
    T = [float(x) for x in T]
    T_bar = [float(x) for x in T_bar]
    if len(T) != m or len(T_bar) != m:
        raise ContractViolation("need gap bounds for every agent")
    for lo, hi in zip(T, T_bar):
        if not 0 < lo < hi:
            raise ContractViolation(f"need 0 < T < T_bar, got ({lo}, {hi})")
    rng = np.random.default_rng(seed)
    times = []
    for lo, hi in zip(T, T_bar):
        first = rng.uniform(0.0, hi)
        count = max(1, ceil((horizon - first) / lo) + 1)
        ts = first + np.concatenate([[0.0], np.cumsum(rng.uniform(lo, hi, size=count))])
        times.append(ts[ts <= max(horizon, first)])
    return EventSchedule(tuple(times), tuple(T), tuple(T_bar))


def uniform_grid(m: int, count: int, start: float = 0.0, step: float = 1.0) -> EventSchedule:
    """Every agent fires on the same grid ``start, start + step, ...``."""
    ts = start + step * np.arange(count)
    return EventSchedule(tuple(ts.copy() for _ in range(m)), (0.5 * step,) * m, (1.5 * step,) * m)


@dataclass(frozen=True)
class Timeline:
    """Merged event times from ``max_i t_i1`` on, with who fires at each.

    ``firing[p]`` and ``first[p]`` (zero-based ``p``) hold the agents with an
    event at ``times[p]`` and those for which it is their first event.
    """

    times: np.ndarray
    firing: tuple[frozenset[int], ...]
    first: tuple[frozenset[int], ...]
    m: int

    def __len__(self) -> int:
        return len(self.times)


def merge_timeline(sched: EventSchedule) -> Timeline:
    t1 = max(float(ts[0]) for ts in sched.times)
    fire: dict[float, set[int]] = {}
    first: dict[float, set[int]] = {}
    for i, ts in enumerate(sched.times):
        for k, t in enumerate(ts):
            if t < t1:
                continue
            fire.setdefault(float(t), set()).add(i)
            if k == 0:
                first.setdefault(float(t), set()).add(i)
    times = np.array(sorted(fire))
    return Timeline(
        times=times,
        firing=tuple(frozenset(fire[t]) for t in times),
        first=tuple(frozenset(first.get(t, ())) for t in times),
        m=sched.m,
    )


def extended_neighbor_graph(timeline: Timeline, p: int, base: GraphSchedule) -> Digraph:
    """Graph at merged index ``p`` (1-based).

    An agent firing at ``t_p`` (other than at its first event) keeps its base
    in-neighbors; every other agent keeps only its self-arc.
    """
    if p < 1:
        raise ContractViolation("merged indices start at 1")
    G = base.at(p)
    active = timeline.firing[p - 1] - timeline.first[p - 1]
    adj = np.eye(timeline.m, dtype=bool)
    for i in active:
        adj[i] = G.adj[i]
    return Digraph(adj)


def async_run(problem: Problem, base: GraphSchedule, sched: EventSchedule, horizon: int | None = None,
              tol: float = DEFAULT_TOL, seed: int = 0, states=None) -> Trace:
    """Run the asynchronous updates over the merged timeline.

    The trace is indexed by the merged index ``p``; at most ``horizon``
    merged events are processed (all available events when ``None``).
    """
    if not problem.solvable:
        raise ContractViolation("async_run requires a consistent system")
    if sched.m != problem.m:
        raise ContractViolation("event schedule and problem disagree on the number of agents")
    timeline = merge_timeline(sched)
    last = len(timeline) if horizon is None else min(horizon, len(timeline))
    states = init_states(problem, seed) if states is None else _as_states(states, problem).copy()
    trace = Trace()
    p = 1
    while True:
        rec = _record(p, states, problem)
        trace.steps.append(rec)
        if rec.disagreement <= tol and rec.residual <= tol:
            trace.converged, trace.converged_at = True, p
            break
        if p > last:
            break
        states = sync_step(states, extended_neighbor_graph(timeline, p, base), problem)
        p += 1
    finalize_errors(trace, error_reference(problem, states))
    return trace


def window_spanning_check(timeline: Timeline, base_graph: Digraph, a: int, b: int) -> bool:
    """Is ``base_graph`` a spanning subgraph of the composed extended graphs ``a..b``?"""
    if not 1 <= a <= b <= len(timeline):
        raise ContractViolation(f"need 1 <= a <= b <= {len(timeline)}")
    base = GraphSchedule.fixed(base_graph)
    composed = compose_all([extended_neighbor_graph(timeline, p, base) for p in range(a, b + 1)])
    return base_graph.issubgraph(composed)


def covering_window(sched: EventSchedule) -> int:
    """``m q`` with ``q`` the least integer for which ``max T_bar <= q min T``."""
    q = ceil(max(sched.T_bar) / min(sched.T) - 1e-12)
    return sched.m * max(q, 1)
