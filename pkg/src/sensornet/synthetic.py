"""Synthetic event streams with known ground truth, for checks and demos."""
from __future__ import annotations

import numpy as np

from .cascade import NEVER, CascadeTrace
from .events import DAY, EventStream
from .graph import Graph, IdMap


def make_stream(users, tags, times, window, n_users: int | None = None) -> EventStream:
    """EventStream whose dense user ids equal the given integer ids."""
    users = np.asarray(users, dtype=np.int64)
    n_users = int(users.max()) + 1 if n_users is None else n_users
    tag_ids = IdMap()
    tag_col = np.array([tag_ids.add(str(t).casefold()) for t in tags], dtype=np.int64)
    return EventStream(users, tag_col, np.asarray(times, dtype=np.int64), tuple(window), tag_ids,
                       IdMap(range(n_users)))


def nonviral_events(graph: Graph, tag: str, window, rate_per_degree: float, seed,
                    direction: str = "total") -> tuple[np.ndarray, np.ndarray]:
    """Records of a non-contagious tag: user ``u`` posts Poisson(rate * degree(u)) times, uniformly in the window."""
    rng = np.random.default_rng(seed)
    deg = graph.degrees(direction)
    counts = rng.poisson(rate_per_degree * deg)
    users = np.repeat(np.arange(graph.node_count, dtype=np.int64), counts)
    times = rng.integers(window[0], window[1] + 1, size=len(users))
    return users, times


def cascade_events(trace: CascadeTrace, start: int, seconds_per_step: int = DAY, repeat_mean: float = 0.0,
                   seed=None) -> tuple[np.ndarray, np.ndarray]:
    """Records for every infected node at its infection step, plus optional Poisson repeat uses later on."""
    infected = np.flatnonzero(trace.first_infection_time != NEVER)
    t0 = start + trace.first_infection_time[infected] * seconds_per_step
    rng = np.random.default_rng(seed)
    # jitter within the step so timestamps are not all tied
    t0 = t0 + rng.integers(0, seconds_per_step, size=len(t0))
    users, times = [infected], [t0]
    if repeat_mean > 0:
        extra = rng.poisson(repeat_mean, size=len(infected))
        ru = np.repeat(infected, extra)
        rt = np.repeat(t0, extra) + rng.integers(0, 30 * seconds_per_step, size=len(ru))
        users.append(ru)
        times.append(rt)
    return np.concatenate(users), np.concatenate(times)
