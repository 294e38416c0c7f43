"""Discrete-time SIR cascades on a fixed graph."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .graph import Graph

NEVER = -1
SUSCEPTIBLE, INFECTED, RECOVERED = 0, 1, 2
STATE_NAMES = "SIR"

PER_NODE = "per-node"
PER_EDGE = "per-edge"


class CascadeError(ValueError):
    pass


@dataclass(frozen=True)
class SirParams:
    lam: float = 0.1
    gamma_rec: float = 0.01
    n_cascades: int = 10
    t_end: int = 10_000
    seed: int = 0
    transmission: str = PER_NODE

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise CascadeError(f"infection probability must be in [0, 1], got {self.lam}")
        if not 0.0 <= self.gamma_rec <= 1.0:
            raise CascadeError(f"recovery probability must be in [0, 1], got {self.gamma_rec}")
        if self.n_cascades < 1:
            raise CascadeError("need at least one cascade")
        if self.t_end < 1:
            raise CascadeError("t_end must be at least 1")
        if self.transmission not in (PER_NODE, PER_EDGE):
            raise CascadeError(f"unknown transmission rule {self.transmission!r}")


@dataclass
class CascadeTrace:
    first_infection_time: np.ndarray
    final_state: np.ndarray
    infected_counts: list[np.ndarray]
    recovered_counts: list[np.ndarray]
    seeds: list[int]
    cascade_of: np.ndarray
    params: SirParams
    notes: dict = field(default_factory=dict)

    @property
    def node_count(self) -> int:
        return len(self.first_infection_time)

    def times(self) -> np.ndarray:
        """First-infection times as floats, NaN for never-infected nodes."""
        t = self.first_infection_time.astype(float)
        t[self.first_infection_time == NEVER] = np.nan
        return t

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("# " + json.dumps({"params": asdict(self.params), "seeds": self.seeds}, sort_keys=True) + "\n")
            fh.write("node,first_infection_time,final_state\n")
            for v, (t, s) in enumerate(zip(self.first_infection_time, self.final_state)):
                fh.write(f"{v},{int(t)},{STATE_NAMES[s]}\n")


def _gather(indptr: np.ndarray, indices: np.ndarray, nodes: np.ndarray) -> np.ndarray:
    lo = indptr[nodes]
    lens = indptr[nodes + 1] - lo
    total = int(lens.sum())
    if total == 0:
        return indices[:0]
    starts = np.repeat(lo - np.concatenate([[0], np.cumsum(lens)[:-1]]), lens)
    return indices[starts + np.arange(total)]


def simulate_sir(graph: Graph, params: SirParams) -> CascadeTrace:
    """Run ``params.n_cascades`` successive cascades over one shared state array.

    Each step, infected nodes first recover with probability ``gamma_rec``;
    then every susceptible node adjacent to a still-infected node is infected
    with probability ``lam``. Under the default per-node rule that is a single
    coin per susceptible neighbor, however many infected neighbors it has; the
    per-edge rule flips one coin per infected neighbor instead. Seeds are drawn
    uniformly from the nodes still susceptible when the cascade starts.
    """
    n = graph.node_count
    rng = np.random.default_rng(params.seed)
    indptr, indices = graph.csr("out")
    state = np.zeros(n, dtype=np.int8)
    first = np.full(n, NEVER, dtype=np.int64)
    cascade_of = np.full(n, -1, dtype=np.int64)
    icounts, rcounts, seeds = [], [], []
    lam, rec = params.lam, params.gamma_rec

    for c in range(params.n_cascades):
        susceptible = np.flatnonzero(state == SUSCEPTIBLE)
        if len(susceptible) == 0:
            break
        seed_node = int(susceptible[rng.integers(len(susceptible))])
        seeds.append(seed_node)
        state[seed_node] = INFECTED
        first[seed_node] = 0
        cascade_of[seed_node] = c
        infected = np.flatnonzero(state == INFECTED)
        n_sus = len(susceptible) - 1
        i_series = [len(infected)]
        r_series = [int(np.count_nonzero(state == RECOVERED))]
        for step in range(1, params.t_end):
            if len(infected) == 0:
                break
            recovering = rng.random(len(infected)) < rec
            state[infected[recovering]] = RECOVERED
            infected = infected[~recovering]
            if n_sus and len(infected) and lam > 0:
                nbrs = _gather(indptr, indices, infected)
                nbrs = nbrs[state[nbrs] == SUSCEPTIBLE]
                if params.transmission == PER_NODE:
                    cand = np.unique(nbrs)
                    hit = cand[rng.random(len(cand)) < lam]
                else:
                    cand, mult = np.unique(nbrs, return_counts=True)
                    escape = np.power(1.0 - lam, mult)
                    hit = cand[rng.random(len(cand)) >= escape]
                if len(hit):
                    state[hit] = INFECTED
                    first[hit] = step
                    cascade_of[hit] = c
                    n_sus -= len(hit)
                    infected = np.concatenate([infected, hit])
            i_series.append(len(infected))
            r_series.append(r_series[-1] + int(recovering.sum()))
        icounts.append(np.asarray(i_series, dtype=np.int64))
        rcounts.append(np.asarray(r_series, dtype=np.int64))

    notes = {}
    if len(seeds) < params.n_cascades:
        notes["cascades_not_started"] = params.n_cascades - len(seeds)
    return CascadeTrace(first, state.copy(), icounts, rcounts, seeds, cascade_of, params, notes)


def infection_times(trace: CascadeTrace, sample) -> tuple[np.ndarray, float]:
    """First-infection times of the infected members of ``sample`` and the infected fraction."""
    members = np.asarray(getattr(sample, "members", sample), dtype=np.int64)
    t = trace.first_infection_time[members]
    hit = t[t != NEVER]
    frac = len(hit) / len(members) if len(members) else 0.0
    return hit, frac


def cumulative_incidence(trace: CascadeTrace, cascade: int = 0) -> np.ndarray:
    """Cumulative number of nodes infected by each step of one cascade."""
    mask = trace.cascade_of == cascade
    steps = len(trace.infected_counts[cascade])
    counts = np.bincount(trace.first_infection_time[mask], minlength=steps)
    return np.cumsum(counts)
