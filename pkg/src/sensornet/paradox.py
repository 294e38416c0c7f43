"""Friendship-paradox analytics and control/sensor sampling."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .graph import DegreeDistribution, Graph

CONTROL = "control"
SENSOR = "sensor"
PER_NODE_FRIEND = "per-node-friend"
POOLED_NEIGHBORS = "pooled-neighbors"
UNIFORM = "uniform"


class ParadoxError(ValueError):
    pass


class SamplingError(ValueError):
    pass


@dataclass(frozen=True)
class ParadoxStats:
    mu: float
    sigma2: float
    rho: float


def paradox_stats(dist: DegreeDistribution) -> ParadoxStats:
    k = dist.support.astype(float)
    first = float(np.sum(k * dist.mass))
    if first <= 0:
        raise ParadoxError("degenerate distribution: mean degree is zero")
    second = float(np.sum(k * k * dist.mass))
    mu = first
    sigma2 = second - first * first
    # friend-of-friend mean computed from the raw moments, independent of sigma2
    rho = second / first
    if abs(rho - (mu + sigma2 / mu)) > 1e-9 * max(1.0, rho):
        raise ParadoxError(f"moment identity violated: rho={rho}, mu + sigma2/mu={mu + sigma2 / mu}")
    return ParadoxStats(mu=mu, sigma2=sigma2, rho=rho)


def _reweight(dist: DegreeDistribution, weights: np.ndarray) -> DegreeDistribution:
    raw = weights * dist.mass
    total = raw.sum()
    if total <= 0:
        raise ParadoxError("degenerate distribution: mean degree is zero")
    keep = raw > 0
    return DegreeDistribution(dist.support[keep], raw[keep] / total)


def friend_degree_dist(dist: DegreeDistribution) -> DegreeDistribution:
    """Degree distribution seen by following a uniformly random edge end: k P(k) / mean."""
    return _reweight(dist, dist.support.astype(float))


def sampled_friend_dist(dist: DegreeDistribution, gamma: float, dedup: bool) -> DegreeDistribution:
    """Expected degree distribution of the friends of a random ``gamma`` fraction of nodes.

    A node of degree k has at least one sampled friend with probability
    1 - (1 - gamma)^k. Without deduplication it is additionally counted once
    per sampled friend, which contributes the extra factor k.
    """
    if not 0.0 < gamma <= 1.0:
        raise ParadoxError(f"gamma must lie in (0, 1], got {gamma}")
    k = dist.support.astype(float)
    # expm1/log1p keep 1-(1-gamma)^k accurate for tiny gamma
    reached = -np.expm1(k * np.log1p(-gamma)) if gamma < 1.0 else (k > 0).astype(float)
    weights = reached if dedup else k * reached
    return _reweight(dist, weights)


@dataclass
class NodeSample:
    members: np.ndarray
    origin: str
    policy: str
    seed: object = None
    gamma: float | None = None
    requested_size: int | None = None
    skipped: int = 0
    pool_size: int | None = None
    direction: str | None = None
    notes: dict = field(default_factory=dict)

    def __post_init__(self):
        self.members = np.unique(np.asarray(self.members, dtype=np.int64))

    @property
    def size(self) -> int:
        return len(self.members)

    def __len__(self) -> int:
        return len(self.members)

    def header(self) -> dict:
        return {
            "origin": self.origin,
            "policy": self.policy,
            "gamma": self.gamma,
            "seed": self.seed if isinstance(self.seed, (int, type(None))) else str(self.seed),
            "requested_size": self.requested_size,
            "achieved_size": self.size,
            "skipped": self.skipped,
            "pool_size": self.pool_size,
            "direction": self.direction,
            **self.notes,
        }

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("# " + json.dumps(self.header(), sort_keys=True) + "\n")
            for v in self.members:
                fh.write(f"{int(v)}\n")

    @classmethod
    def load(cls, path) -> "NodeSample":
        with open(path, encoding="utf-8") as fh:
            head = json.loads(fh.readline()[2:])
            members = [int(line) for line in fh if line.strip()]
        s = cls(members, head["origin"], head["policy"], seed=head.get("seed"),
                gamma=head.get("gamma"), requested_size=head.get("requested_size"),
                skipped=head.get("skipped", 0), pool_size=head.get("pool_size"),
                direction=head.get("direction"))
        return s


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def sample_control(graph: Graph, size: int, seed) -> NodeSample:
    """Uniform sample of ``size`` distinct nodes."""
    n = graph.node_count
    if not 1 <= size <= n:
        raise SamplingError(f"control size must be in [1, {n}], got {size}")
    members = _rng(seed).choice(n, size=size, replace=False)
    return NodeSample(members, CONTROL, UNIFORM, seed=None if isinstance(seed, np.random.Generator) else seed,
                      gamma=size / n, requested_size=size)


def _neighbor_rows(graph: Graph, nodes: np.ndarray, direction: str):
    if not graph.directed:
        direction = "out"
    if direction not in ("out", "in"):
        raise SamplingError(f"sensor direction must be 'out' or 'in', got {direction!r}")
    indptr, indices = graph.csr(direction)
    return indptr[nodes], indptr[nodes + 1], indices


def sample_sensors(graph: Graph, control: NodeSample, policy: str = POOLED_NEIGHBORS,
                   direction: str = "out", target_size: int | None = None, seed=None) -> NodeSample:
    """Draw friends of the control group.

    ``per-node-friend`` picks one uniform neighbor of every non-isolated control
    node and deduplicates. ``pooled-neighbors`` pools all neighbors of the
    control group (deduplicated) and draws ``target_size`` of them without
    replacement; ``target_size=None`` keeps the whole pool.
    """
    nodes = control.members
    if len(nodes) == 0:
        raise SamplingError("control sample is empty")
    rng = _rng(seed)
    lo, hi, indices = _neighbor_rows(graph, nodes, direction)
    deg = hi - lo
    live = deg > 0
    if not live.any():
        raise SamplingError("every control node is isolated in the chosen direction")
    gamma = control.gamma
    meta = dict(seed=None if isinstance(seed, np.random.Generator) else seed, gamma=gamma,
                direction=direction if graph.directed else "undirected")

    if policy == PER_NODE_FRIEND:
        offs = np.floor(rng.random(int(live.sum())) * deg[live]).astype(np.int64)
        picks = indices[lo[live] + offs]
        return NodeSample(picks, SENSOR, policy, requested_size=len(nodes),
                          skipped=int((~live).sum()), **meta)

    if policy == POOLED_NEIGHBORS:
        lo, hi = lo[live], hi[live]
        lens = hi - lo
        flat = np.repeat(lo - np.concatenate([[0], np.cumsum(lens)[:-1]]), lens) + np.arange(lens.sum())
        pool = np.unique(indices[flat])
        if target_size is None:
            return NodeSample(pool, SENSOR, policy, requested_size=None, pool_size=len(pool),
                              skipped=int((~live).sum()), **meta)
        if target_size < 1:
            raise SamplingError("target_size must be at least 1")
        if len(pool) < target_size:
            raise SamplingError(f"neighbor pool has {len(pool)} nodes, fewer than target_size={target_size}")
        picks = rng.choice(pool, size=target_size, replace=False)
        return NodeSample(picks, SENSOR, policy, requested_size=target_size, pool_size=len(pool),
                          skipped=int((~live).sum()), **meta)

    raise SamplingError(f"unknown sensor policy {policy!r}")


def remove_overlap(control: NodeSample, sensor: NodeSample) -> NodeSample:
    """Control sample with members that also appear among the sensors removed."""
    kept = np.setdiff1d(control.members, sensor.members, assume_unique=True)
    out = NodeSample(kept, control.origin, control.policy, seed=control.seed, gamma=control.gamma,
                     requested_size=control.requested_size, skipped=control.skipped,
                     notes={**control.notes, "overlap_removed": int(len(control) - len(kept))})
    return out


def sample_degree_dist(graph: Graph, sample: NodeSample, direction: str = "total") -> DegreeDistribution:
    return DegreeDistribution.from_degrees(graph.degrees(direction)[sample.members])
