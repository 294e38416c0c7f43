"""Immutable graphs over dense integer node ids, plus generators and structural queries."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

DIRECTED = "directed"
UNDIRECTED = "undirected"

# dense ids live in int64 arrays; anything larger cannot be indexed
MAX_NODE_ID = 2**40

DEFAULT_BETWEENNESS_CAP = 200_000


class GraphError(ValueError):
    pass


def _csr(src: np.ndarray, dst: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    order = np.lexsort((dst, src))
    indices = dst[order].astype(np.int64)
    counts = np.bincount(src, minlength=n)
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    return indptr, indices


class Graph:
    """Adjacency in compressed sparse row form.

    Undirected graphs store each edge in both rows, so ``out_neighbors`` and
    ``in_neighbors`` coincide.
    """

    def __init__(self, node_count: int, src, dst, directed: bool):
        self.node_count = int(node_count)
        self.directed = bool(directed)
        src = np.asarray(src, dtype=np.int64)
        dst = np.asarray(dst, dtype=np.int64)
        self.edge_count = len(src)
        if directed:
            self._out = _csr(src, dst, self.node_count)
            self._in = _csr(dst, src, self.node_count)
        else:
            s = np.concatenate([src, dst])
            d = np.concatenate([dst, src])
            self._out = _csr(s, d, self.node_count)
            self._in = self._out
        for arr in (*self._out, *self._in):
            arr.flags.writeable = False

    @property
    def directedness(self) -> str:
        return DIRECTED if self.directed else UNDIRECTED

    def out_neighbors(self, v: int) -> np.ndarray:
        indptr, indices = self._out
        return indices[indptr[v]:indptr[v + 1]]

    def in_neighbors(self, v: int) -> np.ndarray:
        indptr, indices = self._in
        return indices[indptr[v]:indptr[v + 1]]

    def neighbors(self, v: int, direction: str = "out") -> np.ndarray:
        if direction == "out":
            return self.out_neighbors(v)
        if direction == "in":
            return self.in_neighbors(v)
        if direction == "total":
            if not self.directed:
                return self.out_neighbors(v)
            return np.union1d(self.out_neighbors(v), self.in_neighbors(v))
        raise GraphError(f"unknown direction {direction!r}")

    def csr(self, direction: str = "out") -> tuple[np.ndarray, np.ndarray]:
        if direction == "out":
            return self._out
        if direction == "in":
            return self._in
        raise GraphError(f"csr direction must be 'out' or 'in', got {direction!r}")

    def degrees(self, direction: str = "total") -> np.ndarray:
        out = np.diff(self._out[0])
        if not self.directed:
            return out
        if direction == "out":
            return out
        if direction == "in":
            return np.diff(self._in[0])
        if direction == "total":
            return out + np.diff(self._in[0])
        raise GraphError(f"unknown direction {direction!r}")

    def edges(self) -> np.ndarray:
        """Edge array of shape (E, 2); undirected edges listed once with src < dst."""
        indptr, indices = self._out
        src = np.repeat(np.arange(self.node_count, dtype=np.int64), np.diff(indptr))
        pairs = np.column_stack([src, indices])
        if not self.directed:
            pairs = pairs[pairs[:, 0] < pairs[:, 1]]
        return pairs

    def has_edge(self, u: int, v: int) -> bool:
        row = self.out_neighbors(u)
        i = np.searchsorted(row, v)
        return bool(i < len(row) and row[i] == v)

    def subgraph(self, nodes) -> tuple["Graph", np.ndarray]:
        """Induced subgraph on ``nodes``; returns it with the old ids of its new nodes."""
        keep = np.unique(np.asarray(nodes, dtype=np.int64))
        keep = keep[(keep >= 0) & (keep < self.node_count)]
        remap = np.full(self.node_count, -1, dtype=np.int64)
        remap[keep] = np.arange(len(keep))
        e = self.edges()
        mask = (remap[e[:, 0]] >= 0) & (remap[e[:, 1]] >= 0)
        e = remap[e[mask]]
        return Graph(len(keep), e[:, 0], e[:, 1], self.directed), keep

    def __repr__(self) -> str:
        return f"Graph({self.directedness}, nodes={self.node_count}, edges={self.edge_count})"


@dataclass(frozen=True)
class BuildReport:
    duplicates_dropped: int
    self_loops_dropped: int


def build_graph(edge_list, directedness: str = UNDIRECTED, node_count: int | None = None,
                return_report: bool = False):
    """Build a graph from (src, dst) pairs, dropping self-loops and collapsing duplicates.

    ``node_count`` may exceed the largest id to include isolated nodes.
    """
    if directedness not in (DIRECTED, UNDIRECTED):
        raise GraphError(f"directedness must be {DIRECTED!r} or {UNDIRECTED!r}")
    arr = np.asarray(edge_list, dtype=np.int64).reshape(-1, 2) if len(edge_list) else np.empty((0, 2), np.int64)
    if len(arr) == 0:
        raise GraphError("empty graph")
    if arr.min() < 0:
        raise GraphError("node ids must be non-negative")
    top = int(arr.max())
    if top >= MAX_NODE_ID:
        raise GraphError(f"node id {top} overflows the dense id range")
    n = top + 1 if node_count is None else int(node_count)
    if n <= top:
        raise GraphError(f"node id {top} outside declared node_count {n}")

    loops = arr[:, 0] == arr[:, 1]
    arr = arr[~loops]
    directed = directedness == DIRECTED
    if not directed:
        arr = np.sort(arr, axis=1)
    before = len(arr)
    if before:
        arr = np.unique(arr, axis=0)
    report = BuildReport(duplicates_dropped=before - len(arr), self_loops_dropped=int(loops.sum()))
    g = Graph(n, arr[:, 0], arr[:, 1], directed)
    return (g, report) if return_report else g


class IdMap:
    """Bijection between external ids (strings) and dense ids, in first-seen order."""

    def __init__(self, externals=()):
        self._to_dense: dict[str, int] = {}
        self._to_external: list[str] = []
        for e in externals:
            self.add(e)

    def add(self, external) -> int:
        key = str(external)
        idx = self._to_dense.get(key)
        if idx is None:
            idx = len(self._to_external)
            self._to_dense[key] = idx
            self._to_external.append(key)
        return idx

    def get(self, external, default=None):
        return self._to_dense.get(str(external), default)

    def __getitem__(self, external) -> int:
        return self._to_dense[str(external)]

    def external(self, dense: int) -> str:
        return self._to_external[dense]

    def __contains__(self, external) -> bool:
        return str(external) in self._to_dense

    def __len__(self) -> int:
        return len(self._to_external)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for i, e in enumerate(self._to_external):
                fh.write(f"{e}\t{i}\n")

    @classmethod
    def load(cls, path) -> "IdMap":
        rows = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.rstrip("\n")
                if not line or line.startswith("#"):
                    continue
                ext, dense = line.split("\t")
                rows.append((int(dense), ext))
        rows.sort()
        if [d for d, _ in rows] != list(range(len(rows))):
            raise GraphError(f"{path}: dense ids are not a contiguous 0-based range")
        return cls(e for _, e in rows)


def read_edge_list(path, directedness: str = DIRECTED, ids: IdMap | None = None):
    """Read a ``src<TAB>dst`` edge file; external ids are mapped through ``ids``.

    Returns ``(graph, ids, report)``.
    """
    ids = IdMap() if ids is None else ids
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise GraphError(f"{path}:{lineno}: expected 'src<TAB>dst'")
            pairs.append((ids.add(parts[0]), ids.add(parts[1])))
    g, report = build_graph(pairs, directedness, node_count=len(ids), return_report=True)
    return g, ids, report


def write_edge_list(graph: Graph, path, ids: IdMap | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# {graph.directedness} nodes={graph.node_count} edges={graph.edge_count}\n")
        for u, v in graph.edges():
            if ids is None:
                fh.write(f"{u}\t{v}\n")
            else:
                fh.write(f"{ids.external(u)}\t{ids.external(v)}\n")


def generate_ba(n: int, m: int, seed: int) -> Graph:
    """Undirected preferential-attachment graph.

    Starts from ``m`` isolated nodes; node ``m`` links to all of them and every
    later node draws ``m`` distinct targets with probability proportional to
    current degree.
    """
    if m < 1 or n <= m:
        raise GraphError(f"need n > m >= 1, got n={n}, m={m}")
    rng = np.random.default_rng(seed)
    n_edges = (n - m) * m
    src = np.empty(n_edges, dtype=np.int64)
    dst = np.empty(n_edges, dtype=np.int64)
    # every edge endpoint appears once here, so a uniform pick is degree-proportional
    endpoints = np.empty(2 * n_edges, dtype=np.int64)
    filled = 0
    e = 0
    for t in range(m):
        src[e], dst[e] = m, t
        endpoints[filled], endpoints[filled + 1] = m, t
        filled += 2
        e += 1
    block = rng.random(4096)
    pos = 0
    for v in range(m + 1, n):
        chosen: set[int] = set()
        while len(chosen) < m:
            if pos == len(block):
                block = rng.random(4096)
                pos = 0
            chosen.add(int(endpoints[int(block[pos] * filled)]))
            pos += 1
        for t in sorted(chosen):
            src[e], dst[e] = v, t
            e += 1
        for t in chosen:
            endpoints[filled] = v
            endpoints[filled + 1] = t
            filled += 2
    return Graph(n, src, dst, directed=False)


def generate_er(n: int, p: float, seed: int) -> Graph:
    """G(n, p) random graph; used for fixtures and synthetic experiments."""
    rng = np.random.default_rng(seed)
    pairs = n * (n - 1) // 2
    picked = np.sort(rng.choice(pairs, size=rng.binomial(pairs, p), replace=False))
    # row i of the strict upper triangle starts at linear index i*n - i*(i+1)/2
    starts = np.arange(n, dtype=np.int64) * n - np.arange(n, dtype=np.int64) * np.arange(1, n + 1) // 2
    i = np.searchsorted(starts, picked, side="right") - 1
    j = picked - starts[i] + i + 1
    return Graph(n, i, j, directed=False)


@dataclass
class DegreeDistribution:
    support: np.ndarray
    mass: np.ndarray
    mu: float = field(init=False)
    sigma2: float = field(init=False)

    def __post_init__(self):
        self.support = np.asarray(self.support, dtype=np.int64)
        self.mass = np.asarray(self.mass, dtype=float)
        if self.support.shape != self.mass.shape:
            raise GraphError("support and mass must have equal length")
        if np.any(self.mass < 0):
            raise GraphError("negative probability mass")
        total = self.mass.sum()
        if abs(total - 1.0) > 1e-9:
            raise GraphError(f"mass sums to {total}, not 1")
        order = np.argsort(self.support)
        self.support = self.support[order]
        self.mass = self.mass[order]
        k = self.support.astype(float)
        self.mu = float(np.sum(k * self.mass))
        self.sigma2 = float(np.sum((k - self.mu) ** 2 * self.mass))

    @classmethod
    def from_degrees(cls, degrees) -> "DegreeDistribution":
        degrees = np.asarray(degrees, dtype=np.int64)
        if len(degrees) == 0:
            raise GraphError("no degrees given")
        k, counts = np.unique(degrees, return_counts=True)
        return cls(k, counts / counts.sum())

    def pmf(self, k) -> np.ndarray:
        k = np.asarray(k)
        idx = np.searchsorted(self.support, k)
        idx = np.clip(idx, 0, len(self.support) - 1)
        return np.where(self.support[idx] == k, self.mass[idx], 0.0)

    def cdf_on(self, grid) -> np.ndarray:
        grid = np.asarray(grid)
        c = np.cumsum(self.mass)
        idx = np.searchsorted(self.support, grid, side="right") - 1
        return np.where(idx >= 0, c[np.clip(idx, 0, None)], 0.0)

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("k,probability\n")
            for k, p in zip(self.support, self.mass):
                fh.write(f"{int(k)},{p:.17g}\n")

    @classmethod
    def from_csv(cls, path) -> "DegreeDistribution":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, 0].astype(np.int64), data[:, 1])


def ks_distance(a: DegreeDistribution, b: DegreeDistribution) -> float:
    """Largest absolute CDF gap between two distributions on the integers."""
    grid = np.union1d(a.support, b.support)
    return float(np.max(np.abs(a.cdf_on(grid) - b.cdf_on(grid))))


def tv_distance(a: DegreeDistribution, b: DegreeDistribution) -> float:
    grid = np.union1d(a.support, b.support)
    return 0.5 * float(np.sum(np.abs(a.pmf(grid) - b.pmf(grid))))


def degree_histogram(graph: Graph, direction: str = "total") -> DegreeDistribution:
    return DegreeDistribution.from_degrees(graph.degrees(direction))


def fit_power_law(values, k_min: int) -> float:
    """Discrete power-law tail exponent by the continuity-corrected MLE on values >= k_min."""
    x = np.asarray(values, dtype=float)
    x = x[x >= k_min]
    if len(x) < 2:
        raise GraphError(f"fewer than two values at or above k_min={k_min}")
    return 1.0 + len(x) / float(np.sum(np.log(x / (k_min - 0.5))))


@dataclass(frozen=True)
class ComponentReport:
    component_count: int
    component_sizes: list[int]
    giant_fraction: float
    labels: np.ndarray = field(repr=False, compare=False)


def connected_components(graph: Graph, mode: str = "weak") -> ComponentReport:
    """Weakly connected components (edge direction ignored)."""
    if mode != "weak":
        raise GraphError("only weak connectivity is supported")
    from scipy.sparse import csr_matrix
    from scipy.sparse.csgraph import connected_components as _cc

    indptr, indices = graph.csr("out")
    mat = csr_matrix((np.ones(len(indices), dtype=np.int8), indices, indptr),
                     shape=(graph.node_count, graph.node_count))
    count, labels = _cc(mat, directed=graph.directed, connection="weak")
    sizes = sorted(np.bincount(labels, minlength=count).tolist(), reverse=True)
    return ComponentReport(count, sizes, sizes[0] / graph.node_count, labels)


def betweenness(graph: Graph, cap: int = DEFAULT_BETWEENNESS_CAP) -> dict[int, float]:
    """Exact unnormalized shortest-path betweenness by Brandes accumulation.

    Undirected graphs count each unordered pair once.
    """
    n = graph.node_count
    if n > cap:
        raise GraphError(f"graph has {n} nodes, above the betweenness cap of {cap}; subsample it first")
    indptr, indices = graph.csr("out")
    adj = [indices[indptr[v]:indptr[v + 1]].tolist() for v in range(n)]
    score = [0.0] * n
    for s in range(n):
        stack = []
        preds: list[list[int]] = [[] for _ in range(n)]
        sigma = [0] * n
        dist = [-1] * n
        sigma[s] = 1
        dist[s] = 0
        queue = deque([s])
        while queue:
            v = queue.popleft()
            stack.append(v)
            dv = dist[v] + 1
            for w in adj[v]:
                if dist[w] < 0:
                    dist[w] = dv
                    queue.append(w)
                if dist[w] == dv:
                    sigma[w] += sigma[v]
                    preds[w].append(v)
        delta = [0.0] * n
        while stack:
            w = stack.pop()
            coeff = (1.0 + delta[w]) / sigma[w]
            for v in preds[w]:
                delta[v] += sigma[v] * coeff
            if w != s:
                score[w] += delta[w]
    if not graph.directed:
        score = [x / 2.0 for x in score]
    return dict(enumerate(score))


def load_graph(path, directedness: str = DIRECTED, ids_path=None):
    """Edge file plus optional sidecar id dictionary (written next to the edges if absent)."""
    path = Path(path)
    ids = IdMap.load(ids_path) if ids_path is not None and Path(ids_path).exists() else None
    g, ids, report = read_edge_list(path, directedness, ids)
    return g, ids, report

