"""Agent networks: topologies, weighted adjacency, Laplacians.

Stacked block vectors are handled as ``(p, n)`` arrays, row ``i`` being the
block owned by agent ``i``. The operator ``A = L kron I_n`` is never formed;
:func:`apply_A` applies it one neighbor list at a time.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import DisconnectedTopology, ShapeMismatch

TOPOLOGY_KINDS = ("complete", "ring", "star", "erdos_renyi")
ER_MAX_ATTEMPTS = 100


@dataclass(frozen=True)
class Topology:
    """Simple connected undirected graph on nodes ``0..p-1``.

    Edges are stored as sorted ``(i, j)`` pairs with ``i < j``.
    """

    p: int
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if self.p < 2:
            raise ValueError(f"need at least 2 agents, got p={self.p}")
        norm = set()
        for i, j in self.edges:
            i, j = int(i), int(j)
            if i == j:
                raise ValueError(f"self loop at node {i}")
            if not (0 <= i < self.p and 0 <= j < self.p):
                raise ValueError(f"edge ({i}, {j}) out of range for p={self.p}")
            norm.add((min(i, j), max(i, j)))
        object.__setattr__(self, "edges", tuple(sorted(norm)))

    def neighbors(self, i: int) -> list[int]:
        return [b if a == i else a for a, b in self.edges if i in (a, b)]

    def degree(self, i: int) -> int:
        return len(self.neighbors(i))

    def is_complete(self) -> bool:
        return len(self.edges) == self.p * (self.p - 1) // 2

    def is_connected(self) -> bool:
        seen = {0}
        stack = [0]
        adj = {i: self.neighbors(i) for i in range(self.p)}
        while stack:
            for j in adj[stack.pop()]:
                if j not in seen:
                    seen.add(j)
                    stack.append(j)
        return len(seen) == self.p

    def to_json(self) -> dict:
        return {"p": self.p, "edges": [list(e) for e in self.edges]}

    @classmethod
    def from_json(cls, data: dict) -> "Topology":
        return cls(int(data["p"]), tuple(tuple(e) for e in data["edges"]))


def build_topology(kind: str, p: int, seed: int = 0, prob: float | None = None) -> Topology:
    """Build a connected topology deterministically from ``(kind, p, seed)``.

    ``erdos_renyi`` keeps each pair independently with probability ``prob`` and
    redraws (same generator stream) until the graph is connected.
    """
    if p < 2:
        raise ValueError(f"need at least 2 agents, got p={p}")
    if kind == "complete":
        edges = [(i, j) for i in range(p) for j in range(i + 1, p)]
    elif kind == "ring":
        edges = [(i, (i + 1) % p) for i in range(p)]
    elif kind == "star":
        edges = [(0, j) for j in range(1, p)]
    elif kind == "erdos_renyi":
        if prob is None or not (0.0 < prob <= 1.0):
            raise ValueError(f"erdos_renyi needs 0 < prob <= 1, got {prob}")
        rng = np.random.default_rng(seed)
        iu, ju = np.triu_indices(p, k=1)
        for _ in range(ER_MAX_ATTEMPTS):
            keep = rng.random(iu.size) < prob
            topo = Topology(p, tuple(zip(iu[keep].tolist(), ju[keep].tolist())))
            if topo.is_connected():
                return topo
        raise DisconnectedTopology(
            f"erdos_renyi(p={p}, prob={prob}, seed={seed}) disconnected after {ER_MAX_ATTEMPTS} draws")
    else:
        raise ValueError(f"unknown topology kind {kind!r}; expected one of {TOPOLOGY_KINDS}")
    return Topology(p, tuple(edges))


@dataclass(frozen=True)
class WeightedGraph:
    topology: Topology
    weights: np.ndarray
    scheme: str = "custom"

    def __post_init__(self):
        W = np.asarray(self.weights, dtype=float)
        p = self.topology.p
        if W.shape != (p, p):
            raise ShapeMismatch(f"weights must be {p}x{p}, got {W.shape}")
        if not np.array_equal(W, W.T):
            raise ValueError("weights must be symmetric")
        if np.any(W < 0) or np.any(np.diag(W) != 0):
            raise ValueError("weights must be nonnegative with zero diagonal")
        support = np.zeros((p, p), dtype=bool)
        for i, j in self.topology.edges:
            support[i, j] = support[j, i] = True
        if not np.array_equal(W > 0, support):
            raise ValueError("weight support must match the edge set")
        W.setflags(write=False)
        object.__setattr__(self, "weights", W)


def adjacency_uniform(t: Topology) -> WeightedGraph:
    """Weights ``1/(2p)`` on every edge; the resulting Laplacian has norm <= 1."""
    W = np.zeros((t.p, t.p))
    a = 1.0 / (2 * t.p)
    for i, j in t.edges:
        W[i, j] = W[j, i] = a
    return WeightedGraph(t, W, scheme="uniform")


@dataclass(frozen=True)
class LaplacianMatrix:
    """Dense Laplacian plus a CSR view of its off-diagonal weights.

    ``norm_bound`` is rho with ``||L|| <= sqrt(rho)``, i.e. ``||A^T A|| <= rho``.
    """

    entries: np.ndarray
    norm_bound: float
    indptr: np.ndarray = field(repr=False)
    indices: np.ndarray = field(repr=False)
    data: np.ndarray = field(repr=False)

    @property
    def p(self) -> int:
        return self.entries.shape[0]

    def neighbor_weights(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        sl = slice(self.indptr[i], self.indptr[i + 1])
        return self.indices[sl], self.data[sl]


def laplacian(g: WeightedGraph) -> LaplacianMatrix:
    W = g.weights
    p = W.shape[0]
    L = -W.copy()
    L[np.diag_indices(p)] = W.sum(axis=1)
    if g.scheme == "uniform":
        rho = 1.0
    else:
        # Gershgorin: every eigenvalue lies in [0, 2 max_i l_ii]
        rho = float((2.0 * np.max(np.diag(L))) ** 2)
    indptr = np.zeros(p + 1, dtype=np.int64)
    indices, data = [], []
    for i in range(p):
        nbrs = np.flatnonzero(W[i])
        indices.extend(nbrs.tolist())
        data.extend(W[i, nbrs].tolist())
        indptr[i + 1] = len(indices)
    L.setflags(write=False)
    return LaplacianMatrix(L, rho, indptr, np.asarray(indices, dtype=np.int64), np.asarray(data, dtype=float))


def algebraic_connectivity(l: LaplacianMatrix | np.ndarray) -> float:
    """Second-smallest eigenvalue of the Laplacian (0 when disconnected)."""
    L = l.entries if isinstance(l, LaplacianMatrix) else np.asarray(l, dtype=float)
    return float(np.linalg.eigvalsh(L)[1])


def apply_A(l: LaplacianMatrix, x: np.ndarray) -> np.ndarray:
    """Compute ``(L kron I_n) x`` block-wise.

    ``x`` is either a ``(p, n)`` array or a flat vector of ``p`` equal blocks;
    the result has the same layout. ``A`` is symmetric, so this also applies
    ``A^T``.
    """
    x = np.asarray(x, dtype=float)
    p = l.p
    if x.ndim == 2:
        if x.shape[0] != p:
            raise ShapeMismatch(f"expected {p} blocks, got {x.shape[0]}")
        return kernels.laplacian_apply(l.indptr, l.indices, l.data, np.ascontiguousarray(x))
    if x.ndim != 1 or x.size % p:
        raise ShapeMismatch(f"cannot split vector of shape {x.shape} into {p} blocks")
    out = kernels.laplacian_apply(l.indptr, l.indices, l.data, x.reshape(p, -1))
    return out.ravel()


def consensus_gap(x: np.ndarray, topology: Topology) -> float:
    """Largest ``||x_i - x_j||_inf`` over the edges."""
    x = np.asarray(x, dtype=float)
    return max(float(np.max(np.abs(x[i] - x[j]))) for i, j in topology.edges)
