"""Agent objectives, the assembled consensus problem, and least-squares instances."""
from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .convex_sets import ConvexSet, WholeSpace, set_from_json
from .errors import InvalidDimensions, RankDeficient, ShapeMismatch
from .graph import (
    LaplacianMatrix,
    Topology,
    WeightedGraph,
    adjacency_uniform,
    apply_A,
    build_topology,
    laplacian,
)


@dataclass(frozen=True, eq=False)
class QuadraticObjective:
    """``f(x) = 0.5 * ||B x - b||^2``."""

    B: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        if B.shape[0] != b.shape[0]:
            raise ShapeMismatch(f"B has {B.shape[0]} rows but b has {b.shape[0]} entries")
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "b", b)

    @property
    def n(self) -> int:
        return self.B.shape[1]

    def _check(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if x.shape != (self.n,):
            raise ShapeMismatch(f"expected a vector of length {self.n}, got shape {x.shape}")
        return x

    def value(self, x) -> float:
        r = self.B @ self._check(x) - self.b
        return 0.5 * float(r @ r)

    def gradient(self, x) -> np.ndarray:
        return self.B.T @ (self.B @ self._check(x) - self.b)

    def lipschitz(self) -> float:
        return lipschitz_bound(self)


def objective_value(o, x) -> float:
    return o.value(x)


def gradient(o, x) -> np.ndarray:
    return o.gradient(x)


def lipschitz_bound(o: QuadraticObjective, tol: float = 1e-8, max_iter: int = 10000) -> float:
    """``||B^T B||`` by power iteration (deterministic start vector)."""
    M = o.B.T @ o.B
    v = np.ones(M.shape[0]) / np.sqrt(M.shape[0])
    lam = 0.0
    for _ in range(max_iter):
        w = M @ v
        nrm = np.linalg.norm(w)
        if nrm == 0.0:
            # start vector in the null space; fall back to a dense answer
            return float(np.linalg.eigvalsh(M)[-1])
        new = float(v @ w)
        v = w / nrm
        if abs(new - lam) <= tol * max(abs(new), 1.0):
            return float(nrm)
        lam = new
    return float(np.linalg.norm(M @ v))


@dataclass(frozen=True, eq=False)
class AgentProblem:
    objective: object
    set: ConvexSet
    agent_id: int

    def __post_init__(self):
        if self.objective.n != self.set.dim:
            raise ShapeMismatch(
                f"agent {self.agent_id}: objective dimension {self.objective.n} != set dimension {self.set.dim}")


@dataclass(frozen=True, eq=False)
class ConsensusProblem:
    """``min sum_i f_i(x_i)  s.t.  A x = b,  x_i in X_i`` with ``A = L kron I``.

    ``b`` defaults to zero (the consensus constraint); a nonzero ``(p, n)`` right
    hand side is accepted for exercising the generic saddle-point machinery.
    """

    agents: tuple
    graph: WeightedGraph
    laplacian: LaplacianMatrix
    b: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "agents", tuple(self.agents))
        p = self.graph.topology.p
        if len(self.agents) != p:
            raise ShapeMismatch(f"{len(self.agents)} agents but graph has p={p}")
        dims = {a.objective.n for a in self.agents}
        if len(dims) != 1:
            raise ShapeMismatch(f"agents disagree on dimension: {sorted(dims)}")
        if not self.graph.topology.is_connected():
            raise ValueError("consensus problem requires a connected graph")
        if self.b is not None:
            b = np.asarray(self.b, dtype=float)
            if b.shape != (p, self.n):
                raise ShapeMismatch(f"rhs must have shape {(p, self.n)}")
            object.__setattr__(self, "b", b)

    @property
    def p(self) -> int:
        return len(self.agents)

    @property
    def n(self) -> int:
        return self.agents[0].objective.n

    @property
    def topology(self) -> Topology:
        return self.graph.topology

    @property
    def rhs(self) -> np.ndarray:
        return np.zeros((self.p, self.n)) if self.b is None else self.b

    def check_blocks(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1 and x.size == self.p * self.n:
            x = x.reshape(self.p, self.n)
        if x.shape != (self.p, self.n):
            raise ShapeMismatch(f"expected {self.p} blocks of size {self.n}, got shape {x.shape}")
        return x

    def gradients(self, x) -> np.ndarray:
        x = self.check_blocks(x)
        return np.stack([a.objective.gradient(x[i]) for i, a in enumerate(self.agents)])

    def project(self, x) -> np.ndarray:
        x = self.check_blocks(x)
        return np.stack([a.set.project(x[i]) for i, a in enumerate(self.agents)])

    def residual(self, x) -> np.ndarray:
        """``A x - b``."""
        r = apply_A(self.laplacian, x)
        return r if self.b is None else r - self.b

    def operator(self, x, lam) -> tuple[np.ndarray, np.ndarray]:
        """The monotone map ``F(u) = (g(x) - A^T lam, A x - b)``."""
        return self.gradients(x) - apply_A(self.laplacian, lam), self.residual(x)

    def to_json(self) -> dict:
        return {
            "p": self.p,
            "n": self.n,
            "topology": self.topology.to_json(),
            "weights": self.graph.scheme,
            "sets": [a.set.to_json() for a in self.agents],
        }


def consensus_objective(cp: ConsensusProblem, x) -> float:
    x = cp.check_blocks(x)
    return float(sum(a.objective.value(x[i]) for i, a in enumerate(cp.agents)))


def build_consensus_problem(objectives, topology: Topology | None = None, sets=None,
                            graph: WeightedGraph | None = None) -> ConsensusProblem:
    """Assemble a problem; uniform ``1/(2p)`` weights on a complete graph by default."""
    objectives = list(objectives)
    p = len(objectives)
    if graph is None:
        graph = adjacency_uniform(topology or build_topology("complete", p))
    n = objectives[0].n
    if sets is None:
        sets = [WholeSpace(n)] * p
    elif isinstance(sets, ConvexSet):
        sets = [sets] * p
    agents = [AgentProblem(o, s, i) for i, (o, s) in enumerate(zip(objectives, sets))]
    return ConsensusProblem(tuple(agents), graph, laplacian(graph))


def toy_problem(constraint: ConvexSet | None = None) -> ConsensusProblem:
    """Two agents with ``f_1 = (x-1)^2/2`` and ``f_2 = (x-3)^2/2``; optimum 2."""
    objs = [QuadraticObjective([[1.0]], [1.0]), QuadraticObjective([[1.0]], [3.0])]
    return build_consensus_problem(objs, sets=constraint)


# --- least-squares experiment ------------------------------------------------------


def partition_rows(m: int, p: int) -> list[tuple[int, int]]:
    """Contiguous blocks, the first ``m % p`` of size ceil(m/p), the rest floor(m/p)."""
    q, extra = divmod(m, p)
    out, start = [], 0
    for i in range(p):
        size = q + (1 if i < extra else 0)
        out.append((start, start + size))
        start += size
    return out


@dataclass(frozen=True, eq=False)
class LsqInstance:
    B: np.ndarray
    b: np.ndarray
    partition: list = field(default_factory=list)
    seed: int | None = None

    @property
    def m(self) -> int:
        return self.B.shape[0]

    @property
    def n(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return len(self.partition)

    def blocks(self) -> list[tuple[np.ndarray, np.ndarray]]:
        return [(self.B[a:z], self.b[a:z]) for a, z in self.partition]

    def objectives(self) -> list[QuadraticObjective]:
        return [QuadraticObjective(Bi, bi) for Bi, bi in self.blocks()]

    def to_json(self) -> dict:
        return {"m": self.m, "n": self.n, "p": self.p, "seed": self.seed,
                "partition": [list(r) for r in self.partition]}


def _check_dims(m, n, p):
    if not (n >= 1 and m >= n and p >= 2 and m >= p):
        raise InvalidDimensions(f"need m >= n >= 1, p >= 2, m >= p; got m={m}, n={n}, p={p}")


def generate_lsq(m: int, n: int, p: int, seed: int, topology: Topology | None = None,
                 sets=None) -> tuple[LsqInstance, ConsensusProblem]:
    """Gaussian least-squares instance split row-wise over ``p`` agents.

    Entries are i.i.d. N(0, 1) from ``numpy.random.default_rng(seed)`` (PCG64),
    drawn as all of ``B`` in row-major order followed by ``b``.
    """
    _check_dims(m, n, p)
    rng = np.random.default_rng(seed)
    B = rng.standard_normal((m, n))
    b = rng.standard_normal(m)
    inst = LsqInstance(B, b, partition_rows(m, p), seed)
    return inst, lsq_problem(inst, topology, sets)


def lsq_problem(inst: LsqInstance, topology: Topology | None = None, sets=None) -> ConsensusProblem:
    return build_consensus_problem(inst.objectives(), topology=topology, sets=sets)


def oracle_solve(inst: LsqInstance | tuple) -> np.ndarray:
    """Least-squares solution of ``B x = b`` via Householder QR."""
    B, b = (inst.B, inst.b) if isinstance(inst, LsqInstance) else inst
    B = np.atleast_2d(np.asarray(B, dtype=float))
    b = np.asarray(b, dtype=float)
    m, n = B.shape
    if m < n:
        raise RankDeficient(f"B is {m}x{n}: more unknowns than equations")
    Q, R = np.linalg.qr(B, mode="reduced")
    diag = np.abs(np.diag(R))
    if diag.min() <= np.finfo(float).eps * max(m, n) * diag.max():
        raise RankDeficient("B is numerically rank deficient")
    return scipy.linalg.solve_triangular(R, Q.T @ b)


# --- matrix file format ----------------------------------------------------------


def save_matrix(path, M) -> None:
    """Header ``m n`` then one row per line, 17 significant digits (round-trip)."""
    M = np.asarray(M, dtype=float)
    if M.ndim == 1:
        M = M[:, None]
    with open(path, "w") as fh:
        fh.write(f"{M.shape[0]} {M.shape[1]}\n")
        for row in M:
            fh.write(" ".join(repr(float(v)) for v in row))
            fh.write("\n")


def load_matrix(path) -> np.ndarray:
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError(f"{os.fspath(path)}: header must be 'm n'")
        m, n = int(header[0]), int(header[1])
        rows = [line.split() for line in fh if line.strip()]
    if len(rows) != m or any(len(r) != n for r in rows):
        raise ShapeMismatch(f"{os.fspath(path)}: body does not match header {m} {n}")
    return np.array(rows, dtype=float).reshape(m, n)


def problem_from_json(data: dict, objectives) -> ConsensusProblem:
    topo = Topology.from_json(data["topology"])
    sets = [set_from_json(s) for s in data["sets"]] if data.get("sets") else None
    if data.get("weights", "uniform") != "uniform":
        raise ValueError("only uniform weights are serialised")
    return build_consensus_problem(objectives, topology=topo, sets=sets)
