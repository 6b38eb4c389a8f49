"""Deterministic synchronous simulator for decentralized PPCM and WAGM.

Agents only see peer data through a :class:`MessageBus` that refuses to
route anything between non-neighbors. Every round is split into phases
separated by barriers; a coordinator collects one ``ErrorReport`` per
agent and broadcasts a ``Verdict`` so that all agents stop together.
"""
from __future__ import annotations

import csv
import json
import time
from collections import Counter
from dataclasses import asdict, dataclass, field

import numpy as np

from . import kernels
from .errors import InnerLoopStall, LocalityViolation, ScalingOverflow, TopologyUnsupported
from .graph import WeightedGraph
from .problems import AgentProblem, ConsensusProblem
from .vi_solver import R_FLOOR, gradient_ratio

COORDINATOR = -1
METHODS = ("ppcm", "wagm")


# --- messages ----------------------------------------------------------------------


@dataclass(frozen=True)
class PhaseA:
    sender: int
    x: np.ndarray
    lam: np.ndarray


@dataclass(frozen=True)
class PhaseB:
    sender: int
    x_tilde: np.ndarray


@dataclass(frozen=True)
class PhaseC:
    sender: int
    lam_new: np.ndarray


@dataclass(frozen=True)
class ErrorReport:
    sender: int
    local_e: float


@dataclass(frozen=True)
class Verdict:
    sender: int
    stop: bool


class MessageBus:
    """Reliable in-order in-process transport restricted to graph edges.

    Messages posted during a phase become readable only after ``barrier()``.
    """

    def __init__(self, neighbors: dict[int, list[int]]):
        self.neighbors = {i: frozenset(js) for i, js in neighbors.items()}
        self._pending: list[tuple[int, object]] = []
        self._inbox: dict[int, list] = {}
        self.counts = Counter()

    def send(self, dest: int, msg) -> None:
        src = msg.sender
        if src != COORDINATOR and dest != COORDINATOR and dest not in self.neighbors[src]:
            raise LocalityViolation(f"agent {src} cannot send to non-neighbor {dest}")
        self._pending.append((dest, msg))
        self.counts[type(msg).__name__] += 1

    def broadcast(self, msg) -> None:
        targets = self.neighbors if msg.sender == COORDINATOR else self.neighbors[msg.sender]
        for dest in sorted(targets):
            self.send(dest, msg)

    def barrier(self) -> None:
        self._inbox = {}
        for dest, msg in self._pending:
            self._inbox.setdefault(dest, []).append(msg)
        self._pending = []

    def receive(self, dest: int, kind) -> dict[int, object]:
        got = {m.sender: m for m in self._inbox.get(dest, []) if isinstance(m, kind)}
        if dest != COORDINATOR and kind is not Verdict:
            if set(got) != self.neighbors[dest]:
                raise LocalityViolation(f"agent {dest} expected {kind.__name__} from exactly its neighbors")
        return got


# --- agents ----------------------------------------------------------------------


@dataclass
class SimulationConfig:
    eta: float = 0.9
    tol: float = 1e-3
    r_init: float = 1.0
    r_max: float = 1e12
    max_iters: int = 10000
    max_inner_retries: int = 50
    method: str = "ppcm"
    wagm_step_c: float = 1e-4
    wagm_fixed_step: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if not 0 < self.eta < 1:
            raise ValueError("eta must lie in (0, 1)")
        if self.tol < 0 or self.max_iters < 1 or self.r_init <= 0:
            raise ValueError("invalid simulation limits")


class AgentState:
    """One agent's private data plus the phase handlers of a PPCM round."""

    def __init__(self, problem: AgentProblem, neighbor_ids, neighbor_weights, eta, rho, r_init, r_max):
        self.agent_id = problem.agent_id
        self.problem = problem
        self.neighbor_ids = list(neighbor_ids)
        self.neighbor_weights = np.asarray(neighbor_weights, dtype=float)
        self.eta = eta
        self.rho = rho
        self.r = float(r_init)
        self.r_max = r_max
        n = problem.objective.n
        self.x = problem.set.project(np.zeros(n))
        self.lam = np.zeros(n)
        self.x_tilde = None
        self.lam_new = None
        self.mu = 0.0
        self.local_e = np.inf
        self.inner_retries = 0
        self.stop = False

    def _stack(self, msgs, attr):
        return np.stack([getattr(msgs[j], attr) for j in self.neighbor_ids])

    def _lap(self, own, nbr_values):
        return kernels.neighbor_laplacian(self.neighbor_weights, own, nbr_values)

    def phase_a(self, bus):
        msg = PhaseA(self.agent_id, self.x, self.lam)
        for j in self.neighbor_ids:
            bus.send(j, msg)

    def predict(self, inbox_a, max_retries):
        """Local inner loop: raise ``r`` until the gradient ratio is at most eta."""
        f, X = self.problem.objective, self.problem.set
        lap = self._lap(self.lam, self._stack(inbox_a, "lam"))
        self.g_x = g_x = f.gradient(self.x)
        for attempt in range(max_retries + 1):
            xt = X.project(self.x - (g_x - lap) / self.r)
            g_xt = f.gradient(xt)
            mu = gradient_ratio(g_x, g_xt, self.x, xt, self.r)
            if mu <= self.eta:
                break
            if attempt == max_retries:
                raise InnerLoopStall(f"criterion unmet after {max_retries} r increases (mu={mu:.3g})",
                                     agent_id=self.agent_id)
            self.r = self.r * 1.5 * max(1.0, mu)
            if self.r > self.r_max:
                raise ScalingOverflow(f"r grew to {self.r:.3g} > {self.r_max:.3g}", agent_id=self.agent_id)
        self.x_tilde, self.g_xt, self.mu, self.inner_retries = xt, g_xt, mu, attempt

    def phase_b(self, bus):
        msg = PhaseB(self.agent_id, self.x_tilde)
        for j in self.neighbor_ids:
            bus.send(j, msg)

    def dual_update(self, inbox_b):
        s = self.eta ** 2 * self.r / self.rho
        self.lam_new = self.lam - s * self._lap(self.x_tilde, self._stack(inbox_b, "x_tilde"))

    def phase_c(self, bus):
        msg = PhaseC(self.agent_id, self.lam_new)
        for j in self.neighbor_ids:
            bus.send(j, msg)

    def correct(self, inbox_c):
        lap = self._lap(self.lam_new, self._stack(inbox_c, "lam_new"))
        x_new = self.problem.set.project(self.x - 1.0 * (self.g_xt - lap) / self.r)
        self.local_e = float(max(np.max(np.abs(self.x - self.x_tilde)), np.max(np.abs(self.lam - self.lam_new))))
        if self.mu <= 0.5:
            self.r = max(self.r * self.mu / 0.7, R_FLOOR)
        self.x, self.lam = x_new, self.lam_new

    def snapshot(self) -> dict:
        return {"x": self.x.tolist(), "lam": self.lam.tolist(), "r": self.r, "mu": self.mu,
                "local_e": self.local_e}


# --- rounds ----------------------------------------------------------------------


def make_agents(cp: ConsensusProblem, cfg: SimulationConfig) -> list[AgentState]:
    lap = cp.laplacian
    agents = []
    for i, prob in enumerate(cp.agents):
        ids, w = lap.neighbor_weights(i)
        agents.append(AgentState(prob, ids.tolist(), w, cfg.eta, lap.norm_bound, cfg.r_init, cfg.r_max))
    return agents


def _bus_for(states) -> MessageBus:
    return MessageBus({a.agent_id: a.neighbor_ids for a in states})


def _stop_vote(states, bus, tol) -> float:
    for a in states:
        bus.send(COORDINATOR, ErrorReport(a.agent_id, a.local_e))
    bus.barrier()
    reports = bus.receive(COORDINATOR, ErrorReport)
    global_e = max(reports[a.agent_id].local_e for a in states)
    bus.broadcast(Verdict(COORDINATOR, bool(global_e <= tol)))
    bus.barrier()
    for a in states:
        a.stop = bus.receive(a.agent_id, Verdict)[COORDINATOR].stop
    return global_e


def run_round_ppcm(states, graph: WeightedGraph | None, cfg: SimulationConfig, bus: MessageBus | None = None):
    """One synchronous PPCM round (unit correction step) over all agents."""
    bus = bus or _bus_for(states)
    for a in states:
        a.phase_a(bus)
    bus.barrier()
    for a in states:
        a.predict(bus.receive(a.agent_id, PhaseA), cfg.max_inner_retries)
    for a in states:
        a.phase_b(bus)
    bus.barrier()
    for a in states:
        a.dual_update(bus.receive(a.agent_id, PhaseB))
    for a in states:
        a.phase_c(bus)
    bus.barrier()
    for a in states:
        a.correct(bus.receive(a.agent_id, PhaseC))
    return states, _stop_vote(states, bus, cfg.tol)


def run_round_wagm(states, graph: WeightedGraph, cfg: SimulationConfig, k: int, bus: MessageBus | None = None):
    """One weighted-averaging projected gradient round with ``w_ij = 1/p``."""
    p = len(states)
    if graph is not None and not graph.topology.is_complete():
        raise TopologyUnsupported("uniform averaging weights 1/p require a complete graph")
    bus = bus or _bus_for(states)
    step = cfg.wagm_fixed_step if cfg.wagm_fixed_step is not None else cfg.wagm_step_c / (k + 1)
    for a in states:
        a.phase_a(bus)
    bus.barrier()
    updates = []
    for a in states:
        inbox = bus.receive(a.agent_id, PhaseA)
        y = np.zeros_like(a.x)
        for j in range(p):
            y += (1.0 / p) * (a.x if j == a.agent_id else inbox[j].x)
        updates.append(a.problem.set.project(y - step * a.problem.objective.gradient(y)))
    for a, x_new in zip(states, updates):
        a.local_e = float(np.linalg.norm(x_new - a.x))
        a.x = x_new
        a.mu = 0.0
    return states, _stop_vote(states, bus, cfg.tol)


def consensus_gap(states) -> float:
    """Largest ``||x_i - x_j||_inf`` over the communication edges."""
    by_id = {a.agent_id: a for a in states}
    gap = 0.0
    for a in states:
        for j in a.neighbor_ids:
            gap = max(gap, float(np.max(np.abs(a.x - by_id[j].x))))
    return gap


# --- orchestration -----------------------------------------------------------------


@dataclass
class Transcript:
    config: dict
    rounds: list = field(default_factory=list)
    status: str = "running"
    iterations: int = 0
    wall_time: float = 0.0
    error: str | None = None
    summary: dict = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    def iterates(self, k: int) -> np.ndarray:
        return np.array([ag["x"] for ag in self.rounds[k]["agents"]])

    def to_json(self) -> dict:
        return asdict(self)

    def dump_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh)

    def dump_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["round", "globalE", "consensusGap", "maxMu", "maxR", "objective"])
            for rec in self.rounds:
                w.writerow([rec["round"], repr(rec["global_e"]), repr(rec["consensus_gap"]),
                            repr(rec["max_mu"]), repr(rec["max_r"]), repr(rec["objective"])])


def simulate(cp: ConsensusProblem, cfg: SimulationConfig | None = None, record_states: bool = True):
    """Run rounds until the reduced error is at most ``cfg.tol`` or ``max_iters``.

    Agent errors (:class:`InnerLoopStall`, :class:`ScalingOverflow`) propagate.
    Returns ``(states, transcript)``.
    """
    cfg = cfg or SimulationConfig()
    if cfg.method == "wagm" and not cp.topology.is_complete():
        raise TopologyUnsupported("WAGM with w_ij = 1/p requires a complete graph")
    states = make_agents(cp, cfg)
    tr = Transcript(config=asdict(cfg))
    tr.status = "max_iters_exceeded"
    t0 = time.perf_counter()
    for k in range(cfg.max_iters):
        bus = _bus_for(states)
        with np.errstate(over="ignore", invalid="ignore"):
            if cfg.method == "ppcm":
                states, global_e = run_round_ppcm(states, cp.graph, cfg, bus)
            else:
                states, global_e = run_round_wagm(states, cp.graph, cfg, k, bus)
        rec = {
            "round": k,
            "global_e": global_e,
            "consensus_gap": consensus_gap(states),
            "max_mu": max(a.mu for a in states),
            "max_r": max(a.r for a in states),
            "objective": float(sum(a.problem.objective.value(a.x) for a in states)),
            "messages": dict(sorted(bus.counts.items())),
        }
        if record_states:
            rec["agents"] = [a.snapshot() for a in states]
        tr.rounds.append(rec)
        if not np.isfinite(global_e):
            tr.status = "diverged"
            break
        if all(a.stop for a in states):
            tr.status = "converged"
            break
    tr.iterations = len(tr.rounds)
    tr.wall_time = time.perf_counter() - t0
    return states, tr
