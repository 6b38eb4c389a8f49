"""Centralized projection-based prediction-correction solver.

Iterates on ``u = (x, lam)`` for the saddle-point VI of a
:class:`~ppcm.problems.ConsensusProblem`, with per-agent scaling
``H = diag(R, S^-1)``, ``R = diag(r_i I)``, ``S = diag(s_i I)`` and
``s_i = eta^2 r_i / rho``. The dual set is the whole space, so dual
projections are the identity.
"""
from __future__ import annotations

import csv
import json
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .errors import DegeneratePrediction, InnerLoopStall, ScalingOverflow
from .graph import apply_A, consensus_gap
from .problems import ConsensusProblem, consensus_objective

R_FLOOR = 1e-12
STEP_MODES = ("unit", "adaptive")


@dataclass
class PrimalDualPoint:
    x: np.ndarray
    lam: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.lam = np.asarray(self.lam, dtype=float)
        if self.x.shape != self.lam.shape or self.x.ndim != 2:
            raise ValueError(f"x and lam must be matching (p, n) arrays, got {self.x.shape}, {self.lam.shape}")

    @classmethod
    def zeros(cls, p, n):
        return cls(np.zeros((p, n)), np.zeros((p, n)))

    def copy(self):
        return PrimalDualPoint(self.x.copy(), self.lam.copy())

    def __sub__(self, other):
        return PrimalDualPoint(self.x - other.x, self.lam - other.lam)

    def dot(self, other) -> float:
        return float(np.sum(self.x * other.x) + np.sum(self.lam * other.lam))

    def inf_norm(self) -> float:
        return float(max(np.max(np.abs(self.x)), np.max(np.abs(self.lam))))


@dataclass(frozen=True)
class ScalingState:
    r: np.ndarray
    eta: float = 0.9
    rho: float = 1.0
    r_max: float = 1e12

    def __post_init__(self):
        r = np.array(self.r, dtype=float)
        if np.any(r <= 0):
            raise ValueError("scaling parameters r_i must be positive")
        if not 0 < self.eta < 1:
            raise ValueError("eta must lie in (0, 1)")
        r.setflags(write=False)
        object.__setattr__(self, "r", r)

    @property
    def s(self) -> np.ndarray:
        return self.eta ** 2 * self.r / self.rho

    def h_norm_sq(self, v: PrimalDualPoint) -> float:
        """``||v||_H^2 = sum_i r_i ||x_i||^2 + sum_i ||lam_i||^2 / s_i``."""
        return float(np.sum(self.r[:, None] * v.x * v.x) + np.sum(v.lam * v.lam / self.s[:, None]))

    def h_apply(self, v: PrimalDualPoint) -> PrimalDualPoint:
        return PrimalDualPoint(self.r[:, None] * v.x, v.lam / self.s[:, None])

    def h_inv_apply(self, v: PrimalDualPoint) -> PrimalDualPoint:
        return PrimalDualPoint(v.x / self.r[:, None], self.s[:, None] * v.lam)


@dataclass
class SolverConfig:
    eta: float = 0.9
    gamma: float = 1.9
    step_mode: str = "unit"
    tol: float = 1e-3
    max_iters: int = 10000
    max_inner_retries: int = 50
    r_init: float = 1.0
    r_max: float = 1e12
    # None: shrink r after each iteration in unit mode only. Shrinking under
    # relaxed adaptive steps lets the H-norm oscillate and the iterates diverge.
    shrink_r: bool | None = None

    def __post_init__(self):
        if not 0 < self.eta < 1:
            raise ValueError("eta must lie in (0, 1)")
        if not 1 <= self.gamma < 2:
            raise ValueError("gamma must lie in [1, 2)")
        if self.step_mode not in STEP_MODES:
            raise ValueError(f"step_mode must be one of {STEP_MODES}")
        if self.tol < 0 or self.max_iters < 1 or self.max_inner_retries < 0 or self.r_init <= 0:
            raise ValueError("invalid solver limits")
        if self.shrink_r is None:
            self.shrink_r = self.step_mode == "unit"


@dataclass
class IterationDiagnostics:
    iter: int
    mu: list
    E: float
    pred_distance: float
    alpha_star: float | None = None
    alpha: float = 1.0
    objective: float | None = None
    consensus_gap: float | None = None
    contraction_slack: float | None = None
    r: list = field(default_factory=list)
    inner_retries: int = 0


@dataclass
class RunReport:
    method: str
    config: dict
    diagnostics: list = field(default_factory=list)
    status: str = "running"
    iterations: int = 0
    wall_time: float = 0.0
    iterates: list | None = None

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    def to_json(self) -> dict:
        return {
            "method": self.method,
            "config": self.config,
            "status": self.status,
            "converged": self.converged,
            "iterations": self.iterations,
            "wall_time": self.wall_time,
            "diagnostics": [asdict(d) for d in self.diagnostics],
        }

    def dump_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2)

    def dump_csv(self, path) -> None:
        cols = ["iter", "E", "maxMu", "alphaStar", "predDistance", "objective", "consensusGap"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for d in self.diagnostics:
                w.writerow([d.iter, repr(d.E), repr(max(d.mu)) if d.mu else "",
                            "" if d.alpha_star is None else repr(d.alpha_star),
                            repr(d.pred_distance), "" if d.objective is None else repr(d.objective),
                            "" if d.consensus_gap is None else repr(d.consensus_gap)])


# --- scheme pieces ----------------------------------------------------------------


def gradient_ratio(g_x, g_xt, x, xt, r) -> float:
    """``||g(x) - g(xt)|| / (r ||x - xt||)``, defined as 0 when ``x == xt``."""
    dx = np.sqrt(np.sum((x - xt) ** 2))
    if dx == 0.0:
        return 0.0
    return float(np.sqrt(np.sum((g_x - g_xt) ** 2)) / (r * dx))


def predict(u: PrimalDualPoint, cp: ConsensusProblem, sc: ScalingState, grad_x=None) -> PrimalDualPoint:
    """Primal then dual prediction; the dual step uses the fresh primal predictor."""
    g = cp.gradients(u.x) if grad_x is None else grad_x
    lap = apply_A(cp.laplacian, u.lam)
    xt = cp.project(u.x - (g - lap) / sc.r[:, None])
    lamt = u.lam - sc.s[:, None] * cp.residual(xt)
    return PrimalDualPoint(xt, lamt)


def criterion_holds(u: PrimalDualPoint, ut: PrimalDualPoint, sc: ScalingState, grad_x, grad_xt):
    """Per-agent acceptance test ``mu_i <= eta`` (the dual part holds by ``s_i = eta^2 r_i / rho``)."""
    mu = np.array([gradient_ratio(grad_x[i], grad_xt[i], u.x[i], ut.x[i], sc.r[i]) for i in range(len(sc.r))])
    return bool(np.all(mu <= sc.eta)), mu


def adjust_r_up(sc: ScalingState, mu) -> ScalingState:
    mu = np.asarray(mu, dtype=float)
    r = sc.r.copy()
    for i in np.flatnonzero(mu > sc.eta):
        r[i] = r[i] * 1.5 * max(1.0, mu[i])
        if r[i] > sc.r_max:
            raise ScalingOverflow(f"r grew to {r[i]:.3g} > {sc.r_max:.3g}", agent_id=int(i))
    return replace(sc, r=r)


def adjust_r_down(sc: ScalingState, mu) -> ScalingState:
    mu = np.asarray(mu, dtype=float)
    r = sc.r.copy()
    for i in np.flatnonzero(mu <= 0.5):
        r[i] = max(r[i] * mu[i] / 0.7, R_FLOOR)
    return replace(sc, r=r)


def xi_vector(u, ut, cp: ConsensusProblem, grad_x, grad_xt) -> PrimalDualPoint:
    """``xi = (g(x) - g(xt) - A^T (lam - lamt), 0)``."""
    xi_x = (grad_x - grad_xt) - apply_A(cp.laplacian, u.lam - ut.lam)
    return PrimalDualPoint(xi_x, np.zeros_like(u.lam))


def direction_d(u, ut, sc: ScalingState, xi: PrimalDualPoint) -> PrimalDualPoint:
    """``d = H (u - ut) - xi``."""
    return sc.h_apply(u - ut) - xi


def alpha_star(u, ut, sc: ScalingState, d: PrimalDualPoint) -> float:
    """``(u - ut)^T d / (d^T H^-1 d)``, the maximiser of the progress lower bound."""
    denom = d.dot(sc.h_inv_apply(d))
    if denom == 0.0:
        raise DegeneratePrediction("direction d vanished while u != ut; scaling is inconsistent")
    return (u - ut).dot(d) / denom


def correct(u, ut, cp: ConsensusProblem, sc: ScalingState, alpha: float, grad_xt=None) -> PrimalDualPoint:
    """Projected correction step of length ``alpha``.

    At ``alpha == 1`` the dual output is bitwise the dual predictor.
    """
    g = cp.gradients(ut.x) if grad_xt is None else grad_xt
    lap = apply_A(cp.laplacian, ut.lam)
    x_new = cp.project(u.x - alpha * (g - lap) / sc.r[:, None])
    lam_new = u.lam - (alpha * sc.s)[:, None] * cp.residual(ut.x)
    return PrimalDualPoint(x_new, lam_new)


def local_errors(u, ut, u_next) -> np.ndarray:
    """Per-agent ``max(||x_i - xt_i||_inf, ||lam_i - lam_i^+||_inf)``."""
    ex = np.max(np.abs(u.x - ut.x), axis=1)
    el = np.max(np.abs(u.lam - u_next.lam), axis=1)
    return np.maximum(ex, el)


def vi_residual(u: PrimalDualPoint, cp: ConsensusProblem) -> float:
    """``||u - P_Omega[u - F(u)]||_inf``; zero exactly at solutions."""
    fx, flam = cp.operator(u.x, u.lam)
    rx = u.x - cp.project(u.x - fx)
    return float(max(np.max(np.abs(rx)), np.max(np.abs(flam))))


def dual_for(cp: ConsensusProblem, x_star) -> np.ndarray:
    """Least-squares multiplier with ``A^T lam = g(x*)`` (exact when x* is unconstrained optimal)."""
    A = np.kron(cp.laplacian.entries, np.eye(cp.n))
    g = cp.gradients(cp.check_blocks(x_star)).ravel()
    lam, *_ = np.linalg.lstsq(A, g, rcond=None)
    return lam.reshape(cp.p, cp.n)


def default_start(cp: ConsensusProblem) -> PrimalDualPoint:
    """``x_i = P_i(0)``, ``lam = 0``."""
    x = cp.project(np.zeros((cp.p, cp.n)))
    return PrimalDualPoint(x, np.zeros_like(x))


def _inner_predict(u, cp, sc, grad_x, max_retries):
    for attempt in range(max_retries + 1):
        ut = predict(u, cp, sc, grad_x)
        grad_xt = cp.gradients(ut.x)
        ok, mu = criterion_holds(u, ut, sc, grad_x, grad_xt)
        if ok:
            return ut, grad_xt, mu, sc, attempt
        if attempt == max_retries:
            bad = int(np.argmax(mu))
            raise InnerLoopStall(f"criterion unmet after {max_retries} r increases (mu={mu[bad]:.3g})",
                                 agent_id=bad)
        sc = adjust_r_up(sc, mu)
    raise AssertionError("unreachable")


def solve(cp: ConsensusProblem, cfg: SolverConfig | None = None, u0: PrimalDualPoint | None = None,
          reference: PrimalDualPoint | None = None, record_iterates: bool = False):
    """Run PPCM until the largest local error is at most ``cfg.tol``.

    Returns ``(u, report)``; hitting ``max_iters`` is reported through
    ``report.status`` rather than raised. With ``reference`` (a solution
    ``u*``) each iteration records the slack of the contraction inequality
    ``||u+ - u*||_H^2 <= ||u - u*||_H^2 - c ||u - ut||_H^2``.
    """
    cfg = cfg or SolverConfig()
    u = default_start(cp) if u0 is None else u0.copy()
    sc = ScalingState(np.full(cp.p, cfg.r_init), cfg.eta, cp.laplacian.norm_bound, cfg.r_max)
    report = RunReport(f"ppcm_central_{cfg.step_mode}", asdict(cfg), iterates=[] if record_iterates else None)
    c_contract = cfg.gamma * (2 - cfg.gamma) * (1 - cfg.eta ** 2) / 4
    t0 = time.perf_counter()
    report.status = "max_iters_exceeded"
    for k in range(cfg.max_iters):
        grad_x = cp.gradients(u.x)
        ut, grad_xt, mu, sc, retries = _inner_predict(u, cp, sc, grad_x, cfg.max_inner_retries)
        diff = u - ut
        pred_sq = sc.h_norm_sq(diff)
        a_star = None
        alpha = 1.0
        if cfg.step_mode == "adaptive" and pred_sq > 0.0:
            xi = xi_vector(u, ut, cp, grad_x, grad_xt)
            a_star = alpha_star(u, ut, sc, direction_d(u, ut, sc, xi))
            alpha = cfg.gamma * a_star
        u_next = correct(u, ut, cp, sc, alpha, grad_xt)
        slack = None
        if reference is not None:
            before = sc.h_norm_sq(u - reference)
            after = sc.h_norm_sq(u_next - reference)
            slack = before - c_contract * pred_sq - after
        E = float(np.max(local_errors(u, ut, u_next)))
        report.diagnostics.append(IterationDiagnostics(
            iter=k, mu=mu.tolist(), E=E, pred_distance=float(np.sqrt(pred_sq)),
            alpha_star=a_star, alpha=alpha,
            objective=consensus_objective(cp, u_next.x),
            consensus_gap=consensus_gap(u_next.x, cp.topology),
            contraction_slack=slack, r=sc.r.tolist(), inner_retries=retries))
        if cfg.shrink_r:
            sc = adjust_r_down(sc, mu)
        u = u_next
        if record_iterates:
            report.iterates.append(u.copy())
        if not (np.all(np.isfinite(u.x)) and np.all(np.isfinite(u.lam))):
            report.status = "diverged"
            break
        if E <= cfg.tol:
            report.status = "converged"
            break
    report.iterations = len(report.diagnostics)
    report.wall_time = time.perf_counter() - t0
    return u, report


def extragradient_solve(cp: ConsensusProblem, beta: float, tol: float = 1e-3, max_iters: int = 10000,
                        u0: PrimalDualPoint | None = None):
    """Fixed-step extragradient reference solver; stops on ``||u - ut||_inf <= tol``."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    u = default_start(cp) if u0 is None else u0.copy()
    report = RunReport("extragradient", {"beta": beta, "tol": tol, "max_iters": max_iters})
    t0 = time.perf_counter()
    report.status = "max_iters_exceeded"
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(max_iters):
            fx, flam = cp.operator(u.x, u.lam)
            ut = PrimalDualPoint(cp.project(u.x - beta * fx), u.lam - beta * flam)
            fxt, flamt = cp.operator(ut.x, ut.lam)
            u_next = PrimalDualPoint(cp.project(u.x - beta * fxt), u.lam - beta * flamt)
            E = (u - ut).inf_norm()
            report.diagnostics.append(IterationDiagnostics(
                iter=k, mu=[], E=E, pred_distance=E,
                objective=consensus_objective(cp, u_next.x),
                consensus_gap=consensus_gap(u_next.x, cp.topology)))
            u = u_next
            if not np.isfinite(E) or not (np.all(np.isfinite(u.x)) and np.all(np.isfinite(u.lam))):
                report.status = "diverged"
                break
            if E <= tol:
                report.status = "converged"
                break
    report.iterations = len(report.diagnostics)
    report.wall_time = time.perf_counter() - t0
    return u, report
