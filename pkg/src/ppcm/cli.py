"""``ppcm-bench``: generate least-squares instances, run solvers, compare reports.

Defaults are sized for a single machine: a 2000 x 100 Gaussian instance
split across ``p`` simulated agents.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import scipy.optimize

from . import kernels
from .convex_sets import Ball, Box, ConvexSet
from .errors import InvalidDimensions, PPCMError, SchemaMismatch
from .graph import build_topology
from .problems import (
    LsqInstance,
    generate_lsq,
    load_matrix,
    lsq_problem,
    oracle_solve,
    partition_rows,
    save_matrix,
)
from .runtime import SimulationConfig, simulate
from .vi_solver import SolverConfig, extragradient_solve, solve

log = logging.getLogger("ppcm.bench")

METHODS = ("ppcm", "ppcm_central_unit", "ppcm_central_adaptive", "wagm", "extragradient")
SCALE_NOTE = ("desk-scale run with all agents simulated in one process; wall-clock numbers are "
              "hardware dependent, so only the relative pattern between methods is meaningful")
TIMING_KEYS = ("seconds",)


@dataclass
class ExperimentConfig:
    problem: str = "lsq"            # lsq | toy | file
    instance: str | None = None     # directory holding instance_B.txt / instance_b.txt
    m: int = 2000
    n: int = 100
    p: int = 4
    seed: int = 1
    topology: str = "complete"
    er_prob: float = 0.5
    methods: list = field(default_factory=lambda: ["ppcm"])
    eta: float = 0.9
    gamma: float = 1.9
    beta: float = 0.5
    tol: float = 1e-3
    wagm_tol: float | None = 1e-6   # None: reuse tol
    max_iters: int = 10000
    wagm_c: float = 2e-3
    constraint: str = "none"
    out: str = "out"

    def __post_init__(self):
        if isinstance(self.methods, str):
            self.methods = [s for s in self.methods.split(",") if s]
        for spec in self.methods:
            if spec.split(":")[0] not in METHODS:
                raise ValueError(f"unknown method {spec!r}; choose from {METHODS}")
        if self.problem not in ("lsq", "toy", "file"):
            raise ValueError(f"unknown problem {self.problem!r}")


def parse_constraint(text: str, n: int) -> ConvexSet | None:
    kind, *args = text.split(":")
    if kind == "none":
        return None
    if kind == "box":
        lo, hi = float(args[0]), float(args[1])
        return Box(np.full(n, lo), np.full(n, hi))
    if kind == "ball":
        return Ball(np.zeros(n), float(args[0]))
    raise ValueError(f"bad constraint {text!r}; expected box:<lo>:<hi>, ball:<r> or none")


# --- instances -----------------------------------------------------------------------


def toy_instance() -> LsqInstance:
    """``f_1 = (x-1)^2/2``, ``f_2 = (x-3)^2/2`` written as a 2x1 least-squares split."""
    return LsqInstance(np.array([[1.0], [1.0]]), np.array([1.0, 3.0]), [(0, 1), (1, 2)], None)


def load_instance(directory, p: int) -> LsqInstance:
    d = Path(directory)
    B = load_matrix(d / "instance_B.txt")
    b = load_matrix(d / "instance_b.txt")[:, 0]
    manifest = d / "manifest.json"
    seed = None
    if manifest.exists():
        meta = json.loads(manifest.read_text())
        p, seed = int(meta.get("p", p)), meta.get("seed")
    return LsqInstance(B, b, partition_rows(B.shape[0], p), seed)


def build_instance(cfg: ExperimentConfig) -> LsqInstance:
    if cfg.problem == "toy":
        return toy_instance()
    if cfg.problem == "file":
        if not cfg.instance:
            raise ValueError("problem=file needs --instance <dir>")
        return load_instance(cfg.instance, cfg.p)
    inst, _ = generate_lsq(cfg.m, cfg.n, cfg.p, cfg.seed)
    return inst


def constrained_oracle(inst: LsqInstance, constraint: ConvexSet | None) -> np.ndarray:
    """Reference minimiser of ``0.5||Bx - b||^2`` over the common constraint set."""
    if constraint is None:
        return oracle_solve(inst)
    if isinstance(constraint, Box):
        res = scipy.optimize.lsq_linear(inst.B, inst.b, bounds=(constraint.lower, constraint.upper),
                                        method="bvls", tol=1e-14)
        return res.x
    if isinstance(constraint, Ball):
        x = oracle_solve(inst)
        if constraint.contains(x):
            return x
        # ||x(t) - c|| decreases in the multiplier t of (B^T B + t I) x = B^T b + t c
        M, rhs = inst.B.T @ inst.B, inst.B.T @ inst.b
        eye = np.eye(M.shape[0])

        def gap(t):
            return np.linalg.norm(np.linalg.solve(M + t * eye, rhs + t * constraint.center)
                                  - constraint.center) - constraint.radius
        hi = 1.0
        while gap(hi) > 0:
            hi *= 2
        t = scipy.optimize.brentq(gap, 0.0, hi, xtol=1e-15, rtol=1e-15)
        return np.linalg.solve(M + t * eye, inst.B.T @ inst.b + t * constraint.center)
    raise ValueError(f"no oracle for {type(constraint).__name__}")


# --- commands ------------------------------------------------------------------------


def cmd_generate(cfg: ExperimentConfig) -> Path:
    inst, _ = generate_lsq(cfg.m, cfg.n, cfg.p, cfg.seed)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    save_matrix(out / "instance_B.txt", inst.B)
    save_matrix(out / "instance_b.txt", inst.b)
    manifest = dict(inst.to_json(), generator="numpy.random.default_rng(seed).standard_normal; B row-major, then b")
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return out


def _agent_errors(X, x_star):
    X = np.asarray(X, dtype=float)
    l2 = float(np.mean(np.linalg.norm(X - x_star, axis=1)))
    linf = float(np.mean(np.max(np.abs(X - x_star), axis=1)))
    return l2, linf


def _consensus_gap(X, topology):
    return max(float(np.max(np.abs(X[i] - X[j]))) for i, j in topology.edges)


def _run_method(spec: str, cp, cfg: ExperimentConfig, out: Path):
    name, _, arg = spec.partition(":")
    trace = out / f"trace_{name}.csv"
    if name in ("ppcm", "wagm"):
        tol = cfg.tol if name == "ppcm" or cfg.wagm_tol is None else cfg.wagm_tol
        sim_cfg = SimulationConfig(eta=cfg.eta, tol=tol, max_iters=cfg.max_iters, method=name,
                                   wagm_step_c=float(arg) if arg else cfg.wagm_c, seed=cfg.seed)
        states, tr = simulate(cp, sim_cfg, record_states=False)
        tr.dump_csv(trace)
        X = np.array([a.x for a in states])
        params = asdict(sim_cfg)
        return X, tr.iterations, tr.status, params
    if name.startswith("ppcm_central"):
        mode = "adaptive" if name.endswith("adaptive") else "unit"
        s_cfg = SolverConfig(eta=cfg.eta, gamma=float(arg) if arg else cfg.gamma, step_mode=mode,
                             tol=cfg.tol, max_iters=cfg.max_iters)
        u, rep = solve(cp, s_cfg)
    else:
        beta = float(arg) if arg else cfg.beta
        u, rep = extragradient_solve(cp, beta, cfg.tol, cfg.max_iters)
    rep.dump_csv(trace)
    return u.x, rep.iterations, rep.status, rep.config


def cmd_run(cfg: ExperimentConfig) -> dict:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    inst = build_instance(cfg)
    constraint = parse_constraint(cfg.constraint, inst.n)
    topo = build_topology(cfg.topology, inst.p, seed=cfg.seed,
                          prob=cfg.er_prob if cfg.topology == "erdos_renyi" else None)
    cp = lsq_problem(inst, topology=topo, sets=constraint)

    t0 = time.perf_counter()
    x_star = constrained_oracle(inst, constraint)
    oracle_seconds = time.perf_counter() - t0

    rows = []
    for spec in cfg.methods:
        entry = {"method": spec, "p": inst.p}
        t0 = time.perf_counter()
        try:
            X, iters, status, params = _run_method(spec, cp, cfg, out)
        except PPCMError as exc:
            log.warning("method %s failed: %s", spec, exc)
            entry.update(iterations=None, seconds=time.perf_counter() - t0, status="error",
                         error=f"{type(exc).__name__}: {exc}", converged=False)
            rows.append(entry)
            continue
        seconds = time.perf_counter() - t0
        finite = bool(np.all(np.isfinite(X)))
        l2, linf = _agent_errors(X, x_star) if finite else (None, None)
        entry.update(
            iterations=iters, seconds=seconds, status=status, converged=status == "converged",
            l2_error=l2, linf_error=linf,
            consensus_gap=_consensus_gap(X, topo) if finite else None,
            params=params, final_x=X.tolist() if finite else None)
        rows.append(entry)

    report = {
        "schema": "ppcm-report/1",
        "scale_note": SCALE_NOTE,
        "config": asdict(cfg),
        "instance": inst.to_json(),
        "topology": topo.to_json(),
        "kernel_backend": kernels.BACKEND,
        "oracle": {"method": "householder-qr" if constraint is None else "constrained", "seconds": oracle_seconds,
                   "x": x_star.tolist()},
        "methods": rows,
    }
    (out / "report.json").write_text(json.dumps(report, indent=2) + "\n")
    return report


REQUIRED_ROW_KEYS = ("method", "p", "iterations", "converged")


def load_report(path) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaMismatch(f"{path}: cannot read report ({exc})") from exc
    if not isinstance(data, dict) or not isinstance(data.get("methods"), list):
        raise SchemaMismatch(f"{path}: missing 'methods' list")
    for row in data["methods"]:
        missing = [k for k in REQUIRED_ROW_KEYS if k not in row]
        if missing:
            raise SchemaMismatch(f"{path}: method entry lacks {missing}")
    return data


COMPARE_COLUMNS = ("method", "p", "iterations", "seconds", "l2_error", "linf_error", "converged")


def cmd_compare(paths, csv_path=None) -> tuple[list[dict], str]:
    if not paths:
        raise ValueError("compare needs at least one report")
    rows = []
    for path in paths:
        for r in load_report(path)["methods"]:
            rows.append({k: r.get(k) for k in COMPARE_COLUMNS})
    rows.sort(key=lambda r: (r["method"], r["p"]))

    def fmt(v):
        if isinstance(v, float):
            return f"{v:.6e}"
        return "-" if v is None else str(v)

    table = [list(COMPARE_COLUMNS)] + [[fmt(r[k]) for k in COMPARE_COLUMNS] for r in rows]
    widths = [max(len(row[i]) for row in table) for i in range(len(COMPARE_COLUMNS))]
    text = "\n".join("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in table)
    if csv_path:
        with open(csv_path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=COMPARE_COLUMNS)
            w.writeheader()
            w.writerows(rows)
    return rows, text


# --- argument handling ---------------------------------------------------------------


def _add_common(sp):
    sp.add_argument("--config", help="JSON file with ExperimentConfig fields")
    sp.add_argument("--m", type=int)
    sp.add_argument("--n", type=int)
    sp.add_argument("--p", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ppcm-bench", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a Gaussian least-squares instance")
    _add_common(g)

    r = sub.add_parser("run", help="run solvers against the oracle")
    _add_common(r)
    r.add_argument("--problem", choices=["lsq", "toy", "file"])
    r.add_argument("--instance", help="instance directory for --problem file")
    r.add_argument("--method", dest="methods", help="comma list, e.g. ppcm,wagm,extragradient:0.5")
    r.add_argument("--topology", choices=["complete", "ring", "star", "erdos_renyi"])
    r.add_argument("--er-prob", dest="er_prob", type=float)
    r.add_argument("--eta", type=float)
    r.add_argument("--gamma", type=float)
    r.add_argument("--beta", type=float)
    r.add_argument("--tol", type=float)
    r.add_argument("--wagm-tol", dest="wagm_tol", type=float)
    r.add_argument("--max-iters", dest="max_iters", type=int)
    r.add_argument("--wagm-c", dest="wagm_c", type=float)
    r.add_argument("--constraint", help="box:<lo>:<hi> | ball:<r> | none")

    c = sub.add_parser("compare", help="merge report.json files into one table")
    c.add_argument("reports", nargs="+")
    c.add_argument("--csv", help="also write the table as CSV")
    return ap


def config_from_args(args) -> ExperimentConfig:
    values = {}
    if getattr(args, "config", None):
        values.update(json.loads(Path(args.config).read_text()))
    names = {f.name for f in fields(ExperimentConfig)}
    for key, val in vars(args).items():
        if key in names and val is not None:
            values[key] = val
    unknown = set(values) - names
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    return ExperimentConfig(**values)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.command == "compare":
            _, text = cmd_compare(args.reports, args.csv)
            print(text)
            return 0
        cfg = config_from_args(args)
        if args.command == "generate":
            out = cmd_generate(cfg)
            print(f"wrote instance to {out}")
            return 0
        report = cmd_run(cfg)
    except (InvalidDimensions, SchemaMismatch, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    _, text = cmd_compare([Path(cfg.out) / "report.json"])
    print(text)
    failed = [r for r in report["methods"] if r["status"] == "error"]
    if failed and len(cfg.methods) == 1:
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
