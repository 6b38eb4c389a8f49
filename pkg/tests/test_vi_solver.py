import json

import numpy as np
import pytest

from ppcm.convex_sets import Box
from ppcm.errors import InnerLoopStall, ScalingOverflow
from ppcm.problems import QuadraticObjective, build_consensus_problem, toy_problem
from ppcm.vi_solver import (
    PrimalDualPoint,
    ScalingState,
    SolverConfig,
    adjust_r_down,
    adjust_r_up,
    alpha_star,
    correct,
    criterion_holds,
    direction_d,
    dual_for,
    extragradient_solve,
    predict,
    solve,
    vi_residual,
    xi_vector,
)


def dense_parts(cp, sc):
    """Explicit H, H^-1 and A for the stacked (x, lam) vector."""
    n = cp.n
    A = np.kron(cp.laplacian.entries, np.eye(n))
    H = np.diag(np.concatenate([np.repeat(sc.r, n), np.repeat(1 / sc.s, n)]))
    return A, H, np.linalg.inv(H)


def stacked(u):
    return np.concatenate([u.x.ravel(), u.lam.ravel()])


def toy_first_prediction(toy, r=1.0):
    sc = ScalingState(np.array([r, r]), eta=0.9, rho=1.0)
    u = PrimalDualPoint.zeros(2, 1)
    return u, predict(u, toy, sc), sc


def test_predict_fixed_point_for_zero_gradient():
    flat = QuadraticObjective(np.zeros((1, 2)), [0.0])
    cp = build_consensus_problem([flat] * 3)
    x = np.tile([0.3, -0.7], (3, 1))
    sc = ScalingState(np.ones(3))
    ut = predict(PrimalDualPoint(x, np.zeros_like(x)), cp, sc)
    np.testing.assert_array_equal(ut.x, x)
    np.testing.assert_array_equal(ut.lam, 0)


def test_predict_toy_first_step(toy):
    u, ut, _ = toy_first_prediction(toy)
    np.testing.assert_allclose(ut.x, [[1.0], [3.0]])
    # L x~ = (1/4)(1-3, 3-1) = (-0.5, 0.5); lam~ = -0.81 * L x~
    np.testing.assert_allclose(ut.lam, [[0.405], [-0.405]])


def test_predict_detects_solution(toy, toy_solution):
    sc = ScalingState(np.array([1.3, 2.0]))
    ut = predict(toy_solution, toy, sc)
    np.testing.assert_allclose(ut.x, toy_solution.x, atol=1e-15)
    np.testing.assert_allclose(ut.lam, toy_solution.lam, atol=1e-15)


def test_criterion_examples(toy, small_lsq):
    u, ut, sc = toy_first_prediction(toy)
    ok, mu = criterion_holds(u, ut, sc, toy.gradients(u.x), toy.gradients(ut.x))
    assert not ok
    np.testing.assert_allclose(mu, [1.0, 1.0])

    ok, mu = criterion_holds(u, u, sc, toy.gradients(u.x), toy.gradients(u.x))
    assert ok and np.all(mu == 0)

    _, cp, _ = small_lsq
    L = max(a.objective.lipschitz() for a in cp.agents)
    sc = ScalingState(np.full(cp.p, L / 0.9))
    rng = np.random.default_rng(0)
    for _ in range(20):
        v = PrimalDualPoint(rng.standard_normal((cp.p, cp.n)), rng.standard_normal((cp.p, cp.n)))
        vt = predict(v, cp, sc)
        assert criterion_holds(v, vt, sc, cp.gradients(v.x), cp.gradients(vt.x))[0]


def test_adjust_r_up_rule():
    sc = ScalingState(np.ones(3), eta=0.9)
    new = adjust_r_up(sc, [1.0, 2.0, 0.5])
    np.testing.assert_allclose(new.r, [1.5, 3.0, 1.0])
    np.testing.assert_allclose(new.s, 0.81 * new.r)
    with pytest.raises(ScalingOverflow) as exc:
        adjust_r_up(ScalingState(np.array([1e12, 1.0])), [5.0, 0.0])
    assert exc.value.agent_id == 0


def test_adjust_r_down_rule():
    sc = ScalingState(np.array([2.0, 2.0, 2.0]))
    new = adjust_r_down(sc, [0.35, 0.6, 0.0])
    np.testing.assert_allclose(new.r, [1.0, 2.0, 1e-12])


def test_direction_and_alpha_match_dense_oracle(toy):
    u, ut, sc = toy_first_prediction(toy, r=1.6)
    gx, gxt = toy.gradients(u.x), toy.gradients(ut.x)
    xi = xi_vector(u, ut, toy, gx, gxt)
    d = direction_d(u, ut, sc, xi)

    A, H, Hinv = dense_parts(toy, sc)
    diff = stacked(u) - stacked(ut)
    xi_dense = np.concatenate([(gx - gxt).ravel() - A.T @ (u.lam - ut.lam).ravel(), np.zeros(2)])
    d_dense = H @ diff - xi_dense
    np.testing.assert_allclose(stacked(d), d_dense, atol=1e-12)
    a_dense = diff @ d_dense / (d_dense @ Hinv @ d_dense)
    assert alpha_star(u, ut, sc, d) == pytest.approx(a_dense, abs=1e-12)


def test_direction_and_alpha_dense_oracle_random(small_lsq):
    _, cp, _ = small_lsq
    rng = np.random.default_rng(2)
    sc = ScalingState(rng.uniform(50, 200, cp.p))
    u = PrimalDualPoint(rng.standard_normal((cp.p, cp.n)), rng.standard_normal((cp.p, cp.n)))
    ut = predict(u, cp, sc)
    gx, gxt = cp.gradients(u.x), cp.gradients(ut.x)
    d = direction_d(u, ut, sc, xi_vector(u, ut, cp, gx, gxt))
    A, H, Hinv = dense_parts(cp, sc)
    xi_dense = np.concatenate([(gx - gxt).ravel() - A.T @ (u.lam - ut.lam).ravel(), np.zeros(cp.p * cp.n)])
    diff = stacked(u) - stacked(ut)
    d_dense = H @ diff - xi_dense
    np.testing.assert_allclose(stacked(d), d_dense, atol=1e-9)
    assert alpha_star(u, ut, sc, d) == pytest.approx(diff @ d_dense / (d_dense @ Hinv @ d_dense), rel=1e-12)


def test_direction_trivial_cases(toy):
    u, ut, sc = toy_first_prediction(toy)
    zero = PrimalDualPoint.zeros(2, 1)
    d = direction_d(u, ut, sc, zero)
    np.testing.assert_allclose(stacked(d), stacked(sc.h_apply(u - ut)))
    assert alpha_star(u, ut, sc, d) == pytest.approx(1.0)
    assert np.all(stacked(direction_d(u, u, sc, zero)) == 0)


def test_unit_correction_reuses_dual_predictor(small_lsq):
    _, cp, _ = small_lsq
    rng = np.random.default_rng(4)
    sc = ScalingState(rng.uniform(10, 100, cp.p))
    u = PrimalDualPoint(rng.standard_normal((cp.p, cp.n)), rng.standard_normal((cp.p, cp.n)))
    ut = predict(u, cp, sc)
    new = correct(u, ut, cp, sc, 1.0)
    assert np.array_equal(new.lam, ut.lam)


def test_correct_is_stationary_at_solution(toy, toy_solution):
    sc = ScalingState(np.array([1.7, 1.2]))
    new = correct(toy_solution, toy_solution, toy, sc, 1.3)
    np.testing.assert_allclose(stacked(new), stacked(toy_solution), atol=1e-15)


def test_solve_toy(toy):
    u, rep = solve(toy, SolverConfig(tol=1e-8))
    assert rep.converged
    np.testing.assert_allclose(u.x, 2.0, atol=1e-3)


def test_solve_toy_box():
    # f1 + f2 = (x-1)^2/2 + (x-3)^2/2 on [0, 1.5]: brute-force grid minimiser
    grid = np.linspace(0, 1.5, 15001)
    best = grid[np.argmin(0.5 * (grid - 1) ** 2 + 0.5 * (grid - 3) ** 2)]
    cp = toy_problem(Box([0.0], [1.5]))
    u, rep = solve(cp, SolverConfig(tol=1e-8))
    assert rep.converged
    np.testing.assert_allclose(u.x, best, atol=1e-3)


def test_solve_from_solution_stops_at_once(toy, toy_solution):
    u, rep = solve(toy, SolverConfig(tol=1e-6), u0=toy_solution)
    assert rep.converged and rep.iterations <= 1 and rep.diagnostics[-1].E <= 1e-6


def test_vi_residual(toy, toy_solution, small_lsq):
    u, _ = solve(toy, SolverConfig(tol=1e-8))
    assert vi_residual(u, toy) <= 1e-6
    assert vi_residual(PrimalDualPoint(np.array([[0.0], [5.0]]), np.zeros((2, 1))), toy) > 0
    _, cp, xs = small_lsq
    X = np.tile(xs, (cp.p, 1))
    assert vi_residual(PrimalDualPoint(X, dual_for(cp, X)), cp) <= 1e-10


@pytest.mark.parametrize("mode", ["unit", "adaptive"])
def test_run_invariants(small_lsq, mode):
    _, cp, xs = small_lsq
    X = np.tile(xs, (cp.p, 1))
    ref = PrimalDualPoint(X, dual_for(cp, X))
    cfg = SolverConfig(tol=1e-6, step_mode=mode, gamma=1.5)
    u, rep = solve(cp, cfg, reference=ref)
    assert rep.converged
    c = cfg.gamma * (2 - cfg.gamma) * (1 - cfg.eta ** 2) / 4
    for d in rep.diagnostics:
        assert max(d.mu) <= cfg.eta
        if mode == "adaptive" and d.pred_distance > 1e-12:
            assert d.alpha_star > 0.5
        if mode == "adaptive":
            assert d.contraction_slack >= -1e-9
    assert vi_residual(u, cp) <= 10 * cfg.tol
    np.testing.assert_allclose(u.x, X, atol=1e-4)
    assert c > 0


@pytest.mark.parametrize("mode", ["unit", "adaptive"])
def test_exact_criterion_holds_on_accepted_predictions(small_lsq, mode, monkeypatch):
    """Check the H-norm inequality on xi directly, not the per-agent split."""
    import ppcm.vi_solver as V

    _, cp, _ = small_lsq
    ratios = []
    original = V.correct

    def spy(u, ut, cp_, sc, alpha, grad_xt=None):
        xi = xi_vector(u, ut, cp_, cp_.gradients(u.x), cp_.gradients(ut.x))
        dist = np.sqrt(sc.h_norm_sq(u - ut))
        if dist > 1e-12:
            ratios.append(np.sqrt(xi.dot(sc.h_inv_apply(xi))) / dist)
        return original(u, ut, cp_, sc, alpha, grad_xt)

    monkeypatch.setattr(V, "correct", spy)
    cfg = SolverConfig(tol=1e-6, step_mode=mode)
    solve(cp, cfg)
    assert ratios and max(ratios) <= cfg.eta


def test_feasibility_under_box():
    cp = build_consensus_problem(
        [QuadraticObjective(np.eye(2), [2.0, -1.0]), QuadraticObjective(np.eye(2), [3.0, 2.0])],
        sets=Box([0.0, 0.0], [0.5, 0.5]))
    u, rep = solve(cp, SolverConfig(tol=1e-7, step_mode="adaptive"), record_iterates=True)
    assert rep.converged
    for it in rep.iterates:
        assert all(a.set.contains(it.x[i], 1e-9) for i, a in enumerate(cp.agents))


def test_pred_distance_vanishes(toy):
    cfg = SolverConfig(tol=1e-6)
    _, rep = solve(toy, cfg)
    last = rep.diagnostics[-1]
    assert last.pred_distance <= cfg.tol * (1 + max(last.r))


def test_max_iters_reported_not_raised(small_lsq):
    _, cp, _ = small_lsq
    _, rep = solve(cp, SolverConfig(tol=1e-12, max_iters=5))
    assert rep.status == "max_iters_exceeded" and rep.iterations == 5


def test_inner_loop_stall_is_raised(toy):
    with pytest.raises(InnerLoopStall):
        solve(toy, SolverConfig(r_init=0.5, max_inner_retries=0))


def test_extragradient(toy, toy_solution):
    u, rep = extragradient_solve(toy, beta=0.5, tol=1e-8, max_iters=20000)
    assert rep.converged
    np.testing.assert_allclose(u.x, 2.0, atol=1e-6)
    _, rep = extragradient_solve(toy, beta=1e6, tol=1e-8, max_iters=50)
    assert not rep.converged
    _, rep = extragradient_solve(toy, beta=0.5, tol=1e-8, u0=toy_solution)
    assert rep.converged and rep.iterations == 1


def test_report_exports(toy, tmp_path):
    _, rep = solve(toy, SolverConfig(step_mode="adaptive"))
    rep.dump_json(tmp_path / "r.json")
    data = json.loads((tmp_path / "r.json").read_text())
    assert data["converged"] and len(data["diagnostics"]) == rep.iterations
    rep.dump_csv(tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "iter,E,maxMu,alphaStar,predDistance,objective,consensusGap"
    assert len(lines) == rep.iterations + 1
