import numpy as np
import pytest

from ogbmatch.hankel import partition_extended
from ogbmatch.matcher import (InfeasibleError, MatchProblem, assemble, export_solution,
                              sample_solutions, select_min_energy, solve)
from ogbmatch.ogb import INPUT_MAPS, OgbModel, build_extended, constant_term, output_term
from ogbmatch.plants import LtiPlant, OgbPlant, StateSpace, rrmse
from ogbmatch.signal import Trajectory, read_csv


def lti_problem(y_ini, y_r, u_ini, T=40, seed=0):
    plant = LtiPlant(StateSpace([[0.5]], [[1.0]], [[1.0]], [[0.0]]))
    u = np.random.default_rng(seed).uniform(-1, 1, (1, T))
    y = plant.simulate(u, [0.3])
    model = OgbModel(1, 1, lag=1, order=1)
    data = build_extended(model, Trajectory(u), Trajectory(y))
    return MatchProblem(data, model, Trajectory(np.atleast_2d(u_ini)),
                        Trajectory(np.atleast_2d(y_ini)), Trajectory(np.atleast_2d(y_r))), plant


def test_lti_counterexample_infeasible():
    # y(t) = 0.5 y(t-1) + u(t-1) forces y(1) = 2.5 after y(0) = 5, u(0) = 0.
    prob, _ = lti_problem([5.0], [2.0, 2.0], [0.0])
    sol = solve(prob)
    assert not sol.feasible and sol.status == "infeasible"
    assert sol.diagnostics.solve_residual > 0.1
    with pytest.raises(InfeasibleError):
        sol.require_feasible()
    with pytest.raises(InfeasibleError):
        sample_solutions(sol, prob.model, 2)


def test_lti_reachable_reference_feasible():
    prob, plant = lti_problem([5.0], [2.5, 2.0], [0.0])
    sol = solve(prob)
    assert sol.feasible
    # u(1) sets y(2); the final input never reaches the horizon.
    assert sol.u.values[0, 0] == pytest.approx(2.0 - 0.5 * 2.5, abs=1e-10)
    assert sol.parameter_count == 1


def test_lti_system_degenerates_to_classical_form():
    prob, _ = lti_problem([5.0], [2.5, 2.0], [0.0])
    s = assemble(prob)
    ph = partition_extended(prob.data, prob.model.dims, prob.L, prob.T_ini)
    assert np.array_equal(s.A, np.vstack([ph.U_hp, ph.Y_p, ph.Y_f]))
    assert np.array_equal(s.b, [0.0, 5.0, 2.5, 2.0])


def test_problem_validation():
    prob, _ = lti_problem([5.0], [2.5, 2.0], [0.0])
    with pytest.raises(ValueError):
        MatchProblem(prob.data, prob.model, Trajectory(np.zeros((1, 2))), prob.y_ini, prob.y_r)
    with pytest.raises(ValueError):
        MatchProblem(prob.data, prob.model, prob.u_ini, prob.y_ini, prob.y_r, inert_tail=3)


def test_pendulum_assembled_system(pendulum_exp):
    prob = pendulum_exp.problem()
    s = assemble(prob)
    m = prob.model
    Ti, L = prob.T_ini, prob.L
    assert s.A.shape[0] == m.n_u * Ti + m.n_y * (Ti + L) + m.n_nl * (Ti + L) - prob.inert_tail
    assert not np.any(s.Phi_bf) and not np.any(s.Phi_bp)
    keep = m.n_nl * (Ti + L - prob.inert_tail)
    assert np.array_equal(s.A[-keep:], s.ph.U_nl[:keep])
    y_all = np.concatenate([prob.y_ini.values[0], prob.y_r.values[0]])
    assert np.allclose(s.b[-keep:], np.sin(y_all)[:keep], rtol=0, atol=0)


def test_pendulum_solution_set(pendulum_exp):
    sol = solve(pendulum_exp.problem())
    assert sol.feasible and sol.parameter_count == 2
    samples = sample_solutions(sol, pendulum_exp.model, 4, seed=3)
    target = pendulum_exp.y_ref.values[:, pendulum_exp.hist + pendulum_exp.cfg.T_ini:]
    for u in samples:
        assert not np.allclose(u.values, sol.u.values)
        assert rrmse(pendulum_exp.realized(u), target) < 1e-9
    # z = 0 is the particular solution itself.
    assert np.array_equal(sol.u_h_set.point(np.zeros(2)), sol.u_h_set.offset)
    best = select_min_energy(sol, pendulum_exp.model)
    rng = np.random.default_rng(0)
    s = sol.u_h_set
    for _ in range(100):
        assert np.linalg.norm(best.values) <= np.linalg.norm(s.point(rng.standard_normal(2))) + 1e-12
    assert np.allclose(s.basis.T @ best.values[0], 0, atol=1e-10)


def nonlinear_plant():
    # u_nl(t) = cos(y(t-1)) u_h(t) with a cubic input map.
    model = OgbModel(1, 1, y_delays=(1,), u_delays=(0,),
                     phi_b=(output_term("cos", 0, name="cos(y(t-1))"),),
                     input_map=INPUT_MAPS["cube"](), lag=1, order=1)
    plant = OgbPlant(model, Ay={1: np.array([[0.5]])}, Bu={1: np.array([[0.3]])},
                     Cnl={1: np.array([[0.2]])})
    return model, plant


def test_nonlinear_input_dependent_matching():
    model, plant = nonlinear_plant()
    rng = np.random.default_rng(7)
    T, L, Ti, k = 80, 8, 2, 1
    u = rng.uniform(-1, 1, (1, T))
    y = plant.simulate(u, [0.1, 0.2])
    data = build_extended(model, Trajectory(u), Trajectory(y))
    u_ref = rng.uniform(-1, 1, (1, k + Ti + L))
    y_ref = plant.simulate(u_ref, [0.4, -0.1], t0=0)
    win = lambda a, s, e: Trajectory(a[:, s:e])
    prob = MatchProblem(data, model, win(u_ref, k, k + Ti), win(y_ref, k, k + Ti),
                        win(y_ref, k + Ti, k + Ti + L), u_hist=win(u_ref, 0, k),
                        y_hist=win(y_ref, 0, k))
    sol = solve(prob)
    assert sol.feasible and sol.diagnostics.gpe_report.satisfied
    real = plant.realize(u_ref[:, :k + Ti], y_ref[:, :k + Ti], sol.u.values)
    assert rrmse(real, y_ref[:, k + Ti:]) < 1e-8
    # Only the last input is free: it never reaches the horizon.
    assert sol.parameter_count == 1
    assert np.allclose(sol.u.values[:, :-1], u_ref[:, k + Ti:-1], atol=1e-8)


def test_homogeneous_model_scales_linearly():
    # Constant phi_b and no phi_b0: u_nl is linear in u_h, so b is linear in (w_ini, y_r).
    model = OgbModel(1, 1, y_delays=(1,), u_delays=(0,), phi_b=(constant_term(0.7),),
                     lag=1, order=1)
    rng = np.random.default_rng(2)
    data = build_extended(model, Trajectory(rng.uniform(-1, 1, (1, 40))),
                          Trajectory(rng.uniform(-1, 1, (1, 40))))
    base = dict(u_ini=Trajectory([[0.2]]), y_ini=Trajectory([[0.5]]), y_r=Trajectory([[0.1, -0.3]]),
                u_hist=Trajectory([[0.0]]), y_hist=Trajectory([[0.3]]))
    s1 = solve(MatchProblem(data, model, **base))
    s2 = solve(MatchProblem(data, model, **{k: Trajectory(2.5 * v.values) for k, v in base.items()}))
    assert np.allclose(s2.u_h_set.offset, 2.5 * s1.u_h_set.offset, rtol=1e-10, atol=1e-12)


def test_export_solution(tmp_path, pendulum_exp):
    sol = solve(pendulum_exp.problem())
    export_solution(sol, tmp_path / "s.csv", tmp_path / "s.json")
    w = read_csv(tmp_path / "s.csv")
    assert w.labels == ("u", "h(u)", "y_pred")
    assert np.array_equal(w.values[0], sol.u.values[0])
    assert (tmp_path / "s.json").read_text().count("parameter_count") == 1


def test_unique_solution_counted_despite_unstable_zero():
    # Zero at A - BC/D ≈ -5.96: the horizon inverse is ill conditioned but still unique.
    ss = StateSpace([[-0.69]], [[1.51]], [[-1.165]], [[-0.334]])
    plant = LtiPlant(ss)
    rng = np.random.default_rng(11)
    u = rng.uniform(-1, 1, (1, 40))
    model = OgbModel(1, 1, lag=1, order=1)
    data = build_extended(model, Trajectory(u), Trajectory(plant.simulate(u, [0.5])))
    u_r = rng.uniform(-1, 1, (1, 8))
    y_r = plant.simulate(u_r, [-0.2])
    sol = solve(MatchProblem(data, model, u_r[:, :2], y_r[:, :2], y_r[:, 2:]))
    assert sol.feasible and sol.parameter_count == 0
    assert np.max(np.abs(sol.u.values - u_r[:, 2:])) < 1e-6
