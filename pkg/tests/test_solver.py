import numpy as np
import pytest

import arrowqp as aq
from arrowqp.solver import (IterateState, Settings, Solver, SparsityChanged,
                            StepDirection, compute_residuals, step_lengths)

from util import random_qp


def dense_residual_oracle(qp, state, sigma_mu):
    """Independent evaluation of the Newton right-hand side."""
    p = qp.P.toarray()
    p = p + p.T - np.diag(np.diag(p))
    a, g = qp.A.toarray(), qp.G.toarray()
    r_x = -(p @ state.x + qp.c + state.rho * (state.x - state.xi)
            + a.T @ state.y + g.T @ state.z)
    r_y = -(a @ state.x + state.delta * (state.lam - state.y) - qp.b)
    r_z = -(g @ state.x + state.delta * (state.nu - state.z)
            - qp.h + state.s)
    r_s = -state.s * state.z + sigma_mu
    return r_x, r_y, r_z, r_s


class TestResiduals:
    def test_formula_collapse_at_anchored_point(self):
        qp = aq.make_general_qp(np.zeros((2, 2)), np.zeros(2),
                                G=np.zeros((2, 2)), h=np.zeros(2))
        s = np.array([0.5, 2.0])
        z = np.array([1.5, 0.25])
        state = IterateState(x=np.ones(2), s=s, y=np.zeros(0), z=z,
                             xi=np.ones(2), lam=np.zeros(0), nu=z.copy(),
                             rho=1e-6, delta=1e-4, mu=float(s @ z / 2))
        res = compute_residuals(qp, state, 0.0)
        np.testing.assert_allclose(res.r_x, 0.0, atol=1e-15)
        np.testing.assert_allclose(res.r_z, -s, atol=1e-15)
        np.testing.assert_allclose(res.r_s, -s * z)
        np.testing.assert_allclose(res.rbar_z, res.r_z - res.r_s / z)

    def test_scalar_hand_computation(self):
        qp = aq.make_general_qp(np.array([[2.0]]), np.array([1.0]),
                                A=np.array([[1.0]]), b=np.array([3.0]),
                                G=np.array([[1.0]]), h=np.array([5.0]))
        state = IterateState(x=np.array([1.0]), s=np.array([2.0]),
                             y=np.array([0.5]), z=np.array([0.25]),
                             xi=np.array([0.0]), lam=np.array([0.25]),
                             nu=np.array([0.125]), rho=0.5, delta=2.0,
                             mu=0.5)
        res = compute_residuals(qp, state, 0.1)
        # r_x = -(2*1 + 1 + 0.5*(1-0) + 0.5 + 0.25) = -4.25
        assert res.r_x[0] == pytest.approx(-4.25)
        # r_y = -(1 + 2*(0.25-0.5) - 3) = 2.5
        assert res.r_y[0] == pytest.approx(2.5)
        # r_z = -(1 + 2*(0.125-0.25) - 5 + 2) = 2.25
        assert res.r_z[0] == pytest.approx(2.25)
        # r_s = -2*0.25 + 0.1 = -0.4
        assert res.r_s[0] == pytest.approx(-0.4)
        assert res.rbar_z[0] == pytest.approx(2.25 + 0.4 / 0.25)

    def test_against_duplicate_implementation(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            qp = random_qp(rng)
            s = rng.uniform(0.2, 2.0, size=qp.m)
            z = rng.uniform(0.2, 2.0, size=qp.m)
            state = IterateState(
                x=rng.normal(size=qp.n), s=s, y=rng.normal(size=qp.p), z=z,
                xi=rng.normal(size=qp.n), lam=rng.normal(size=qp.p),
                nu=rng.normal(size=qp.m), rho=1e-5, delta=1e-3,
                mu=float(s @ z / qp.m) if qp.m else 0.0)
            res = compute_residuals(qp, state, 0.01)
            want = dense_residual_oracle(qp, state, 0.01)
            for got, ref in zip((res.r_x, res.r_y, res.r_z, res.r_s), want):
                np.testing.assert_allclose(got, ref, atol=1e-10)


class TestStepLengths:
    def test_nonnegative_direction_gives_full_step(self):
        state = IterateState(x=np.zeros(1), s=np.array([1.0, 2.0]),
                             y=np.zeros(0), z=np.array([1.0, 1.0]),
                             xi=np.zeros(1), lam=np.zeros(0),
                             nu=np.ones(2), rho=1.0, delta=1.0, mu=1.0)
        d = StepDirection(np.zeros(1), np.zeros(0),
                          np.array([0.5, 0.0]), np.array([1.0, 3.0]))
        assert step_lengths(state, d, 0.99) == (1.0, 1.0)

    def test_scalar_ratio(self):
        state = IterateState(x=np.zeros(1), s=np.array([1.0]),
                             y=np.zeros(0), z=np.array([1.0]),
                             xi=np.zeros(1), lam=np.zeros(0),
                             nu=np.ones(1), rho=1.0, delta=1.0, mu=1.0)
        d = StepDirection(np.zeros(1), np.zeros(0),
                          np.array([0.0]), np.array([-2.0]))
        alpha_p, alpha_d = step_lengths(state, d, 0.99)
        assert alpha_p == pytest.approx(0.495)
        assert alpha_d == 1.0

    def test_mixed_signs_take_binding_ratio(self):
        rng = np.random.default_rng(1)
        s = rng.uniform(0.5, 2.0, size=6)
        z = rng.uniform(0.5, 2.0, size=6)
        ds = rng.normal(size=6)
        dz = rng.normal(size=6)
        state = IterateState(x=np.zeros(1), s=s, y=np.zeros(0), z=z,
                             xi=np.zeros(1), lam=np.zeros(0), nu=z.copy(),
                             rho=1.0, delta=1.0, mu=1.0)
        alpha_p, alpha_d = step_lengths(state, StepDirection(
            np.zeros(1), np.zeros(0), dz, ds), 0.95)
        want_p = min(1.0, 0.95 * min(-s[ds < 0] / ds[ds < 0]))
        want_d = min(1.0, 0.95 * min(-z[dz < 0] / dz[dz < 0]))
        assert alpha_p == pytest.approx(want_p)
        assert alpha_d == pytest.approx(want_d)
        assert np.all(s + alpha_p * ds >= (1 - 0.95) * s - 1e-15)
        assert np.all(z + alpha_d * dz >= (1 - 0.95) * z - 1e-15)


class TestSolveSmallProblems:
    def test_unconstrained_scalar(self):
        qp = aq.make_general_qp(np.array([[1.0]]), np.zeros(1))
        sol = aq.solve(qp)
        assert sol.status is aq.Status.SOLVED
        assert sol.iterations <= 2
        assert abs(sol.x[0]) < 1e-9

    def test_scalar_box_qp(self):
        # min 1/2 (x-2)^2  s.t. x <= 1:  active bound, multiplier 1
        qp = aq.make_general_qp(np.array([[1.0]]), np.array([-2.0]),
                                G=np.array([[1.0]]), h=np.array([1.0]))
        sol = aq.solve(qp)
        assert sol.status is aq.Status.SOLVED
        assert sol.x[0] == pytest.approx(1.0, abs=1e-7)
        assert sol.z[0] == pytest.approx(1.0, abs=1e-6)

    def test_equality_constrained(self):
        qp = aq.make_general_qp(np.eye(2), np.zeros(2),
                                A=np.array([[1.0, 1.0]]), b=np.array([2.0]))
        sol = aq.solve(qp)
        assert sol.status is aq.Status.SOLVED
        np.testing.assert_allclose(sol.x, [1.0, 1.0], atol=1e-8)
        assert sol.y[0] == pytest.approx(-1.0, abs=1e-7)

    def test_solved_certificate_on_fuzzed_qps(self):
        rng = np.random.default_rng(2)
        for _ in range(25):
            qp = random_qp(rng)
            sol = aq.solve(qp)
            if sol.status is aq.Status.SOLVED:
                ok, report = aq.verify_solution(qp, sol, 1e-7, 1e-7)
                assert ok, report
                if qp.m:
                    assert sol.s.min() > 0 and sol.z.min() > 0

    def test_max_iter_status(self):
        qp = aq.make_general_qp(np.eye(3), np.ones(3),
                                G=-np.eye(3), h=-np.ones(3))
        sol = aq.solve(qp, aq.Settings(max_iter=1))
        assert sol.status is aq.Status.MAX_ITER


class TestSpringMassConvergence:
    def test_converges_at_tight_tolerance(self):
        prob, _ = aq.spring_mass(aq.SpringMassConfig(M=2, N=15, r_d=0.1,
                                                     seed=11))
        qp, st = aq.to_general_qp(prob)
        sol = aq.solve(qp, aq.Settings(eps_abs=1e-6, eps_rel=1e-6,
                                       max_iter=100), st)
        assert sol.status is aq.Status.SOLVED
        ok, report = aq.verify_solution(qp, sol, 1e-6, 1e-6)
        assert ok, report

    def test_backend_trajectories_agree(self):
        prob, _ = aq.spring_mass(aq.SpringMassConfig(M=2, N=8, r_d=0.0,
                                                     seed=12))
        qp, st = aq.to_general_qp(prob)
        sols = {}
        for backend in ("btda", "dense"):
            sols[backend] = aq.solve(
                qp, aq.Settings(eps_abs=1e-6, eps_rel=1e-6, max_iter=100,
                                backend=backend, verbose=1), st)
        assert sols["btda"].status is aq.Status.SOLVED
        assert abs(sols["btda"].iterations - sols["dense"].iterations) <= 1
        assert np.abs(sols["btda"].x - sols["dense"].x).max() < 1e-9
        log_b = sols["btda"].info["log"]
        log_d = sols["dense"].info["log"]
        for rb, rd in zip(log_b, log_d):
            assert rb["mu"] == pytest.approx(rd["mu"], rel=1e-9, abs=1e-12)

    def test_interiority_and_penalty_monotonicity(self):
        prob, _ = aq.spring_mass(aq.SpringMassConfig(M=3, N=10, r_d=0.1,
                                                     seed=13))
        qp, st = aq.to_general_qp(prob)
        solver = Solver(qp, Settings(eps_abs=1e-6, eps_rel=1e-6,
                                     max_iter=100, verbose=1), st)
        sol = solver.solve(warm_start=False)
        assert sol.status is aq.Status.SOLVED
        assert sol.s.min() > 0 and sol.z.min() > 0
        rhos = [rec["rho"] for rec in sol.info["log"]]
        deltas = [rec["delta"] for rec in sol.info["log"]]
        assert all(b <= a + 1e-300 for a, b in zip(rhos, rhos[1:]))
        assert all(b <= a + 1e-300 for a, b in zip(deltas, deltas[1:]))
        assert rhos[-1] >= 1e-10 and deltas[-1] >= 1e-12


class TestUpdateAndWarmStart:
    def test_same_values_identical_trace(self):
        prob, _ = aq.spring_mass(aq.SpringMassConfig(M=2, N=6, seed=14))
        qp, st = aq.to_general_qp(prob)
        solver = Solver(qp, Settings(eps_abs=1e-6, eps_rel=1e-6, verbose=1),
                        st)
        first = solver.solve(warm_start=False)
        solver.update(b=qp.b.copy())
        second = solver.solve(warm_start=False)
        assert first.iterations == second.iterations
        np.testing.assert_array_equal(first.x, second.x)

    def test_warm_start_helps_on_receding_horizon(self):
        cfg = aq.SpringMassConfig(M=3, N=12, r_d=0.1, seed=15)
        prob, sampler = aq.spring_mass(cfg)
        qp, st = aq.to_general_qp(prob)
        dyn_a, dyn_b = aq.chain_dynamics(cfg.M)
        solver = Solver(qp, Settings(eps_abs=1e-6, eps_rel=1e-6,
                                     max_iter=100), st)
        state = sampler(0)
        prior = None
        warm_iters, cold_iters = [], []
        for _ in range(8):
            new_b = solver.qp.b.copy()
            new_b[:cfg.n_x] = state
            solver.update(b=new_b)
            cold = Solver(solver.qp, solver.settings, st).solve(
                warm_start=False)
            sol = solver.solve(warm_start=prior if prior else False)
            assert sol.status is aq.Status.SOLVED
            if prior is not None:
                warm_iters.append(sol.iterations)
                cold_iters.append(cold.iterations)
            prior = sol
            u0 = sol.x[cfg.n_x:cfg.n_x + cfg.n_u]
            state = dyn_a @ state + dyn_b @ u0
        assert np.mean(warm_iters) <= np.mean(cold_iters)

    def test_pattern_change_rejected(self):
        qp = aq.make_general_qp(np.eye(2), np.zeros(2),
                                A=np.array([[1.0, 0.0]]), b=np.zeros(1))
        solver = Solver(qp, Settings())
        with pytest.raises(SparsityChanged):
            solver.update(A=np.array([[1.0, 1.0]]))
        with pytest.raises(SparsityChanged):
            solver.update(b=np.zeros(2))

    def test_update_values_change_solution(self):
        qp = aq.make_general_qp(np.eye(1), np.array([-1.0]))
        solver = Solver(qp, Settings())
        first = solver.solve(warm_start=False)
        assert first.x[0] == pytest.approx(1.0, abs=1e-8)
        solver.update(c=np.array([-2.0]))
        second = solver.solve(warm_start=False)
        assert second.x[0] == pytest.approx(2.0, abs=1e-8)


class TestNewtonStepContract:
    def test_zero_residuals_zero_direction(self):
        qp = aq.make_general_qp(np.eye(2), np.zeros(2))
        st = aq.BlockStructure((2,), 0)
        state = IterateState(x=np.zeros(2), s=np.zeros(0), y=np.zeros(0),
                             z=np.zeros(0), xi=np.zeros(2), lam=np.zeros(0),
                             nu=np.zeros(0), rho=1e-6, delta=1e-4, mu=0.0)
        d = aq.newton_step(qp, st, state)
        np.testing.assert_allclose(d.dx, 0.0, atol=1e-15)

    def test_hand_scalar_direction(self):
        # min 1/2 x^2 from x = 1: predictor should move toward 0
        qp = aq.make_general_qp(np.array([[1.0]]), np.zeros(1))
        st = aq.BlockStructure((1,), 0)
        state = IterateState(x=np.array([1.0]), s=np.zeros(0), y=np.zeros(0),
                             z=np.zeros(0), xi=np.array([1.0]),
                             lam=np.zeros(0), nu=np.zeros(0), rho=1e-8,
                             delta=1e-4, mu=0.0)
        d = aq.newton_step(qp, st, state)
        assert d.dx[0] == pytest.approx(-1.0, rel=1e-6)
