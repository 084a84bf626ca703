"""Tests for the projection-contraction solver, best-response driver and
equilibrium verifier, validated against problems with known solutions."""

import math

import numpy as np
import pytest

from secgame.reference import (affine_vi_10d, binding_budget_model,
                               binding_budget_solution, decoupled_duopoly_model,
                               scalar_affine_vi, single_retailer_model,
                               single_retailer_solution)
from secgame.scenarios import experiment1, experiment5
from secgame.solver import (DegenerateDirectionError, SolverConfig, SolverNumericError,
                            best_response_solve, correct, predict, solve,
                            verify_equilibrium)
from secgame.vi import BoxVi, DecisionVector, ViProblem


class TestConfig:
    def test_defaults(self):
        cfg = SolverConfig()
        assert cfg.beta0 == 1.0 and cfg.nu == 0.9 and cfg.mu == 0.3
        assert cfg.rho == 1.9 and cfg.tol == 1e-7 and cfg.max_iter == 200_000

    @pytest.mark.parametrize("kwargs", [
        {"mu": 0.95},            # mu must stay below nu
        {"nu": 1.0},
        {"rho": 2.0},
        {"rho": 0.0},
        {"tol": 0.0},
        {"beta0": 0.0},
        {"max_iter": -1},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            SolverConfig(**kwargs)


class TestPredict:
    def test_scalar_affine_step(self):
        vi, _ = scalar_affine_vi()
        x = np.array([0.0])
        x_tilde, f_tilde, r = predict(vi, x, 1.0)
        assert x_tilde[0] == pytest.approx(3.0)
        assert r == pytest.approx(1.0)
        assert f_tilde[0] == pytest.approx(0.0)

    def test_at_solution_flags_zero_ratio(self):
        vi, x_star = scalar_affine_vi()
        x_tilde, _, r = predict(vi, x_star, 1.0)
        assert r == 0.0
        assert np.array_equal(x_tilde, x_star)

    def test_ratio_bounded_by_lipschitz_constant(self):
        vi, _, A, _ = affine_vi_10d()
        L = float(np.linalg.norm(A, 2))
        rng = np.random.default_rng(0)
        for _ in range(50):
            x = rng.uniform(0.0, 10.0, size=10)
            beta = rng.uniform(0.01, 2.0)
            _, _, r = predict(vi, x, beta)
            assert r <= beta * L + 1e-9

    def test_rejects_nonpositive_beta(self):
        vi, _ = scalar_affine_vi()
        with pytest.raises(ValueError):
            predict(vi, np.array([0.0]), 0.0)


class TestCorrect:
    def test_scalar_affine_hand_values(self):
        # beta = 0.5 from x = 0: x_tilde = 1.5, d = -0.75, delta = 2,
        # x+ = 0 - 1.9*2*(-0.75) = 2.85
        vi, _ = scalar_affine_vi()
        x = np.array([0.0])
        x_tilde, f_tilde, r = predict(vi, x, 0.5)
        assert x_tilde[0] == pytest.approx(1.5)
        out = correct(x, x_tilde, 0.5, vi.operator(x), f_tilde, 1.9)
        assert out[0] == pytest.approx(2.85)

    def test_degenerate_direction_raises(self):
        # beta = 1 makes d = (x - xt) - (F(x) - F(xt)) vanish for F(x) = x - 3.
        vi, _ = scalar_affine_vi()
        x = np.array([0.0])
        x_tilde, f_tilde, _ = predict(vi, x, 1.0)
        with pytest.raises(DegenerateDirectionError):
            correct(x, x_tilde, 1.0, vi.operator(x), f_tilde, 1.9)

    def test_constant_operator_collapses(self):
        x = np.array([4.0, 2.0])
        x_tilde = np.array([1.0, 1.0])
        f = np.array([0.5, 0.5])
        out = correct(x, x_tilde, 0.7, f, f, 1.9)
        assert np.allclose(out, x - 1.9 * (x - x_tilde))


class TestSolveAffine:
    def test_10d_reaches_analytic_solution(self):
        vi, x_star, _, _ = affine_vi_10d()
        report = solve(vi, SolverConfig(tol=1e-9))
        assert report.converged
        assert report.iterations < 5000
        assert np.max(np.abs(report.solution - x_star)) <= 1e-6

    def test_10d_construction_is_certified(self):
        # The complementarity pattern itself certifies x_star independently
        # of the solver: F > 0 on lower-active, F < 0 on upper-active,
        # F = 0 inside.
        vi, x_star, A, b = affine_vi_10d()
        F = A @ x_star + b
        assert np.all(F[:2] > 0) and np.all(F[-2:] < 0)
        assert np.allclose(F[2:8], 0.0, atol=1e-12)
        eigs = np.linalg.eigvalsh(A)
        assert eigs.min() > 0

    def test_fejer_distance_nonincreasing(self):
        vi, x_star, _, _ = affine_vi_10d()
        dists = []
        solve(vi, SolverConfig(tol=1e-9),
              iterate_callback=lambda k, x: dists.append(np.linalg.norm(x - x_star)))
        diffs = np.diff(np.array(dists))
        assert np.all(diffs <= 1e-10)

    def test_scalar_affine(self):
        vi, x_star = scalar_affine_vi()
        report = solve(vi, SolverConfig(tol=1e-10), x0=np.array([9.0]))
        assert report.converged
        assert report.solution[0] == pytest.approx(3.0, abs=1e-9)

    def test_infinite_tol_returns_initial_point(self):
        vi, _ = scalar_affine_vi()
        report = solve(vi, SolverConfig(tol=math.inf), x0=np.array([7.0]))
        assert report.converged
        assert report.iterations == 0
        assert report.solution[0] == 7.0

    def test_max_iter_exhaustion_reports_not_raises(self):
        vi, _ = scalar_affine_vi()
        report = solve(vi, SolverConfig(tol=1e-12, max_iter=1), x0=np.array([0.0]))
        assert not report.converged
        assert report.final_residual > 1e-12

    def test_accepted_ratios_stay_below_upper_limit(self):
        vi, _, _, _ = affine_vi_10d()
        cfg = SolverConfig(tol=1e-8)
        report = solve(vi, cfg, record_trace=True)
        assert report.trace, "expected a nonempty trace"
        for _, beta, r in report.trace:
            assert beta > 0
            assert r <= cfg.nu + 1e-12

    def test_determinism_bitwise(self):
        vi, _, _, _ = affine_vi_10d()
        r1 = solve(vi, SolverConfig(tol=1e-9), record_trace=True)
        r2 = solve(vi, SolverConfig(tol=1e-9), record_trace=True)
        assert np.array_equal(r1.solution, r2.solution)
        assert r1.trace == r2.trace
        assert r1.iterations == r2.iterations

    def test_numeric_error_carries_iteration(self):
        def bad_operator(x):
            return np.full_like(x, np.nan)

        vi = BoxVi(bad_operator, [0.0], [1.0])
        with pytest.raises(SolverNumericError) as err:
            solve(vi, SolverConfig(), x0=np.array([0.5]))
        assert err.value.iteration == 0


class TestBindingBudget:
    """The multiplier must grow while the budget is violated, pushing the
    level onto the constraint; this pins the sign convention of the budget
    component of the operator."""

    def test_converges_to_constrained_optimum(self):
        model = binding_budget_model()
        problem = ViProblem(model)
        report = solve(problem, SolverConfig(tol=1e-9))
        assert report.converged
        expected = binding_budget_solution()
        assert np.max(np.abs(report.solution - expected)) < 1e-5
        assert report.solution[2] > 0.1  # multiplier strictly active

    def test_complementary_slackness_and_feasibility(self):
        model = binding_budget_model()
        problem = ViProblem(model)
        report = solve(problem, SolverConfig(tol=1e-9))
        point = problem.split(report.solution)
        G = -math.log(1.0 - point.u[0]) - model.retailers[0].B
        assert G <= 1e-8
        assert point.lam[0] * abs(G) <= 1e-6

    def test_slack_budget_keeps_multiplier_at_zero(self):
        problem = ViProblem(single_retailer_model())
        report = solve(problem, SolverConfig(tol=1e-9))
        point = problem.split(report.solution)
        assert report.converged
        assert point.lam[0] == pytest.approx(0.0, abs=1e-7)


class TestSingleRetailer:
    def test_solve_matches_closed_form(self):
        problem = ViProblem(single_retailer_model())
        report = solve(problem, SolverConfig(tol=1e-10))
        assert np.max(np.abs(report.solution - single_retailer_solution())) < 1e-8

    def test_best_response_equals_solve_exactly(self):
        # With one retailer the single block is the whole problem, so the
        # first sweep replays the same deterministic iteration.
        problem = ViProblem(single_retailer_model())
        cfg = SolverConfig(tol=1e-10)
        direct = solve(problem, cfg)
        br = best_response_solve(problem, cfg)
        assert br.converged
        assert np.max(np.abs(br.solution - direct.solution)) < 1e-8


class TestBestResponse:
    def test_decoupled_blocks_settle_in_one_sweep(self):
        model = decoupled_duopoly_model()
        problem = ViProblem(model)
        x0 = np.zeros(problem.dim)
        report = best_response_solve(problem, SolverConfig(tol=1e-9), x0=x0)
        assert report.converged
        # Sweep 1 lands on the equilibrium; sweep 2 only confirms it.
        assert report.iterations <= 2
        direct = solve(problem, SolverConfig(tol=1e-9), x0=x0)
        assert np.max(np.abs(report.solution - direct.solution)) < 1e-6

    def test_exp5_agreement_with_direct_solve(self):
        scen = experiment5()
        problem = ViProblem(scen.model)
        br = best_response_solve(problem, scen.config, x0=scen.x0.flat())
        direct = solve(problem, scen.config, x0=scen.x0.flat())
        assert br.converged and direct.converged
        b = problem.split(br.solution)
        d = problem.split(direct.solution)
        assert np.max(np.abs(b.Q - d.Q)) < 1e-4
        assert np.max(np.abs(b.u - d.u)) < 1e-4

    def test_sweep_cap_reports_unconverged(self):
        scen = experiment1()
        problem = ViProblem(scen.model)
        report = best_response_solve(problem, scen.config, x0=scen.x0.flat(),
                                     max_sweeps=1)
        assert not report.converged
        assert report.iterations == 1


class TestVerifyEquilibrium:
    def test_known_argmax_has_no_improvement(self):
        model = single_retailer_model()
        sol = single_retailer_solution()
        point = DecisionVector(np.array([[sol[0]]]), np.array([sol[1]]),
                               np.array([sol[2]]))
        audit = verify_equilibrium(model, point, grid_density=50)
        assert audit.certified
        assert audit.max_improvement <= 1e-9

    def test_perturbed_point_reports_improvement(self):
        scen = experiment1()
        problem = ViProblem(scen.model)
        report = solve(problem, scen.config, x0=scen.x0.flat())
        point = problem.split(report.solution)
        point.u[0] -= 0.2
        audit = verify_equilibrium(scen.model, point, grid_density=40)
        assert audit.improvements[0] > 1e-2
        assert not audit.certified

    def test_grid_density_validation(self):
        model = single_retailer_model()
        point = DecisionVector(np.zeros((1, 1)), np.zeros(1), np.zeros(1))
        with pytest.raises(ValueError):
            verify_equilibrium(model, point, grid_density=1)
