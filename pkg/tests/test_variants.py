import numpy as np
import pytest

from conftest import random_instance, random_spd
from sdridge.errors import ConvexityError, DataError, ParameterError, TangentIdentityError
from sdridge.ridge import (
    Dataset,
    GeneralizedRidge,
    KernelRidge,
    OrdinaryRidge,
    RidgeSolver,
    fit_ridge,
)
from sdridge.structural import optimal_mix, risk_slope
from sdridge.variants import (
    FreshXProblem,
    OracleRisk,
    TestSetRisk as HeldOutRisk,
    fresh_affine_components,
    fresh_mixed_scan,
    freshx_fit,
    multiround,
    smoother_sd,
    tangent_residual,
)


def isotropic_instance(seed, n=400, p=200, noise=1.0):
    rng = np.random.default_rng(seed)
    beta = rng.standard_normal(p) / np.sqrt(p)
    X = rng.standard_normal((n, p))
    y = X @ beta + np.sqrt(noise) * rng.standard_normal(n)
    return Dataset(X, y), OracleRisk(np.eye(p), beta, noise)


class TestMultiround:
    def test_recursive_monotone_oracle(self):
        data, oracle = isotropic_instance(0)
        states = multiround(data, 5.0, 5, "recursive", oracle)
        risks = states[-1].risk_history
        assert len(states) == 6 and len(risks) == 6
        assert np.all(np.diff(risks) <= 1e-10)

    def test_recursive_monotone_test_set(self, rng):
        data, _ = random_instance(rng, 60, 20)
        test, _ = random_instance(np.random.default_rng(1), 200, 20)
        for lam in (0.05, 1.0, 20.0):
            risks = multiround(data, lam, 4, "recursive", test)[-1].risk_history
            assert np.all(np.diff(risks) <= 1e-10)

    def test_first_round_is_one_round_optimum(self):
        data, oracle = isotropic_instance(1, 120, 60)
        s = RidgeSolver(data)
        rc = oracle.components(s.coef(2.0), s.coef(2.0, power=2))
        states = multiround(data, 2.0, 1, "recursive", oracle, solver=s)
        assert states[1].xi_history[0] == pytest.approx(optimal_mix(rc).xi_star, rel=1e-12)
        assert states[1].risk == pytest.approx(optimal_mix(rc).r_sd_star, rel=1e-10)

    def test_round_wise_sign_rule(self):
        data, oracle = isotropic_instance(2, 120, 60)
        for lam in (0.1, 10.0):
            st = multiround(data, lam, 4, "recursive", oracle)[-1]
            for xi, rc, deg in zip(st.xi_history, st.components_history, st.degenerate_history):
                slope = risk_slope(rc, lam)
                if abs(slope) > 1e-8 and not deg:
                    assert np.sign(xi) == -np.sign(slope)

    def test_stationary_round(self):
        # teacher fitted values reproduce the labels exactly -> PD equals teacher
        n = 5
        data = Dataset(np.eye(n) * np.sqrt(n), np.zeros(n))
        st = multiround(data, 1.0, 2, "recursive", HeldOutRisk(data))[-1]
        assert st.xi_history == [0.0, 0.0] and all(st.degenerate_history)
        assert st.risk_history[0] == st.risk_history[-1]

    def test_anchored_can_exceed_one_round(self):
        data, oracle = isotropic_instance(0)
        found = False
        for lam in np.geomspace(1e-2, 1e2, 9):
            st = multiround(data, lam, 2, "anchored", oracle)[-1]
            if st.risk_history[2] > st.risk_history[1] + 1e-12:
                found = True
        assert found

    def test_gcv_source_runs_and_tracks_labels(self, rng):
        data, _ = random_instance(rng, 80, 30)
        states = multiround(data, 0.5, 3, "anchored")
        assert len(states) == 4 and all(np.isfinite(s.risk) for s in states)

    def test_validation(self, instance):
        data, _ = instance
        with pytest.raises(ParameterError):
            multiround(data, 1.0, 0)
        with pytest.raises(ParameterError):
            multiround(data, 1.0, 2, mode="sideways")
        with pytest.raises(ParameterError):
            multiround(data, 1.0, 2, risk_source="oracle")


class TestFresh:
    @pytest.fixture
    def problem(self, rng):
        data, _ = random_instance(rng, 40, 12)
        fresh = rng.standard_normal((55, 12))
        return FreshXProblem(data, fresh, 0.3)

    def test_zero_weight_is_teacher(self, problem):
        for mode in ("affine", "mixed_loss"):
            assert np.allclose(problem.student(0.0, mode).beta, problem.teacher, atol=1e-12)

    def test_same_design_collapses(self, instance):
        data, _ = instance
        st = freshx_fit(data, data.X, 0.4, 1.0, mode="mixed_loss")
        assert np.allclose(st.beta, RidgeSolver(data).coef(0.4, power=2), atol=1e-10)
        aff = freshx_fit(data, data.X, 0.4, 1.0, mode="affine")
        assert np.allclose(aff.beta, RidgeSolver(data).coef(0.4, power=2), atol=1e-10)

    def test_mixed_loss_matches_stacked_least_squares(self, problem):
        xi, lam = 0.3, problem.lam
        X, y, Xf = problem.train.X, problem.train.y, problem.fresh_X
        n, m, p = X.shape[0], Xf.shape[0], X.shape[1]
        A = np.vstack([np.sqrt((1 - xi) / n) * X, np.sqrt(xi / m) * Xf, np.sqrt(lam) * np.eye(p)])
        b = np.concatenate([np.sqrt((1 - xi) / n) * y, np.sqrt(xi / m) * Xf @ problem.teacher, np.zeros(p)])
        direct = np.linalg.lstsq(A, b, rcond=None)[0]
        assert np.allclose(problem.mixed_loss(xi).beta, direct, atol=1e-10)

    def test_normal_equations(self, problem):
        for xi in (-0.3, 0.7, 1.3):
            assert np.linalg.eigvalsh(problem.hessian(xi))[0] > 1e-10
            st = problem.mixed_loss(xi)
            rhs = (1 - xi) * problem.v_hat + xi * problem.sigma_tilde @ problem.teacher
            assert np.allclose(problem.hessian(xi) @ st.beta, rhs, atol=1e-10)

    def test_affine_uses_fresh_refit(self, problem):
        p = problem.train.p
        fresh_pd = np.linalg.solve(problem.sigma_tilde + problem.lam * np.eye(p),
                                   problem.sigma_tilde @ problem.teacher)
        assert np.allclose(problem.affine(2.0).beta, -problem.teacher + 2 * fresh_pd, atol=1e-10)

    def test_nonconvex_rejected(self, rng):
        data, _ = random_instance(rng, 40, 30)
        fresh = 3.0 * rng.standard_normal((35, 30))
        prob = FreshXProblem(data, fresh, 0.01)
        with pytest.raises(ConvexityError, match="not strictly convex"):
            prob.mixed_loss(-50.0)
        assert not prob.convex_fast(-50.0)

    def test_affine_quadratic_and_mixed_not_affine(self, problem, rng):
        sigma = np.eye(problem.train.p)
        beta = rng.standard_normal(problem.train.p)
        oracle = OracleRisk(sigma, beta, 1.0)
        xs = np.linspace(-3, 3, 61)
        aff = np.array([oracle.risk(problem.affine(x).beta) for x in xs])
        coeffs = np.polyfit([-1.0, 0.0, 1.0], [oracle.risk(problem.affine(x).beta) for x in (-1, 0, 1)], 2)
        assert np.max(np.abs(np.polyval(coeffs, xs) - aff)) <= 1e-10 * max(1.0, aff.max())
        b0, b1 = problem.mixed_loss(0.0).beta, problem.mixed_loss(1.0).beta
        dev = max(np.linalg.norm(problem.mixed_loss(x).beta - ((1 - x) * b0 + x * b1)) for x in (0.25, 0.5, 0.75))
        assert dev > 1e-6

    def test_affine_components_and_optimum(self, problem, rng):
        beta = rng.standard_normal(problem.train.p)
        oracle = OracleRisk(np.eye(problem.train.p), beta, 1.0)
        mix = optimal_mix(fresh_affine_components(problem, oracle))
        xs = np.linspace(mix.xi_star - 1, mix.xi_star + 1, 201)
        assert mix.r_sd_star <= min(oracle.risk(problem.affine(x).beta) for x in xs) + 1e-12

    def test_scan(self, problem, rng):
        beta = rng.standard_normal(problem.train.p)
        oracle = OracleRisk(np.eye(problem.train.p), beta, 1.0)
        scan = fresh_mixed_scan(problem, np.linspace(-5, 5, 201), oracle.risk)
        assert scan.best_risk == pytest.approx(np.nanmin(scan.risks))
        assert (scan.best_xi, scan.best_risk) in scan.local_minima
        assert np.all(np.isnan(scan.risks) == ~scan.convex)

    def test_bad_fresh_design(self, instance):
        data, _ = instance
        with pytest.raises(DataError):
            FreshXProblem(data, np.ones((5, data.p + 1)), 1.0)
        with pytest.raises(ParameterError):
            freshx_fit(data, np.ones((5, data.p)), 1.0, 0.5, mode="other")


class TestSmoothers:
    @pytest.fixture
    def split(self, rng):
        data, _ = random_instance(rng, 50, 6, noise=0.5)
        test, _ = random_instance(np.random.default_rng(7), 300, 6, noise=0.5)
        return data, test

    def test_tangent_residual_small(self, split, rng):
        data, _ = split
        for fam in (OrdinaryRidge(data), GeneralizedRidge(data.X, random_spd(rng, 6)), KernelRidge(data.X)):
            assert tangent_residual(fam, data.y, 0.1) <= 1e-6

    def test_identity_penalty_matches_ordinary(self, split):
        data, test = split
        a = smoother_sd(GeneralizedRidge(data.X, np.eye(6)), data, 0.2, test)
        b = smoother_sd(OrdinaryRidge(data), data, 0.2, test)
        assert a.xi_star == pytest.approx(b.xi_star, rel=1e-8)
        assert a.r_sd_star == pytest.approx(b.r_sd_star, rel=1e-10)

    def test_kernel_improves_on_grid(self, split):
        data, test = split
        fam = KernelRidge(data.X)
        for lam in np.geomspace(1e-3, 10, 9):
            res = smoother_sd(fam, data, lam, test)
            assert res.r_sd_star <= res.r_teacher + 1e-12
            assert res.r_teacher == pytest.approx(np.mean((test.y - fam.fit(lam, data.y).predict(test.X)) ** 2))

    def test_broken_family_rejected(self, split):
        data, test = split

        class Broken(OrdinaryRidge):
            kind = "broken"

            def coef(self, lam, labels=None, power=1):
                return super().coef(lam, labels, power=1 if power == 2 else power) * (1 + 0.1 * (power == 2))

        with pytest.raises(TangentIdentityError, match="tangent identity"):
            smoother_sd(Broken(data), data, 0.3, test)

    def test_mismatched_data(self, split, rng):
        data, test = split
        other, _ = random_instance(rng, 20, 6)
        with pytest.raises(DataError):
            smoother_sd(OrdinaryRidge(data), other, 0.3, test)

    def test_fit_teacher_consistent(self, split):
        data, _ = split
        assert np.allclose(OrdinaryRidge(data).fit(0.3, data.y).coef, fit_ridge(data, 0.3).coef)
