import math

import numpy as np
import pytest

import capbound as cb
from capbound.continuous import _lipschitz_terms, refined_sup_f
from capbound.errors import (
    BudgetExceeded,
    EpsilonTooLarge,
    InvalidOrder,
    NeedLargerM,
    QuadratureNotConverged,
)


def uniform_output_channel(K, peak=2.0):
    """Kernel independent of x with K equiprobable outputs (zero tail)."""

    def kernel(x, i):
        x = np.asarray(x, dtype=float)
        return np.full_like(x, 1.0 / K) if i < K else np.zeros_like(x)

    def tail_mass(x, M):
        x = np.asarray(x, dtype=float)
        return np.full_like(x, max(0, K - M) / K)

    return cb.ContinuousChannel(
        kernel=kernel, peak=peak, lipschitz_L=0.0, label="uniform",
        tail_mass=tail_mass, tail_sup=lambda i: 1.0 / K if i < K else 0.0,
    )


def discrete_mutual_information(p, rows):
    """Double-sum oracle for an input supported on finitely many atoms."""
    q = rows.T @ p
    total = 0.0
    for i in range(rows.shape[0]):
        for j in range(rows.shape[1]):
            if p[i] > 0 and rows[i, j] > 0:
                total += p[i] * rows[i, j] * math.log2(rows[i, j] / q[j])
    return total


class TestTruncate:
    def test_zero_tail_identity(self):
        trunc = cb.truncate(uniform_output_channel(4), 4, quad_nodes=64)
        np.testing.assert_allclose(trunc.kernel_nodes, 0.25, atol=1e-15)
        assert trunc.gamma_M == pytest.approx(0.25, abs=1e-12)

    def test_poisson_rows_sum_to_one(self):
        base = cb.poisson_channel(1.0, 1.0)
        trunc = cb.truncate(base, 16, quad_nodes=128)
        rows = trunc.kernel_rows(np.array([0.0, 0.5, 1.0]))
        np.testing.assert_allclose(rows.sum(axis=1), 1.0, atol=1e-12)
        np.testing.assert_allclose(trunc.kernel_nodes.sum(axis=1), 1.0, atol=1e-10)

    def test_poisson_gamma_bounds(self):
        base = cb.poisson_channel(1.0, 1.0)
        trunc = cb.truncate(base, 16, quad_nodes=128)
        # series oracle: tail at x=0 (the minimizer), divided by M
        series = math.fsum(
            math.exp(-1.0) / math.factorial(j) for j in range(16, 80)
        )
        assert trunc.tail_lb == pytest.approx(series / 16, rel=1e-10)
        assert trunc.gamma_M >= series / 16 * (1 - 1e-12)
        assert trunc.gamma_M <= trunc.grid_min


class TestTailBounds:
    def test_direct_below_closed_form_k1(self):
        base = cb.poisson_channel(1.0, 1.0)
        direct = cb.tail_Rk(base, 16, 1.0, method="direct_sum")
        closed = cb.tail_Rk(base, 16, 1.0, method="poisson_closed_form")
        assert direct.value <= closed.value * (1 + 1e-12)
        # alpha degenerates to 1 at k=1: bound is (A+eta)^M / M!
        assert closed.value == pytest.approx(2.0**16 / math.factorial(16), rel=1e-12)

    def test_direct_below_closed_form_khalf(self):
        base = cb.poisson_channel(1.0, 1.0)
        direct = cb.tail_Rk(base, 20, 0.5, method="direct_sum")
        closed = cb.tail_Rk(base, 20, 0.5, method="poisson_closed_form")
        assert direct.value <= closed.value * (1 + 1e-12)

    def test_zero_tail_channel(self):
        res = cb.tail_Rk(uniform_output_channel(4), 4, 1.0)
        assert res.value == 0.0

    def test_invalid_order(self):
        base = cb.poisson_channel(1.0, 1.0)
        for k in (0.0, 1.5, -0.2):
            with pytest.raises(InvalidOrder):
                cb.tail_Rk(base, 16, k)

    def test_closed_form_needs_large_m(self):
        with pytest.raises(NeedLargerM):
            cb.tail_Rk(cb.poisson_channel(10.0, 1.0), 5, 0.5,
                       method="poisson_closed_form")


class TestTruncationErrorBound:
    def test_zero_tail(self):
        assert cb.truncation_error_bound(uniform_output_channel(4), 4, 0.5) == 0.0

    def test_reference_magnitude_8db(self):
        base = cb.poisson_channel(10**0.8, 1.0)
        err = cb.truncation_error_bound(base, 36, 0.5)
        assert 5e-4 <= err <= 1.1e-3

    def test_k_range_checked(self):
        base = cb.poisson_channel(1.0, 1.0)
        with pytest.raises(InvalidOrder):
            cb.truncation_error_bound(base, 16, 1.0)

    def test_dominates_measured_difference(self):
        base = cb.poisson_channel(1.0, 1.0)
        M = 8
        t_small = cb.truncate(base, M, quad_nodes=64)
        t_big = cb.truncate(base, 4 * M, quad_nodes=64)
        xs = np.linspace(0.0, 1.0, 50)
        rows_small = t_small.kernel_rows(xs)
        rows_big = t_big.kernel_rows(xs)
        bound = (cb.truncation_error_bound(base, M, 0.5)
                 + cb.truncation_error_bound(base, 4 * M, 0.5))
        rng = np.random.default_rng(40)
        for _ in range(100):
            p = rng.dirichlet(np.ones(xs.size))
            measured = abs(discrete_mutual_information(p, rows_big)
                           - discrete_mutual_information(p, rows_small))
            assert measured <= bound


class TestSchedule:
    def test_formula_invariants(self):
        trunc = cb.truncate(cb.poisson_channel(1.0, 1.0), 16, quad_nodes=128)
        eps = 0.01
        sched = cb.continuous_schedule(trunc, None, eps)
        assert sched.nu == pytest.approx(
            (eps / sched.alpha) / math.log2(sched.alpha / eps), rel=1e-12
        )
        want_n = math.ceil(
            (1 / eps) * math.sqrt(8 * sched.d1 * sched.alpha)
            * math.sqrt(math.log2(1 / eps) + math.log2(sched.alpha) + 0.25)
        )
        assert sched.n_min == want_n
        assert sched.alpha == pytest.approx(2 * (sched.t1 + sched.t2 + 1), rel=1e-12)

    def test_monotone_in_epsilon(self):
        trunc = cb.truncate(cb.poisson_channel(1.0, 1.0), 16, quad_nodes=128)
        s1 = cb.continuous_schedule(trunc, None, 0.02)
        s2 = cb.continuous_schedule(trunc, None, 0.002)
        assert s2.nu < s1.nu
        assert s2.n_min > s1.n_min

    def test_epsilon_too_large(self):
        trunc = cb.truncate(uniform_output_channel(4), 4, quad_nodes=64)
        # L = 0 makes alpha = 2, so anything >= 0.5 must be rejected
        with pytest.raises(EpsilonTooLarge):
            cb.continuous_schedule(trunc, None, 0.5)

    def test_gap_bound_continuous_at_branch(self):
        for t1, t2 in ((2.0, 0.0), (5.0, 0.5), (0.3, 0.9)):
            nu_star = t1 / (1.0 - t2)
            below = cb.smoothing_gap_bound(nu_star * (1 - 1e-9), t1, t2)
            above = cb.smoothing_gap_bound(nu_star * (1 + 1e-9), t1, t2)
            assert abs(below - above) < 1e-7 * (1 + abs(below))

    def test_gap_bound_peak_only_reduction(self):
        # with no cost term the bound is nu*(log2(Lf*rho/nu)+1) below the branch
        trunc = cb.truncate(cb.poisson_channel(1.0, 1.0), 16, quad_nodes=128)
        t1, t2, l_f = _lipschitz_terms(trunc, None)
        assert t2 == 0.0
        assert t1 == pytest.approx(l_f * trunc.rho, rel=1e-12)
        nu = 1e-3
        want = nu * (math.log2(l_f * trunc.rho / nu) + 1.0)
        assert cb.smoothing_gap_bound(nu, t1, t2) == pytest.approx(want, rel=1e-12)

    def test_lipschitz_terms_cost_requires_interior_budget(self):
        trunc = cb.truncate(cb.poisson_channel(1.0, 1.0), 16, quad_nodes=128)
        cost = cb.ContinuousCost(fn=lambda x: x, budget=2.0, lipschitz=1.0)
        with pytest.raises(cb.Infeasible):
            cb.continuous_schedule(trunc, cost, 0.01)


class TestEvalGnuContinuous:
    def test_constant_kernel_degenerate(self):
        base = uniform_output_channel(4, peak=2.0)
        trunc = cb.truncate(base, 4, quad_nodes=64)
        lam = np.array([0.1, -0.3, 0.7, 0.2])
        const = 0.25 * lam.sum() - math.log2(4)
        for nu in (1.0, 0.01):
            val, grad, p = cb.eval_G_nu_continuous(lam, trunc, nu)
            assert val == pytest.approx(const, abs=1e-10)
            np.testing.assert_allclose(p, 1.0 / 2.0, atol=1e-10)

    def test_gradient_sums_to_one(self):
        trunc = cb.truncate(cb.poisson_channel(1.0, 1.0), 16, quad_nodes=128)
        rng = np.random.default_rng(50)
        for _ in range(5):
            lam = rng.normal(size=16)
            _, grad, _ = cb.eval_G_nu_continuous(lam, trunc, 0.05)
            assert grad.sum() == pytest.approx(1.0, abs=1e-10)

    def test_finite_differences(self):
        trunc = cb.truncate(cb.poisson_channel(1.0, 1.0), 16, quad_nodes=256)
        rng = np.random.default_rng(51)
        lam = rng.normal(size=16) * 0.5
        nu = 0.01
        _, grad, _ = cb.eval_G_nu_continuous(lam, trunc, nu)
        fd = np.zeros(16)
        h = 1e-6
        for i in range(16):
            e = np.zeros(16)
            e[i] = h
            vp, _, _ = cb.eval_G_nu_continuous(lam + e, trunc, nu)
            vm, _, _ = cb.eval_G_nu_continuous(lam - e, trunc, nu)
            fd[i] = (vp - vm) / (2 * h)
        np.testing.assert_allclose(grad, fd, rtol=1e-5, atol=1e-7)

    def test_large_nu_uniform_density(self):
        trunc = cb.truncate(cb.poisson_channel(1.0, 1.0), 16, quad_nodes=128)
        # deviation scales like (f spread)/nu, so crank nu for the tight check
        _, _, p = cb.eval_G_nu_continuous(np.zeros(16), trunc, 1e3)
        np.testing.assert_allclose(p, 1.0, atol=1e-3)  # density 1/A with A=1
        _, _, p = cb.eval_G_nu_continuous(np.zeros(16), trunc, 1e7)
        np.testing.assert_allclose(p, 1.0, atol=1e-6)

    def test_quadrature_verification_passes_when_converged(self):
        trunc = cb.truncate(cb.poisson_channel(1.0, 1.0), 16, quad_nodes=512)
        val, _, _ = cb.eval_G_nu_continuous(np.zeros(16), trunc, 0.01,
                                            verify_quadrature=True)
        assert math.isfinite(val)

    def test_quadrature_verification_fails_on_coarse_grid(self):
        trunc = cb.truncate(cb.poisson_channel(1.0, 1.0), 16, quad_nodes=8)
        with pytest.raises(QuadratureNotConverged):
            cb.eval_G_nu_continuous(np.full(16, 3.0), trunc, 1e-4,
                                    verify_quadrature=True)

    def test_constrained_moments(self):
        trunc = cb.truncate(cb.poisson_channel(1.0, 1.0), 8, quad_nodes=256)
        cost = cb.ContinuousCost(fn=lambda x: x, budget=0.4, lipschitz=1.0)
        rng = np.random.default_rng(52)
        lam = rng.normal(size=8) * 0.3
        _, grad, p = cb.eval_G_nu_continuous(lam, trunc, 0.05, cost=cost)
        qw = trunc.weights
        assert qw @ p == pytest.approx(1.0, abs=1e-10)
        assert qw @ (trunc.nodes * p) == pytest.approx(0.4, abs=1e-8)
        fd = np.zeros(8)
        h = 1e-6
        for i in range(8):
            e = np.zeros(8)
            e[i] = h
            vp, _, _ = cb.eval_G_nu_continuous(lam + e, trunc, 0.05, cost=cost)
            vm, _, _ = cb.eval_G_nu_continuous(lam - e, trunc, 0.05, cost=cost)
            fd[i] = (vp - vm) / (2 * h)
        np.testing.assert_allclose(grad, fd, rtol=1e-5, atol=1e-7)

    def test_kernel_lipschitz_sampled(self):
        trunc = cb.truncate(cb.poisson_channel(1.0, 1.0), 16, quad_nodes=128)
        t1, _, l_f = _lipschitz_terms(trunc, None)
        radius = 16 * max(math.log2(1 / trunc.gamma_M), 1 / math.log(2))
        rng = np.random.default_rng(53)
        for _ in range(20):
            lam = rng.normal(size=16)
            lam *= min(1.0, radius / np.linalg.norm(lam))
            f = trunc.f_values(lam)
            i, j = rng.integers(0, trunc.nodes.size, size=2)
            if i == j:
                continue
            dx = abs(trunc.nodes[i] - trunc.nodes[j])
            assert abs(f[i] - f[j]) <= l_f * dx * (1 + 1e-9)


class TestLapidoth:
    def test_reference_point_10db(self):
        assert abs(cb.lapidoth_lb(10.0, 1.0) - 0.273875) <= 1e-3

    def test_negative_below_crossing(self):
        val = cb.lapidoth_lb(10**0.85, 1.0)
        assert val < 0
        assert abs(val - (-0.0043)) <= 5e-4

    def test_strictly_increasing(self):
        vals = [cb.lapidoth_lb(10 ** (db / 10.0), 1.0) for db in np.arange(9, 14.1, 0.5)]
        assert all(np.diff(vals) > 0)


class TestSolvePoisson:
    def test_small_run_consistency(self):
        rep = cb.solve_poisson(1.0, 1.0, M=16, iterations=1500, nu=0.01)
        assert rep.c_lb <= rep.c_ub + 1e-9
        assert rep.mutual_info <= rep.dual_value + 1e-9
        assert rep.g_nu - 1e-12 <= rep.g_sup <= rep.g_nu + rep.iota + 1e-9
        assert rep.c_lb_certified <= rep.c_ub_certified + 1e-9
        assert rep.c_ub >= rep.lapidoth  # lapidoth is far negative at 0 dB

    def test_constrained_run(self):
        cost = cb.ContinuousCost(fn=lambda x: x, budget=0.3, lipschitz=1.0)
        rep = cb.solve_poisson(1.0, 1.0, M=12, iterations=600, nu=0.02, cost=cost)
        assert rep.c_lb <= rep.c_ub + 1e-9
        free = cb.solve_poisson(1.0, 1.0, M=12, iterations=600, nu=0.02)
        assert rep.mutual_info <= free.dual_value + 1e-6

    def test_budget_exceeded(self):
        with pytest.raises(BudgetExceeded):
            cb.solve_poisson(1.0, 1.0, epsilon=1e-6, M=16, iteration_cap=1000)

    def test_truncation_choice_in_range(self):
        base = cb.poisson_channel(1.0, 1.0)
        M = cb.choose_truncation_level(base, 0.5, budget_iters=20000, max_M=64)
        assert 2 <= M <= 64

    def test_refined_sup_tracks_node_max(self):
        trunc = cb.truncate(cb.poisson_channel(1.0, 1.0), 8, quad_nodes=128)
        lam = np.linspace(-0.5, 0.5, 8)
        node_max = float(trunc.f_values(lam).max())
        sup = refined_sup_f(trunc, lam)
        assert sup >= node_max - 1e-12


class TestSweep:
    def test_two_point_sweep(self):
        rows = cb.poisson_sweep([0.0, 1.0], 1.0, iteration_cap=1200)
        assert len(rows) == 2
        for row in rows:
            assert set(row) == {"A_dB", "M", "nu", "iterations", "c_lb", "c_ub",
                                "E", "lapidoth_lb"}
            assert row["c_lb"] <= row["c_ub"]
            assert row["c_ub"] >= row["lapidoth_lb"]
