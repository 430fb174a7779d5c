import math

import numpy as np
import pytest

import capbound as cb


def binary_entropy(p):
    return -(p * math.log2(p) + (1.0 - p) * math.log2(1.0 - p))


def test_bsc_value():
    rep = cb.ba_solve(cb.make_bsc(0.1), epsilon=1e-4)
    assert abs(rep.c_lb - (1.0 - binary_entropy(0.1))) <= 1e-4


def test_bec_value():
    rep = cb.ba_solve(cb.make_bec(0.4), epsilon=1e-4)
    assert abs(rep.c_lb - 0.6) <= 1e-4


def test_report_invariant():
    rep = cb.ba_solve(cb.make_random(8, 4, seed=1), epsilon=0.01)
    assert rep.apriori_err == pytest.approx(math.log2(8) / rep.iterations, abs=1e-12)
    assert rep.iterations == math.ceil(math.log2(8) / 0.01)


def test_iteration_count_doubles_when_eps_halves():
    # log2(16)/eps is integral for these eps, so the doubling is exact.
    assert cb.ba_iterations(16, 0.1) == 40
    assert cb.ba_iterations(16, 0.05) == 80


def test_ascent_property():
    values = []
    cb.ba_solve(cb.make_random(12, 7, seed=2), epsilon=0.02,
                on_iterate=lambda k, v: values.append(v))
    diffs = np.diff(values)
    assert np.all(diffs >= -1e-12)


def test_agrees_with_dual_solver():
    rng = np.random.default_rng(3)
    for _ in range(10):
        n = int(rng.integers(2, 33))
        m = int(rng.integers(2, 33))
        W = cb.make_random(n, m, seed=int(rng.integers(0, 1 << 30)))
        ba = cb.ba_solve(W, epsilon=1e-3)
        dual = cb.solve_capacity(W, epsilon=1e-3)
        # both intervals contain the capacity, so they must overlap
        assert dual.c_lb - 1e-9 <= ba.c_lb + ba.apriori_err
        assert ba.c_lb - 1e-9 <= dual.c_ub


def test_tolerates_zero_entries():
    rep = cb.ba_solve(cb.make_bec(0.25), epsilon=1e-3)
    assert abs(rep.c_lb - 0.75) <= 1e-3
