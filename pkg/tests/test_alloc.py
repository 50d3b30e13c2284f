import math

import numpy as np
import pytest

from trunclab.alloc import (
    Allocation,
    GaussianRD,
    LayerStack,
    TabulatedRD,
    dc_variation,
    error_propagation_bound,
    intrinsic_dim_bound,
    quant_overhead,
    sensitivities,
    sensitivity_ratio,
    water_fill,
)
from trunclab.wz import rd_reference


class TestSensitivities:
    def test_single_layer(self):
        s = sensitivities(LayerStack(n_layers=1, lipschitz_g=1.3))
        np.testing.assert_allclose(s, [1.0])

    def test_deep_stack_no_skip(self):
        stack = LayerStack(n_layers=60, lipschitz_g=1.05)
        ratio = sensitivity_ratio(stack)
        assert ratio == pytest.approx(1.05 ** 118, rel=1e-12)
        assert ratio == pytest.approx(316.5, abs=0.5)   # quoted as ~320
        assert 300 <= ratio <= 330

    def test_deep_stack_with_skip(self):
        stack = LayerStack(n_layers=60, lipschitz_branch=0.1, lipschitz_ln=1.0,
                           skip=True)
        ratio = sensitivity_ratio(stack)
        assert ratio == pytest.approx((1.0 + 0.01) ** 59, rel=1e-12)
        assert ratio == pytest.approx(1.80, abs=0.005)

    def test_products_definition(self):
        g = [1.1, 1.2, 0.9, 1.05]
        s = sensitivities(LayerStack(n_layers=4, lipschitz_g=g))
        expect = [np.prod([x * x for x in g[i + 1:]]) for i in range(4)]
        np.testing.assert_allclose(s, expect, rtol=1e-12)

    def test_dc_variation_values(self):
        no_skip = sensitivity_ratio(LayerStack(n_layers=60, lipschitz_g=1.05))
        skip = sensitivity_ratio(LayerStack(n_layers=60, skip=True,
                                            lipschitz_branch=0.1))
        assert dc_variation(no_skip, 10.0) == pytest.approx(0.6, abs=0.03)
        assert dc_variation(skip, 10.0) == pytest.approx(0.06, abs=0.003)


class TestWaterFill:
    def test_symmetric_layers_equal_distortion(self):
        stack = LayerStack(n_layers=4, lipschitz_g=1.0)
        alloc = water_fill(stack, GaussianRD(1.0), d_total=0.4)
        np.testing.assert_allclose(alloc.distortions, alloc.distortions[0])
        assert alloc.total_distortion == pytest.approx(0.4, abs=1e-8)

    def test_two_layer_gaussian_kkt(self):
        # sensitivities (4, 1): |R'| ~ 1/D so D ratio must be 1:4
        # (the sensitivity of layer 1 compounds the constants above it)
        stack = LayerStack(n_layers=2, lipschitz_g=[1.0, 2.0])
        np.testing.assert_allclose(sensitivities(stack), [4.0, 1.0])
        alloc = water_fill(stack, GaussianRD(10.0), d_total=0.5)
        assert alloc.distortions[1] / alloc.distortions[0] == pytest.approx(4.0, rel=1e-6)
        res = alloc.kkt_residuals([GaussianRD(10.0)] * 2)
        assert np.all(res < 1e-6)

    def test_constraint_met_within_tolerance(self):
        stack = LayerStack(n_layers=8, lipschitz_g=1.05)
        alloc = water_fill(stack, GaussianRD(1.0), d_total=0.3, aggregate_lg2=2.0)
        assert abs(alloc.total_distortion - 0.3) <= 1e-8

    def test_clamped_layers_zero_rate(self):
        # huge budget: low-sensitivity layers hit their zero-rate distortion
        stack = LayerStack(n_layers=3, lipschitz_g=[3.0, 3.0, 1.0])
        fam = GaussianRD(1.0)
        cap = float(np.sum(sensitivities(stack) * fam.d_max))
        alloc = water_fill(stack, fam, d_total=0.9 * cap)
        assert not alloc.active[-1]
        assert alloc.rates[-1] == 0.0
        assert alloc.total_distortion == pytest.approx(0.9 * cap, abs=1e-8)

    def test_improves_on_uniform(self):
        stack = LayerStack(n_layers=5, lipschitz_g=[1.3, 1.2, 1.1, 1.0, 0.9])
        fam = GaussianRD(1.0)
        s = sensitivities(stack)
        d_total = 0.2
        alloc = water_fill(stack, fam, d_total=d_total)
        d_uniform = d_total / s.sum()
        rate_uniform = sum(fam.rate(d_uniform) for _ in range(5))
        assert alloc.total_rate < rate_uniform - 1e-6

    def test_infeasible_budgets(self):
        stack = LayerStack(n_layers=2, lipschitz_g=1.0)
        with pytest.raises(ValueError):
            water_fill(stack, GaussianRD(1.0), d_total=0.0)
        with pytest.raises(ValueError):
            water_fill(stack, GaussianRD(1.0), d_total=10.0)

    def test_tabulated_family_from_ba_curve(self):
        curve = rd_reference(np.array([0.5, 0.5]), 1.0 - np.eye(2),
                             np.linspace(0.02, 0.5, 30))
        fam = TabulatedRD(curve.distortions, curve.rates)
        stack = LayerStack(n_layers=3, lipschitz_g=[1.5, 1.2, 1.0])
        alloc = water_fill(stack, fam, d_total=0.5)
        assert abs(alloc.total_distortion - 0.5) <= 1e-8
        # more sensitive layers get less distortion
        order = np.argsort(alloc.sensitivities)
        assert np.all(np.diff(alloc.distortions[order]) <= 1e-12)

    def test_rates_nonincreasing_in_distortion(self):
        fam = GaussianRD(1.0)
        ds = np.linspace(0.01, 1.0, 50)
        rates = [fam.rate(float(d)) for d in ds]
        assert np.all(np.diff(rates) <= 1e-12)


class TestDimensionArithmetic:
    def test_intrinsic_dim_quotient(self):
        # dynamic range ln(R_U / r_min) = 10
        assert intrinsic_dim_bound(5120.0, math.e ** 10, 1.0) == pytest.approx(512.0)

    def test_zero_rate(self):
        assert intrinsic_dim_bound(0.0, 10.0, 0.1) == 0.0

    def test_degenerate_range(self):
        with pytest.raises(ValueError):
            intrinsic_dim_bound(100.0, 1.0, 1.0)

    def test_variation_bound(self):
        assert math.log(320) / 10 == pytest.approx(0.6, abs=0.03)

    def test_quant_overhead_exact(self):
        assert quant_overhead(512, 2.0 ** -10) == 5120.0

    def test_quant_no_overhead_at_unit_step(self):
        assert quant_overhead(512, 1.0) == 0.0

    def test_quant_linearity(self):
        assert quant_overhead(1024, 2.0 ** -10) == 2 * quant_overhead(512, 2.0 ** -10)


class TestErrorPropagation:
    def test_recursion_bounds_direct_composition(self):
        rng = np.random.default_rng(0)
        dim = 6
        for _ in range(1000):
            n_layers = int(rng.integers(1, 6))
            consts, deltas = [], []
            h = rng.normal(size=dim)
            h_hat = h.copy()
            for _ in range(n_layers):
                a = rng.normal(size=(dim, dim))
                target = float(rng.uniform(0.5, 1.5))
                a *= target / np.linalg.norm(a, 2)
                branch = rng.normal(size=dim) * rng.uniform(0, 0.3)
                h_new = a @ h + branch + rng.normal(size=dim) * 0.1
                err = rng.normal(size=dim) * rng.uniform(0, 0.2)
                h_hat_new = a @ h_hat + branch + rng.normal(size=dim) * 0.1 - err
                # keep the same layer noise on both paths; err is the
                # attention reconstruction error
                h_hat_new = h_new - (a @ (h - h_hat)) - err
                consts.append(target)
                deltas.append(float(err @ err))
                h, h_hat = h_new, h_hat_new
            direct = float((h - h_hat) @ (h - h_hat))
            bound = error_propagation_bound(consts, deltas, eps=1.0)
            assert direct <= bound + 1e-9

    def test_mismatched_lengths(self):
        with pytest.raises(ValueError):
            error_propagation_bound([1.0, 1.0], [0.1])
