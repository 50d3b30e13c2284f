import numpy as np
import pytest

from trunclab.martlab import (
    block_sums,
    block_variance_slope,
    deviation_envelopes,
    empirical_autocov,
    gen_iid,
    gen_longmem,
    parity_fixture,
)

B_GRID = [4, 8, 16, 32, 64, 128, 256]


class TestGenerator:
    def test_reproducibility(self):
        a = gen_longmem(512, 0.5, seed=9, n_series=3)
        b = gen_longmem(512, 0.5, seed=9, n_series=3)
        np.testing.assert_array_equal(a, b)

    def test_bounded_range(self):
        x = gen_longmem(2048, 0.3, j_max=4.0, seed=0, n_series=10)
        assert np.abs(x).max() <= 4.0

    def test_alpha_range(self):
        for alpha in (0.0, 1.0, 1.5):
            with pytest.raises(ValueError):
                gen_longmem(256, alpha)

    def test_autocovariance_profile(self):
        # target c k^-alpha with the fGn constant c = H(2H-1), H = 1 - alpha/2
        alpha = 0.5
        x = gen_longmem(8192, alpha, seed=1, n_series=100)
        ac = empirical_autocov(x, 800)
        h = 1 - alpha / 2
        c = h * (2 * h - 1)
        for k in (1, 2, 4, 8, 16, 64, 256, 800):
            assert ac[k] == pytest.approx(c * k ** -alpha, rel=0.2)

    def test_near_summable_limit(self):
        # alpha -> 1: block variance grows nearly linearly (log corrections)
        x = gen_longmem(8192, 0.95, seed=2, n_series=60)
        slope = block_variance_slope(x, B_GRID)
        assert 0.95 <= slope <= 1.2


class TestBlockVariance:
    def test_longmem_slope(self):
        x = gen_longmem(8192, 0.5, seed=0, n_series=100)
        assert block_variance_slope(x, B_GRID) == pytest.approx(1.5, abs=0.1)

    def test_iid_slope(self):
        x = gen_iid(8192, seed=1, n_series=100)
        assert block_variance_slope(x, B_GRID) == pytest.approx(1.0, abs=0.05)

    def test_parity_fixture_slope(self):
        x = parity_fixture(8192, n_series=256, seed=2)
        assert block_variance_slope(x, B_GRID) == pytest.approx(2.0, abs=0.05)

    def test_constant_sequence_flagged(self):
        with pytest.raises(ValueError, match="degenerate"):
            block_variance_slope(np.ones((4, 512)), B_GRID)

    def test_needs_points_after_exclusion(self):
        with pytest.raises(ValueError):
            block_variance_slope(gen_iid(512, seed=0), [4, 8, 16])

    def test_block_sums_shape(self):
        s = block_sums(np.ones((3, 100)), 16)
        assert s.shape == (3, 6)
        np.testing.assert_allclose(s, 16.0)


class TestParityFixture:
    def test_zero_backward_gap_construction(self):
        # the underlying token process is deterministic given the previous
        # token: both alternating sequences appear, each constant in phase
        x = parity_fixture(64, n_series=512, seed=3)
        assert set(np.unique(x)) == {-0.5, 0.5}
        # each series is constant (the de-alternated phase never changes)
        assert np.all(x.min(axis=1) == x.max(axis=1))
        # both phases occur
        assert np.unique(x[:, 0]).size == 2

    def test_covariance_never_decays(self):
        x = parity_fixture(512, n_series=2048, seed=4)
        ac = empirical_autocov(x, 256)
        np.testing.assert_allclose(ac, 0.25, atol=0.02)


class TestEnvelopes:
    def test_ordering_at_achievability_block(self):
        n, alpha = 4096, 0.5
        b = round(n ** (1 / (alpha + 1)))
        x = gen_longmem(n, alpha, j_max=5.0, seed=3, n_series=400)
        rep = deviation_envelopes(x, b, 0.05, j_max=5.0)
        assert rep.empirical_quantile <= rep.freedman <= rep.azuma

    def test_trivial_delta_one(self):
        x = gen_iid(1024, seed=0, n_series=50)
        rep = deviation_envelopes(x, 32, 1.0)
        assert rep.empirical_quantile == 0.0
        assert rep.azuma == 0.0 and rep.freedman == 0.0

    def test_iid_freedman_comparable_to_azuma(self):
        # with unit variance and short blocks the two envelopes agree up to
        # a modest constant
        x = gen_iid(4096, j_max=5.0, seed=5, n_series=200)
        rep = deviation_envelopes(x, 4, 0.05, j_max=5.0)
        assert rep.empirical_quantile <= rep.freedman
        assert 0.02 <= rep.freedman / rep.azuma <= 1.0

    def test_exponent_contrast_over_horizon(self):
        # with B = n^(1/(alpha+1)), the variance-based envelope shrinks like
        # n^(-alpha/(alpha+1)) and the range-based one like half that exponent
        alpha = 0.5
        ns = [2 ** k for k in (10, 11, 12, 13, 14)]
        az, fr = [], []
        for n in ns:
            b = round(n ** (1 / (alpha + 1)))
            x = gen_longmem(n, alpha, j_max=5.0, seed=7, n_series=100)
            rep = deviation_envelopes(x, b, 0.05, j_max=5.0)
            az.append(rep.azuma)
            fr.append(rep.freedman)
        az_slope = np.polyfit(np.log(ns), np.log(az), 1)[0]
        fr_slope = np.polyfit(np.log(ns), np.log(fr), 1)[0]
        assert az_slope == pytest.approx(-alpha / (2 * (alpha + 1)), abs=0.1)
        assert fr_slope == pytest.approx(-alpha / (alpha + 1), abs=0.1)

    def test_block_variance_constant_within_factor_four(self):
        # the variance bound B Var(j) + 4 J^2 C B sum k^-alpha holds with
        # the generator's own covariance constant, up to the documented
        # factor-of-four slack
        alpha = 0.5
        x = gen_longmem(8192, alpha, j_max=5.0, seed=8, n_series=100)
        h = 1 - alpha / 2
        c_cov = h * (2 * h - 1)
        for b in (16, 64, 256):
            v_emp = float(block_sums(x, b).var())
            ks = np.arange(1, b)
            bound = b * 1.0 + 4 * (5.0 ** 2) * c_cov * b * np.sum(ks ** -alpha)
            assert v_emp <= 4 * bound
            assert v_emp >= bound / 400    # sanity: not absurdly loose either
