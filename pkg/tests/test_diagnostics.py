import math

import numpy as np
import pytest

from analytic_heads import gaussian_head
from tmnre.diagnostics import (
    _credibility_needed,
    boundary_check,
    c2st,
    c2st_ddm,
    coverage_test,
    kl_histogram,
)
from tmnre.posterior import grid_posterior
from tmnre.prior import FactorizablePrior, TruncationRegion
from tmnre.simulators import GaussianDiagSimulator


class TestC2st:
    def test_identical_distributions_near_half(self, rng):
        p = rng.standard_normal((1000, 2))
        q = rng.standard_normal((1000, 2))
        assert c2st(p, q, rng) == pytest.approx(0.5, abs=0.05)

    def test_separated_distributions_near_one(self, rng):
        p = rng.standard_normal((500, 1))
        q = rng.standard_normal((500, 1)) + 3.0
        assert c2st(p, q, rng) > 0.9

    def test_insufficient_samples(self, rng):
        with pytest.raises(ValueError, match="insufficient"):
            c2st(np.zeros((10, 1)), np.zeros((10, 1)), rng)

    def test_dimension_mismatch(self, rng):
        with pytest.raises(ValueError, match="dimensionality"):
            c2st(np.zeros((100, 1)), np.zeros((100, 2)), rng)

    def test_unbalanced_sets_subsampled(self, rng):
        p = rng.standard_normal((2000, 1))
        q = rng.standard_normal((200, 1))
        acc = c2st(p, q, rng)
        assert 0.3 < acc < 0.7


class TestC2stDdm:
    def test_missing_marginals_reported(self, rng):
        ref = rng.standard_normal((400, 3))
        approx = {(0,): ref[:200, [0]], (1,): ref[200:, [1]]}
        mean, per, missing = c2st_ddm(ref, approx, 1, rng)
        assert missing == [(2,)]
        assert set(per) == {(0,), (1,)}
        assert mean == pytest.approx(np.mean(list(per.values())))

    def test_matching_marginals_near_half(self, rng):
        ref = rng.standard_normal((800, 2))
        other = rng.standard_normal((800, 2))
        approx = {(0,): other[:, [0]], (1,): other[:, [1]], (0, 1): other}
        mean1, _, _ = c2st_ddm(ref, approx, 1, rng)
        mean2, _, _ = c2st_ddm(ref, approx, 2, rng)
        assert mean1 == pytest.approx(0.5, abs=0.06)
        assert mean2 == pytest.approx(0.5, abs=0.06)

    def test_no_marginals_gives_nan(self, rng):
        mean, per, missing = c2st_ddm(rng.standard_normal((200, 2)), {}, 1, rng)
        assert math.isnan(mean)
        assert per == {}


class TestKlHistogram:
    def test_identical_samples_near_zero(self, rng):
        p = rng.standard_normal(100_000)
        q = rng.standard_normal(100_000)
        assert kl_histogram(p, q) < 0.01

    def test_shifted_gaussian(self, rng):
        # KL(N(0,1) || N(1,1)) = 1/2.
        p = rng.standard_normal(100_000)
        q = rng.standard_normal(100_000) + 1.0
        assert kl_histogram(p, q) == pytest.approx(0.5, abs=0.05)

    def test_empty_input(self):
        with pytest.raises(ValueError):
            kl_histogram(np.array([]), np.array([1.0]))

    def test_degenerate_range(self):
        assert kl_histogram(np.ones(10), np.ones(10)) == 0.0


def _analytic_posterior_fn(prior, region, std):
    def fn(d, x):
        head = gaussian_head(d, region, mean=float(np.clip(x[d], 0, 1)), std=std)
        return grid_posterior(head, x, prior, region, 300)
    return fn


class TestCoverage:
    def test_exact_posterior_on_diagonal(self, rng):
        sim = GaussianDiagSimulator(dims=2, sigma=0.1)
        prior = sim.default_prior()
        region = prior.support
        levels = np.arange(0.1, 0.95, 0.1)
        curves = coverage_test(
            [], sim, prior, region, 600, levels, rng,
            posterior_fn=_analytic_posterior_fn(prior, region, sim.sigma),
        )
        assert len(curves) == 2
        for curve in curves:
            se = np.sqrt(levels * (1 - levels) / 600)
            assert np.all(np.abs(curve.empirical - levels) < 3 * se)

    def test_overdispersed_posterior_is_conservative(self, rng):
        # Claiming twice the true width over-covers at every level.
        sim = GaussianDiagSimulator(dims=1, sigma=0.05)
        prior = sim.default_prior()
        region = prior.support
        levels = np.arange(0.1, 0.95, 0.1)
        curves = coverage_test(
            [], sim, prior, region, 500, levels, rng,
            posterior_fn=_analytic_posterior_fn(prior, region, 0.2),
        )
        curve = curves[0]
        se = np.sqrt(levels * (1 - levels) / 500)
        assert np.all(curve.empirical > levels - 3 * se)
        assert np.mean(curve.empirical - levels) > 0.0

    def test_too_few_draws_rejected(self, rng):
        sim = GaussianDiagSimulator(dims=1)
        prior = sim.default_prior()
        with pytest.raises(ValueError, match="100"):
            coverage_test([], sim, prior, prior.support, 50, [0.5], rng)

    def test_credibility_needed(self):
        masses = np.array([0.5, 0.3, 0.2])
        assert _credibility_needed(masses, 0) == 0.0
        assert _credibility_needed(masses, 1) == pytest.approx(0.5)
        assert _credibility_needed(masses, 2) == pytest.approx(0.8)


class TestBoundaryCheck:
    def _grid(self, mean, std=0.05):
        prior = FactorizablePrior.unit_cube(1)
        region = prior.support
        head = gaussian_head(0, region, mean=mean, std=std)
        return grid_posterior(head, np.zeros(1), prior, region, 500)

    def test_interior_posterior_passes(self):
        passed, offending = boundary_check(self._grid(0.5))
        assert passed and offending == []

    def test_edge_hugging_posterior_fails(self):
        passed, offending = boundary_check(self._grid(0.999))
        assert not passed
        assert offending == [0]

    def test_2d_boundary(self):
        from analytic_heads import AnalyticHead

        prior = FactorizablePrior.unit_cube(2)
        region = prior.support

        def fn(x, theta):
            return (
                -0.5 * ((theta[:, 0] - 0.5) / 0.05) ** 2
                - 0.5 * ((theta[:, 1] - 0.99) / 0.05) ** 2
            )

        head = AnalyticHead((0, 1), region, fn)
        grid = grid_posterior(head, np.zeros(2), prior, region, 200)
        passed, offending = boundary_check(grid)
        assert not passed
        assert offending == [1]
