import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tmnre.prior import (
    FactorizablePrior,
    NormalComponent,
    TruncatedPrior,
    TruncationRegion,
    UniformComponent,
    contained_mass,
    mass_ratio,
    sample_truncated,
)

# Frozen expected values.  Truncated-N(0,1) std on [-1, 1] from
# scipy.stats.truncnorm(-1, 1).std().
TRUNC_STD_UNIT = 0.5395600937548968


class TestComponents:
    def test_uniform_cdf_ppf_roundtrip(self):
        c = UniformComponent(0.2, 0.9)
        q = np.linspace(0, 1, 11)
        assert np.allclose(c.cdf(c.ppf(q)), q)

    def test_uniform_logpdf(self):
        c = UniformComponent(0.0, 0.5)
        assert c.logpdf(np.array([0.25]))[0] == pytest.approx(math.log(2.0))
        assert c.logpdf(np.array([0.75]))[0] == -np.inf

    def test_uniform_rejects_inverted_interval(self):
        with pytest.raises(ValueError):
            UniformComponent(1.0, 0.0)

    def test_normal_compact_support(self):
        c = NormalComponent(mean=0.0, std=0.5)
        assert c.lo == pytest.approx(-4.0)
        assert c.hi == pytest.approx(4.0)
        # Mass discarded by the compactification is negligible.
        assert float(c.cdf(c.hi) - c.cdf(c.lo)) == pytest.approx(1.0, abs=1e-14)

    def test_normal_rejects_nonpositive_std(self):
        with pytest.raises(ValueError):
            NormalComponent(mean=0.0, std=0.0)


class TestRegion:
    def test_contains_is_inclusive_at_boundary(self):
        region = TruncationRegion([(0.0, 1.0), (0.0, 1.0)])
        assert region.contains(np.array([0.0, 1.0]))
        assert not region.contains(np.array([0.0, 1.0 + 1e-12]))

    def test_intersect_and_subset(self):
        a = TruncationRegion([(0.0, 1.0)])
        b = TruncationRegion([(0.5, 2.0)])
        inter = a.intersect(b)
        assert inter.intervals == ((0.5, 1.0),)
        assert inter.is_subset_of(a) and inter.is_subset_of(b)

    def test_degenerate_interval_rejected(self):
        with pytest.raises(ValueError, match="degenerate"):
            TruncationRegion([(0.3, 0.3)])

    def test_clipped_to(self):
        box = TruncationRegion([(0.0, 1.0)])
        clipped = TruncationRegion([(-0.5, 0.7)]).clipped_to(box)
        assert clipped.intervals == ((0.0, 0.7),)

    def test_volume(self):
        region = TruncationRegion([(0.0, 0.5), (0.0, 0.25)])
        assert region.volume() == pytest.approx(0.125)

    def test_json_roundtrip(self):
        region = TruncationRegion([(0.1, 0.4), (-2.0, 3.5)])
        assert TruncationRegion.from_json(region.to_json()) == region


class TestSampling:
    def test_truncated_uniform_moments(self, rng):
        # Uniform on [0, 1] restricted to [0.2, 0.4]: mean 0.3, and the
        # standard error of the mean is (0.2/sqrt(12))/sqrt(n).
        prior = FactorizablePrior.unit_cube(1)
        region = TruncationRegion([(0.2, 0.4)])
        n = 10_000
        samples = sample_truncated(prior, region, n, rng)
        se = (0.2 / math.sqrt(12)) / math.sqrt(n)
        assert abs(samples.mean() - 0.3) < 3 * se
        assert samples.min() >= 0.2 and samples.max() <= 0.4

    def test_truncated_normal_moments(self, rng):
        prior = FactorizablePrior([NormalComponent(0.0, 1.0)])
        region = TruncationRegion([(-1.0, 1.0)])
        n = 10_000
        samples = sample_truncated(prior, region, n, rng)
        assert np.all((samples >= -1.0) & (samples <= 1.0))
        assert abs(samples.mean()) < 0.02
        assert samples.std() == pytest.approx(TRUNC_STD_UNIT, abs=0.02)

    def test_empty_truncation_raises(self, rng):
        prior = FactorizablePrior([NormalComponent(0.0, 0.01)])
        # Interval entirely outside the +-8 sigma support carries no mass.
        with pytest.raises(ValueError, match="empty truncation"):
            sample_truncated(prior, TruncationRegion([(5.0, 6.0)]), 10, rng)

    @given(
        lo=st.floats(0.0, 0.8),
        width=st.floats(0.05, 0.2),
        seed=st.integers(0, 2**31 - 1),
    )
    @settings(max_examples=25, deadline=None)
    def test_samples_always_inside_region(self, lo, width, seed):
        prior = FactorizablePrior.unit_cube(2)
        region = TruncationRegion([(lo, min(lo + width, 1.0)), (0.1, 0.9)])
        samples = sample_truncated(prior, region, 200, np.random.default_rng(seed))
        assert region.contains(samples).all()


class TestMassRatio:
    def test_half_cube(self):
        prior = FactorizablePrior.unit_cube(3)
        inner = TruncationRegion([(0.0, 0.5)] * 3)
        assert mass_ratio(prior, inner, prior.support) == pytest.approx(0.125)

    def test_identity(self):
        prior = FactorizablePrior.unit_cube(2)
        assert mass_ratio(prior, prior.support, prior.support) == 1.0

    def test_single_dim(self):
        prior = FactorizablePrior.unit_cube(1)
        inner = TruncationRegion([(0.0, 0.8)])
        assert mass_ratio(prior, inner, prior.support) == pytest.approx(0.8)

    def test_requires_nesting(self):
        prior = FactorizablePrior.unit_cube(1)
        with pytest.raises(ValueError, match="contained"):
            mass_ratio(prior, TruncationRegion([(0.0, 0.9)]), TruncationRegion([(0.0, 0.5)]))

    @given(
        a=st.floats(0.05, 0.3),
        b=st.floats(0.35, 0.6),
        c=st.floats(0.65, 0.95),
    )
    @settings(max_examples=50, deadline=None)
    def test_multiplicativity(self, a, b, c):
        # For nested A within B within C the ratio telescopes exactly.
        prior = FactorizablePrior([NormalComponent(0.5, 0.3), UniformComponent(0.0, 1.0)])
        ra = TruncationRegion([(0.4, 0.4 + a * 0.1), (0.45, 0.55)])
        rb = TruncationRegion([(0.3, 0.7), (0.3, 0.7)])
        rc = TruncationRegion([(0.1, 0.9), (0.1, 0.9)])
        lhs = mass_ratio(prior, ra, rc)
        rhs = mass_ratio(prior, ra, rb) * mass_ratio(prior, rb, rc)
        assert abs(lhs - rhs) < 1e-12


class TestTruncatedPrior:
    def test_log_density_inside(self):
        prior = FactorizablePrior.unit_cube(1)
        trunc = TruncatedPrior(prior, TruncationRegion([(0.0, 0.5)]))
        assert trunc.log_density(np.array([0.25])) == pytest.approx(math.log(2.0))

    def test_log_density_outside_is_minus_inf(self):
        prior = FactorizablePrior.unit_cube(1)
        trunc = TruncatedPrior(prior, TruncationRegion([(0.0, 0.5)]))
        assert trunc.log_density(np.array([0.75])) == -np.inf

    def test_empty_region_raises(self):
        prior = FactorizablePrior([NormalComponent(0.0, 0.01)])
        with pytest.raises(ValueError, match="empty truncation"):
            TruncatedPrior(prior, TruncationRegion([(5.0, 6.0)]))

    def test_marginal_log_density_normalized(self):
        prior = FactorizablePrior([NormalComponent(0.5, 0.2), UniformComponent(0.0, 1.0)])
        trunc = TruncatedPrior(prior, TruncationRegion([(0.3, 0.9), (0.2, 0.8)]))
        for d in range(2):
            grid = np.linspace(*trunc.region.intervals[d], 20_001)
            dens = np.exp(trunc.marginal_log_density(d, grid))
            assert np.trapezoid(dens, grid) == pytest.approx(1.0, abs=1e-6)

    def test_mass_matches_contained_mass(self):
        prior = FactorizablePrior([NormalComponent(0.0, 1.0), UniformComponent(0.0, 2.0)])
        region = TruncationRegion([(-1.0, 1.0), (0.0, 1.0)])
        trunc = TruncatedPrior(prior, region)
        assert trunc.mass == pytest.approx(contained_mass(prior, region))
