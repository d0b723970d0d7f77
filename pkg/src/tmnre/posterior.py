"""Posterior artifacts built from trained ratio heads.

Grid densities, weighted histograms, rejection samples and highest-density
sets for 1-d and 2-d marginals.  All operations are pure functions of a
trained head and therefore safe to evaluate in parallel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .prior import FactorizablePrior, TruncatedPrior, TruncationRegion, sample_truncated
from .ratio import MarginalRatioEstimator

__all__ = [
    "GridPosterior",
    "WeightedHistogram",
    "PosteriorSamples",
    "grid_posterior",
    "weighted_histogram",
    "rejection_sample",
    "hpd_interval",
    "hpd_mask",
]


def _sub_prior_region(prior: FactorizablePrior, region: TruncationRegion, dims):
    """Restrict a factorizable prior and region to the marginal's dimensions."""
    sub_prior = FactorizablePrior([prior.components[d] for d in dims])
    sub_region = TruncationRegion([region.intervals[d] for d in dims])
    return sub_prior, sub_region


@dataclass
class GridPosterior:
    """Marginal posterior evaluated on a regular grid over the region."""

    index_dims: tuple
    axes: list            # one 1-d coordinate array per marginal dimension
    log_ratio: np.ndarray # grid of log r values
    unnormalized: np.ndarray
    density: np.ndarray   # trapezoid-normalized over the region

    @property
    def ndim(self):
        return len(self.axes)

    def cell_masses(self) -> np.ndarray:
        """Per-cell masses (rectangle rule on the uniform grid), sum 1."""
        total = self.density.sum()
        if total <= 0:
            raise ValueError("degenerate posterior: zero total mass")
        return self.density / total

    def cdf_1d(self):
        """Cumulative distribution over the 1-d grid (for KS-style checks)."""
        if self.ndim != 1:
            raise ValueError("cdf_1d needs a 1-d grid")
        masses = self.cell_masses()
        return np.cumsum(masses)


def grid_posterior(
    est: MarginalRatioEstimator,
    x_o: np.ndarray,
    prior: FactorizablePrior,
    region: TruncationRegion,
    grid_size: int = 1000,
) -> GridPosterior:
    """Evaluate the unnormalized and normalized marginal posterior on a grid.

    The unnormalized value is exp(log r) times the truncated-prior marginal
    density; normalization is by trapezoidal quadrature over the region.
    """
    dims = est.index.dims
    trunc = TruncatedPrior(prior, region)
    if len(dims) == 1:
        d = dims[0]
        lo, hi = region.intervals[d]
        axis = np.linspace(lo, hi, grid_size)
        logr = est.log_ratio(x_o, axis[:, None])
        logp = trunc.marginal_log_density(d, axis)
        unnorm = np.exp(logr + logp)
        norm = np.trapezoid(unnorm, axis)
        if norm <= 0 or not np.isfinite(norm):
            raise ValueError("degenerate posterior: grid integrates to zero")
        return GridPosterior(dims, [axis], logr, unnorm, unnorm / norm)
    if len(dims) == 2:
        d0, d1 = dims
        ax0 = np.linspace(*region.intervals[d0], grid_size)
        ax1 = np.linspace(*region.intervals[d1], grid_size)
        g0, g1 = np.meshgrid(ax0, ax1, indexing="ij")
        pts = np.column_stack([g0.ravel(), g1.ravel()])
        logr = est.log_ratio(x_o, pts).reshape(grid_size, grid_size)
        logp = (
            trunc.marginal_log_density(d0, g0.ravel())
            + trunc.marginal_log_density(d1, g1.ravel())
        ).reshape(grid_size, grid_size)
        unnorm = np.exp(logr + logp)
        norm = np.trapezoid(np.trapezoid(unnorm, ax1, axis=1), ax0)
        if norm <= 0 or not np.isfinite(norm):
            raise ValueError("degenerate posterior: grid integrates to zero")
        return GridPosterior(dims, [ax0, ax1], logr, unnorm, unnorm / norm)
    raise ValueError("grid_posterior supports 1-d and 2-d marginals only")


@dataclass
class WeightedHistogram:
    """Ratio-weighted histogram of prior samples (weights sum to 1)."""

    index_dims: tuple
    edges: list
    weights: np.ndarray
    n_samples: int

    @property
    def ndim(self):
        return len(self.edges)

    def centers(self, axis: int = 0) -> np.ndarray:
        e = self.edges[axis]
        return 0.5 * (e[:-1] + e[1:])

    def to_rows(self):
        """CSV-ready rows: (bin_lo, bin_hi, weight) or (i, j, weight)."""
        if self.ndim == 1:
            e = self.edges[0]
            return [(e[i], e[i + 1], float(self.weights[i])) for i in range(len(e) - 1)]
        rows = []
        for i in range(self.weights.shape[0]):
            for j in range(self.weights.shape[1]):
                rows.append((i, j, float(self.weights[i, j])))
        return rows


def weighted_histogram(
    est: MarginalRatioEstimator,
    x_o: np.ndarray,
    prior_samples: np.ndarray,
    bins: int = 100,
    range_region: TruncationRegion | None = None,
) -> WeightedHistogram:
    """Sort prior samples into bins, weighting each by exp(log r).

    ``prior_samples`` holds sub-vectors for the estimator's marginal, drawn
    from the (truncated) prior.
    """
    samples = np.atleast_2d(np.asarray(prior_samples, float))
    if samples.shape[1] != len(est.index):
        samples = samples.reshape(-1, len(est.index))
    if samples.shape[0] < 1:
        raise ValueError("need at least one prior sample inside the region")
    logr = est.log_ratio(x_o, samples)
    w = np.exp(logr - logr.max())

    region = range_region if range_region is not None else est.region
    ranges = [region.intervals[d] for d in est.index.dims]
    if samples.shape[1] == 1:
        hist, edges = np.histogram(samples[:, 0], bins=bins, range=ranges[0], weights=w)
        total = hist.sum()
        if total <= 0:
            raise ValueError("all sample weights vanished")
        return WeightedHistogram(est.index.dims, [edges], hist / total, samples.shape[0])
    hist, e0, e1 = np.histogram2d(
        samples[:, 0], samples[:, 1], bins=bins, range=ranges, weights=w
    )
    total = hist.sum()
    if total <= 0:
        raise ValueError("all sample weights vanished")
    return WeightedHistogram(est.index.dims, [e0, e1], hist / total, samples.shape[0])


@dataclass
class PosteriorSamples:
    index_dims: tuple
    samples: np.ndarray
    acceptance_rate: float
    envelope: float
    clipped: int = 0
    meta: dict = field(default_factory=dict)


def rejection_sample(
    est: MarginalRatioEstimator,
    x_o: np.ndarray,
    prior: FactorizablePrior,
    region: TruncationRegion,
    n: int,
    rng: np.random.Generator,
    grid_size: int = 1000,
    safety: float = 1.05,
    min_acceptance: float = 1e-5,
    max_proposals: int = 10_000_000,
) -> PosteriorSamples:
    """Draw posterior samples by ratio-envelope rejection.

    The envelope is the grid maximum of the estimated ratio times a safety
    factor (the grid can undershoot the continuous maximum); acceptance
    probabilities above one are clipped and counted.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    grid = grid_posterior(est, x_o, prior, region, grid_size)
    log_m = float(grid.log_ratio.max()) + math.log(safety)

    sub_prior, sub_region = _sub_prior_region(prior, region, est.index.dims)
    accepted = []
    n_proposed = 0
    n_accepted = 0
    clipped = 0
    batch = max(2 * n, 1000)
    while n_accepted < n:
        if n_proposed >= max_proposals and n_accepted / max(n_proposed, 1) < min_acceptance:
            raise RuntimeError(
                f"vanishing acceptance: {n_accepted}/{n_proposed} proposals accepted"
            )
        proposals = sample_truncated(sub_prior, sub_region, batch, rng)
        logr = est.log_ratio(x_o, proposals)
        prob = np.exp(logr - log_m)
        clipped += int(np.sum(prob > 1.0))
        keep = rng.uniform(size=batch) < np.minimum(prob, 1.0)
        n_proposed += batch
        n_accepted += int(keep.sum())
        accepted.append(proposals[keep])
        rate = max(n_accepted / n_proposed, 1e-6)
        batch = int(min(max((n - n_accepted) / rate * 1.2, 1000), 2_000_000))
    samples = np.vstack(accepted)[:n]
    return PosteriorSamples(
        est.index.dims,
        samples,
        acceptance_rate=n_accepted / n_proposed,
        envelope=math.exp(log_m),
        clipped=clipped,
    )


def hpd_mask(grid: GridPosterior, credibility: float) -> np.ndarray:
    """Boolean mask of the smallest super-level set with mass >= credibility.

    Cells are sorted by density descending and accumulated until the target
    mass is reached; the achieved mass overshoots by at most one cell.
    """
    if not 0 < credibility < 1:
        raise ValueError("credibility must be in (0, 1)")
    masses = grid.cell_masses().ravel()
    order = np.argsort(grid.density.ravel())[::-1]
    cum = np.cumsum(masses[order])
    k = int(np.searchsorted(cum, credibility)) + 1
    mask = np.zeros(masses.size, dtype=bool)
    mask[order[:k]] = True
    return mask.reshape(grid.density.shape)


def hpd_interval(grid: GridPosterior, credibility: float):
    """1-d HPD set as a list of disjoint (lo, hi) intervals.

    2-d grids get the raw bin mask instead (contouring is downstream
    tooling's job).
    """
    mask = hpd_mask(grid, credibility)
    if grid.ndim == 2:
        return mask
    axis = grid.axes[0]
    intervals = []
    start = None
    for i, inside in enumerate(mask):
        if inside and start is None:
            start = i
        elif not inside and start is not None:
            intervals.append((float(axis[start]), float(axis[i - 1])))
            start = None
    if start is not None:
        intervals.append((float(axis[start]), float(axis[-1])))
    return intervals
