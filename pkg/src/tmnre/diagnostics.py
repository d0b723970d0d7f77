"""Quantitative posterior evaluation.

Classifier two-sample tests against reference samples, histogram KL
divergence, empirical credible-interval (coverage) testing, and checks
that high-probability regions stay clear of the truncation boundary.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.model_selection import StratifiedKFold, cross_val_score
from sklearn.neural_network import MLPClassifier
from sklearn.pipeline import make_pipeline
from sklearn.preprocessing import StandardScaler

from .posterior import GridPosterior, grid_posterior, hpd_mask
from .prior import FactorizablePrior, TruncatedPrior, TruncationRegion
from .simulators import Simulator

__all__ = [
    "CoverageCurve",
    "C2stReport",
    "c2st",
    "c2st_ddm",
    "kl_histogram",
    "coverage_test",
    "boundary_check",
]

# Two hidden ReLU layers of width 10x input dim, 5-fold CV: a deliberately
# expressive classifier, since an underpowered one under-reports differences.
_C2ST_FOLDS = 5
_C2ST_MIN_SAMPLES = 50


def c2st(samples_p: np.ndarray, samples_q: np.ndarray, rng: np.random.Generator) -> float:
    """Classifier two-sample test accuracy in [0, 1].

    0.5 means the two sample sets are indistinguishable; 1.0 means every
    pair can be separated.  The pooled, balanced data is standardized and
    a two-hidden-layer network is scored by stratified 5-fold CV.
    """
    samples_p = np.atleast_2d(np.asarray(samples_p, float))
    samples_q = np.atleast_2d(np.asarray(samples_q, float))
    if samples_p.ndim == 2 and samples_p.shape[1] != samples_q.shape[1]:
        raise ValueError("sample sets have different dimensionality")
    n = min(samples_p.shape[0], samples_q.shape[0])
    if n < _C2ST_MIN_SAMPLES:
        raise ValueError(f"insufficient samples: need >= {_C2ST_MIN_SAMPLES} per side, got {n}")
    seed = int(rng.integers(0, 2**31 - 1))
    sub = np.random.default_rng(seed)
    p = samples_p[sub.choice(samples_p.shape[0], n, replace=False)]
    q = samples_q[sub.choice(samples_q.shape[0], n, replace=False)]
    data = np.vstack([p, q])
    labels = np.concatenate([np.zeros(n), np.ones(n)])

    dim = data.shape[1]
    clf = make_pipeline(
        StandardScaler(),
        MLPClassifier(
            hidden_layer_sizes=(10 * dim, 10 * dim),
            activation="relu",
            max_iter=300,
            # The sklearn default step of 1e-3 can stall at chance level for
            # the full early-stopping patience; 1e-2 learns before it triggers.
            learning_rate_init=0.01,
            early_stopping=True,
            n_iter_no_change=15,
            random_state=seed,
        ),
    )
    cv = StratifiedKFold(n_splits=_C2ST_FOLDS, shuffle=True, random_state=seed)
    scores = cross_val_score(clf, data, labels, cv=cv, scoring="accuracy")
    return float(scores.mean())


@dataclass
class C2stReport:
    per_marginal: dict = field(default_factory=dict)  # label -> accuracy
    missing: list = field(default_factory=list)
    mean_1d: float = math.nan
    mean_2d: float = math.nan

    @property
    def overall_mean(self) -> float:
        vals = [v for v in (self.mean_1d, self.mean_2d) if not math.isnan(v)]
        return float(np.mean(vals)) if vals else math.nan

    def to_json(self):
        return {
            "per_marginal": self.per_marginal,
            "missing": self.missing,
            "mean_1d": self.mean_1d,
            "mean_2d": self.mean_2d,
        }


def c2st_ddm(
    ref_joint_samples: np.ndarray,
    approx_marginal_samples: dict,
    d: int,
    rng: np.random.Generator,
) -> tuple:
    """Average C2ST over all d-dimensional marginal index sets.

    Reference marginals are obtained from the joint samples by column
    selection; the approximate side is looked up per index tuple.  Missing
    marginals are excluded and reported.  Returns (mean, per_marginal,
    missing).
    """
    ref = np.atleast_2d(np.asarray(ref_joint_samples, float))
    dims = ref.shape[1]
    approx = {tuple(k.dims) if hasattr(k, "dims") else tuple(k): v
              for k, v in approx_marginal_samples.items()}
    per_marginal = {}
    missing = []
    for combo in itertools.combinations(range(dims), d):
        if combo not in approx:
            missing.append(combo)
            continue
        acc = c2st(ref[:, list(combo)], np.atleast_2d(approx[combo]), rng)
        per_marginal[combo] = acc
    mean = float(np.mean(list(per_marginal.values()))) if per_marginal else math.nan
    return mean, per_marginal, missing


def kl_histogram(
    samples_p: np.ndarray,
    samples_q: np.ndarray,
    bins: int = 100,
    pseudo_count: float = 1.0,
) -> float:
    """Histogram estimate of D_KL(P || Q) for 1-d sample sets.

    The shared binning range is the union of both supports; Q gets one
    pseudo-count per bin to avoid division by zero.  Bin count and
    smoothing make the absolute value hyperparameter dependent, so only
    differences between divergences are meaningful.
    """
    p = np.asarray(samples_p, float).ravel()
    q = np.asarray(samples_q, float).ravel()
    if p.size == 0 or q.size == 0:
        raise ValueError("empty sample set")
    lo = min(p.min(), q.min())
    hi = max(p.max(), q.max())
    if hi <= lo:
        return 0.0
    cp, edges = np.histogram(p, bins=bins, range=(lo, hi))
    cq, _ = np.histogram(q, bins=bins, range=(lo, hi))
    ph = cp / cp.sum()
    qh = (cq + pseudo_count) / (cq.sum() + pseudo_count * bins)
    nz = ph > 0
    return float(np.sum(ph[nz] * np.log(ph[nz] / qh[nz])))


@dataclass
class CoverageCurve:
    dim: int
    levels: np.ndarray
    empirical: np.ndarray
    stderr: np.ndarray
    n_draws: int

    def to_rows(self):
        return [
            (float(t), float(c), float(s))
            for t, c, s in zip(self.levels, self.empirical, self.stderr)
        ]


def _credibility_needed(masses: np.ndarray, cell: int) -> float:
    """Smallest HPD level at which ``cell`` is included.

    Equals the total mass of cells that come before it in descending
    density order.
    """
    order = np.argsort(masses)[::-1]
    position = int(np.nonzero(order == cell)[0][0])
    return float(masses[order[:position]].sum())


def coverage_test(
    estimators_1d,
    sim: Simulator,
    prior: FactorizablePrior,
    region: TruncationRegion,
    n_draws: int,
    levels,
    rng: np.random.Generator,
    grid_size: int = 300,
    posterior_fn=None,
):
    """Empirical vs nominal credibility of 1-d highest-density intervals.

    Draws (theta, x) from the truncated generative model, rebuilds each
    1-d posterior for the simulated x, and records the smallest HPD level
    containing the true parameter.  ``posterior_fn(dim, x) -> GridPosterior``
    can replace the trained heads (e.g. an analytic mock for calibration
    checks).
    """
    if n_draws < 100:
        raise ValueError("need at least 100 draws for a meaningful curve")
    levels = np.asarray(levels, float)
    trunc = TruncatedPrior(prior, region)
    thetas = trunc.sample(n_draws, rng)
    xs = sim.simulate(thetas, rng)

    by_dim = {est.index.dims[0]: est for est in (estimators_1d or []) if len(est.index) == 1}
    dims = sorted(by_dim) if posterior_fn is None else list(range(sim.param_dim))

    curves = []
    for d in dims:
        needed = np.empty(n_draws)
        for i in range(n_draws):
            if posterior_fn is not None:
                grid = posterior_fn(d, xs[i])
            else:
                grid = grid_posterior(by_dim[d], xs[i], prior, region, grid_size)
            masses = grid.cell_masses()
            axis = grid.axes[0]
            cell = int(np.clip(np.searchsorted(axis, thetas[i, d]) - 1, 0, axis.size - 1))
            # Pick the nearer of the two neighboring grid points.
            if cell + 1 < axis.size and abs(axis[cell + 1] - thetas[i, d]) < abs(
                axis[cell] - thetas[i, d]
            ):
                cell += 1
            needed[i] = _credibility_needed(masses, cell)
        empirical = np.array([(needed < t).mean() for t in levels])
        stderr = np.sqrt(np.clip(empirical * (1 - empirical), 1e-12, None) / n_draws)
        curves.append(CoverageCurve(d, levels, empirical, stderr, n_draws))
    return curves


def boundary_check(grid: GridPosterior, level: float = 0.95):
    """Fail when the HPD set at ``level`` touches the region boundary.

    Returns (passed, offending_dims) where offending dims are axes whose
    first or last grid cell belongs to the HPD set.
    """
    mask = hpd_mask(grid, level)
    offending = []
    if grid.ndim == 1:
        if mask[0] or mask[-1]:
            offending.append(grid.index_dims[0])
    else:
        if mask[0, :].any() or mask[-1, :].any():
            offending.append(grid.index_dims[0])
        if mask[:, 0].any() or mask[:, -1].any():
            offending.append(grid.index_dims[1])
    return (not offending, offending)
