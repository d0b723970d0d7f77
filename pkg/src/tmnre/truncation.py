"""Multi-round truncation driver.

Round loop: simulate from the current truncated prior, train the 1-d ratio
heads, shrink the region to the super-level set of each estimated 1-d
posterior, and stop once the prior mass ratio between consecutive regions
exceeds the threshold.  The remaining simulation budget is then spent
inside the final region to train all 1-d and 2-d heads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .nn import TrainConfig
from .prior import FactorizablePrior, TruncationRegion, mass_ratio, sample_truncated
from .ratio import marginal_set, train_mnre
from .simulators import Simulator, poisson_count, simulate_batch
from .store import SampleStore

__all__ = [
    "TmnreConfig",
    "RoundState",
    "TmnreResult",
    "shrink_region",
    "run_tmnre",
    "run_mnre",
    "removed_mass_bound",
]

DEFAULT_EPSILON = math.exp(-13.0)  # ~ 1e-6


@dataclass
class TmnreConfig:
    budget: int = 10_000
    epsilon: float = DEFAULT_EPSILON
    beta: float = 0.8
    max_rounds: int = 10
    round_fraction: float = 0.3          # per-round target as a budget fraction
    round_targets: list | None = None    # explicit per-round dataset targets
    grid_size: int = 1000
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if not 0 < self.epsilon < 1:
            raise ValueError("epsilon must be in (0, 1)")
        if not 0 < self.beta <= 1:
            raise ValueError("beta must be in (0, 1]")
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be >= 1")
        if self.budget < 1:
            raise ValueError("budget must be >= 1")

    def target_for_round(self, m: int) -> int:
        if self.round_targets:
            i = min(m - 1, len(self.round_targets) - 1)
            return int(self.round_targets[i])
        return int(round(self.round_fraction * self.budget))


@dataclass
class RoundState:
    m: int
    region: TruncationRegion          # region the round trained on
    new_region: TruncationRegion      # region produced by shrinking
    alpha: float
    n_retained: int
    n_new: int
    estimators_1d: list
    degenerate_dims: list = field(default_factory=list)
    row_indices: np.ndarray | None = None

    def to_json(self):
        return {
            "round": self.m,
            "region": self.region.to_json(),
            "new_region": self.new_region.to_json(),
            "alpha": self.alpha,
            "n_retained": self.n_retained,
            "n_new": self.n_new,
            "degenerate_dims": self.degenerate_dims,
            "head_status": [e.train_info.get("status", "?") for e in self.estimators_1d],
        }


@dataclass
class TmnreResult:
    rounds: list
    final_region: TruncationRegion
    final_estimators: list
    store: SampleStore
    status: str                       # "converged" | "max-rounds" | "budget-exhausted"
    total_simulations: int

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    def regions(self):
        out = [self.rounds[0].region] if self.rounds else []
        out.extend(r.new_region for r in self.rounds)
        return out


def shrink_region(
    estimators_1d,
    prior: FactorizablePrior,
    region: TruncationRegion,
    x_o: np.ndarray,
    epsilon: float,
    grid_size: int = 1000,
):
    """Threshold each 1-d posterior at epsilon times its grid maximum.

    Per dimension the new interval is the convex hull of grid points whose
    estimated posterior mass exceeds the threshold (a box cannot represent
    disjoint modes), padded outward by one grid cell and intersected with
    the old interval.  Dimensions whose head is degenerate keep their old
    interval and are flagged.

    Returns (new_region, degenerate_dims).
    """
    by_dim = {est.index.dims[0]: est for est in estimators_1d if len(est.index) == 1}
    intervals = []
    degenerate = []
    for d, (lo, hi) in enumerate(region.intervals):
        est = by_dim.get(d)
        if est is None or est.net is None:
            intervals.append((lo, hi))
            degenerate.append(d)
            continue
        grid = np.linspace(lo, hi, grid_size)
        logr = est.log_ratio(x_o, grid[:, None])
        logp = prior.components[d].logpdf(grid)
        logw = logr + logp
        finite = np.isfinite(logw)
        if not finite.any():
            intervals.append((lo, hi))
            degenerate.append(d)
            continue
        passing = logw > np.max(logw[finite]) + math.log(epsilon)
        if not passing.any():
            intervals.append((lo, hi))
            degenerate.append(d)
            continue
        cell = grid[1] - grid[0]
        idx = np.nonzero(passing)[0]
        new_lo = max(lo, grid[idx[0]] - cell)
        new_hi = min(hi, grid[idx[-1]] + cell)
        intervals.append((new_lo, new_hi))
    return TruncationRegion(intervals).clipped_to(region), degenerate


def run_tmnre(
    sim: Simulator,
    prior: FactorizablePrior,
    x_o: np.ndarray,
    cfg: TmnreConfig,
    rng: np.random.Generator,
    store: SampleStore | None = None,
    final_marginals: str = "1d+2d",
) -> TmnreResult:
    """Run the full truncation loop followed by final marginal training.

    Rounds already present in ``store`` are reused (resumption): simulation
    for a round is skipped when the store holds records tagged with it.
    """
    if store is None:
        store = SampleStore(sim.param_dim, sim.data_dim)
    x_o = np.asarray(x_o, float)
    omega = prior.support
    region = omega
    rounds = []
    total_sims = len(store)
    alpha = 0.0
    m = 1
    status = "max-rounds"

    while m <= cfg.max_rounds:
        retained = store.in_region(region)
        have_round_already = m in store.count_per_round()
        target = cfg.target_for_round(m)
        n_needed = max(target - len(retained), 0)
        remaining = max(cfg.budget - total_sims, 0)
        if have_round_already:
            n_new = 0
        else:
            n_new = min(poisson_count(n_needed, rng), remaining) if n_needed else 0
            if n_new > 0:
                thetas = sample_truncated(prior, region, n_new, rng)
                xs = simulate_batch(sim, thetas, rng)
                store.append(m, thetas, xs)
                total_sims += n_new

        rows = store.in_region(region)
        if len(rows) == 0:
            raise RuntimeError(f"round {m}: no training data inside the region")

        est_1d = train_mnre(
            store.thetas[rows],
            store.xs[rows],
            region,
            marginal_set(sim.param_dim, "1d"),
            cfg.train,
            rng,
            round_index=m,
        )
        new_region, degenerate = shrink_region(
            est_1d, prior, region, x_o, cfg.epsilon, cfg.grid_size
        )
        assert new_region.is_subset_of(region), "region nesting violated"
        alpha = mass_ratio(prior, new_region, region)
        rounds.append(
            RoundState(
                m, region, new_region, alpha,
                n_retained=len(retained), n_new=n_new,
                estimators_1d=est_1d, degenerate_dims=degenerate,
                row_indices=rows,
            )
        )
        region = new_region
        m += 1
        if alpha > cfg.beta:
            status = "converged"
            break
        if total_sims >= cfg.budget:
            status = "budget-exhausted"
            break

    # Final phase: spend the leftover budget inside the final region, then
    # train every marginal of interest on the retained data.
    n_final_target = max(cfg.budget - total_sims, 0)
    if n_final_target > 0 and m not in store.count_per_round():
        n_final = poisson_count(n_final_target, rng)
        if n_final > 0:
            thetas = sample_truncated(prior, region, n_final, rng)
            xs = simulate_batch(sim, thetas, rng)
            store.append(m, thetas, xs)
            total_sims += n_final

    rows = store.in_region(region)
    if len(rows) == 0:
        raise RuntimeError("final region contains no training data")
    final_estimators = train_mnre(
        store.thetas[rows],
        store.xs[rows],
        region,
        marginal_set(sim.param_dim, final_marginals),
        cfg.train,
        rng,
        round_index=m,
    )
    return TmnreResult(rounds, region, final_estimators, store, status, total_sims)


def run_mnre(
    sim: Simulator,
    prior: FactorizablePrior,
    cfg: TmnreConfig,
    rng: np.random.Generator,
    store: SampleStore | None = None,
    marginals: str = "1d+2d",
) -> TmnreResult:
    """Single-round baseline: no truncation, the region stays the full box."""
    if store is None:
        store = SampleStore(sim.param_dim, sim.data_dim)
    omega = prior.support
    n = poisson_count(max(cfg.budget - len(store), 0), rng)
    if n > 0:
        thetas = sample_truncated(prior, omega, n, rng)
        xs = simulate_batch(sim, thetas, rng)
        store.append(1, thetas, xs)
    if len(store) == 0:
        raise RuntimeError("no training data")
    estimators = train_mnre(
        store.thetas, store.xs, omega,
        marginal_set(sim.param_dim, marginals), cfg.train, rng, round_index=1,
    )
    return TmnreResult([], omega, estimators, store, "converged", len(store))


def removed_mass_bound(density, lo: float, hi: float, epsilon: float, grid_size: int = 200_001) -> float:
    """Probability mass in the sub-level set {p < epsilon * max p}.

    Numerical quadrature over a compact support; used by property tests to
    check the analytic tail-mass estimate, not by the driver itself.
    """
    if epsilon <= 0:
        return 0.0
    grid = np.linspace(lo, hi, grid_size)
    p = np.asarray(density(grid), float)
    below = p < epsilon * p.max()
    return float(np.trapezoid(np.where(below, p, 0.0), grid))
