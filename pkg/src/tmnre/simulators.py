"""Analytic test simulators and batch generation helpers.

All simulators are stateless: an observation is a pure function of the
parameter vector and the draws taken from the supplied random generator,
so identical seeds give identical outputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .prior import FactorizablePrior

__all__ = [
    "Simulator",
    "TorusSimulator",
    "EggboxSimulator",
    "RotatedEggboxSimulator",
    "GaussianDiagSimulator",
    "simulate_batch",
    "poisson_count",
    "rotation_matrix",
    "bounding_prior",
    "make_simulator",
]


class Simulator:
    """Interface: maps a parameter vector plus noise draws to an observation.

    Subclasses define ``param_dim``, ``data_dim``, ``mean(thetas)`` giving
    the noiseless forward model for an (n, D) batch, and a diagonal noise
    scale ``noise_std`` (scalar or per-channel array).  Simulators with a
    tractable likelihood also provide ``log_likelihood``.
    """

    param_dim: int
    data_dim: int

    def mean(self, thetas: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    @property
    def noise_std(self):
        raise NotImplementedError

    def simulate(self, thetas: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        thetas = np.atleast_2d(np.asarray(thetas, float))
        mu = self.mean(thetas)
        return mu + rng.standard_normal(mu.shape) * self.noise_std

    def log_likelihood(self, x: np.ndarray, thetas: np.ndarray) -> np.ndarray:
        """Diagonal-Gaussian log p(x | theta) for an (n, D) batch of thetas."""
        thetas = np.atleast_2d(np.asarray(thetas, float))
        x = np.asarray(x, float)
        mu = self.mean(thetas)
        std = np.broadcast_to(np.asarray(self.noise_std, float), (self.data_dim,))
        z = (x[None, :] - mu) / std
        return -0.5 * np.sum(z**2, axis=1) - np.sum(np.log(std * math.sqrt(2 * math.pi)))

    def default_prior(self) -> FactorizablePrior:
        return FactorizablePrior.unit_cube(self.param_dim)

    def observation(self) -> np.ndarray:
        """Noiseless observation at the reference parameter theta_o."""
        return self.mean(np.atleast_2d(self.theta_o))[0]


@dataclass
class TorusSimulator(Simulator):
    """Three-parameter model with a narrow ring-shaped posterior.

    Forward model (theta0, sqrt((theta0-a)^2 + (theta1-b)^2), theta2) with
    additive diagonal Gaussian noise; channel 2's small noise constrains
    (theta0, theta1) to a thin ring around (a, b).
    """

    a: float = 0.6
    b: float = 0.8
    sigma: tuple = (0.03, 0.005, 0.2)
    theta_o: tuple = (0.57, 0.8, 1.0)
    param_dim: int = field(default=3, init=False)
    data_dim: int = field(default=3, init=False)

    def mean(self, thetas):
        thetas = np.atleast_2d(np.asarray(thetas, float))
        ring = np.sqrt((thetas[:, 0] - self.a) ** 2 + (thetas[:, 1] - self.b) ** 2)
        return np.column_stack([thetas[:, 0], ring, thetas[:, 2]])

    @property
    def noise_std(self):
        return np.asarray(self.sigma, float)


@dataclass
class EggboxSimulator(Simulator):
    """Multimodal model: each output channel is sin(pi * theta_k) plus noise.

    The noiseless observation at theta_o = 1/4 per dimension makes every
    1-d posterior bimodal (sin(pi t) = sin(pi (1 - t))), for 2^D joint modes.
    """

    dims: int = 10
    sigma: float = 0.1

    def __post_init__(self):
        self.param_dim = self.dims
        self.data_dim = self.dims
        self.theta_o = np.full(self.dims, 0.25)

    def mean(self, thetas):
        thetas = np.atleast_2d(np.asarray(thetas, float))
        return np.sin(thetas * math.pi)

    @property
    def noise_std(self):
        return self.sigma


@dataclass
class RotatedEggboxSimulator(Simulator):
    """Eggbox observed through a rotated parameter frame.

    Simulates eggbox(Q^T theta) where Q rotates (1, ..., 1)^T onto
    (0, ..., 0, sqrt(D))^T, so the posterior is no longer axis-aligned.
    The matching prior is uniform over the bounding box of the rotated
    unit-cube corners.
    """

    dims: int = 10
    sigma: float = 0.1

    def __post_init__(self):
        self.param_dim = self.dims
        self.data_dim = self.dims
        self.rotation = rotation_matrix(self.dims)
        self._inner = EggboxSimulator(dims=self.dims, sigma=self.sigma)
        self.theta_o = self.rotation @ self._inner.theta_o

    def mean(self, thetas):
        thetas = np.atleast_2d(np.asarray(thetas, float))
        return self._inner.mean(thetas @ self.rotation)

    @property
    def noise_std(self):
        return self.sigma

    def default_prior(self):
        return bounding_prior(self.rotation, self.dims)


@dataclass
class GaussianDiagSimulator(Simulator):
    """Calibration aid: x = theta + N(0, sigma^2 I) on the unit cube.

    Every 1-d posterior is a normal centered on the observed channel,
    truncated to [0, 1], which gives a closed-form reference.
    """

    dims: int = 3
    sigma: float = 0.1
    theta_o_value: float = 0.5

    def __post_init__(self):
        self.param_dim = self.dims
        self.data_dim = self.dims
        self.theta_o = np.full(self.dims, self.theta_o_value)

    def mean(self, thetas):
        return np.atleast_2d(np.asarray(thetas, float)).copy()

    @property
    def noise_std(self):
        return self.sigma


def simulate_batch(sim: Simulator, thetas, rng: np.random.Generator) -> np.ndarray:
    """Run the simulator once per parameter vector.

    Noise draws are consumed in row order from ``rng``, so a fixed seed
    reproduces the batch exactly.
    """
    thetas = np.atleast_2d(np.asarray(thetas, float))
    if thetas.shape[1] != sim.param_dim:
        raise ValueError(
            f"expected parameter vectors of length {sim.param_dim}, got {thetas.shape[1]}"
        )
    try:
        return sim.simulate(thetas, rng)
    except FloatingPointError as exc:  # pragma: no cover - simulator specific
        raise RuntimeError(f"simulation failed within batch: {exc}") from exc


def poisson_count(requested: int, rng: np.random.Generator) -> int:
    """Stochastic sample count: Poisson centered on the requested number."""
    if requested < 0:
        raise ValueError("requested count must be >= 0")
    if requested == 0:
        return 0
    return int(rng.poisson(requested))


def rotation_matrix(dims: int) -> np.ndarray:
    """Proper rotation mapping the diagonal direction onto the last axis.

    Householder reflection sending u = (1, ..., 1)/sqrt(D) to e_D.  The
    reflection has det -1, so its first row is negated to obtain det +1;
    negating a row other than the last leaves Q u = e_D intact because
    e_D has a zero in that coordinate.
    """
    if dims < 2:
        raise ValueError("rotation needs dims >= 2")
    u = np.full(dims, 1.0 / math.sqrt(dims))
    e = np.zeros(dims)
    e[-1] = 1.0
    v = u - e
    norm2 = v @ v
    if norm2 < 1e-15:
        return np.eye(dims)
    q = np.eye(dims) - 2.0 * np.outer(v, v) / norm2
    if np.linalg.det(q) < 0:
        q[0, :] = -q[0, :]
    return q


def bounding_prior(q: np.ndarray, dims: int) -> FactorizablePrior:
    """Uniform prior over the bounding box of the rotated unit-cube corners.

    For each output dimension the extremes over all 2^D corners are the
    sums of the negative and positive row entries of Q, which avoids
    enumerating corners for large D.
    """
    q = np.asarray(q, float)
    lo = np.minimum(q, 0.0).sum(axis=1)
    hi = np.maximum(q, 0.0).sum(axis=1)
    # Guard against zero-width dimensions (possible only for degenerate Q).
    width = hi - lo
    eps = 1e-12
    lo = np.where(width < eps, lo - eps, lo)
    hi = np.where(width < eps, hi + eps, hi)
    return FactorizablePrior.uniform_box(list(zip(lo, hi)))


_SIMULATORS = {
    "torus": TorusSimulator,
    "eggbox": EggboxSimulator,
    "rotated_eggbox": RotatedEggboxSimulator,
    "gaussian_diag": GaussianDiagSimulator,
}


def make_simulator(name: str, **params) -> Simulator:
    """Instantiate a simulator by its run-config name."""
    try:
        cls = _SIMULATORS[name]
    except KeyError:
        raise ValueError(
            f"unknown simulator {name!r}; available: {sorted(_SIMULATORS)}"
        ) from None
    return cls(**params)
