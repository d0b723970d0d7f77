import math

import numpy as np
import pytest

from tmnre.simulators import (
    EggboxSimulator,
    GaussianDiagSimulator,
    RotatedEggboxSimulator,
    TorusSimulator,
    bounding_prior,
    make_simulator,
    poisson_count,
    rotation_matrix,
    simulate_batch,
)


class TestTorus:
    def test_noiseless_observation(self):
        sim = TorusSimulator()
        # g(0.57, 0.8, 1.0) = (0.57, sqrt(0.03^2 + 0), 1.0)
        assert np.allclose(sim.observation(), [0.57, 0.03, 1.0])

    def test_log_likelihood_matches_manual_formula(self, rng):
        sim = TorusSimulator()
        thetas = rng.uniform(0, 1, size=(50, 3))
        x = np.array([0.57, 0.03, 1.0])
        mu = sim.mean(thetas)
        sigma = np.array(sim.sigma)
        expected = -0.5 * np.sum(((x - mu) / sigma) ** 2, axis=1) - np.sum(
            np.log(sigma * math.sqrt(2 * math.pi))
        )
        assert np.allclose(sim.log_likelihood(x, thetas), expected)

    def test_simulate_shape_and_noise_scale(self, rng):
        sim = TorusSimulator()
        thetas = np.tile([0.57, 0.8, 1.0], (20_000, 1))
        xs = sim.simulate(thetas, rng)
        assert xs.shape == (20_000, 3)
        # Channel-wise noise std should match sigma within Monte-Carlo error.
        assert np.allclose(xs.std(axis=0), sim.sigma, rtol=0.05)


class TestEggbox:
    def test_noiseless_observation(self):
        sim = EggboxSimulator(dims=10)
        assert np.allclose(sim.observation(), math.sin(math.pi / 4))
        assert sim.observation().shape == (10,)

    def test_mean_symmetry(self):
        # sin(pi t) = sin(pi (1 - t)) makes the likelihood bimodal per dim.
        sim = EggboxSimulator(dims=3)
        t = np.array([[0.2, 0.3, 0.4]])
        assert np.allclose(sim.mean(t), sim.mean(1.0 - t))

    def test_configurable_dims(self):
        sim = EggboxSimulator(dims=2)
        assert sim.param_dim == 2 and sim.data_dim == 2


class TestGaussianDiag:
    def test_identity_mean(self, rng):
        sim = GaussianDiagSimulator(dims=3)
        thetas = rng.uniform(0, 1, size=(10, 3))
        assert np.allclose(sim.mean(thetas), thetas)

    def test_observation_is_theta_o(self):
        sim = GaussianDiagSimulator(dims=3, theta_o_value=0.5)
        assert np.allclose(sim.observation(), 0.5)


class TestRotation:
    def test_d2_maps_diagonal_to_second_axis(self):
        q = rotation_matrix(2)
        target = np.array([0.0, math.sqrt(2.0)])
        assert np.linalg.norm(q @ np.ones(2) - target) < 1e-12

    @pytest.mark.parametrize("dims", [2, 3, 10])
    def test_orthogonal_proper(self, dims):
        q = rotation_matrix(dims)
        assert np.abs(q.T @ q - np.eye(dims)).max() < 1e-10
        assert np.linalg.det(q) == pytest.approx(1.0, abs=1e-10)

    @pytest.mark.parametrize("dims", [2, 5, 10])
    def test_maps_diagonal_to_last_axis(self, dims):
        q = rotation_matrix(dims)
        u = np.ones(dims) / math.sqrt(dims)
        e = np.zeros(dims)
        e[-1] = 1.0
        assert np.linalg.norm(q @ u - e) < 1e-12


class TestBoundingPrior:
    def test_identity_recovers_unit_cube(self):
        prior = bounding_prior(np.eye(4), 4)
        for c in prior.components:
            assert (c.lo, c.hi) == (0.0, 1.0)

    def test_d10_last_dimension(self):
        # The cube diagonal lands on the last axis, so the projections of
        # the corners span [0, sqrt(10)].
        q = rotation_matrix(10)
        prior = bounding_prior(q, 10)
        lo, hi = prior.components[-1].lo, prior.components[-1].hi
        assert lo == pytest.approx(0.0, abs=1e-12)
        assert hi == pytest.approx(math.sqrt(10.0), abs=1e-12)

    def test_box_covers_rotated_corners(self, rng):
        q = rotation_matrix(6)
        prior = bounding_prior(q, 6)
        corners = (rng.uniform(0, 1, size=(500, 6)) > 0.5).astype(float)
        rotated = corners @ q.T
        assert prior.support.contains(rotated).all()

    def test_volume_exceeds_unit_cube(self):
        q = rotation_matrix(10)
        assert bounding_prior(q, 10).support.volume() > 100.0


class TestRotatedEggbox:
    def test_identity_rotation_reproduces_eggbox(self):
        rot = RotatedEggboxSimulator(dims=4)
        rot.rotation = np.eye(4)
        plain = EggboxSimulator(dims=4)
        thetas = np.random.default_rng(3).uniform(0, 1, size=(10, 4))
        assert np.array_equal(rot.mean(thetas), plain.mean(thetas))
        xs_a = rot.simulate(thetas, np.random.default_rng(11))
        xs_b = plain.simulate(thetas, np.random.default_rng(11))
        assert np.array_equal(xs_a, xs_b)

    def test_observation_matches_unrotated_value(self):
        rot = RotatedEggboxSimulator(dims=10)
        assert np.allclose(rot.observation(), math.sin(math.pi / 4))

    def test_default_prior_contains_rotated_cube(self, rng):
        rot = RotatedEggboxSimulator(dims=10)
        inner = rng.uniform(0, 1, size=(1000, 10))
        rotated = inner @ rot.rotation.T
        assert rot.default_prior().support.contains(rotated).all()


class TestBatchHelpers:
    def test_simulate_batch_seeded_reproducibility(self):
        sim = TorusSimulator()
        thetas = np.random.default_rng(1).uniform(0, 1, size=(100, 3))
        a = simulate_batch(sim, thetas, np.random.default_rng(7))
        b = simulate_batch(sim, thetas, np.random.default_rng(7))
        assert np.array_equal(a, b)

    def test_simulate_batch_rejects_wrong_width(self, rng):
        with pytest.raises(ValueError, match="length 3"):
            simulate_batch(TorusSimulator(), np.zeros((5, 2)), rng)

    def test_poisson_count_zero(self, rng):
        assert poisson_count(0, rng) == 0

    def test_poisson_count_negative_rejected(self, rng):
        with pytest.raises(ValueError):
            poisson_count(-1, rng)

    def test_poisson_count_moments(self):
        rng = np.random.default_rng(42)
        draws = [poisson_count(1000, rng) for _ in range(1000)]
        # Poisson variance equals the mean, so the SE of the sample mean is
        # sqrt(1000/1000) * sqrt(1000) / sqrt(1000) = 1; use 3 sigma ~ +-3,
        # stated generously as +-95 relative to the 1000 target per draw.
        assert abs(np.mean(draws) - 1000) < 95
        # Typical deviation stays within ~5% of the requested count.
        assert np.percentile(np.abs(np.array(draws) - 1000), 99) < 0.05 * 1000 * 2


class TestRegistry:
    def test_known_names(self):
        for name in ("torus", "eggbox", "rotated_eggbox", "gaussian_diag"):
            sim = make_simulator(name)
            assert sim.param_dim >= 1

    def test_unknown_name(self):
        with pytest.raises(ValueError, match="unknown simulator"):
            make_simulator("banana")

    def test_params_forwarded(self):
        sim = make_simulator("eggbox", dims=4, sigma=0.2)
        assert sim.param_dim == 4 and sim.sigma == 0.2
