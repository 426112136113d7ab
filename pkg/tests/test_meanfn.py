"""GP mean model: kernel values, likelihood fit, predictive mean."""

import math

import numpy as np
import pytest

from arsigma.meanfn import GpModel, gp_fit, gp_predict_mean, load_gp, save_gp, se_kernel


class TestSeKernel:
    def test_equal_points(self):
        assert se_kernel(0.3, 0.3, sigma_f=1.7, ell=0.5) == pytest.approx(1.7**2)

    def test_characteristic_distance(self):
        # distance l * sqrt(2) gives exp(-1)
        assert se_kernel(0.0, math.sqrt(2.0), sigma_f=1.0, ell=1.0) == pytest.approx(
            math.exp(-1.0), rel=1e-12
        )

    def test_symmetric_and_decreasing(self):
        assert se_kernel(0.1, 0.9, 1.2, 0.4) == se_kernel(0.9, 0.1, 1.2, 0.4)
        ds = np.linspace(0, 3, 20)
        vals = [se_kernel(0.0, d, 1.0, 0.7) for d in ds]
        assert np.all(np.diff(vals) < 0)

    def test_vector_inputs(self):
        a, b = np.array([0.0, 0.0]), np.array([1.0, 1.0])
        assert se_kernel(a, b, 1.0, 1.0) == pytest.approx(math.exp(-1.0))

    def test_rejects_bad_length_scale(self):
        with pytest.raises(ValueError):
            se_kernel(0.0, 1.0, 1.0, 0.0)


class TestGpFit:
    def test_zero_targets_give_zero_mean(self):
        x = np.linspace(0, 1, 20)
        model = gp_fit(x, np.zeros(20), seed=0)
        np.testing.assert_allclose(model.predict_mean(np.linspace(0, 1, 7)), 0.0, atol=1e-12)

    def test_noiseless_sine_interpolates(self):
        x = np.linspace(0, 2 * math.pi, 50)
        y = np.sin(x)
        model = gp_fit(x, y, seed=1)
        grid = np.linspace(0.1, 2 * math.pi - 0.1, 200)
        assert np.max(np.abs(model.predict_mean(grid) - np.sin(grid))) <= 1e-2

    def test_g_dataset_mean_recovery(self):
        from arsigma import bench

        spec = bench.make_dataset("G", seed=3)
        x, y, _, _ = bench.generate(spec)
        model = gp_fit(x, y, seed=0)
        grid = np.linspace(0, 1, 200)
        truth = 2.0 * np.sin(2.0 * np.pi * grid)
        rmse = float(np.sqrt(np.mean((model.predict_mean(grid) - truth) ** 2)))
        assert rmse <= 0.5

    def test_nll_trace_non_increasing(self):
        rng = np.random.default_rng(4)
        x = rng.uniform(0, 1, 40)
        y = np.sin(6 * x) + 0.3 * rng.standard_normal(40)
        model = gp_fit(x, y, seed=2)
        fvals = np.array(model.trace.fvals)
        assert np.all(np.diff(fvals) <= 1e-12)

    def test_fixed_noise_mode(self):
        rng = np.random.default_rng(5)
        x = np.linspace(0, 1, 30)
        y = np.cos(3 * x) + 0.1 * rng.standard_normal(30)
        model = gp_fit(x, y, noise_var=1e-12, seed=0)
        assert model.noise_var == 1e-12
        # near-interpolation: training targets reproduced
        np.testing.assert_allclose(model.predict_mean(x), y, atol=1e-6)

    def test_requires_two_points(self):
        with pytest.raises(ValueError):
            gp_fit(np.array([1.0]), np.array([2.0]))


class TestGpPredictMean:
    @pytest.fixture
    def fitted(self):
        rng = np.random.default_rng(6)
        x = rng.uniform(0, 1, 35)
        y = 1.5 * np.sin(4 * x) + 0.2 * rng.standard_normal(35)
        return x, y, gp_fit(x, y, seed=1)

    def test_far_field_returns_prior_mean(self, fitted):
        _, _, model = fitted
        far = np.array([1e6])
        assert model.predict_mean(far)[0] == pytest.approx(0.0, abs=1e-12)

    def test_linear_in_targets(self, fitted):
        x, y, model = fitted
        doubled = GpModel(
            sigma_f=model.sigma_f, ell=model.ell, noise_var=model.noise_var,
            x_train=x, y_train=2.0 * y,
        )
        grid = np.linspace(0, 1, 11)
        np.testing.assert_allclose(
            doubled.predict_mean(grid), 2.0 * model.predict_mean(grid), rtol=1e-10
        )

    def test_dimension_mismatch(self, fitted):
        _, _, model = fitted
        with pytest.raises(ValueError):
            model.predict_mean(np.ones((3, 2)))

    def test_scalar_input_for_multidim_model(self):
        rng = np.random.default_rng(7)
        x = rng.uniform(0, 1, size=(25, 2))
        y = x[:, 0] + x[:, 1]
        model = gp_fit(x, y, seed=0)
        out = model.predict_mean(np.array([0.5, 0.5]))
        assert np.isscalar(out)


class TestKernelMatrixHealth:
    def test_cholesky_with_small_jitter_on_random_sets(self):
        rng = np.random.default_rng(8)
        for _ in range(10):
            n = int(rng.integers(5, 40))
            x = rng.uniform(0, 1, size=(n, int(rng.integers(1, 4))))
            model = GpModel(
                sigma_f=float(rng.uniform(0.5, 2.0)),
                ell=float(rng.uniform(0.05, 1.0)),
                noise_var=0.0,
                x_train=x,
                y_train=rng.normal(size=n),
            )
            assert model._chol is not None  # factorization succeeded with jitter <= 1e-6


class TestGpSerialization:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(9)
        x = rng.uniform(0, 1, 20)
        y = np.sin(5 * x) + 0.1 * rng.standard_normal(20)
        model = gp_fit(x, y, seed=3)
        path = tmp_path / "gp.json"
        save_gp(model, path)
        loaded = load_gp(path)
        grid = np.linspace(0, 1, 30)
        np.testing.assert_allclose(
            gp_predict_mean(loaded, grid), gp_predict_mean(model, grid), atol=1e-12
        )
