import numpy as np
import pytest

from dynode.toy_decoder import InversionError, InvertConfig, ToyDecoder, invert, objective_grad


@pytest.fixture(scope="module")
def lin():
    return ToyDecoder("linear", seed=0, dim=8)


@pytest.fixture(scope="module")
def mlp():
    return ToyDecoder("mlp", seed=0, dim=8)


class TestDecoder:
    def test_linear_zero(self, lin):
        assert not np.any(lin.decode(np.zeros(8)))

    def test_shape_and_determinism(self, mlp):
        z = np.random.default_rng(0).standard_normal(8)
        a = mlp.decode(z)
        assert a.shape == (3, 32, 32)
        assert a.tobytes() == mlp.decode(z).tobytes()
        assert a.tobytes() == ToyDecoder("mlp", seed=0, dim=8).decode(z).tobytes()

    def test_seed_changes_weights(self, mlp):
        z = np.ones(8)
        assert not np.array_equal(mlp.decode(z), ToyDecoder("mlp", seed=1, dim=8).decode(z))

    def test_linear_homogeneous(self, lin):
        z = np.random.default_rng(1).standard_normal(8)
        np.testing.assert_allclose(lin.decode(2.5 * z), 2.5 * lin.decode(z), atol=1e-12)

    def test_mlp_range(self, mlp):
        rng = np.random.default_rng(2)
        for _ in range(20):
            z = rng.standard_normal(8)
            assert np.all(np.abs(mlp.decode(z)) < 1)
            assert np.all(np.abs(mlp.features(z)) < 1)

    def test_features_deterministic(self, mlp):
        z = np.arange(8.0) / 8
        assert mlp.features(z).tobytes() == mlp.features(z).tobytes()

    @pytest.mark.parametrize("kind", ["linear", "mlp"])
    def test_features_non_degenerate(self, kind):
        for seed in range(100):
            g = ToyDecoder(kind, seed=seed, dim=8)
            z = np.random.default_rng(seed).standard_normal(8)
            dz = np.zeros(8)
            dz[seed % 8] = 1e-3
            assert not np.array_equal(g.features(z), g.features(z + dz))

    def test_linear_full_rank(self, lin):
        assert np.linalg.matrix_rank(lin.matrix) == 8

    def test_dim_mismatch(self, mlp):
        with pytest.raises(ValueError):
            mlp.decode(np.zeros(7))

    @pytest.mark.parametrize(
        "kwargs", [{"kind": "conv"}, {"shape": (3, 32)}, {"dim": 0}, {"dim": 4, "shape": (1, 2, 2)}]
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            ToyDecoder(**kwargs)

    @pytest.mark.parametrize("kind", ["linear", "mlp"])
    def test_vjp_against_finite_differences(self, kind):
        g = ToyDecoder(kind, seed=3, dim=4, shape=(2, 6, 6))
        rng = np.random.default_rng(0)
        z, cf, ci = rng.standard_normal(4), rng.standard_normal(g.hidden), rng.standard_normal(72)

        def phi(zz):
            h, y = g.forward(zz)
            return cf @ h + ci @ y

        h, y = g.forward(z)
        grad = g.vjp(h, y, cf, ci)
        eps = 1e-6
        fd = np.array([(phi(z + eps * e) - phi(z - eps * e)) / (2 * eps) for e in np.eye(4)])
        np.testing.assert_allclose(grad, fd, rtol=1e-6, atol=1e-8)


class TestInvert:
    @pytest.mark.parametrize("seed", range(3))
    def test_linear_matches_least_squares(self, lin, seed):
        z_true = np.random.default_rng(seed).standard_normal(8)
        x = lin.decode(z_true)
        z = invert(lin, x, InvertConfig(seed=seed))
        assert np.max(np.abs(z - lin.least_squares(x))) <= 1e-6
        assert np.max(np.abs(z - z_true)) <= 1e-6
        assert np.linalg.norm(objective_grad(lin, z, x)) <= 1e-6

    def test_mlp_at_truth_needs_no_steps(self, mlp):
        z_true = np.random.default_rng(5).standard_normal(8)
        z = invert(mlp, mlp.decode(z_true), InvertConfig(steps=0), z_init=z_true)
        np.testing.assert_array_equal(z, z_true)
        z = invert(mlp, mlp.decode(z_true), z_init=z_true)
        np.testing.assert_array_equal(z, z_true)

    def test_noisy_target_projection(self, lin):
        rng = np.random.default_rng(7)
        z_true = rng.standard_normal(8)
        eta = 0.05 * rng.standard_normal(lin.shape)
        x = lin.decode(z_true) + eta
        z = invert(lin, x)
        assert np.sum((lin.decode(z) - x) ** 2) <= np.sum(eta**2)

    def test_mlp_recovers_code(self, mlp):
        z_true = 0.5 * np.random.default_rng(9).standard_normal(8)
        z = invert(mlp, mlp.decode(z_true))
        assert np.mean((mlp.decode(z) - mlp.decode(z_true)) ** 2) <= 1e-6

    def test_divergence_detected(self, lin):
        x = lin.decode(np.ones(8))
        with pytest.raises(InversionError):
            invert(lin, x, InvertConfig(lr=50.0, patience=3, steps=300))

    def test_shape_check(self, lin):
        with pytest.raises(ValueError):
            invert(lin, np.zeros((3, 16, 16)))
