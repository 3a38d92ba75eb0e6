"""End-to-end acceptance checks, one test per criterion.

A PASS/FAIL line per criterion is printed in the terminal summary (see
``conftest.py``). Run alone with ``pytest tests/test_acceptance.py``.
"""

import math
import time

import numpy as np
import pytest

from dynode import io
from dynode.dynamics import MlpParams, init_params
from dynode.editing import EditDirection, compare_interp, propagate_edit
from dynode.metrics import mse, ssim
from dynode.ode_core import SolverConfig, integrate
from dynode.toy_decoder import InvertConfig, ToyDecoder, invert
from dynode.trajectory import FittedModel, LatentSequence, evaluate, predict
from dynode.training import LossWeights, TrainConfig, Window, fit, grad_loss, loss

criterion = pytest.mark.criterion


def _rel(a, b):
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-12))


def _split_mse(fitted, seq):
    r = evaluate(fitted, seq)
    return r["observed"]["mse_latent"], r["unobserved"]["mse_latent"]


@criterion(1, "dopri5 accuracy on analytic solutions")
def test_c01_solver_accuracy():
    t0 = time.perf_counter()
    cfg = SolverConfig(rtol=1e-6, atol=1e-9)
    e = integrate(lambda z, t: z, [1.0], [0.0, 1.0], cfg)[-1, 0]
    rot = np.array([[0.0, -1.0], [1.0, 0.0]])
    q = integrate(lambda z, t: rot @ z, [1.0, 0.0], [0.0, math.pi / 2], cfg)[-1]
    elapsed = time.perf_counter() - t0
    assert abs(e - 2.718281828) <= 1e-5
    assert np.all(np.abs(q - [0.0, 1.0]) <= 1e-5)
    assert elapsed < 1.0


@criterion(2, "Euler and RK4 convergence orders")
def test_c02_convergence_orders():
    def err(method, n):
        z = integrate(lambda z, t: z, [1.0], [0.0, 1.0], SolverConfig(method=method, h_init=1.0 / n))
        return abs(z[-1, 0] - math.e)

    euler = math.log2(err("euler", 100) / err("euler", 200))
    rk4 = math.log2(err("rk4", 10) / err("rk4", 20))
    assert 0.8 <= euler <= 1.2
    assert 3.6 <= rk4 <= 4.4


@criterion(3, "backprop-through-solver gradients match finite differences")
def test_c03_gradient_exactness():
    cfg = TrainConfig(train_solver="rk4", substeps=4, clip_norm=None)
    weights = LossWeights()
    h = 1e-5
    t0 = time.perf_counter()
    worst = 0.0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        p = init_params(seed, 2, (8,))
        dec = ToyDecoder("mlp", seed, 2, shape=(1, 8, 8))
        times = np.concatenate([[0.0], np.sort(rng.uniform(0.1, 1.0, 2))])
        window = Window(rng.standard_normal(2), times, rng.standard_normal((2, 2)), np.arange(3))
        g = grad_loss(p, window, dec, weights, cfg).theta
        fd = np.empty_like(g)
        for i in range(g.size):
            up, dn = p.theta.copy(), p.theta.copy()
            up[i] += h
            dn[i] -= h
            fd[i] = (loss(p.with_theta(up), window, dec, weights, cfg)[0]
                     - loss(p.with_theta(dn), window, dec, weights, cfg)[0]) / (2 * h)
        worst = max(worst, _rel(g, fd))
    elapsed = time.perf_counter() - t0
    assert worst <= 1e-5
    assert elapsed < 30.0


@criterion(4, "spiral-8 regular: fit quality and split ordering")
def test_c04_spiral_regular(spiral_regular, spiral_regular_fit):
    cfg = TrainConfig()
    assert (cfg.steps, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps) == (5000, 0.01, 0.9, 0.999, 1e-8)
    obs, held = _split_mse(spiral_regular_fit.value, spiral_regular)
    assert obs <= 1e-3
    assert held <= 1e-2
    assert obs <= held
    assert spiral_regular_fit.seconds <= 120.0


@criterion(5, "spiral-8 irregular: fit quality and split ordering")
def test_c05_spiral_irregular(spiral_irregular, spiral_irregular_fit):
    assert not np.allclose(spiral_irregular.times, np.arange(20) / 19)
    obs, held = _split_mse(spiral_irregular_fit.value, spiral_irregular)
    assert obs <= 1e-3
    assert held <= 1e-2
    assert obs <= held
    assert spiral_irregular_fit.seconds <= 120.0


@criterion(6, "quarter-circle arc: fitted ODE beats morphing at the midpoint")
def test_c06_morph_vs_ode(arc_sequence, arc_fit):
    r = compare_interp(arc_fit.value, arc_sequence)
    morph_err, ode_err = r["morph_err"][0], r["ode_err"][0]
    assert abs(morph_err - 0.2929) <= 1e-4
    assert ode_err <= 0.05, f"ode midpoint error {ode_err:.4f}"
    assert ode_err < morph_err


@criterion(7, "edit propagation matches the matrix-exponential oracle")
def test_c07_edit_propagation():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((3, 3))
    d, sigma, z0 = rng.standard_normal(3), 0.5, rng.standard_normal(3)
    params = MlpParams.from_layers([(np.hstack([a, np.zeros((3, 1))]), np.zeros(3))])
    m = FittedModel(params, z0, 0.0, 1.0, SolverConfig(rtol=1e-10, atol=1e-12))
    times = np.linspace(0.1, 1.0, 10)

    def expm(x, terms=30):
        out, term = np.eye(3), np.eye(3)
        for k in range(1, terms):
            term = term @ x / k
            out = out + term
        return out

    diff = propagate_edit(m, EditDirection(d, sigma), times) - predict(m, times)
    oracle = np.stack([expm(a * t) @ (sigma * d) for t in times])
    assert np.max(np.abs(diff - oracle)) <= 1e-6
    same = propagate_edit(m, EditDirection(d, 0.0), times)
    assert same.tobytes() == predict(m, times).tobytes()


@criterion(8, "inversion recovers codes; inverted pipeline stays learnable")
def test_c08_inversion_pipeline(linear_decoder, spiral_regular, pipeline):
    z_true = np.random.default_rng(0).standard_normal(8)
    x = linear_decoder.decode(z_true)
    z = invert(linear_decoder, x, InvertConfig())
    assert np.max(np.abs(z - linear_decoder.least_squares(x))) <= 1e-6
    assert np.max(np.abs(z - z_true)) <= 1e-6
    assert np.max(np.abs(pipeline["inverted"].codes - spiral_regular.codes)) <= 1e-6
    _, held_direct = _split_mse(pipeline["direct"], spiral_regular)
    _, held_inverted = _split_mse(pipeline["via_inversion"], spiral_regular)
    assert held_inverted <= 3 * held_direct


@criterion(9, "SSIM and MSE properties")
def test_c09_metrics():
    rng = np.random.default_rng(0)
    for _ in range(100):
        a = rng.uniform(-1, 1, (3, 32, 32))
        b = rng.uniform(-1, 1, (3, 32, 32))
        assert abs(ssim(a, a) - 1.0) <= 1e-9
        assert abs(ssim(a, b) - ssim(b, a)) <= 1e-12
        assert mse(a, b) >= 0 and mse(a, b) == mse(b, a)
        assert mse(a, a) == 0 and mse(a, b) > 0


@criterion(10, "determinism and lossless serialization")
def test_c10_determinism_and_serialization(tmp_path, spiral_regular):
    cfg = TrainConfig(steps=100)
    first = io.model_to_bytes(fit(spiral_regular, None, cfg))
    second = io.model_to_bytes(fit(spiral_regular, None, cfg))
    assert first == second
    m = io.model_from_bytes(first)
    assert io.model_to_bytes(m) == first
    io.save_sequence(spiral_regular, tmp_path / "s.json")
    back = io.load_sequence(tmp_path / "s.json")
    assert back.codes.tobytes() == spiral_regular.codes.tobytes()
    assert back.times.tobytes() == spiral_regular.times.tobytes()
    for pos in (0, 20, len(first) // 2, len(first) - 1):
        bad = bytearray(first)
        bad[pos] ^= 0x10
        with pytest.raises(io.FormatError):
            io.model_from_bytes(bytes(bad))


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
