"""Fitting the dynamics network to a latent sequence.

Training integrates with a fixed-step solver (``n_sub`` equal steps between
consecutive window times) and differentiates the discretized solve
exactly by reverse accumulation through the unrolled steps.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING, Literal, Optional

import numpy as np

from . import _kernels
from .dynamics import MlpParams, init_params
from .trajectory import FittedModel, LatentSequence

if TYPE_CHECKING:
    from .toy_decoder import ToyDecoder

log = logging.getLogger("dynode.training")

_METHODS = {"euler": _kernels.EULER, "rk4": _kernels.RK4}


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class LossWeights:
    latent: float = 1.0
    feature: float = 0.1
    image: float = 0.1

    def __post_init__(self):
        if min(self.latent, self.feature, self.image) < 0:
            raise ValueError("loss weights must be >= 0")

    def scaled(self, factor: float) -> LossWeights:
        return LossWeights(self.latent * factor, self.feature * factor, self.image * factor)


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 5000
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    # None trains on every observed frame at each step
    window_len: Optional[int] = None
    weights: LossWeights = LossWeights()
    train_solver: str = "rk4"
    substeps: int = 8
    seed: int = 0
    hidden: tuple[int, ...] = (64, 64, 64)
    time_input: bool = True
    clip_norm: Optional[float] = 10.0
    anchor: Literal["first", "random"] = "first"

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("betas must lie in [0, 1)")
        if self.window_len is not None and self.window_len < 1:
            raise ValueError("window_len must be >= 1")
        if self.substeps < 1:
            raise ValueError("substeps must be >= 1")
        w = self.weights
        if max(w.latent, w.feature, w.image) <= 0:
            raise ValueError("at least one loss weight must be positive")
        if self.anchor not in ("first", "random"):
            raise ValueError(f"unknown anchor {self.anchor!r}")


# -- optimizer ---------------------------------------------------------------


@dataclass(frozen=True)
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, n: int) -> AdamState:
        return cls(np.zeros(n), np.zeros(n), 0)


def adam_step(
    state: AdamState,
    p,
    g,
    cfg: Optional[TrainConfig] = None,
    lr: Optional[float] = None,
):
    """One bias-corrected Adam update; returns ``(state', p')``.

    ``p`` and ``g`` are either flat arrays or :class:`MlpParams` bundles.
    Neither input is modified.
    """
    cfg = cfg or TrainConfig()
    lr = cfg.lr if lr is None else lr
    theta = p.theta if isinstance(p, MlpParams) else np.asarray(p, dtype=np.float64)
    grad = g.theta if isinstance(g, MlpParams) else np.asarray(g, dtype=np.float64)
    if theta.shape != grad.shape or state.m.shape != theta.shape:
        raise ValueError("parameter, gradient and optimizer state shapes differ")
    t = state.step + 1
    m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * grad
    v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * grad * grad
    m_hat = m / (1.0 - cfg.beta1**t)
    v_hat = v / (1.0 - cfg.beta2**t)
    new = theta - lr * m_hat / (np.sqrt(v_hat) + cfg.eps)
    new_p = p.with_theta(new) if isinstance(p, MlpParams) else new
    return AdamState(m, v, t), new_p


# -- windows -----------------------------------------------------------------


@dataclass(frozen=True)
class Window:
    """Initial state plus targets at later times (times[0] is the anchor)."""

    z_init: np.ndarray
    times: np.ndarray
    targets: np.ndarray
    indices: np.ndarray


def sample_window(
    seq: LatentSequence,
    n: int,
    rng: np.random.Generator,
    anchor: Literal["first", "random"] = "first",
) -> Window:
    """Pick ``n`` target frames after the anchor, uniformly without replacement."""
    size = len(seq)
    if not 1 <= n < size:
        raise ValueError(f"window length must satisfy 1 <= n < {size}, got {n}")
    start = 0
    if anchor == "random":
        start = int(rng.integers(0, size - n))
    pool = np.arange(start + 1, size)
    if pool.size == n:
        picked = pool
    else:
        picked = np.sort(rng.choice(pool, size=n, replace=False))
    idx = np.concatenate([[start], picked])
    return Window(seq.codes[start].copy(), seq.times[idx], seq.codes[picked], idx)


def full_window(seq: LatentSequence) -> Window:
    idx = np.arange(len(seq))
    return Window(seq.codes[0].copy(), seq.times.copy(), seq.codes[1:], idx)


# -- objective ---------------------------------------------------------------


def _method_code(name: str) -> int:
    if name not in _METHODS:
        raise ValueError(f"train_solver must be fixed-step ('euler' or 'rk4'), got {name!r}")
    return _METHODS[name]


def _unroll(p: MlpParams, window: Window, method: int, n_sub: int, record: bool):
    n_int = window.times.size - 1
    tapes = np.empty(((n_int * n_sub) if record else 1, 4) + p.new_buffer().shape)
    traj = _kernels.unroll_forward(
        p.theta, p.sizes_array, p.offsets, p.time_input,
        np.ascontiguousarray(window.z_init), window.times, n_sub, method, tapes,
    )
    if traj.shape[0] < n_int * n_sub + 1:
        bad = (traj.shape[0] - 2) // n_sub + 1
        raise TrainingError(
            f"non-finite state while integrating toward window time index {bad} "
            f"(t={window.times[bad]:.6g})"
        )
    return traj[n_sub::n_sub], tapes


def _objective(
    p: MlpParams,
    window: Window,
    decoder: Optional[ToyDecoder],
    weights: LossWeights,
    solver: str,
    n_sub: int,
    need_grad: bool,
    target_cache: Optional[dict] = None,
):
    method = _method_code(solver)
    pred, tapes = _unroll(p, window, method, n_sub, need_grad)
    m, d = window.targets.shape
    diff = pred - window.targets
    latent = float(np.sum(diff * diff)) / (m * d)
    g_pred = (2.0 * weights.latent / (m * d)) * diff if need_grad else None
    feature = image = 0.0
    use_decoder = decoder is not None and (weights.feature > 0 or weights.image > 0)
    if use_decoder:
        for i in range(m):
            key = int(window.indices[i + 1])
            if target_cache is not None and key in target_cache:
                h_t, y_t = target_cache[key]
            else:
                h_t, y_t = decoder.forward(window.targets[i])
                if target_cache is not None:
                    target_cache[key] = (h_t, y_t)
            h, y = decoder.forward(pred[i])
            dh, dy = h - h_t, y - y_t
            feature += float(dh @ dh) / (dh.size * m)
            image += float(dy @ dy) / (dy.size * m)
            if need_grad:
                g_pred[i] += decoder.vjp(
                    h, y,
                    (2.0 * weights.feature / (dh.size * m)) * dh,
                    (2.0 * weights.image / (dy.size * m)) * dy,
                )
    total = weights.latent * latent + weights.feature * feature + weights.image * image
    if not np.isfinite(total):
        with np.errstate(over="ignore"):
            per_frame = np.sum(diff * diff, axis=1)
        bad = np.flatnonzero(~np.isfinite(per_frame))
        at = int(window.indices[bad[0] + 1]) if bad.size else int(window.indices[-1])
        raise TrainingError(f"non-finite loss (offending frame index {at})")
    parts = (latent, feature, image)
    if not need_grad:
        return total, parts, None
    gtheta = _kernels.unroll_backward(
        p.theta, p.sizes_array, p.offsets, window.times, n_sub, method,
        np.ascontiguousarray(g_pred), tapes,
    )
    return total, parts, gtheta


def loss(
    p: MlpParams,
    window: Window,
    decoder: Optional[ToyDecoder] = None,
    weights: LossWeights = LossWeights(),
    cfg: TrainConfig = TrainConfig(),
) -> tuple[float, tuple[float, float, float]]:
    """Weighted latent + feature + image reconstruction loss over a window.

    Each part is a mean squared error averaged over the window's targets.
    Feature and image terms are zero without a decoder.
    """
    total, parts, _ = _objective(p, window, decoder, weights, cfg.train_solver, cfg.substeps, False)
    return total, parts


def grad_loss(
    p: MlpParams,
    window: Window,
    decoder: Optional[ToyDecoder] = None,
    weights: LossWeights = LossWeights(),
    cfg: TrainConfig = TrainConfig(),
) -> MlpParams:
    """Exact gradient of the discretized loss w.r.t. the network parameters."""
    _, _, g = _objective(p, window, decoder, weights, cfg.train_solver, cfg.substeps, True)
    return p.with_theta(g)


def clip_by_norm(g: np.ndarray, max_norm: Optional[float]) -> np.ndarray:
    if max_norm is None:
        return g
    norm = float(np.linalg.norm(g))
    return g * (max_norm / norm) if norm > max_norm else g


def fit(
    seq: LatentSequence,
    decoder: Optional[ToyDecoder] = None,
    cfg: TrainConfig = TrainConfig(),
    init: Optional[MlpParams] = None,
) -> FittedModel:
    """Train f_theta on the observed frames of ``seq``.

    Held-out frames never enter the loss. Times are normalized to [0, 1]
    over the full span of ``seq``. Without ``cfg.window_len`` every step uses
    all observed frames; otherwise the window is capped at the number of
    observed frames minus one.
    """
    _method_code(cfg.train_solver)
    if decoder is not None and decoder.dim != seq.dim:
        raise ValueError(f"decoder dim {decoder.dim} does not match sequence dim {seq.dim}")
    t_first, t_last = float(seq.times[0]), float(seq.times[-1])
    train = seq.observed()
    train = LatentSequence((train.times - t_first) / (t_last - t_first), train.codes)
    n = len(train) - 1 if cfg.window_len is None else min(cfg.window_len, len(train) - 1)
    if init is not None:
        if init.dim != seq.dim:
            raise ValueError("initial parameters do not match the sequence dim")
        params = init
    else:
        params = init_params(cfg.seed, seq.dim, cfg.hidden, cfg.time_input)
    rng = np.random.default_rng([cfg.seed, 1])
    state = AdamState.zeros(params.theta.size)
    history = np.empty((cfg.steps, 4))
    cache: dict = {}
    for step in range(cfg.steps):
        window = sample_window(train, n, rng, cfg.anchor)
        total, parts, g = _objective(
            params, window, decoder, cfg.weights, cfg.train_solver, cfg.substeps, True, cache
        )
        history[step] = (total, *parts)
        g = clip_by_norm(g, cfg.clip_norm)
        state, params = adam_step(state, params, g, cfg)
        if log.isEnabledFor(logging.INFO) and (step + 1) % 500 == 0:
            log.info("step %d  loss %.3e  latent %.3e", step + 1, total, parts[0])
    return FittedModel(params, seq.codes[0].copy(), t_first, t_last, loss_history=history)


def fit_loss(m: FittedModel, seq: LatentSequence) -> float:
    """Observed-frame latent MSE of a fitted model, using its inference solver."""
    from .trajectory import predict

    idx = seq.observed_indices
    pred = predict(m, seq.times)
    return float(np.mean((pred[idx] - seq.codes[idx]) ** 2))
