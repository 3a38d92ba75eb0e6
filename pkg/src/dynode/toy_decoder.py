"""Seeded latent-to-image decoder standing in for a pretrained generator.

Two kinds:

* ``linear``: ``image = W2 @ (W1 @ z)``, bias free. Features are ``W1 @ z``.
  Exists so inversion has a closed-form least-squares oracle.
* ``mlp``: ``image = tanh(W2 @ tanh(W1 @ z + b1) + b2)``. Features are the
  hidden activations, images lie in (-1, 1).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Optional

import numpy as np

from .training import AdamState, adam_step


class InversionError(RuntimeError):
    pass


@dataclass(frozen=True)
class ToyDecoder:
    kind: Literal["linear", "mlp"] = "mlp"
    seed: int = 0
    dim: int = 8
    shape: tuple[int, int, int] = (3, 32, 32)
    hidden: int = 64
    _w1: np.ndarray = field(init=False, repr=False, compare=False)
    _b1: np.ndarray = field(init=False, repr=False, compare=False)
    _w2: np.ndarray = field(init=False, repr=False, compare=False)
    _b2: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in ("linear", "mlp"):
            raise ValueError(f"unknown decoder kind {self.kind!r}")
        shape = tuple(int(s) for s in self.shape)
        if len(shape) != 3 or min(shape) < 1:
            raise ValueError("shape must be (channels, height, width)")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        object.__setattr__(self, "shape", shape)
        n_pix = int(np.prod(shape))
        hidden = max(self.hidden, self.dim)
        object.__setattr__(self, "hidden", hidden)
        if self.dim >= n_pix:
            raise ValueError("latent dim must be smaller than the pixel count")
        rng = np.random.default_rng([self.seed, self.dim, 31337])
        w1 = rng.standard_normal((hidden, self.dim)) / np.sqrt(self.dim)
        w2 = rng.standard_normal((n_pix, hidden)) / np.sqrt(hidden)
        if self.kind == "mlp":
            w1 *= 2.0
            b1 = 0.1 * rng.standard_normal(hidden)
            b2 = 0.1 * rng.standard_normal(n_pix)
        else:
            b1 = np.zeros(hidden)
            b2 = np.zeros(n_pix)
            if np.linalg.matrix_rank(w2 @ w1) < self.dim:
                raise ValueError("linear decoder is rank deficient; pick another seed")
        for name, arr in (("_w1", w1), ("_b1", b1), ("_w2", w2), ("_b2", b2)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_pixels(self) -> int:
        return int(np.prod(self.shape))

    @property
    def matrix(self) -> np.ndarray:
        """The (pixels, dim) map of a linear decoder."""
        if self.kind != "linear":
            raise ValueError("only linear decoders have a matrix")
        return self._w2 @ self._w1

    def _check(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        if z.shape != (self.dim,):
            raise ValueError(f"expected latent of shape ({self.dim},), got {z.shape}")
        return z

    def features(self, z) -> np.ndarray:
        z = self._check(z)
        h = self._w1 @ z
        if self.kind == "mlp":
            h = np.tanh(h + self._b1)
        return h

    def _decode_flat(self, h: np.ndarray) -> np.ndarray:
        y = self._w2 @ h
        if self.kind == "mlp":
            y = np.tanh(y + self._b2)
        return y

    def decode(self, z) -> np.ndarray:
        return self._decode_flat(self.features(z)).reshape(self.shape)

    def forward(self, z) -> tuple[np.ndarray, np.ndarray]:
        """(features, flat image) in one pass."""
        h = self.features(z)
        return h, self._decode_flat(h)

    def vjp(self, h: np.ndarray, y: np.ndarray, g_features: np.ndarray, g_image: np.ndarray) -> np.ndarray:
        """Latent gradient given cotangents of features and flat image.

        ``h`` and ``y`` must come from :meth:`forward` at the same latent.
        """
        gy = g_image * (1.0 - y * y) if self.kind == "mlp" else g_image
        gh = self._w2.T @ gy + g_features
        if self.kind == "mlp":
            gh = gh * (1.0 - h * h)
        return self._w1.T @ gh

    def least_squares(self, x) -> np.ndarray:
        """Closed-form minimizer of the pixel MSE (linear kind only)."""
        a = self.matrix
        return np.linalg.solve(a.T @ a, a.T @ np.asarray(x, dtype=np.float64).ravel())


@dataclass(frozen=True)
class InvertConfig:
    steps: int = 5000
    lr: float = 0.01
    seed: int = 0
    init_scale: float = 0.1
    gtol: float = 1e-10
    patience: int = 100


def invert(g: ToyDecoder, x, cfg: InvertConfig = InvertConfig(), z_init: Optional[np.ndarray] = None) -> np.ndarray:
    """Minimize pixel MSE between ``decode(z)`` and ``x`` with Adam.

    Stops early once the gradient norm drops below ``cfg.gtol``.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != g.shape:
        raise ValueError(f"image must have shape {g.shape}, got {x.shape}")
    target = x.ravel()
    if z_init is None:
        z = cfg.init_scale * np.random.default_rng(cfg.seed).standard_normal(g.dim)
    else:
        z = g._check(z_init).copy()
    state = AdamState.zeros(g.dim)
    n = target.size
    prev_loss = np.inf
    worse = 0
    for k in range(cfg.steps):
        h, y = g.forward(z)
        r = y - target
        loss = float(r @ r) / n
        if not np.isfinite(loss):
            raise InversionError(f"non-finite loss at step {k}")
        grad = g.vjp(h, y, np.zeros_like(h), 2.0 * r / n)
        if np.linalg.norm(grad) <= cfg.gtol:
            break
        worse = worse + 1 if loss > prev_loss else 0
        if worse >= cfg.patience:
            raise InversionError(f"loss increased for {worse} consecutive steps (step {k})")
        prev_loss = loss
        state, z = adam_step(state, z, grad, lr=cfg.lr)
    return z


def objective_grad(g: ToyDecoder, z, x) -> np.ndarray:
    h, y = g.forward(z)
    r = y - np.asarray(x, dtype=np.float64).ravel()
    return g.vjp(h, y, np.zeros_like(h), 2.0 * r / r.size)
