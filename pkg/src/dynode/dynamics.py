"""MLP vector field f_theta(z, t) with reverse-mode gradients."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _kernels


@dataclass(frozen=True)
class MlpParams:
    """Parameters of the dynamics network, stored as one flat vector.

    ``sizes`` lists layer widths from input to output. With ``time_input``
    the input width is ``dim + 1`` (time appended as the last coordinate),
    otherwise ``dim`` (autonomous field).
    """

    theta: np.ndarray
    sizes: tuple[int, ...]
    time_input: bool = True
    _offsets: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        if len(sizes) < 2 or min(sizes) < 1:
            raise ValueError(f"invalid layer sizes {sizes}")
        dim = sizes[-1]
        if sizes[0] != dim + int(self.time_input):
            raise ValueError(
                f"input width {sizes[0]} does not match latent dim {dim} "
                f"(time_input={self.time_input})"
            )
        theta = np.ascontiguousarray(self.theta, dtype=np.float64)
        if theta.ndim != 1 or theta.size != n_params(sizes):
            raise ValueError(f"theta has {theta.size} entries, expected {n_params(sizes)}")
        if not np.all(np.isfinite(theta)):
            raise ValueError("parameters must be finite")
        theta.setflags(write=False)
        offsets = np.cumsum([0] + [sizes[l + 1] * (sizes[l] + 1) for l in range(len(sizes) - 2)])
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "_offsets", offsets.astype(np.int64))

    @property
    def dim(self) -> int:
        return self.sizes[-1]

    @property
    def hidden(self) -> tuple[int, ...]:
        return self.sizes[1:-1]

    @property
    def n_layers(self) -> int:
        return len(self.sizes) - 1

    @property
    def sizes_array(self) -> np.ndarray:
        return np.asarray(self.sizes, dtype=np.int64)

    @property
    def offsets(self) -> np.ndarray:
        return self._offsets

    @property
    def layers(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """(weight, bias) views per layer, weight shaped (out, in)."""
        out = []
        for l in range(self.n_layers):
            n_in, n_out = self.sizes[l], self.sizes[l + 1]
            off = self._offsets[l]
            w = self.theta[off:off + n_out * n_in].reshape(n_out, n_in)
            b = self.theta[off + n_out * n_in:off + n_out * (n_in + 1)]
            out.append((w, b))
        return out

    def with_theta(self, theta: np.ndarray) -> MlpParams:
        return MlpParams(theta, self.sizes, self.time_input)

    @classmethod
    def from_layers(cls, layers: Sequence[tuple[np.ndarray, np.ndarray]], time_input: bool = True) -> MlpParams:
        sizes = [np.shape(layers[0][0])[1]] + [np.shape(w)[0] for w, _ in layers]
        chunks = []
        for w, b in layers:
            w = np.asarray(w, dtype=np.float64)
            b = np.asarray(b, dtype=np.float64)
            if b.shape != (w.shape[0],):
                raise ValueError("bias shape does not match weight rows")
            chunks += [w.ravel(), b]
        return cls(np.concatenate(chunks), tuple(sizes), time_input)

    def new_buffer(self, n: int | None = None) -> np.ndarray:
        shape = (self.n_layers + 1, max(self.sizes))
        return np.zeros(shape if n is None else (n,) + shape)


def n_params(sizes: Sequence[int]) -> int:
    return sum(sizes[l + 1] * (sizes[l] + 1) for l in range(len(sizes) - 1))


def init_params(seed: int, d: int, hidden: Sequence[int] = (64, 64, 64), time_input: bool = True) -> MlpParams:
    """Glorot-uniform weights, zero biases, from a seeded generator."""
    if d < 1:
        raise ValueError("latent dim must be >= 1")
    if len(hidden) == 0 or min(hidden) < 1:
        raise ValueError("hidden must be a nonempty list of positive widths")
    sizes = (d + int(time_input), *hidden, d)
    rng = np.random.default_rng(seed)
    chunks = []
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        bound = np.sqrt(6.0 / (n_in + n_out))
        chunks.append(rng.uniform(-bound, bound, size=n_out * n_in))
        chunks.append(np.zeros(n_out))
    return MlpParams(np.concatenate(chunks), sizes, time_input)


@dataclass(frozen=True)
class Tape:
    """Activations of one forward pass, enough to replay a VJP."""

    acts: np.ndarray
    z: np.ndarray
    t: float


def _check_z(p: MlpParams, z) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (p.dim,):
        raise ValueError(f"expected latent of shape ({p.dim},), got {z.shape}")
    return z


def forward_with_tape(p: MlpParams, z, t: float) -> tuple[np.ndarray, Tape]:
    z = _check_z(p, z)
    acts = p.new_buffer()
    out = _kernels.mlp_forward(p.theta, p.sizes_array, p.offsets, p.time_input, z, float(t), acts)
    return out, Tape(acts, z.copy(), float(t))


def forward(p: MlpParams, z, t: float) -> np.ndarray:
    return forward_with_tape(p, z, t)[0]


def vjp(p: MlpParams, tape: Tape, v) -> tuple[np.ndarray, float, MlpParams]:
    """Return (v^T df/dz, v^T df/dt, v^T df/dtheta).

    The tape is assumed to come from ``p``; stale tapes are not detected.
    The time gradient is 0 for autonomous fields.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (p.dim,):
        raise ValueError(f"expected cotangent of shape ({p.dim},), got {v.shape}")
    gtheta = np.zeros(p.theta.size)
    gin = _kernels.mlp_vjp(p.theta, p.sizes_array, p.offsets, tape.acts, v, gtheta)
    grad_t = float(gin[p.dim]) if p.time_input else 0.0
    return gin[:p.dim].copy(), grad_t, p.with_theta(gtheta)


def as_field(p: MlpParams):
    """Wrap the network as a plain ``f(z, t)`` callable for the integrators."""
    sizes, offsets = p.sizes_array, p.offsets
    shape = (p.n_layers + 1, max(p.sizes))

    def f(z, t):
        acts = np.empty(shape)
        return _kernels.mlp_forward(p.theta, sizes, offsets, p.time_input, np.asarray(z, dtype=np.float64), float(t), acts)

    return f


def output_bound(p: MlpParams) -> float:
    """Sup-norm bound on f: hidden tanh activations lie in (-1, 1)."""
    w, b = p.layers[-1]
    if p.n_layers == 1:
        return np.inf
    return float(np.max(np.abs(w).sum(axis=1) + np.abs(b)))
