"""Ground-truth latent trajectories with closed-form dynamics.

Planar systems evolve in a 2-D intrinsic space and are embedded in the
latent space through a seeded orthonormal matrix, so distances are
preserved. Time runs over [0, 1].
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Literal, Optional

import numpy as np
from scipy.linalg import expm

from .trajectory import LatentSequence

Kind = Literal["constant", "affine_line", "rotation", "spiral", "linear_random", "arc"]
KINDS = ("constant", "affine_line", "rotation", "spiral", "linear_random", "arc")

_DEFAULTS = {
    "constant": {"x0": [1.0, 0.5]},
    "affine_line": {"x0": [1.0, 0.0], "velocity": [-1.0, 1.0]},
    "rotation": {"x0": [1.0, 0.0], "omega": 2 * math.pi},
    "spiral": {"x0": [1.0, 0.0], "decay": 0.5, "omega": 2 * math.pi},
    "linear_random": {"scale": 1.0},
    "arc": {"x0": [1.0, 0.0], "omega": math.pi / 2},
}


@dataclass(frozen=True)
class SystemSpec:
    """A synthetic dynamical system.

    ``params`` holds kind-specific settings (see ``_DEFAULTS``); anything
    left out takes its default. ``embed_dim`` equal to the intrinsic
    dimension with ``embed_seed=None`` means no rotation (identity embedding).
    """

    kind: Kind = "spiral"
    embed_dim: int = 8
    intrinsic_dim: int = 2
    params: dict = field(default_factory=dict)
    noise: float = 0.0
    seed: int = 0
    embed_seed: Optional[int] = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown system kind {self.kind!r}")
        if self.embed_dim < self.intrinsic_dim:
            raise ValueError("embed_dim must be >= intrinsic_dim")
        if self.kind != "linear_random" and self.intrinsic_dim != 2:
            raise ValueError(f"{self.kind} is a planar system (intrinsic_dim=2)")
        if self.noise < 0:
            raise ValueError("noise must be >= 0")
        merged = {**_DEFAULTS[self.kind], **self.params}
        object.__setattr__(self, "params", merged)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> SystemSpec:
        return cls(**data)


def embedding(spec: SystemSpec) -> np.ndarray:
    """Orthonormal (embed_dim, intrinsic_dim) matrix."""
    if spec.embed_seed is None:
        return np.eye(spec.embed_dim, spec.intrinsic_dim)
    rng = np.random.default_rng([spec.embed_seed, 7919])
    q, r = np.linalg.qr(rng.standard_normal((spec.embed_dim, spec.intrinsic_dim)))
    # fix signs so the factorization is unique
    return q * np.sign(np.diag(r))


def system_matrix(spec: SystemSpec) -> np.ndarray:
    """Intrinsic matrix A of linear_random: x' = A x, eigenvalue real parts <= 0."""
    n = spec.intrinsic_dim
    rng = np.random.default_rng([spec.seed, 104729])
    m = rng.standard_normal((n, n)) * spec.params["scale"] / math.sqrt(n)
    skew = 0.5 * (m - m.T)
    sym = 0.5 * (m + m.T)
    # negative semidefinite symmetric part keeps every eigenvalue in Re <= 0
    ev, vecs = np.linalg.eigh(sym)
    return skew + (vecs * -np.abs(ev)) @ vecs.T


def _x0(spec: SystemSpec) -> np.ndarray:
    if spec.kind == "linear_random":
        rng = np.random.default_rng([spec.seed, 15485863])
        x = rng.standard_normal(spec.intrinsic_dim)
        return x / np.linalg.norm(x)
    return np.asarray(spec.params["x0"], dtype=np.float64)


def intrinsic_truth(spec: SystemSpec, t: float) -> np.ndarray:
    t = float(t)
    if not math.isfinite(t):
        raise ValueError("t must be finite")
    p = spec.params
    x0 = _x0(spec)
    if spec.kind == "constant":
        return x0.copy()
    if spec.kind == "affine_line":
        return x0 + t * np.asarray(p["velocity"], dtype=np.float64)
    if spec.kind == "linear_random":
        return expm(system_matrix(spec) * t) @ x0
    decay = p.get("decay", 0.0) if spec.kind == "spiral" else 0.0
    angle = p["omega"] * t
    c, s = math.cos(angle), math.sin(angle)
    return math.exp(-decay * t) * np.array([c * x0[0] - s * x0[1], s * x0[0] + c * x0[1]])


def truth(spec: SystemSpec, t: float) -> np.ndarray:
    """Noise-free embedded state at time t."""
    return embedding(spec) @ intrinsic_truth(spec, t)


def truth_field(spec: SystemSpec):
    """Exact vector field f(z, t) in the embedded space, for linear kinds."""
    e = embedding(spec)
    if spec.kind == "constant":
        a = np.zeros((2, 2))
    elif spec.kind in ("rotation", "arc", "spiral"):
        w = spec.params["omega"]
        lam = spec.params.get("decay", 0.0) if spec.kind == "spiral" else 0.0
        a = np.array([[-lam, -w], [w, -lam]])
    elif spec.kind == "linear_random":
        a = system_matrix(spec)
    else:
        v = e @ np.asarray(spec.params["velocity"], dtype=np.float64)
        return lambda z, t: v.copy()
    big = e @ a @ e.T
    return lambda z, t: big @ z


def sample(
    spec: SystemSpec,
    n: int,
    mode: Literal["regular", "irregular"] = "regular",
    heldout: float = 0.0,
    rng: Optional[np.random.Generator] = None,
) -> LatentSequence:
    """Sample ``n`` frames on [0, 1].

    ``heldout`` is a fraction of frames (``ceil(heldout * n)`` interior
    indices, chosen at random) to mask as unobserved.
    """
    if n < 2:
        raise ValueError("need n >= 2 frames")
    if not 0 <= heldout <= 0.5:
        raise ValueError("heldout fraction must lie in [0, 0.5]")
    rng = np.random.default_rng(spec.seed) if rng is None else rng
    if mode == "regular":
        times = np.arange(n) / (n - 1)
    elif mode == "irregular":
        times = irregular_times(n, rng)
    else:
        raise ValueError(f"unknown sampling mode {mode!r}")
    n_held = math.ceil(heldout * n)
    if n_held > n - 2:
        raise ValueError("too many held-out frames for this sequence length")
    mask = np.zeros(n, dtype=bool)
    if n_held:
        mask[rng.choice(np.arange(1, n - 1), size=n_held, replace=False)] = True
    return sample_at(spec, times, mask, rng)


def sample_at(spec: SystemSpec, times, heldout_mask=None, rng: Optional[np.random.Generator] = None) -> LatentSequence:
    """Frames at explicit times, with optional held-out mask and noise."""
    times = np.asarray(times, dtype=np.float64)
    codes = np.stack([truth(spec, t) for t in times])
    if spec.noise > 0:
        rng = np.random.default_rng(spec.seed) if rng is None else rng
        codes = codes + spec.noise * rng.standard_normal(codes.shape)
    return LatentSequence(times, codes, heldout_mask)


def irregular_times(n: int, rng: np.random.Generator) -> np.ndarray:
    """Sorted uniform times on [0, 1] with endpoints fixed and all gaps >= 1/(4n).

    Draws from the uniform order statistics conditioned on the minimum gap
    directly (reserve the gaps, then shift), which is what rejection
    sampling converges to but never fails for large ``n``.
    """
    gap = 1.0 / (4 * n)
    free = 1.0 - (n - 1) * gap
    inner = np.sort(rng.uniform(0.0, free, size=n - 2)) + gap * np.arange(1, n - 1)
    return np.concatenate([[0.0], inner, [1.0]])


def spiral8(mode: Literal["regular", "irregular"] = "regular", seed: int = 0) -> LatentSequence:
    """Default benchmark: decaying spiral in 8-D, 20 frames, 4 held out."""
    spec = SystemSpec("spiral", embed_dim=8, seed=seed, embed_seed=seed)
    if mode == "regular":
        times = np.arange(20) / 19
    else:
        times = irregular_times(20, np.random.default_rng(seed))
    mask = np.zeros(20, dtype=bool)
    mask[[4, 8, 12, 16]] = True
    return sample_at(spec, times, mask)
