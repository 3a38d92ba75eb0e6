"""Latent morphing and first-frame edit propagation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .trajectory import FittedModel, LatentSequence, predict


@dataclass(frozen=True)
class EditDirection:
    """An edit applied to the initial latent only.

    ``direction`` is either a fixed vector (linear edit, ``z0 + scale * d``)
    or a callable ``d(z)`` giving a direction field (nonlinear edit), which is
    followed from ``z0`` in ``n_steps`` small increments of normalized
    length ``scale / n_steps``.
    """

    direction: Union[np.ndarray, Callable[[np.ndarray], np.ndarray]]
    scale: float = 1.0
    label: str = ""
    n_steps: int = 16

    def __post_init__(self):
        if callable(self.direction):
            return
        d = np.asarray(self.direction, dtype=np.float64)
        if d.ndim != 1 or not np.all(np.isfinite(d)):
            raise ValueError("direction must be a finite vector")
        if not np.linalg.norm(d) > 0:
            raise ValueError("direction must be nonzero")
        object.__setattr__(self, "direction", d)

    def apply(self, z0: np.ndarray) -> np.ndarray:
        z0 = np.asarray(z0, dtype=np.float64)
        if not callable(self.direction):
            if self.direction.shape != z0.shape:
                raise ValueError(f"direction has shape {self.direction.shape}, latent {z0.shape}")
            return z0 + self.scale * self.direction
        z = z0.copy()
        h = self.scale / self.n_steps
        for _ in range(self.n_steps):
            d = np.asarray(self.direction(z), dtype=np.float64)
            z = z + h * d / np.linalg.norm(d)
        return z


def morph(z_s, z_t, alphas: Sequence[float]) -> np.ndarray:
    """Linear blends ``z_s + alpha * (z_t - z_s)``, one row per alpha."""
    z_s = np.asarray(z_s, dtype=np.float64)
    z_t = np.asarray(z_t, dtype=np.float64)
    if z_s.shape != z_t.shape:
        raise ValueError("endpoint shapes differ")
    alphas = np.asarray(alphas, dtype=np.float64)
    return z_s[None, :] + alphas[:, None] * (z_t - z_s)[None, :]


def propagate_edit(m: FittedModel, e: EditDirection, raw_times: Sequence[float]) -> np.ndarray:
    """Edit the first frame, then re-integrate the learned dynamics from it."""
    if not callable(e.direction) and e.scale == 0.0:
        return predict(m, raw_times)
    return predict(m.with_initial_state(e.apply(m.z0)), raw_times)


def compare_interp(
    m: FittedModel,
    seq: LatentSequence,
    heldout_times: Optional[Sequence[float]] = None,
) -> dict:
    """ODE prediction vs. linear morphing between the bracketing observed codes.

    Errors are Euclidean distances to the ground-truth codes of the held-out
    frames. ``heldout_times`` defaults to every held-out frame of ``seq``;
    explicit times must be timestamps of ``seq``.
    """
    obs = seq.observed_indices
    if heldout_times is None:
        idx = seq.heldout_indices
    else:
        idx = []
        for t in heldout_times:
            hit = np.flatnonzero(seq.times == float(t))
            if hit.size == 0:
                raise ValueError(f"time {t} is not a frame of the sequence")
            idx.append(int(hit[0]))
        idx = np.asarray(idx, dtype=int)
    times = seq.times[idx]
    obs_times = seq.times[obs]
    rows = []
    for i, t in zip(idx, times):
        j = np.searchsorted(obs_times, t)
        if j == 0 or j >= obs.size or obs_times[j - 1] >= t:
            raise ValueError(f"held-out time {t} is not strictly inside the observed span")
        s, u = obs[j - 1], obs[j]
        alpha = (t - seq.times[s]) / (seq.times[u] - seq.times[s])
        z_morph = morph(seq.codes[s], seq.codes[u], [alpha])[0]
        rows.append((int(i), float(t), float(alpha), float(np.linalg.norm(z_morph - seq.codes[i]))))
    order = np.argsort(times)
    ode = np.empty(len(rows))
    if rows:
        pred = predict(m, times[order])
        ode[order] = np.linalg.norm(pred - seq.codes[idx[order]], axis=1)
    return {
        "times": [r[1] for r in rows],
        "indices": [r[0] for r in rows],
        "alpha": [r[2] for r in rows],
        "ode_err": [float(x) for x in ode],
        "morph_err": [r[3] for r in rows],
    }
