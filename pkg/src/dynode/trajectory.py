"""The learned continuous trajectory: prediction, k-division interpolation
and observed/held-out evaluation."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Optional, Sequence

import numpy as np

from .dynamics import MlpParams, as_field
from .metrics import SsimConfig, mse, ssim
from .ode_core import SolverConfig, integrate

if TYPE_CHECKING:
    from .toy_decoder import ToyDecoder


@dataclass(frozen=True)
class LatentSequence:
    """Timestamped latent codes, optionally with a held-out mask."""

    times: np.ndarray
    codes: np.ndarray
    heldout: Optional[np.ndarray] = None

    def __post_init__(self):
        times = np.asarray(self.times, dtype=np.float64)
        codes = np.asarray(self.codes, dtype=np.float64)
        if times.ndim != 1 or times.size < 2:
            raise ValueError("a sequence needs at least two timestamps")
        if codes.ndim != 2 or codes.shape[0] != times.size:
            raise ValueError(f"codes must have shape ({times.size}, d), got {codes.shape}")
        if not np.all(np.isfinite(times)) or not np.all(np.isfinite(codes)):
            raise ValueError("times and codes must be finite")
        bad = np.flatnonzero(np.diff(times) <= 0)
        if bad.size:
            raise ValueError(f"times not strictly increasing at index {bad[0] + 1}")
        mask = np.zeros(times.size, dtype=bool) if self.heldout is None else np.asarray(self.heldout, dtype=bool)
        if mask.shape != times.shape:
            raise ValueError("heldout mask must align with times")
        if mask[0]:
            raise ValueError("the initial frame cannot be held out")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "codes", codes)
        object.__setattr__(self, "heldout", mask)

    @property
    def dim(self) -> int:
        return self.codes.shape[1]

    def __len__(self) -> int:
        return self.times.size

    @property
    def observed_indices(self) -> np.ndarray:
        return np.flatnonzero(~self.heldout)

    @property
    def heldout_indices(self) -> np.ndarray:
        return np.flatnonzero(self.heldout)

    def observed(self) -> LatentSequence:
        idx = self.observed_indices
        return LatentSequence(self.times[idx], self.codes[idx])


@dataclass(frozen=True)
class FittedModel:
    """Trained dynamics together with the initial state and time scaling.

    Raw times map affinely onto [0, 1] via ``(t - t_first) / (t_last - t_first)``;
    the network always sees normalized time.
    """

    params: MlpParams
    z0: np.ndarray
    t_first: float
    t_last: float
    solver: SolverConfig = SolverConfig()
    loss_history: Optional[np.ndarray] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        z0 = np.asarray(self.z0, dtype=np.float64)
        if z0.shape != (self.params.dim,):
            raise ValueError(f"z0 must have shape ({self.params.dim},)")
        if not self.t_last > self.t_first:
            raise ValueError("need t_last > t_first")
        object.__setattr__(self, "z0", z0)

    @property
    def dim(self) -> int:
        return self.params.dim

    def normalize(self, raw) -> np.ndarray:
        return (np.asarray(raw, dtype=np.float64) - self.t_first) / (self.t_last - self.t_first)

    def denormalize(self, s) -> np.ndarray:
        return self.t_first + np.asarray(s, dtype=np.float64) * (self.t_last - self.t_first)

    def with_initial_state(self, z0) -> FittedModel:
        return replace(self, z0=np.asarray(z0, dtype=np.float64))

    def extrapolates(self, raw_times) -> bool:
        return bool(np.any(np.asarray(raw_times) > self.t_last))


def predict(m: FittedModel, raw_times: Sequence[float]) -> np.ndarray:
    """States at sorted raw times, integrating once from ``t_first``."""
    raw = np.atleast_1d(np.asarray(raw_times, dtype=np.float64))
    if raw.ndim != 1 or raw.size == 0:
        raise ValueError("raw_times must be a nonempty 1-D sequence")
    bad = np.flatnonzero(np.diff(raw) <= 0)
    if bad.size:
        raise ValueError(f"times not strictly increasing at index {bad[0] + 1}")
    if raw[0] < m.t_first:
        raise ValueError(f"time {raw[0]} precedes the initial time {m.t_first}")
    s = m.normalize(raw)
    # t_first itself must map to exactly 0 so the initial state comes back unchanged
    s[raw == m.t_first] = 0.0
    prepend = s[0] != 0.0
    grid = np.concatenate([[0.0], s]) if prepend else s
    states = integrate(as_field(m.params), m.z0, grid, m.solver)
    return states[1:] if prepend else states


def interpolate(m: FittedModel, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Divide [t_first, t_last] into ``k`` equal parts; return (times, states)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    times = m.t_first + np.arange(k + 1) * (m.t_last - m.t_first) / k
    times[-1] = m.t_last
    return times, predict(m, times)


def _split_report(idx, pred, target, decoder, ssim_cfg) -> Optional[dict]:
    if idx.size == 0:
        return None
    latent = float(np.mean([mse(pred[i], target[i]) for i in idx]))
    report = {"mse_latent": latent, "mse_latent_x1e3": latent * 1e3}
    if decoder is not None:
        img_p = [decoder.decode(pred[i]) for i in idx]
        img_t = [decoder.decode(target[i]) for i in idx]
        image = float(np.mean([mse(a, b) for a, b in zip(img_p, img_t)]))
        report["mse_image"] = image
        report["mse_image_x1e3"] = image * 1e3
        report["ssim"] = float(np.mean([ssim(a, b, ssim_cfg) for a, b in zip(img_p, img_t)]))
    return report


def evaluate(
    m: FittedModel,
    seq: LatentSequence,
    decoder: Optional[ToyDecoder] = None,
    ssim_cfg: SsimConfig = SsimConfig(),
) -> dict:
    """Latent and image reconstruction metrics split by observed/held-out.

    An empty split is reported as ``None`` rather than zero.
    """
    pred = predict(m, seq.times)
    return {
        "observed": _split_report(seq.observed_indices, pred, seq.codes, decoder, ssim_cfg),
        "unobserved": _split_report(seq.heldout_indices, pred, seq.codes, decoder, ssim_cfg),
        "n_observed": int(seq.observed_indices.size),
        "n_unobserved": int(seq.heldout_indices.size),
    }


def format_report(report: dict) -> str:
    """Plain-text table: MSE in units of 1e-3, SSIM in percent."""
    lines = [f"{'split':<12}{'n':>4}{'MSE lat(e-3)':>15}{'MSE img(e-3)':>15}{'SSIM':>8}"]
    for split in ("observed", "unobserved"):
        r = report[split]
        n = report[f"n_{split}"]
        if r is None:
            lines.append(f"{split:<12}{n:>4}{'-':>15}{'-':>15}{'-':>8}")
            continue
        img = f"{r['mse_image_x1e3']:.3f}" if "mse_image" in r else "-"
        s = f"{100 * r['ssim']:.1f}" if "ssim" in r else "-"
        lines.append(f"{split:<12}{n:>4}{r['mse_latent_x1e3']:>15.3f}{img:>15}{s:>8}")
    return "\n".join(lines)
