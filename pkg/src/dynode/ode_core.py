"""Explicit Runge-Kutta integrators evaluated on a grid of requested times.

Fixed-step methods (Euler, RK4) march with ``h_init`` and the adaptive
Dormand-Prince 5(4) pair adjusts its step from an embedded error estimate.
Either way the step is clamped so every requested time is hit exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Literal, Optional, Sequence

import numpy as np

VectorField = Callable[[np.ndarray, float], np.ndarray]
Method = Literal["euler", "rk4", "dopri5"]


class IntegrationError(RuntimeError):
    """Numerical failure while integrating; carries where it happened."""

    def __init__(self, message: str, t: float, z: Optional[np.ndarray] = None):
        super().__init__(f"{message} (t={t!r})")
        self.t = t
        self.z = z


@dataclass(frozen=True)
class SolverConfig:
    """Integrator settings.

    ``h_init`` and ``h_max`` default to 1/100 and the whole of the
    integration span; see :meth:`resolve`.
    """

    method: Method = "dopri5"
    rtol: float = 1e-6
    atol: float = 1e-9
    h_init: Optional[float] = None
    h_min: float = 1e-10
    h_max: Optional[float] = None
    max_steps: int = 100_000
    safety: float = 0.9
    scale_min: float = 0.2
    scale_max: float = 5.0

    def __post_init__(self):
        if self.method not in ("euler", "rk4", "dopri5"):
            raise ValueError(f"unknown method {self.method!r}")
        if not (self.rtol > 0 and self.atol > 0):
            raise ValueError("rtol and atol must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if not 0 < self.safety <= 1:
            raise ValueError("safety must lie in (0, 1]")
        if not 0 < self.scale_min < 1 < self.scale_max:
            raise ValueError("need 0 < scale_min < 1 < scale_max")
        if self.h_min <= 0:
            raise ValueError("h_min must be positive")
        if self.h_init is not None and self.h_init < self.h_min:
            raise ValueError("need h_min <= h_init")
        if self.h_max is not None and self.h_max < (self.h_init or self.h_min):
            raise ValueError("need h_init <= h_max")

    def resolve(self, span: float) -> SolverConfig:
        """Fill in span-dependent defaults."""
        h_max = self.h_max if self.h_max is not None else max(span, self.h_min)
        h_init = self.h_init if self.h_init is not None else span / 100
        h_init = min(max(h_init, self.h_min), h_max)
        return replace(self, h_init=h_init, h_max=h_max)


def _eval(f: VectorField, z: np.ndarray, t: float) -> np.ndarray:
    k = np.asarray(f(z, t), dtype=np.float64)
    if k.shape != z.shape:
        raise ValueError(f"vector field returned shape {k.shape}, expected {z.shape}")
    if not np.all(np.isfinite(k)):
        raise IntegrationError("vector field returned non-finite values", t, z)
    return k


def euler_step(f: VectorField, z, t: float, h: float) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    return z + h * _eval(f, z, t)


def rk4_step(f: VectorField, z, t: float, h: float) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    k1 = _eval(f, z, t)
    k2 = _eval(f, z + 0.5 * h * k1, t + 0.5 * h)
    k3 = _eval(f, z + 0.5 * h * k2, t + 0.5 * h)
    k4 = _eval(f, z + h * k3, t + h)
    return z + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


# Dormand & Prince (1980), RK5(4)7M
DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
DP_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
DP_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
DP_E = DP_B5 - DP_B4


def _dopri5(f, z, t, h, k1):
    ks = [k1]
    for i in range(1, 7):
        dz = sum(a * k for a, k in zip(DP_A[i], ks) if a != 0.0)
        ks.append(_eval(f, z + h * dz, t + DP_C[i] * h))
    # the last stage sits at the 5th-order solution (FSAL)
    z5 = z + h * sum(b * k for b, k in zip(DP_B5, ks) if b != 0.0)
    err = h * sum(e * k for e, k in zip(DP_E, ks))
    return z5, err, ks[6]


def dopri5_step(f: VectorField, z, t: float, h: float) -> tuple[np.ndarray, np.ndarray]:
    """One Dormand-Prince step: (5th-order solution, 5th-minus-4th error)."""
    z = np.asarray(z, dtype=np.float64)
    z5, err, _ = _dopri5(f, z, t, h, _eval(f, z, t))
    return z5, err


def error_norm(err: np.ndarray, z: np.ndarray, z_new: np.ndarray, rtol: float, atol: float) -> float:
    scale = atol + rtol * np.maximum(np.abs(z), np.abs(z_new))
    return float(np.sqrt(np.mean((err / scale) ** 2)))


def adapt_step(err_norm: float, h: float, order: int, cfg: SolverConfig) -> tuple[bool, float]:
    """Accept/reject a step and propose the next size.

    ``order`` is the exponent denominator of the classical controller,
    i.e. ``h * safety * err_norm ** (-1 / order)``; pass 5 for dopri5.
    """
    accept = err_norm <= 1.0
    if err_norm <= 1e-16:
        factor = cfg.scale_max
    else:
        factor = cfg.safety * err_norm ** (-1.0 / order)
        factor = min(max(factor, cfg.scale_min), cfg.scale_max)
    h_next = h * factor
    h_max = cfg.h_max if cfg.h_max is not None else np.inf
    h_next = min(max(h_next, cfg.h_min), h_max)
    return accept, h_next


def _check_times(times) -> np.ndarray:
    times = np.asarray(times, dtype=np.float64)
    if times.ndim != 1 or times.size == 0:
        raise ValueError("times must be a nonempty 1-D sequence")
    if not np.all(np.isfinite(times)):
        raise ValueError("times must be finite")
    bad = np.flatnonzero(np.diff(times) <= 0)
    if bad.size:
        raise ValueError(f"times not strictly increasing at index {bad[0] + 1}")
    return times


def integrate(f: VectorField, z0, times: Sequence[float], cfg: SolverConfig = SolverConfig()) -> np.ndarray:
    """Solve z' = f(z, t), z(times[0]) = z0; return states at ``times``.

    Output row 0 is a copy of ``z0``. Raises :class:`IntegrationError` on
    step-size underflow, non-finite field values or when ``max_steps`` is
    exhausted.
    """
    times = _check_times(times)
    z = np.array(z0, dtype=np.float64)
    if z.ndim != 1:
        raise ValueError("z0 must be a vector")
    if not np.all(np.isfinite(z)):
        raise ValueError("z0 must be finite")
    out = np.empty((times.size, z.size))
    out[0] = z
    if times.size == 1:
        return out
    cfg = cfg.resolve(times[-1] - times[0])
    if cfg.method == "dopri5":
        _integrate_adaptive(f, z, times, cfg, out)
    else:
        step = euler_step if cfg.method == "euler" else rk4_step
        _integrate_fixed(f, step, z, times, cfg, out)
    return out


def _integrate_fixed(f, step, z, times, cfg, out):
    t = times[0]
    n_steps = 0
    for i in range(1, times.size):
        target = times[i]
        while t < target:
            h = min(cfg.h_init, target - t)
            z = step(f, z, t, h)
            # land exactly on the requested time
            t = target if target - (t + h) <= 1e-12 * max(1.0, abs(target)) else t + h
            n_steps += 1
            if n_steps > cfg.max_steps:
                raise IntegrationError("max_steps exceeded", t, z)
        out[i] = z


def _integrate_adaptive(f, z, times, cfg, out):
    t = times[0]
    h = cfg.h_init
    k1 = _eval(f, z, t)
    n_steps = 0
    for i in range(1, times.size):
        target = times[i]
        while t < target:
            if n_steps >= cfg.max_steps:
                raise IntegrationError("max_steps exceeded", t, z)
            n_steps += 1
            remaining = target - t
            clamped = h >= remaining
            h_try = remaining if clamped else h
            z_new, err, k_last = _dopri5(f, z, t, h_try, k1)
            en = error_norm(err, z, z_new, cfg.rtol, cfg.atol)
            accept, h_next = adapt_step(en, h_try, 5, cfg)
            if accept:
                if not np.all(np.isfinite(z_new)):
                    raise IntegrationError("non-finite state", t, z)
                t = target if clamped else t + h_try
                z, k1 = z_new, k_last
                # a short step forced by the boundary does not shrink the next one
                h = max(h_next, h) if clamped else h_next
            else:
                if h_try <= cfg.h_min:
                    raise IntegrationError("step size underflow below h_min", t, z)
                h = h_next
        out[i] = z
