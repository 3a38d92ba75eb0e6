"""Hot loops: MLP evaluation, vector-Jacobian products and fixed-step
solver unrolls with reverse accumulation.

Parameters live in one flat float64 vector. Layer ``l`` maps
``sizes[l] -> sizes[l+1]``; its weight block (row-major) starts at
``offsets[l]`` and its bias follows immediately. Hidden layers use tanh,
the last layer is linear.

Activation buffers have shape ``(n_layers + 1, max_width)``; row 0 holds
the network input, row ``l + 1`` the output of layer ``l``.
"""

import numpy as np

from ._jit import JIT_ENABLED, njit

EULER = 0
RK4 = 1


if JIT_ENABLED:

    @njit
    def _add_outer(out, g, x):
        for i in range(g.shape[0]):
            gi = g[i]
            for j in range(x.shape[0]):
                out[i, j] += gi * x[j]

    @njit
    def _dense(w, b, x, out, squash):
        for i in range(w.shape[0]):
            acc = b[i]
            for j in range(w.shape[1]):
                acc += w[i, j] * x[j]
            out[i] = np.tanh(acc) if squash else acc

else:

    def _dense(w, b, x, out, squash):
        y = w @ x + b
        out[:] = np.tanh(y) if squash else y

    def _add_outer(out, g, x):
        out += np.outer(g, x)


@njit
def mlp_forward(theta, sizes, offsets, time_input, z, t, acts):
    n_layers = sizes.shape[0] - 1
    d = z.shape[0]
    acts[0, :d] = z
    if time_input:
        acts[0, d] = t
    for l in range(n_layers):
        n_in = sizes[l]
        n_out = sizes[l + 1]
        off = offsets[l]
        w = theta[off:off + n_out * n_in].reshape((n_out, n_in))
        b = theta[off + n_out * n_in:off + n_out * n_in + n_out]
        _dense(w, b, acts[l, :n_in], acts[l + 1, :n_out], l < n_layers - 1)
    return acts[n_layers, :sizes[n_layers]].copy()


@njit
def mlp_vjp(theta, sizes, offsets, acts, v, gtheta):
    """Accumulate v^T df/dtheta into ``gtheta``; return v^T df/d(input)."""
    n_layers = sizes.shape[0] - 1
    g = v.copy()
    for l in range(n_layers - 1, -1, -1):
        n_in = sizes[l]
        n_out = sizes[l + 1]
        off = offsets[l]
        if l < n_layers - 1:
            a = acts[l + 1, :n_out]
            g = g * (1.0 - a * a)
        x = acts[l, :n_in]
        gw = gtheta[off:off + n_out * n_in].reshape((n_out, n_in))
        _add_outer(gw, g, x)
        gtheta[off + n_out * n_in:off + n_out * n_in + n_out] += g
        w = theta[off:off + n_out * n_in].reshape((n_out, n_in))
        g = g @ w
    return g


@njit
def _step(theta, sizes, offsets, time_input, z, t, h, method, tape):
    """One Euler/RK4 step; stage activations land in ``tape[0..3]``."""
    k1 = mlp_forward(theta, sizes, offsets, time_input, z, t, tape[0])
    if method == EULER:
        return z + h * k1
    k2 = mlp_forward(theta, sizes, offsets, time_input, z + 0.5 * h * k1, t + 0.5 * h, tape[1])
    k3 = mlp_forward(theta, sizes, offsets, time_input, z + 0.5 * h * k2, t + 0.5 * h, tape[2])
    k4 = mlp_forward(theta, sizes, offsets, time_input, z + h * k3, t + h, tape[3])
    return z + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


@njit
def unroll_forward(theta, sizes, offsets, time_input, z0, times, n_sub, method, tapes):
    """Integrate with ``n_sub`` equal steps per interval of ``times``.

    Returns the state at the start of every substep plus the final state,
    shape ``((len(times) - 1) * n_sub + 1, d)``. ``tapes`` has shape
    ``(n_steps, 4, n_layers + 1, max_width)`` to keep every stage for the
    backward pass, or a leading dimension of 1 to discard them. On a
    non-finite state the trajectory is cut right after the offending row.
    """
    n_int = times.shape[0] - 1
    d = z0.shape[0]
    record = tapes.shape[0] > 1
    traj = np.empty((n_int * n_sub + 1, d))
    traj[0] = z0
    k = 0
    for i in range(n_int):
        h = (times[i + 1] - times[i]) / n_sub
        for s in range(n_sub):
            t = times[i] + s * h
            traj[k + 1] = _step(theta, sizes, offsets, time_input, traj[k], t, h, method, tapes[k if record else 0])
            if not np.all(np.isfinite(traj[k + 1])):
                return traj[:k + 2]
            k += 1
    return traj


@njit
def _step_vjp(theta, sizes, offsets, a, h, method, gtheta, tape):
    """Pull the adjoint ``a`` of a step's output back to its input."""
    d = a.shape[0]
    if method == EULER:
        gin = mlp_vjp(theta, sizes, offsets, tape[0], h * a, gtheta)
        return a + gin[:d]
    gz = a.copy()
    g4 = mlp_vjp(theta, sizes, offsets, tape[3], (h / 6.0) * a, gtheta)[:d]
    gz += g4
    g3 = mlp_vjp(theta, sizes, offsets, tape[2], (h / 3.0) * a + h * g4, gtheta)[:d]
    gz += g3
    g2 = mlp_vjp(theta, sizes, offsets, tape[1], (h / 3.0) * a + 0.5 * h * g3, gtheta)[:d]
    gz += g2
    g1 = mlp_vjp(theta, sizes, offsets, tape[0], (h / 6.0) * a + 0.5 * h * g2, gtheta)[:d]
    gz += g1
    return gz


@njit
def unroll_backward(theta, sizes, offsets, times, n_sub, method, g_out, tapes):
    """Gradient w.r.t. theta given dL/dz at each window time after the first.

    ``g_out[i]`` is the loss gradient at ``times[i + 1]``; ``tapes`` must be
    the recorded stages of ``unroll_forward`` with the same parameters.
    """
    n_int = times.shape[0] - 1
    gtheta = np.zeros_like(theta)
    a = np.zeros(g_out.shape[1])
    for i in range(n_int - 1, -1, -1):
        a += g_out[i]
        h = (times[i + 1] - times[i]) / n_sub
        for s in range(n_sub - 1, -1, -1):
            a = _step_vjp(theta, sizes, offsets, a, h, method, gtheta, tapes[i * n_sub + s])
    return gtheta
