"""Optional numba acceleration.

Set ``DYNODE_JIT=0`` to run every kernel as plain numpy. The kernels are
written so that the same source is valid under both paths.
"""

import os

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

_flag = os.environ.get("DYNODE_JIT", "1").strip().lower()
JIT_ENABLED = numba is not None and _flag not in {"0", "false", "off", "no"}


def njit(func):
    if JIT_ENABLED:
        return numba.njit(cache=True, nogil=True)(func)
    return func
