"""Backend selection for the hot loops.

The compiled extension is used when it imports; otherwise, or when the
environment variable ``RECOURSE_TREES_PURE`` is set to a non-empty value other
than ``0``, the numpy fallback is used. Both expose the same functions.
"""

import os

_force_pure = os.environ.get("RECOURSE_TREES_PURE", "") not in ("", "0")

if _force_pure:
    from . import _kernels_py as _impl
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl
        BACKEND = "cython"
    except ImportError:  # extension not built
        from . import _kernels_py as _impl
        BACKEND = "python"

row_fronts = _impl.row_fronts
merge_into = _impl.merge_into
merge_pairs_into = _impl.merge_pairs_into
push_into = _impl.push_into
finalize = _impl.finalize


def load(backend: str):
    """Return the kernel module for ``"cython"`` or ``"python"`` explicitly."""
    if backend == "python":
        from . import _kernels_py
        return _kernels_py
    if backend == "cython":
        from . import _kernels
        return _kernels
    raise ValueError(f"unknown backend {backend!r}")
