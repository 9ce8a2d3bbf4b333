"""Backend selection for the block pursuit kernel.

The compiled Cython module is used when importable; otherwise, or when the
environment variable ``NRHDR_PURE_PYTHON`` is set to a non-empty value other
than ``0``, the numpy implementation is used. Both expose the same
``pursue_batch`` signature.
"""

import os

from nrhdr import _pursuit_py

_force_python = os.environ.get("NRHDR_PURE_PYTHON", "") not in ("", "0")

try:
    if _force_python:
        raise ImportError("pure python backend requested")
    from nrhdr import _pursuit as _compiled
except ImportError:
    _compiled = None

BACKEND = "cython" if _compiled is not None else "python"
pursue_batch = _compiled.pursue_batch if _compiled is not None else _pursuit_py.pursue_batch
pursue_batch_python = _pursuit_py.pursue_batch


def get_pursue(backend=None):
    """Return the pursuit function for ``backend`` ('cython', 'python' or None)."""
    if backend is None:
        return pursue_batch
    if backend == "python":
        return _pursuit_py.pursue_batch
    if backend == "cython":
        if _compiled is None:
            raise ImportError("compiled pursuit kernel is not built; run `pip install -e .`")
        return _compiled.pursue_batch
    raise ValueError(f"unknown backend {backend!r}")
