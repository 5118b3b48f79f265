"""Kernel backend selection.

The compiled Cython backend is preferred when built; the NumPy backend is the
always-available fallback. Set TRIDENT_KERNELS=numpy or TRIDENT_KERNELS=cython
to force one (forcing cython raises if the extension is missing).
"""

from __future__ import annotations

import os

from . import pykernels


def _load_compiled():
    from . import cykernels  # noqa: PLC0415

    return cykernels


def select_backend(name: str | None = None):
    """Return the kernel module for `name` (or the environment default)."""
    if name is None:
        name = os.environ.get("TRIDENT_KERNELS", "auto").lower()
    if name in ("numpy", "py", "python"):
        return pykernels
    if name in ("cython", "cy", "compiled"):
        return _load_compiled()
    if name in ("auto", ""):
        try:
            return _load_compiled()
        except ImportError:
            return pykernels
    raise ValueError(f"unknown kernel backend {name!r}")


kernels = select_backend()
BACKEND = kernels.NAME
