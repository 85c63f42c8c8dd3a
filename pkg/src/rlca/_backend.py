"""Kernel selection: compiled extension when importable, else pure Python.

Set ``RLCA_BACKEND=python`` to force the fallback.
"""

from __future__ import annotations

import os

from rlca import _kernels_py

if os.environ.get("RLCA_BACKEND", "").lower() == "python":
    kernels = _kernels_py
    BACKEND = "python"
else:
    try:
        from rlca import _kernels as kernels  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        kernels = _kernels_py
        BACKEND = "python"

values_backward = kernels.values_backward
flows_forward = kernels.flows_forward
