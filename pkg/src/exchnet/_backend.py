"""Kernel backend selection.

The compiled extension is used when it imports; ``EXCHNET_BACKEND=python``
forces the numpy fallback and ``EXCHNET_BACKEND=cython`` makes a missing
extension an error.
"""

from __future__ import annotations

import os
from types import ModuleType

from . import _pykernels

__all__ = ["BACKEND", "kernels", "python_kernels", "compiled_kernels"]

python_kernels: ModuleType = _pykernels
compiled_kernels: ModuleType | None

try:
    from . import _ckernels as compiled_kernels  # type: ignore[attr-defined]
except ImportError:  # extension not built
    compiled_kernels = None

_choice = os.environ.get("EXCHNET_BACKEND", "auto").lower()
if _choice == "python":
    kernels = python_kernels
elif _choice == "cython":
    if compiled_kernels is None:
        raise ImportError("EXCHNET_BACKEND=cython but the compiled extension is not built")
    kernels = compiled_kernels
else:
    kernels = compiled_kernels or python_kernels

BACKEND = "cython" if kernels is compiled_kernels else "python"
