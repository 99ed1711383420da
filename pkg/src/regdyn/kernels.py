"""Kernel dispatch: compiled extension if importable, NumPy fallback otherwise.

Set ``REGDYN_PURE_PYTHON=1`` to force the fallback.
"""
from __future__ import annotations

import os

from . import _pykernels

BACKEND = "python"

if os.environ.get("REGDYN_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _pykernels
else:
    _impl = _pykernels

gaussian_moments = _pykernels.gaussian_moments
pairwise_inner = getattr(_impl, "pairwise_inner", _pykernels.pairwise_inner)
mlp_forward = getattr(_impl, "mlp_forward", _pykernels.mlp_forward)
mlp_forward_jacobian = getattr(_impl, "mlp_forward_jacobian", _pykernels.mlp_forward_jacobian)


def backend() -> str:
    return BACKEND
