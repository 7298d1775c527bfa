"""Backend selection for the predictor-corrector kernel.

The compiled core is used when it imports; otherwise, or when the
environment variable ``PENBAR_PURE_PYTHON`` is set to a non-empty value,
the numpy fallback is used.
"""

from __future__ import annotations

import os
from typing import Callable, Dict, Optional

from . import _pd_py

try:
    from . import _pdcore
except ImportError:  # extension not built
    _pdcore = None

BACKENDS: Dict[str, Callable] = {"python": _pd_py.pd_loop}
if _pdcore is not None:
    BACKENDS["compiled"] = _pdcore.pd_loop

if _pdcore is not None and not os.environ.get("PENBAR_PURE_PYTHON"):
    DEFAULT_BACKEND = "compiled"
else:
    DEFAULT_BACKEND = "python"

CONVERGED = _pd_py.CONVERGED
MAX_ITER = _pd_py.MAX_ITER
FACTORIZATION_FAILED = _pd_py.FACTORIZATION_FAILED


def available_backends() -> list[str]:
    return list(BACKENDS)


def get_backend(name: Optional[str] = None) -> Callable:
    name = DEFAULT_BACKEND if name is None else name
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"backend {name!r} is not available; have {available_backends()}") from None
