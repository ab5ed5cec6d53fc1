"""Backend selection for the estimation-error kernels.

The compiled extension is used when it imports; set
``XLMIMO_PURE_PYTHON=1`` to force the numpy fallback.
"""

from __future__ import annotations

import os
from types import ModuleType

import numpy as np

from xlmimo import _kernels_py


def _load_compiled() -> ModuleType | None:
    if os.environ.get("XLMIMO_PURE_PYTHON", "") not in ("", "0"):
        return None
    try:
        from xlmimo import _kernels
    except ImportError:
        return None
    return _kernels


_compiled = _load_compiled()
BACKEND = "cython" if _compiled is not None else "python"
_impl: ModuleType = _compiled if _compiled is not None else _kernels_py


def available_backends() -> dict[str, ModuleType]:
    out = {"python": _kernels_py}
    if _compiled is not None:
        out["cython"] = _compiled
    return out


def _check(R, pilots, tau_p):
    pilots = np.ascontiguousarray(pilots, dtype=np.int64)
    if pilots.shape[-1] != R.shape[0]:
        raise ValueError("pilot vector length must equal the number of UEs")
    if pilots.size and (pilots.min() < 0 or pilots.max() >= tau_p):
        raise ValueError("pilot indices must lie in [0, tau_p)")
    return pilots


def ue_error_traces(R, p, tau_p: int, sigma2: float, pilots) -> np.ndarray:
    """Per-UE ``sum_l trace(C_kl)`` under the assignment ``pilots`` (0-based)."""
    pilots = _check(R, pilots, tau_p)
    return _impl.ue_error_traces(
        np.ascontiguousarray(R, dtype=complex), np.asarray(p, dtype=float), int(tau_p), float(sigma2), pilots
    )


def assignment_costs(R, p, tau_p: int, sigma2: float, inv_norm, candidates) -> np.ndarray:
    """Weighted error-trace cost of each candidate row (shape (B, K))."""
    candidates = _check(R, np.atleast_2d(candidates), tau_p)
    return _impl.assignment_costs(
        np.ascontiguousarray(R, dtype=complex),
        np.asarray(p, dtype=float),
        int(tau_p),
        float(sigma2),
        np.asarray(inv_norm, dtype=float),
        candidates,
    )
