"""Backend selection for the propagation kernels.

The compiled extension is used when it imports and ``PULSEFORGE_PURE_PYTHON``
is unset (or ``0``); otherwise the numpy fallback is used. ``BACKEND`` names the
active choice.
"""
from __future__ import annotations

import os
from types import ModuleType

from . import _kernels_py


def _load() -> tuple[ModuleType, str]:
    if os.environ.get("PULSEFORGE_PURE_PYTHON", "0") not in ("", "0"):
        return _kernels_py, "python"
    try:
        from . import _kernels  # type: ignore[attr-defined]
    except ImportError:
        return _kernels_py, "python"
    return _kernels, "compiled"


_impl, BACKEND = _load()

apply_unitaries = _impl.apply_unitaries
cn_propagate = _impl.cn_propagate


def backends() -> dict[str, ModuleType]:
    """All importable kernel implementations, keyed by name."""
    found = {"python": _kernels_py}
    try:
        from . import _kernels  # type: ignore[attr-defined]
    except ImportError:
        pass
    else:
        found["compiled"] = _kernels
    return found
