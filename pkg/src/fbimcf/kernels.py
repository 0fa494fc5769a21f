"""Kernel selection: compiled extension when importable, numpy fallback otherwise.

Set ``FBIMCF_PURE_PYTHON=1`` to force the fallback.
"""

from __future__ import annotations

import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("FBIMCF_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled  # type: ignore[attr-defined]

        _impl = _compiled
        BACKEND = "compiled"
    except ImportError:
        pass

march_segments = _impl.march_segments
curve_geometry = _impl.curve_geometry
imcf_substeps = _impl.imcf_substeps


def backends() -> dict:
    """Available implementations keyed by name (for benchmarks and tests)."""
    out = {"python": _kernels_py}
    try:
        from . import _kernels as _compiled  # type: ignore[attr-defined]

        out["compiled"] = _compiled
    except ImportError:
        pass
    return out
