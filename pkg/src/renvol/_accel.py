"""Select the compiled kernels when available.

Set ``RENVOL_PURE_PYTHON=1`` to force the reference implementation.
"""

from __future__ import annotations

import os

from . import _kernels_py

BACKEND = "python"
simpson_faces = _kernels_py.simpson_faces
riccati_dopri5 = _kernels_py.riccati_dopri5

if os.environ.get("RENVOL_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels  # type: ignore[attr-defined]
    except ImportError:
        pass
    else:
        BACKEND = "cython"
        simpson_faces = _kernels.simpson_faces
        riccati_dopri5 = _kernels.riccati_dopri5
