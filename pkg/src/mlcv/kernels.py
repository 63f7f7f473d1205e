"""Back-end selection for the discrepancy kernels.

Prefers the compiled extension when importable; set ``MLCV_PURE_PYTHON=1``
to force the numpy fallback. Both back ends expose the same functions.
"""
from __future__ import annotations

import os

if os.environ.get("MLCV_PURE_PYTHON"):
    from . import _discrepancy_py as _impl
else:
    try:
        from . import _discrepancy_cy as _impl  # type: ignore[attr-defined]
    except ImportError:
        from . import _discrepancy_py as _impl

BACKEND = _impl.BACKEND
cd2_sq = _impl.cd2_sq
pair_tables = _impl.pair_tables
subset_scores = _impl.subset_scores
anneal = _impl.anneal
