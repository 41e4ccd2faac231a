"""Kernel dispatch: compiled Cython extension vs pure numpy fallback.

The implementation is chosen once at import. `WORKLOAD_FORGE_KERNEL` forces it:
  auto    (default) per-kernel choice: compiled split search when available,
          BLAS-backed distance kernels (faster at scale, see benchmarks/)
  cython  compiled everywhere (error if the extension is missing)
  python  numpy fallback everywhere
"""

from __future__ import annotations

import os

from . import _py

try:
    from . import _ck
except ImportError:
    _ck = None

HAVE_EXT = _ck is not None

_mode = os.environ.get("WORKLOAD_FORGE_KERNEL", "auto")
if _mode not in ("auto", "cython", "python"):
    raise ValueError(f"WORKLOAD_FORGE_KERNEL={_mode!r}: expected auto, cython or python")
if _mode == "cython" and not HAVE_EXT:
    raise ImportError("WORKLOAD_FORGE_KERNEL=cython but the compiled extension is not built")

if _mode == "cython":
    min_dists = _ck.min_dists
    knn_all = _ck.knn_all
    best_splits = _ck.best_splits
elif _mode == "python" or not HAVE_EXT:
    min_dists = _py.min_dists
    knn_all = _py.knn_all
    best_splits = _py.best_splits
else:
    # auto: the split scan is branch-heavy and wins compiled; the distance
    # kernels are BLAS-bound and win in numpy.
    min_dists = _py.min_dists
    knn_all = _py.knn_all
    best_splits = _ck.best_splits

knn_of_row = _py.knn_of_row

ACTIVE = {
    "mode": _mode,
    "have_ext": HAVE_EXT,
    "min_dists": "cython" if min_dists is not _py.min_dists else "python",
    "knn_all": "cython" if knn_all is not _py.knn_all else "python",
    "best_splits": "cython" if HAVE_EXT and best_splits is _ck.best_splits else "python",
}
