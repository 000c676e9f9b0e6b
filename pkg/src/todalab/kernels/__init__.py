"""Hot-kernel selection: compiled extension when available, numpy fallback
otherwise (or when TODALAB_PURE=1). Complex-coefficient workloads always use
the numpy twin."""

import os

import numpy as np

from . import _quadcore_py

if os.environ.get("TODALAB_PURE", "0") == "1":
    _impl = None
else:
    try:
        from . import _quadcore as _impl
    except ImportError:
        _impl = None

BACKEND = "compiled" if _impl is not None else "numpy"


def quad_nodes_eval(ls0, lsv, zb, zA, K, logmax, xi, wq, bflag):
    if _impl is not None and not np.iscomplexobj(K):
        return _impl.quad_nodes_eval(
            np.ascontiguousarray(ls0), np.ascontiguousarray(lsv),
            np.ascontiguousarray(zb), np.ascontiguousarray(zA),
            np.ascontiguousarray(K), np.ascontiguousarray(logmax),
            np.ascontiguousarray(xi), np.ascontiguousarray(wq),
            np.ascontiguousarray(bflag, dtype=np.uint8))
    return _quadcore_py.quad_nodes_eval(ls0, lsv, zb, zA, K, logmax, xi, wq, bflag)
