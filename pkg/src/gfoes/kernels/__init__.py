"""Hot numeric kernels.

The compiled extension is used when it was built; otherwise the numpy
fallback is loaded. Set ``GFOES_PURE_PYTHON=1`` to force the fallback.
"""

import os

import numpy as np

from . import _fallback

if os.environ.get("GFOES_PURE_PYTHON", "") not in ("", "0"):
    _impl = _fallback
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _fallback
        BACKEND = "python"


def softmax_rows(x):
    return _impl.softmax_rows(np.ascontiguousarray(x, dtype=np.float64))


def xent_rows(x, labels):
    return _impl.xent_rows(
        np.ascontiguousarray(x, dtype=np.float64),
        np.ascontiguousarray(labels, dtype=np.int_),
    )


def sq_norm(g):
    return float(_impl.sq_norm(np.ascontiguousarray(g, dtype=np.float64)))


def sgd_update(p, g, lr, weight_decay, grad_scale):
    return _impl.sgd_update(
        np.ascontiguousarray(p, dtype=np.float64),
        np.ascontiguousarray(g, dtype=np.float64),
        float(lr), float(weight_decay), float(grad_scale),
    )


__all__ = ["BACKEND", "softmax_rows", "xent_rows", "sq_norm", "sgd_update"]
