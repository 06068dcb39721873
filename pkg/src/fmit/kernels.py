"""Backend selection for the CRF dynamic-programming kernels.

The compiled extension (``fmit._ckernels``) is used when it imports; setting
``FMIT_PURE_PYTHON=1`` forces the numpy fallback.  Both take float64 arrays
and int64 lengths.
"""
import os

import numpy as np

from . import _pykernels

try:
    if os.environ.get("FMIT_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure-python backend forced")
    from . import _ckernels as _compiled
except ImportError:
    _compiled = None

BACKENDS = {"python": _pykernels}
if _compiled is not None:
    BACKENDS["compiled"] = _compiled

_active = _compiled or _pykernels
BACKEND = "compiled" if _compiled is not None else "python"


def use_backend(name: str) -> None:
    global _active, BACKEND
    if name not in BACKENDS:
        raise ValueError(f"backend {name!r} unavailable; have {sorted(BACKENDS)}")
    _active = BACKENDS[name]
    BACKEND = name


def _prep(emissions, transitions, start, stop, lengths):
    e = np.ascontiguousarray(emissions, dtype=np.float64)
    if e.ndim != 3:
        raise ValueError(f"emissions must be (B, N, K), got {e.shape}")
    B, N, K = e.shape
    lengths = np.ascontiguousarray(lengths, dtype=np.int64)
    if lengths.shape != (B,) or (B and (lengths.min() < 1 or lengths.max() > N)):
        raise ValueError(f"lengths {lengths} invalid for emissions {e.shape}")
    T = np.ascontiguousarray(transitions, dtype=np.float64)
    s = np.ascontiguousarray(start, dtype=np.float64)
    t = np.ascontiguousarray(stop, dtype=np.float64)
    if T.shape != (K, K) or s.shape != (K,) or t.shape != (K,):
        raise ValueError(f"transition shapes {T.shape}, {s.shape}, {t.shape} do not match K={K}")
    return e, T, s, t, lengths


def crf_log_partition(emissions, transitions, start, stop, lengths):
    return _active.crf_log_partition(*_prep(emissions, transitions, start, stop, lengths))


def crf_marginals(emissions, transitions, start, stop, lengths):
    return _active.crf_marginals(*_prep(emissions, transitions, start, stop, lengths))


def crf_viterbi(emissions, transitions, start, stop, lengths):
    return _active.crf_viterbi(*_prep(emissions, transitions, start, stop, lengths))
