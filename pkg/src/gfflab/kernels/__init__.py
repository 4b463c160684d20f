"""Hot-loop kernels: compiled extension when available, NumPy fallback otherwise.

Set GFFLAB_FORCE_BACKEND=numpy (or =cython) to pin a backend; the resolved
choice is recorded in BACKEND and in every experiment manifest.
"""

import os

from . import _npkern

_requested = os.environ.get("GFFLAB_FORCE_BACKEND", "")

_impl = _npkern
if _requested != "numpy":
    try:
        from . import _ckern as _impl  # type: ignore[no-redef]
    except ImportError:
        if _requested == "cython":
            raise
        _impl = _npkern

BACKEND = _impl.BACKEND


def _pick(name):
    return getattr(_impl, name, None) or getattr(_npkern, name)


srw_hit_mc = _pick("srw_hit_mc")
srw_green_mc = _pick("srw_green_mc")
wos_hit_mc = _pick("wos_hit_mc")
label_mask = _pick("label_mask")
