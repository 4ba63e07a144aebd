"""Hot-kernel backend selection.

Prefers the compiled extension; falls back to the NumPy implementations when
it is not built. Set NEUROLOOP_PURE_PYTHON=1 to force the fallback (used by
the parity tests and the benchmark).
"""

import os

if os.environ.get("NEUROLOOP_PURE_PYTHON"):
    from . import _pykernels as _impl
else:
    try:
        from . import _ckernels as _impl  # type: ignore[attr-defined]
    except ImportError:
        from . import _pykernels as _impl

BACKEND = _impl.BACKEND
sosfilt_stream = _impl.sosfilt_stream
burg = _impl.burg

__all__ = ["BACKEND", "sosfilt_stream", "burg"]
