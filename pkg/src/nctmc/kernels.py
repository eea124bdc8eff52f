"""Hot-kernel dispatch: the compiled extension when built, NumPy otherwise.

Set ``NCTMC_PURE_PYTHON=1`` to force the NumPy fallback.
"""
import os

if os.environ.get("NCTMC_PURE_PYTHON"):
    from . import _pykernels as _impl
else:
    try:
        from . import _ckernels as _impl
    except ImportError:  # extension not built
        from . import _pykernels as _impl

BACKEND = _impl.BACKEND
ABSORBED = _impl.ABSORBED
NEGATIVE = _impl.NEGATIVE
select_event = _impl.select_event
conv1d_forward = _impl.conv1d_forward
conv1d_backward = _impl.conv1d_backward
