"""Hot conv and relu kernels with a numba path and a pure-numpy fallback.

The numba path is used when numba imports cleanly, unless the environment
variable ``MULTIVFL_NUMBA`` is set to ``0``. Both paths produce bit-identical
results; the switch only affects speed.
"""

import os

from . import _numpy as numpy_impl

try:
    from . import _numba as numba_impl
except ImportError:  # numba is an optional extra
    numba_impl = None

NUMBA_AVAILABLE = numba_impl is not None
USE_NUMBA = NUMBA_AVAILABLE and os.environ.get("MULTIVFL_NUMBA", "1") != "0"

_impl = numba_impl if USE_NUMBA else numpy_impl
BACKEND = "numba" if USE_NUMBA else "numpy"

im2col = _impl.im2col
col2im = _impl.col2im
relu_grad = _impl.relu_grad

__all__ = ["im2col", "col2im", "relu_grad", "BACKEND", "NUMBA_AVAILABLE", "USE_NUMBA", "numpy_impl", "numba_impl"]
