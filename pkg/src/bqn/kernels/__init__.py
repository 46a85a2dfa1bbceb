"""Hot bit-manipulation kernels with backend selection at import time.

Two interchangeable backends implement the same five functions
(`words_per_row`, `pack_rows`, `unpack_rows`, `sign_dot_rows`,
`sign_matmul`):

* ``_bitops_c`` -- Cython extension, built via ``setup.py build_ext``;
* ``_bitops_py`` -- pure numpy fallback.

The compiled backend is preferred when importable. Set ``BQN_KERNELS=py``
or ``BQN_KERNELS=c`` to force a backend (forcing ``c`` raises if the
extension is missing).
"""

import os

from . import _bitops_py

_requested = os.environ.get("BQN_KERNELS", "auto").strip().lower()

if _requested in ("auto", "", "c", "compiled"):
    try:
        from . import _bitops_c as _impl

        BACKEND = "compiled"
    except ImportError:
        if _requested in ("c", "compiled"):
            raise
        _impl = _bitops_py
        BACKEND = "python"
elif _requested in ("py", "python"):
    _impl = _bitops_py
    BACKEND = "python"
else:
    raise ValueError(f"unknown BQN_KERNELS value: {_requested!r}")

WORD_BITS = 64

words_per_row = _impl.words_per_row
pack_rows = _impl.pack_rows
unpack_rows = _impl.unpack_rows
sign_dot_rows = _impl.sign_dot_rows
sign_matmul = _impl.sign_matmul


def available_backends():
    """Names of importable backends, compiled first if present."""
    names = []
    try:
        from . import _bitops_c  # noqa: F401

        names.append("compiled")
    except ImportError:
        pass
    names.append("python")
    return names


def get_backend(name: str):
    """Return the backend module for 'compiled' or 'python'."""
    if name == "python":
        return _bitops_py
    if name == "compiled":
        from . import _bitops_c

        return _bitops_c
    raise ValueError(f"unknown backend: {name!r}")
