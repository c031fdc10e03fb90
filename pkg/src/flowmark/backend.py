"""Backend selection for the RNG stream kernels.

The compiled Cython core is preferred; the pure-Python fallback produces
bit-identical streams and is selected when the extension is unavailable or
when ``FLOWMARK_PURE_PYTHON=1`` is set.
"""

import os


def load_backend(name):
    """Load a kernel backend by name: 'cython' or 'python'."""
    if name == "cython":
        from flowmark import _kernels
        return _kernels
    if name == "python":
        from flowmark import _kernels_py
        return _kernels_py
    raise ValueError(f"unknown backend {name!r}")


def _select():
    if os.environ.get("FLOWMARK_PURE_PYTHON") == "1":
        return load_backend("python"), "python"
    try:
        return load_backend("cython"), "cython"
    except ImportError:
        return load_backend("python"), "python"


kernels, BACKEND = _select()


def backend_name():
    """Name of the kernel backend selected at import: 'cython' or 'python'."""
    return BACKEND
