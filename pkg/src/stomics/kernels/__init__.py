"""Hot-loop kernels with a compiled backend and a numpy fallback.

The compiled extension is used when it imports; set ``STO_KERNELS=python`` to
force the fallback. Both backends are importable directly for comparison.
"""
import os

from . import _pykernels as python_backend

try:
    from . import _ckernels as compiled_backend
except ImportError:  # extension not built
    compiled_backend = None

_FUNCS = ("reho_map", "lfcd_map", "im2col3d", "col2im3d")


def _select(name):
    if name == "python" or compiled_backend is None:
        return python_backend
    return compiled_backend


def use_backend(name):
    """Switch the module-level kernels to ``'compiled'`` or ``'python'``."""
    global BACKEND, reho_map, lfcd_map, im2col3d, col2im3d
    mod = _select(name)
    BACKEND = "compiled" if mod is compiled_backend else "python"
    reho_map = mod.reho_map
    lfcd_map = mod.lfcd_map
    im2col3d = mod.im2col3d
    col2im3d = mod.col2im3d
    return BACKEND


BACKEND = None
reho_map = lfcd_map = im2col3d = col2im3d = None
use_backend(os.environ.get("STO_KERNELS", "compiled"))

__all__ = ["BACKEND", "use_backend", "python_backend", "compiled_backend", *_FUNCS]
