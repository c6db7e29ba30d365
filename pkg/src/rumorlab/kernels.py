"""Kernel selection: compiled scans when the extension is built, NumPy otherwise."""
from __future__ import annotations

from . import _kernels_py as python_kernels

try:
    from . import _kernels as compiled_kernels
except ImportError:  # extension not built
    compiled_kernels = None

active = compiled_kernels if compiled_kernels is not None else python_kernels
BACKEND = "cython" if compiled_kernels is not None else "python"

block_uniforms = active.block_uniforms
firework_scan = active.firework_scan
reverse_scan = active.reverse_scan
