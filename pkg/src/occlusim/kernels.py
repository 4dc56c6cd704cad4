"""Kernel backend selection.

The compiled Cython extension is preferred; the numpy implementation is a
drop-in replacement used when the extension is missing or when the
OCCLUSIM_PURE_PYTHON environment variable is set to a non-empty value.
Results are deterministic within a backend; the two backends agree to float
tolerance but not bit for bit.
"""

from __future__ import annotations

import os

if os.environ.get("OCCLUSIM_PURE_PYTHON"):
    from . import _kernels_py as _impl
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]
    except ImportError:
        from . import _kernels_py as _impl

BACKEND_NAME = _impl.BACKEND_NAME

cast_rays = _impl.cast_rays
poly_contains_many = _impl.poly_contains_many
star_contains_many = _impl.star_contains_many
frenet_project_many = _impl.frenet_project_many
srq_g_one = _impl.srq_g_one
srq_g_many = _impl.srq_g_many
ppz_cell_mass = _impl.ppz_cell_mass
admm_solve = _impl.admm_solve
