"""Euler residuals of time-dependent fields sampled on a torus grid."""

from __future__ import annotations

from typing import Callable

import numpy as np

from ..fields import TWO_PI, grid_points
from .spectral import SpectralWorkspace

TIME_STEP = 1e-3
# Five-point central stencil for d/dt, fourth order.
STENCIL = ((-2, 1.0 / 12), (-1, -8.0 / 12), (1, 8.0 / 12), (2, -1.0 / 12))

GridFn = Callable[[float], np.ndarray]


def sampler(evaluator: Callable[[float, np.ndarray], np.ndarray], ws: SpectralWorkspace) -> GridFn:
    """Turn a pointwise evaluator (t, x) -> (..., d) into t -> array (d, *shape)."""
    if ws.box != TWO_PI:
        raise ValueError("time-dependent fields are sampled on the full torus")
    pts = grid_points(ws.shape)
    return lambda t: np.moveaxis(np.asarray(evaluator(t, pts), dtype=float), -1, 0)


def time_derivative(u: GridFn, t: float, h: float = TIME_STEP) -> np.ndarray:
    return sum(w * u(t + s * h) for s, w in STENCIL) / h


def residual_from_samples(ut: np.ndarray, u: np.ndarray, ws: SpectralWorkspace,
                          p: np.ndarray | None = None) -> dict:
    """Residuals given d/dt u, u and optionally p, all on the workspace grid."""
    div = ws.divergence(u)
    mom = ut + ws.advection(u)
    if p is None:
        mom = ws.leray(mom)
        mode = "leray"
    else:
        mom = mom + ws.gradient(p)
        mode = "pressure"
    return {
        "max_div": float(np.abs(div).max()),
        "max_momentum": float(np.abs(mom).max()),
        "mode": mode,
    }


def euler_residual(solution: GridFn, pressure: GridFn | None, t: float, ws: SpectralWorkspace,
                   h: float = TIME_STEP) -> dict:
    """max |div u| and max |d_t u + u.grad u + grad p| at time t.

    Without a pressure the momentum residual is Leray projected, which removes
    any gradient.  ``solution`` and ``pressure`` map t to grid arrays.
    """
    u = solution(t)
    ut = time_derivative(solution, t, h)
    p = None if pressure is None else pressure(t)
    report = residual_from_samples(ut, u, ws, p)
    report["t"] = float(t)
    return report
