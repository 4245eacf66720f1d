"""Compactly supported steady Euler flows on R^d and their periodizations.

In even dimension the rotation field u~(x) = (x2, -x1, ..., xd, -x(d-1))
damped by a radial profile, u(x) = f(|x|) u~(x), is steady with the radial
pressure p(x) = int_0^|x| r f(r)^2 dr (shifted to vanish outside the support).
Its advection term is u . grad u = -f(|x|)^2 x, which the pressure balances.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
from scipy.interpolate import CubicHermiteSpline
from scipy.ndimage import map_coordinates

from .fields import BumpProfile, SampledField, TWO_PI, TorusPoint, grid_points, wrap_to_pi
from .verify.spectral import SpectralWorkspace, grid_shape

PANELS = 2048
GAUSS_NODES = 8


def linear_field_utilde(x, d: int | None = None):
    """Pairwise rotation (x2, -x1, x4, -x3, ...) along the last axis."""
    x = np.asarray(x, dtype=float)
    d = x.shape[-1] if d is None else d
    if d % 2 or d < 2:
        raise ValueError(f"the rotation field needs an even dimension, got {d}")
    if x.shape[-1] != d:
        raise ValueError(f"point has {x.shape[-1]} coordinates, expected {d}")
    out = np.empty_like(x)
    out[..., 0::2] = x[..., 1::2]
    out[..., 1::2] = -x[..., 0::2]
    return out


class RadialIntegral:
    """Tabulated G(r) = int_0^min(r, R) g(s) ds, minus its full value G(R).

    Each of the 2048 panels of [0, R] is integrated with 8-point Gauss-Legendre;
    lookups use a cubic Hermite spline with the exact slope g at the nodes.
    """

    def __init__(self, integrand: Callable[[np.ndarray], np.ndarray], radius: float,
                 panels: int = PANELS):
        self.radius = float(radius)
        nodes, weights = np.polynomial.legendre.leggauss(GAUSS_NODES)
        edges = np.linspace(0.0, self.radius, panels + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[1:] + edges[:-1])
        s = mid[:, None] + half[:, None] * nodes[None, :]
        pieces = half * (integrand(s) @ weights)
        cumulative = np.concatenate([[0.0], np.cumsum(pieces)])
        self.total = float(cumulative[-1])
        self._spline = CubicHermiteSpline(edges, cumulative, integrand(edges))

    def raw(self, r):
        r = np.abs(np.asarray(r, dtype=float))
        return np.where(r >= self.radius, self.total, self._spline(np.minimum(r, self.radius)))

    def __call__(self, r):
        return self.raw(r) - self.total


@dataclass(frozen=True, eq=False)
class StationaryFlow:
    """u(x) = f(|x|) u~(x) on R^d, d even, with f supported in |x| <= eps_scale."""

    dim: int
    eps_scale: float
    sharpness: float = 1.0
    amplitude: float = 1.0

    def __post_init__(self):
        if self.dim < 2 or self.dim % 2:
            raise ValueError(f"closed-form steady flows need even d >= 2, got {self.dim}")
        if not self.eps_scale > 0:
            raise ValueError("eps_scale must be positive")

    @cached_property
    def profile(self) -> BumpProfile:
        return BumpProfile(self.eps_scale, self.sharpness, self.amplitude)

    @property
    def support_radius(self) -> float:
        return self.eps_scale

    @cached_property
    def _pressure_table(self) -> RadialIntegral:
        f = self.profile
        return RadialIntegral(lambda r: r * f(r) ** 2, self.eps_scale)

    @cached_property
    def _stream_table(self) -> RadialIntegral:
        f = self.profile
        return RadialIntegral(lambda r: r * f(r), self.eps_scale)

    @property
    def pressure_offset(self) -> float:
        return self._pressure_table.total

    @property
    def stream_offset(self) -> float:
        return self._stream_table.total

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise ValueError(f"point has {x.shape[-1]} coordinates, expected {self.dim}")
        return x

    def velocity(self, x):
        x = self._check(x)
        r = np.linalg.norm(x, axis=-1)
        return self.profile(r)[..., None] * linear_field_utilde(x, self.dim)

    def pressure(self, x):
        x = self._check(x)
        return self._pressure_table(np.linalg.norm(x, axis=-1))

    def stream(self, x):
        if self.dim != 2:
            raise ValueError("the stream function exists for d = 2 only")
        x = self._check(x)
        return self._stream_table(np.linalg.norm(x, axis=-1))

    def vorticity(self, x):
        """Lap of the stream function, 2 f(r) + r f'(r)."""
        if self.dim != 2:
            raise ValueError("the scalar vorticity exists for d = 2 only")
        r = np.linalg.norm(self._check(x), axis=-1)
        return 2.0 * self.profile(r) + r * self.profile.derivative(r)


def stationary_velocity(x, flow: StationaryFlow):
    return flow.velocity(x)


def stationary_pressure(x, flow: StationaryFlow):
    return flow.pressure(x)


def stream_2d(x, flow: StationaryFlow):
    return flow.stream(x)


@dataclass(frozen=True, eq=False)
class ExternalSteadyState:
    """A user-supplied steady flow on R^3 with a declared support radius.

    Nothing about it is trusted: :meth:`validate` samples it and checks the
    support claim and the divergence.
    """

    velocity_fn: Callable[[np.ndarray], np.ndarray]
    support_radius: float
    pressure_fn: Callable[[np.ndarray], np.ndarray] | None = None
    dim: int = 3
    name: str = "external"

    def __post_init__(self):
        if self.dim != 3:
            raise ValueError("external steady states are three-dimensional")
        if not self.support_radius > 0:
            raise ValueError("support_radius must be positive")

    @property
    def eps_scale(self) -> float:
        return self.support_radius

    def velocity(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != 3:
            raise ValueError("external steady states take 3D points")
        return np.asarray(self.velocity_fn(x), dtype=float)

    def pressure(self, x):
        if self.pressure_fn is None:
            raise ValueError(f"{self.name} supplies no pressure; use the Leray-projected residual instead")
        return np.asarray(self.pressure_fn(np.asarray(x, dtype=float)), dtype=float)

    def validate(self, resolution: int = 32, tol: float = 1e-6) -> dict:
        """Support and divergence report on a torus grid centred on the origin."""
        pts = grid_points((resolution,) * 3) - np.pi
        u = self.velocity(pts)
        r = np.linalg.norm(pts, axis=-1)
        outside = float(np.abs(u[r > self.support_radius]).max(initial=0.0))
        ws = SpectralWorkspace((resolution,) * 3)
        div = float(np.abs(ws.divergence(np.moveaxis(u, -1, 0))).max())
        return {
            "name": self.name,
            "support_radius": self.support_radius,
            "max_outside_support": outside,
            "max_divergence": div,
            "tolerance": tol,
            "pass": outside == 0.0 and div <= tol,
        }

    @classmethod
    def from_sampled(cls, field_: SampledField, support_radius: float, name: str = "sampled"):
        """Trilinear periodic interpolation of a 3-component QPF1 field centred at the origin."""
        if field_.dim != 3 or field_.components != 3:
            raise ValueError("need a 3-component field on a 3D grid")
        shape = np.asarray(field_.shape, dtype=float)
        vals = field_.values

        def velocity(x):
            idx = np.moveaxis(np.mod(np.asarray(x, dtype=float), TWO_PI), -1, 0)
            idx = idx * (shape.reshape((3,) + (1,) * (idx.ndim - 1)) / TWO_PI)
            comps = [map_coordinates(vals[c], idx, order=1, mode="grid-wrap") for c in range(3)]
            return np.stack(comps, axis=-1)

        return cls(velocity, support_radius, name=name)


def _zero_velocity(x):
    return np.zeros_like(np.asarray(x, dtype=float))


def _zero_pressure(x):
    return np.zeros(np.asarray(x).shape[:-1])


EXTERNAL_REGISTRY: dict[str, Callable[[float], ExternalSteadyState]] = {
    "zero": lambda radius: ExternalSteadyState(_zero_velocity, radius, _zero_pressure, name="zero"),
}


def external_from_identifier(identifier: str, support_radius: float) -> ExternalSteadyState:
    try:
        return EXTERNAL_REGISTRY[identifier](support_radius)
    except KeyError:
        raise ValueError(f"unknown steady-state identifier {identifier!r}; known: {sorted(EXTERNAL_REGISTRY)}")


@dataclass(frozen=True, eq=False)
class PeriodizedFlow:
    """x -> v(x - center) on T^d, using the nearest periodic representative."""

    flow: StationaryFlow | ExternalSteadyState
    center: TorusPoint

    def displacement(self, x):
        return wrap_to_pi(np.asarray(x, dtype=float) - self.center.as_array())

    def velocity(self, x):
        return self.flow.velocity(self.displacement(x))

    def pressure(self, x):
        return self.flow.pressure(self.displacement(x))

    __call__ = velocity


def periodize_velocity(flow, center: TorusPoint | None = None) -> PeriodizedFlow:
    if flow.eps_scale >= np.pi:
        raise ValueError(f"support radius {flow.eps_scale} must be below pi to periodize")
    center = center if center is not None else TorusPoint((0.0,) * flow.dim)
    if center.dim != flow.dim:
        raise ValueError("center dimension does not match the flow")
    return PeriodizedFlow(flow, center)


def verify_steady_residual(flow, resolution, box: str = "tight") -> dict:
    """Max-norm divergence and momentum residuals from spectral derivatives.

    With ``box="tight"`` the flow is sampled on the periodic cube
    [-R, R)^d, R = support radius; since the field vanishes to infinite order
    at |x| = R this is a smooth periodic sample.  ``box="torus"`` samples the
    whole torus with the flow centred at the origin.
    """
    d = flow.dim
    shape = grid_shape(resolution, d)
    R = flow.eps_scale
    if box == "tight":
        length = 2.0 * R
    elif box == "torus":
        length = TWO_PI
    else:
        raise ValueError(f"box must be 'tight' or 'torus', got {box!r}")
    across = min(shape) * 2.0 * R / length
    if across < 16:
        raise ValueError(f"only {across:.1f} grid points across the support diameter; need 16")
    ws = SpectralWorkspace(shape, box=length)
    pts = grid_points(shape, box=length, origin=-length / 2)
    u = np.moveaxis(flow.velocity(pts), -1, 0)
    p = flow.pressure(pts)
    del pts
    div = ws.divergence(u)
    mom = ws.advection(u) + ws.gradient(p)
    return {
        "dim": d,
        "shape": list(shape),
        "box": box,
        "max_div": float(np.abs(div).max()),
        "max_momentum": float(np.abs(mom).max()),
    }
