"""Value types and scalar building blocks shared by every other module.

Points on the torus T^d = (R / 2 pi Z)^d are stored with coordinates reduced
to [0, 2 pi).  All evaluators are vectorised: they accept arrays whose last
axis carries the coordinates and broadcast over the leading axes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit

TWO_PI = 2.0 * np.pi


def reduce_mod_2pi(x):
    """Reduce to [0, 2 pi); guards the x = -tiny case where np.mod returns 2 pi."""
    y = np.mod(x, TWO_PI)
    return np.where(y >= TWO_PI, 0.0, y)


def wrap_to_pi(x):
    """Nearest periodic representative of a displacement, in [-pi, pi)."""
    return np.mod(np.asarray(x, dtype=float) + np.pi, TWO_PI) - np.pi


@dataclass(frozen=True)
class TorusPoint:
    coords: tuple[float, ...]

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.coords, dtype=float))
        if c.ndim != 1 or c.size == 0:
            raise ValueError("TorusPoint needs a non-empty 1-d coordinate list")
        object.__setattr__(self, "coords", tuple(float(v) for v in reduce_mod_2pi(c)))

    @property
    def dim(self) -> int:
        return len(self.coords)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.coords)

    def __add__(self, other):
        if isinstance(other, TorusPoint):
            if other.dim != self.dim:
                raise ValueError(f"dimension mismatch: {self.dim} vs {other.dim}")
            other = other.as_array()
        offset = np.broadcast_to(np.asarray(other, dtype=float), (self.dim,))
        return TorusPoint(tuple(self.as_array() + offset))

    def __len__(self):
        return self.dim


@dataclass(frozen=True)
class FrequencyVector:
    entries: tuple[float, ...]
    irrationality_hint: bool | None = None

    def __post_init__(self):
        e = np.atleast_1d(np.asarray(self.entries, dtype=float))
        if e.ndim != 1 or e.size == 0:
            raise ValueError("FrequencyVector needs at least one entry")
        if not np.all(np.isfinite(e)):
            raise ValueError("frequency entries must be finite")
        if np.all(e == 0.0):
            raise ValueError("frequency vector must be nonzero")
        object.__setattr__(self, "entries", tuple(float(v) for v in e))

    @property
    def dim(self) -> int:
        return len(self.entries)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.entries)


def torus_distance(z, y):
    """Geodesic distance on T^m between (arrays of) points ``z`` and ``y``.

    Both arguments broadcast; the last axis holds the m coordinates.
    """
    z = np.asarray(z.as_array() if isinstance(z, TorusPoint) else z, dtype=float)
    y = np.asarray(y.as_array() if isinstance(y, TorusPoint) else y, dtype=float)
    if z.shape[-1:] != y.shape[-1:]:
        raise ValueError(f"dimension mismatch: {z.shape[-1:]} vs {y.shape[-1:]}")
    d = wrap_to_pi(z - y)
    return np.sqrt(np.sum(d * d, axis=-1))


# Smooth partition S(t) = sigma(t) / (sigma(t) + sigma(1 - t)), sigma(t) = exp(-1/t).
# Written as a logistic of E(t) = 1/t - 1/(1-t) so that it never overflows.

def _exponent(t):
    t = np.asarray(t, dtype=float)
    inside = (t > 0.0) & (t < 1.0)
    tc = np.where(inside, t, 0.5)
    return inside, tc, 1.0 / tc - 1.0 / (1.0 - tc)


# Beyond this distance from {0, 1} every derivative of S is below the smallest double.
_FLAT = 1.0 / 700.0


def _ramp(t):
    t = np.asarray(t, dtype=float)
    active = (t > _FLAT) & (t < 1.0 - _FLAT)
    tc = np.where(active, t, 0.5)
    return active, tc, 1.0 / tc - 1.0 / (1.0 - tc)


def smooth_partition(t):
    """S(t): 0 for t <= 0, 1 for t >= 1, C-infinity and monotone in between."""
    inside, _, e = _exponent(t)
    return np.where(inside, expit(-e), np.where(np.asarray(t) >= 1.0, 1.0, 0.0))


def smooth_partition_d1(t):
    inside, tc, e = _ramp(t)
    s1s = expit(-e) * expit(e)
    g = 1.0 / tc**2 + 1.0 / (1.0 - tc) ** 2
    return np.where(inside, s1s * g, 0.0)


def smooth_partition_d2(t):
    inside, tc, e = _ramp(t)
    s = expit(-e)
    s1s = s * expit(e)
    g = 1.0 / tc**2 + 1.0 / (1.0 - tc) ** 2
    dg = -2.0 / tc**3 + 2.0 / (1.0 - tc) ** 3
    d1 = s1s * g
    return np.where(inside, d1 * (1.0 - 2.0 * s) * g + s1s * dg, 0.0)


@dataclass(frozen=True)
class BumpProfile:
    """Even C-infinity profile supported in [-R, R].

    f(r) = A exp(a - 1 - a / (1 - (r/R)^2)); ``sharpness`` a = 1 with amplitude
    A = 1 is the standard mollifier exp(-1/(1-(r/R)^2)).  Every member has
    f(0) = A/e; larger a gives a faster decaying Fourier tail at the cost of a
    narrower core.
    """

    support_radius: float
    sharpness: float = 1.0
    amplitude: float = 1.0

    def __post_init__(self):
        if not self.support_radius > 0:
            raise ValueError("support_radius must be positive")
        if not self.sharpness > 0:
            raise ValueError("sharpness must be positive")

    def _parts(self, r):
        r = np.asarray(r, dtype=float)
        u = r / self.support_radius
        inside = np.abs(u) < 1.0
        one_minus = np.where(inside, 1.0 - u * u, 1.0)
        a = self.sharpness
        f = np.where(inside, self.amplitude * np.exp(a - 1.0 - a / one_minus), 0.0)
        return r, u, inside, one_minus, f

    def __call__(self, r):
        return self._parts(r)[-1]

    def derivative(self, r):
        r, _, inside, one_minus, f = self._parts(r)
        a, R = self.sharpness, self.support_radius
        return np.where(inside, -2.0 * a * r / (R * R) / one_minus**2 * f, 0.0)


def bump_f(r, profile: BumpProfile):
    return profile(r)


def bump_f_prime(r, profile: BumpProfile):
    return profile.derivative(r)


@dataclass(frozen=True)
class CutoffChi:
    """chi(r) = S((2 eps - |r|) / eps): 1 on |r| < eps, 0 on |r| > 2 eps."""

    eps: float

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")

    def __call__(self, r):
        return smooth_partition((2.0 * self.eps - np.abs(r)) / self.eps)

    def derivative(self, r):
        r = np.asarray(r, dtype=float)
        return -np.sign(r) * smooth_partition_d1((2.0 * self.eps - np.abs(r)) / self.eps) / self.eps

    def second_derivative(self, r):
        return smooth_partition_d2((2.0 * self.eps - np.abs(r)) / self.eps) / self.eps**2


def chi_eval(r, cutoff: CutoffChi):
    return cutoff(r)


@dataclass(frozen=True)
class SmoothStep:
    """H_m: 1 on |s| <= 1 - 1/m, 0 on |s| >= 1, smooth monotone ramp between.

    The ramp has width 1/m on each side, so ||H_m - 1_[-1,1]||_q^q <= 2/m.
    """

    index: int

    def __post_init__(self):
        if int(self.index) != self.index or self.index < 2:
            raise ValueError(f"smoothing index must be an integer >= 2, got {self.index}")

    @property
    def plateau(self) -> float:
        return 1.0 - 1.0 / self.index

    def __call__(self, s):
        return smooth_partition(self.index * (1.0 - np.abs(s)))

    def derivative(self, s):
        s = np.asarray(s, dtype=float)
        return -np.sign(s) * self.index * smooth_partition_d1(self.index * (1.0 - np.abs(s)))

    def second_derivative(self, s):
        return self.index**2 * smooth_partition_d2(self.index * (1.0 - np.abs(np.asarray(s, dtype=float))))


def smooth_step_eval(s, m: int):
    return SmoothStep(m)(s)


def grid_axes(shape: Sequence[int], box: float = TWO_PI, origin: float = 0.0) -> list[np.ndarray]:
    return [origin + box * np.arange(n) / n for n in shape]


def grid_points(shape: Sequence[int], box: float = TWO_PI, origin: float = 0.0) -> np.ndarray:
    """Uniform grid as an array of shape (*shape, d), 'ij' ordering."""
    axes = grid_axes(shape, box, origin)
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


@dataclass(frozen=True, eq=False)
class SampledField:
    """Samples on the uniform grid of T^d, values shaped (components, n_1, ..., n_d)."""

    values: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim < 2:
            raise ValueError("values must be shaped (components, n_1, ..., n_d)")
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return self.values.ndim - 1

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape[1:]

    @property
    def components(self) -> int:
        return self.values.shape[0]

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(TWO_PI / n for n in self.shape)

    @cached_property
    def cell_volume(self) -> float:
        return float(TWO_PI**self.dim / np.prod(self.shape))

    @classmethod
    def scalar(cls, values, metadata=None) -> "SampledField":
        return cls(np.asarray(values, dtype=float)[None], metadata or {})

    @classmethod
    def from_function(cls, fn: Callable[[np.ndarray], np.ndarray], shape: Sequence[int],
                      metadata=None) -> "SampledField":
        """Sample ``fn(points)``; a scalar fn returns (*shape,), a vector fn (*shape, c)."""
        pts = grid_points(shape)
        out = np.asarray(fn(pts), dtype=float)
        if out.shape == tuple(shape):
            out = out[None]
        else:
            out = np.moveaxis(out, -1, 0)
        return cls(out, metadata or {})

    def same_grid(self, other: "SampledField") -> bool:
        return self.shape == other.shape and self.components == other.components


def _check_grids(f: SampledField, g: SampledField):
    if not f.same_grid(g):
        raise ValueError(f"grid mismatch: {f.components}x{f.shape} vs {g.components}x{g.shape}")


def lq_error(f: SampledField, g: SampledField, q: float) -> float:
    """Discrete L^q distance with uniform weights (2 pi)^d / prod(n_i); q = inf is the max norm."""
    _check_grids(f, g)
    if not q >= 1:
        raise ValueError("q must lie in [1, inf]")
    diff = f.values - g.values
    mag = np.abs(diff[0]) if f.components == 1 else np.sqrt(np.sum(diff * diff, axis=0))
    if np.isinf(q):
        return float(mag.max())
    return float((np.sum(mag**q) * f.cell_volume) ** (1.0 / q))


def weakstar_pairing(f: SampledField, g: SampledField) -> float:
    """Discrete integral of f * g over the torus."""
    _check_grids(f, g)
    return float(np.sum(f.values * g.values) * f.cell_volume)
