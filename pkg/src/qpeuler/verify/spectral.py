"""Fourier differentiation on uniform periodic grids.

Arrays passed to the workspace carry the grid on their trailing ``d`` axes, so
a scalar has shape ``shape`` and a vector field ``(d, *shape)``.  Transforms
are real-to-complex over the last axis.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.fft as sfft

from .._threads import worker_count
from ..fields import SampledField, TWO_PI

MIN_POINTS = 16


@dataclass(eq=False)
class SpectralWorkspace:
    """Wavenumbers and the 2/3 dealias mask for a grid of period ``box``.

    ``box`` defaults to the torus period 2 pi; a shorter box is used when a
    compactly supported field is sampled on a tight periodic window.
    """

    shape: tuple[int, ...]
    box: float = TWO_PI
    workers: int = field(default_factory=worker_count)

    def __post_init__(self):
        self.shape = tuple(int(n) for n in self.shape)
        if any(n < MIN_POINTS for n in self.shape):
            raise ValueError(f"every grid axis needs at least {MIN_POINTS} points, got {self.shape}")
        d = len(self.shape)
        ints = [sfft.fftfreq(n, 1.0 / n) for n in self.shape[:-1]]
        ints.append(sfft.rfftfreq(self.shape[-1], 1.0 / self.shape[-1]))
        scale = TWO_PI / self.box
        self.int_wavenumbers = [
            k.reshape([-1 if a == i else 1 for a in range(d)]) for i, k in enumerate(ints)
        ]
        self.wavenumbers = [k * scale for k in self.int_wavenumbers]
        k2 = sum(k * k for k in self.wavenumbers)
        self.k2 = np.broadcast_to(k2, self.spectral_shape).copy()
        inv = np.zeros_like(self.k2)
        nz = self.k2 > 0
        inv[nz] = 1.0 / self.k2[nz]
        self.inv_k2 = inv
        mask = np.ones(self.spectral_shape, dtype=bool)
        for k, n in zip(self.int_wavenumbers, self.shape):
            mask &= np.abs(k) <= n / 3.0
        self.dealias_mask = mask
        # Derivatives of the unpaired Nyquist mode are not real-valued; drop them.
        self._deriv = []
        for i, (k, n) in enumerate(zip(self.wavenumbers, self.shape)):
            kk = np.array(k, dtype=float)
            if n % 2 == 0:
                kk = np.where(np.abs(self.int_wavenumbers[i]) == n // 2, 0.0, kk)
            self._deriv.append(1j * kk)

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def spectral_shape(self) -> tuple[int, ...]:
        return (*self.shape[:-1], self.shape[-1] // 2 + 1)

    @property
    def axes(self) -> tuple[int, ...]:
        return tuple(range(-self.dim, 0))

    def fft(self, a):
        return sfft.rfftn(a, axes=self.axes, workers=self.workers)

    def ifft(self, a):
        return sfft.irfftn(a, s=self.shape, axes=self.axes, workers=self.workers)

    def deriv_hat(self, a_hat, axis: int):
        return self._deriv[axis] * a_hat

    def gradient(self, a):
        h = self.fft(a)
        return np.stack([self.ifft(self.deriv_hat(h, i)) for i in range(self.dim)])

    def divergence(self, u):
        total = sum(self.deriv_hat(self.fft(u[i]), i) for i in range(self.dim))
        return self.ifft(total)

    def perp_gradient(self, psi):
        """(d_2 psi, -d_1 psi), the 2D convention u = grad-perp of the stream function."""
        if self.dim != 2:
            raise ValueError("perp gradient is defined on 2D grids only")
        h = self.fft(psi)
        return np.stack([self.ifft(self.deriv_hat(h, 1)), -self.ifft(self.deriv_hat(h, 0))])

    def laplacian(self, a):
        return self.ifft(-self.k2 * self.fft(a))

    def inverse_laplacian(self, a):
        """Mean-zero solution of Lap psi = a; the mean of ``a`` is discarded."""
        return self.ifft(-self.inv_k2 * self.fft(a))

    def advection(self, u):
        """(u . grad) u for a vector field ``u`` of shape (d, *shape)."""
        hats = [self.fft(u[i]) for i in range(self.dim)]
        out = np.zeros_like(u)
        for i in range(self.dim):
            for j in range(self.dim):
                out[i] += u[j] * self.ifft(self.deriv_hat(hats[i], j))
        return out

    def leray(self, u):
        """Divergence-free part of ``u``: subtract k (k . u_hat) / |k|^2 mode by mode."""
        hats = [self.fft(u[i]) for i in range(self.dim)]
        kdotu = sum(self.wavenumbers[i] * hats[i] for i in range(self.dim)) * self.inv_k2
        return np.stack([self.ifft(hats[i] - self.wavenumbers[i] * kdotu) for i in range(self.dim)])

    def dealias(self, a):
        return self.ifft(self.fft(a) * self.dealias_mask)


def _workspace_for(f: SampledField) -> SpectralWorkspace:
    return SpectralWorkspace(f.shape)


def spectral_gradient(f: SampledField, ws: SpectralWorkspace | None = None) -> SampledField:
    if f.components != 1:
        raise ValueError("gradient needs a scalar field")
    ws = ws or _workspace_for(f)
    return SampledField(ws.gradient(f.values[0]), dict(f.metadata))


def spectral_divergence(f: SampledField, ws: SpectralWorkspace | None = None) -> SampledField:
    if f.components != f.dim:
        raise ValueError("divergence needs a vector field with d components")
    ws = ws or _workspace_for(f)
    return SampledField(ws.divergence(f.values)[None], dict(f.metadata))


def spectral_perp_gradient(f: SampledField, ws: SpectralWorkspace | None = None) -> SampledField:
    if f.components != 1 or f.dim != 2:
        raise ValueError("perp gradient needs a scalar field on a 2D grid")
    ws = ws or _workspace_for(f)
    return SampledField(ws.perp_gradient(f.values[0]), dict(f.metadata))


def grid_shape(resolution: int | Sequence[int], dim: int) -> tuple[int, ...]:
    if np.isscalar(resolution):
        return (int(resolution),) * dim
    shape = tuple(int(n) for n in resolution)
    if len(shape) != dim:
        raise ValueError(f"resolution {shape} does not match dimension {dim}")
    return shape
