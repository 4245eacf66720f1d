"""Pseudo-spectral RK4 integrator for 2D Euler in vorticity form.

The state is omega = Lap psi with u = grad-perp psi + U, where U is an optional
constant mean velocity (a periodic stream function cannot carry one).  Since
omega is transported by u, d_t omega = -u . grad omega.  Every nonlinear
evaluation is dealiased with the 2/3 rule and the zero mode of psi is 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..fields import SampledField, TWO_PI
from .spectral import SpectralWorkspace

CFL_LIMIT = 0.5


class CFLError(ValueError):
    pass


class SolverDivergence(FloatingPointError):
    pass


@dataclass(frozen=True, eq=False)
class SolverState:
    t: float
    omega: SampledField
    dt: float
    order: int = 4


class VorticitySolver:
    def __init__(self, ws: SpectralWorkspace, mean_velocity: Sequence[float] = (0.0, 0.0)):
        if ws.dim != 2:
            raise ValueError("the vorticity solver is two-dimensional")
        if ws.box != TWO_PI:
            raise ValueError("the vorticity solver runs on the full torus")
        self.ws = ws
        self.mean_velocity = np.asarray(mean_velocity, dtype=float)

    def velocity_hat(self, w_hat):
        ws = self.ws
        psi_hat = -ws.inv_k2 * w_hat
        return ws.deriv_hat(psi_hat, 1), -ws.deriv_hat(psi_hat, 0)

    def velocity(self, w_hat):
        u1, u2 = (self.ws.ifft(h) for h in self.velocity_hat(w_hat))
        return np.stack([u1 + self.mean_velocity[0], u2 + self.mean_velocity[1]])

    def rhs(self, w_hat):
        ws = self.ws
        u = self.velocity(w_hat)
        w1 = ws.ifft(ws.deriv_hat(w_hat, 0))
        w2 = ws.ifft(ws.deriv_hat(w_hat, 1))
        return -ws.fft(u[0] * w1 + u[1] * w2) * ws.dealias_mask

    def step(self, w_hat, dt):
        k1 = self.rhs(w_hat)
        k2 = self.rhs(w_hat + 0.5 * dt * k1)
        k3 = self.rhs(w_hat + 0.5 * dt * k2)
        k4 = self.rhs(w_hat + dt * k3)
        return w_hat + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)

    def max_speed(self, w_hat) -> float:
        return float(np.sqrt((self.velocity(w_hat) ** 2).sum(axis=0)).max())

    def cfl_number(self, w_hat, dt) -> float:
        return dt * self.max_speed(w_hat) * max(self.ws.shape) / TWO_PI


def _mean_zero(omega: np.ndarray) -> None:
    scale = max(float(np.abs(omega).max()), 1.0)
    if abs(float(omega.mean())) > 1e-10 * scale:
        raise ValueError(f"initial vorticity has mean {omega.mean():.3e}; it must be zero on the torus")


def solve_euler_2d(omega0: SampledField, T: float, dt: float, ws: SpectralWorkspace | None = None,
                   snapshot_times: Sequence[float] | None = None,
                   mean_velocity: Sequence[float] = (0.0, 0.0)) -> list[SolverState]:
    """Integrate to time T; returns the states at ``snapshot_times`` (default 0 and T).

    Snapshot times are hit exactly by shortening the last step before each one.
    """
    if omega0.components != 1 or omega0.dim != 2:
        raise ValueError("initial vorticity must be a scalar field on a 2D grid")
    ws = ws or SpectralWorkspace(omega0.shape)
    if ws.shape != omega0.shape:
        raise ValueError("workspace grid does not match the initial data")
    if not dt > 0 or not T >= 0:
        raise ValueError("need dt > 0 and T >= 0")
    _mean_zero(omega0.values[0])
    solver = VorticitySolver(ws, mean_velocity)
    w_hat = ws.fft(omega0.values[0]) * ws.dealias_mask
    cfl = solver.cfl_number(w_hat, dt)
    if cfl > CFL_LIMIT:
        raise CFLError(f"CFL number {cfl:.3f} exceeds {CFL_LIMIT}; reduce dt or resolution")
    times = sorted(set(float(t) for t in (snapshot_times if snapshot_times is not None else (0.0, T))))
    if times and (times[0] < 0 or times[-1] > T + 1e-12):
        raise ValueError("snapshot times must lie in [0, T]")
    meta = dict(omega0.metadata)
    out: list[SolverState] = []
    t = 0.0
    for target in times:
        while target - t > 1e-12:
            h = min(dt, target - t)
            if target - t - h < 1e-9 * dt:
                h = target - t
            w_hat = solver.step(w_hat, h)
            t = target if h == target - t else t + h
            if not np.all(np.isfinite(w_hat)):
                raise SolverDivergence(f"non-finite vorticity at t={t:.6g}")
        out.append(SolverState(t, SampledField(ws.ifft(w_hat)[None], {**meta, "t": t}), dt))
    return out


def energy(omega: SampledField, mean_velocity: Sequence[float] = (0.0, 0.0)) -> float:
    """(1/2) int |u|^2 with u = grad-perp Lap^{-1} omega + U."""
    ws = SpectralWorkspace(omega.shape)
    u = VorticitySolver(ws, mean_velocity).velocity(ws.fft(omega.values[0]))
    return float(0.5 * np.sum(u * u) * omega.cell_volume)


def enstrophy(omega: SampledField) -> float:
    return float(0.5 * np.sum(omega.values[0] ** 2) * omega.cell_volume)


def random_vorticity(shape: Sequence[int], seed: int = 0, kmax: int = 8, slope: float = 2.0) -> SampledField:
    """Smooth mean-zero random field: Gaussian Fourier modes with |k| <= kmax, amplitude |k|^-slope."""
    rng = np.random.default_rng(seed)
    ws = SpectralWorkspace(shape)
    k = np.sqrt(ws.k2)
    amp = np.where((k > 0) & (k <= kmax), np.maximum(k, 1.0) ** (-slope), 0.0)
    coeff = amp * (rng.standard_normal(ws.spectral_shape) + 1j * rng.standard_normal(ws.spectral_shape))
    w = ws.ifft(coeff)
    w -= w.mean()
    w /= np.abs(w).max()
    return SampledField(w[None], {"seed": seed, "kmax": kmax})
