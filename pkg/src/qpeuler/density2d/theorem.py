"""Exact 2D Euler solutions built from a locally radial approximation.

Each strip between two consecutive vertical lines carries its own shear
velocity (0, c nu_j), produced by the background stream function c F(x1)
with F(s) = -sum_j nu_j chi_j(s).  The disks of strip j are rigidly
translated vertically at that speed:

    psi(t, x) = sum_j sum_{l in strip j} a_l H_m(rho((x1, x2 - c nu_j t), y_l) / r_l) + c F(x1).

Equivalently u(t) = U(c nu t) for the embedding theta -> grad-perp psi_theta
of the N-torus, where psi_theta shifts strip j by theta_j.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.integrate import quad

from ..fields import TWO_PI, reduce_mod_2pi, smooth_partition, smooth_partition_d1, smooth_partition_d2, wrap_to_pi
from .locally_radial import LocallyRadialFunction, ScalarFunction, build_locally_radial
from .packing import BallPacking, PackingError, VerticalLines


@dataclass(frozen=True)
class StripCoordinate:
    """chi(s) = s on [a + 2/M, b - 2/M], 0 within 1/M of the strip edges and outside the strip.

    (a, b) = (2 pi j / N, 2 pi (j + 1) / N).  Arguments are taken modulo 2 pi,
    so chi is smooth and periodic; the strip never straddles 0.
    """

    j: int
    M: int
    N: int

    def __post_init__(self):
        if not 0 <= self.j < self.N:
            raise ValueError(f"strip index {self.j} out of range for N={self.N}")
        if not 2.0 / self.M < 0.5 * TWO_PI / self.N:
            raise PackingError(f"margin 2/M={2.0 / self.M:.4g} exceeds the strip half-width")

    @property
    def edges(self) -> tuple[float, float]:
        return TWO_PI * self.j / self.N, TWO_PI * (self.j + 1) / self.N

    def _parts(self, s):
        s = reduce_mod_2pi(np.asarray(s, dtype=float))
        a, b = self.edges
        M = self.M
        lo = M * (s - a - 1.0 / M)
        hi = M * (b - 1.0 / M - s)
        return s, lo, hi

    def __call__(self, s):
        s, lo, hi = self._parts(s)
        return s * smooth_partition(lo) * smooth_partition(hi)

    def derivative(self, s):
        s, lo, hi = self._parts(s)
        P, Q = smooth_partition(lo), smooth_partition(hi)
        dP, dQ = self.M * smooth_partition_d1(lo), -self.M * smooth_partition_d1(hi)
        return P * Q + s * (dP * Q + P * dQ)

    def second_derivative(self, s):
        s, lo, hi = self._parts(s)
        M = self.M
        P, Q = smooth_partition(lo), smooth_partition(hi)
        dP, dQ = M * smooth_partition_d1(lo), -M * smooth_partition_d1(hi)
        ddP, ddQ = M * M * smooth_partition_d2(lo), M * M * smooth_partition_d2(hi)
        return 2.0 * (dP * Q + P * dQ) + s * (ddP * Q + 2.0 * dP * dQ + P * ddQ)


def build_chi_jM(j: int, M: int, lines: VerticalLines) -> StripCoordinate:
    N = lines.N
    if not np.allclose(lines.abscissae, TWO_PI * np.arange(N) / N):
        raise ValueError("strip coordinates need the equally spaced lines 2 pi j / N")
    return StripCoordinate(j, int(M), N)


@dataclass(frozen=True)
class ShearBackground:
    """F(s) = -sum_j nu_j chi_j(s); grad-perp F(x1) = (0, nu_j) on the interior of strip j."""

    chis: tuple[StripCoordinate, ...]
    nu: tuple[float, ...]

    def __call__(self, s):
        return -sum(v * c(s) for v, c in zip(self.nu, self.chis))

    def derivative(self, s):
        return -sum(v * c.derivative(s) for v, c in zip(self.nu, self.chis))

    def second_derivative(self, s):
        return -sum(v * c.second_derivative(s) for v, c in zip(self.nu, self.chis))

    def lq_norm(self, q: float) -> float:
        """L^q norm of F(x1) over the 2-torus."""
        pts = np.concatenate([np.array(c.edges) + d for c in self.chis
                              for d in (1.0 / c.M, 2.0 / c.M, -1.0 / c.M, -2.0 / c.M)])
        pts = np.sort(np.clip(pts, 0.0, TWO_PI))
        if np.isinf(q):
            s = np.linspace(0.0, TWO_PI, 1 << 16)
            return float(np.abs(self(s)).max())
        val, _ = quad(lambda s: abs(float(self(s))) ** q, 0.0, TWO_PI, points=pts, limit=400)
        return float((TWO_PI * val) ** (1.0 / q))


def scale_constant(F: ShearBackground, n: int, q: float) -> float:
    """c = min(1/n, (1/n) / (||F||_q + 1)), so that ||c F||_q <= 1/n."""
    return min(1.0 / n, (1.0 / n) / (F.lq_norm(q) + 1.0))


@dataclass(eq=False)
class TheoremFamily:
    """Closed-form solution psi(t, x) with per-strip vertical transport."""

    phi: LocallyRadialFunction
    nu: tuple[float, ...]
    c: float
    background: ShearBackground

    @property
    def packing(self) -> BallPacking:
        return self.phi.packing

    @property
    def lines(self) -> VerticalLines:
        return self.phi.packing.lines

    @property
    def M(self) -> int:
        return self.phi.packing.M

    @property
    def m(self) -> int:
        return self.phi.m

    def phases(self, t: float) -> np.ndarray:
        return self.c * np.asarray(self.nu) * t

    # radial part -------------------------------------------------------------

    def _radial(self, theta, x):
        """Value, gradient and Laplacian of phi evaluated at the strip-shifted points."""
        x = np.asarray(x, dtype=float)
        flat = reduce_mod_2pi(x.reshape(-1, 2))
        shift = np.asarray(theta, dtype=float)[self.lines.strip_of(flat[:, 0])]
        xs = flat.copy()
        xs[:, 1] = reduce_mod_2pi(xs[:, 1] - shift)
        pk, H = self.packing, self.phi.step
        nb, ni, nt = pk.locate(xs)
        c, r = pk.disk_geometry(nb, ni, nt)
        a = np.where(nb >= 0, self.phi.amplitudes.lookup(nb, ni, nt), 0.0)
        d = wrap_to_pi(xs - c)
        rho = np.linalg.norm(d, axis=-1)
        rs = np.where(r > 0, r, 1.0)
        s = np.where(nb >= 0, rho / rs, 2.0)
        h, dh, ddh = H(s), H.derivative(s), H.second_derivative(s)
        safe = np.where(rho > 0, rho, 1.0)
        radial = np.where(rho > 0, dh / (rs * safe), 0.0)  # H'(s) / (r rho); H' = 0 near s = 0
        grad = (a * radial)[:, None] * d
        lap = a * (ddh / rs**2 + radial)
        lead = x.shape[:-1]
        return (a * h).reshape(lead), grad.reshape(*lead, 2), lap.reshape(lead)

    # embedding of the N-torus -----------------------------------------------

    def psi_theta(self, theta, x):
        val, _, _ = self._radial(theta, x)
        return val + self.c * self.background(np.asarray(x)[..., 0])

    def U(self, theta, x):
        """Velocity grad-perp psi_theta = (d2 psi, -d1 psi)."""
        x = np.asarray(x, dtype=float)
        _, g, _ = self._radial(theta, x)
        bg = self.c * self.background.derivative(x[..., 0])
        return np.stack([g[..., 1], -(g[..., 0] + bg)], axis=-1)

    def vorticity_theta(self, theta, x):
        x = np.asarray(x, dtype=float)
        _, _, lap = self._radial(theta, x)
        return lap + self.c * self.background.second_derivative(x[..., 0])

    # time-dependent solution --------------------------------------------------

    def psi(self, t: float, x):
        return self.psi_theta(self.phases(t), x)

    def velocity(self, t: float, x):
        return self.U(self.phases(t), x)

    def vorticity(self, t: float, x):
        return self.vorticity_theta(self.phases(t), x)

    def initial_datum(self, x):
        return self.psi(0.0, x)

    def mean_velocity(self) -> np.ndarray:
        """Zero: F is periodic and every profile is compactly supported."""
        return np.zeros(2)

    def parameters(self) -> dict:
        return {
            "n": self.packing.n, "N": self.lines.N, "nu": list(self.nu), "c": self.c,
            "m": self.m, "M": self.M, "L": self.packing.n_disks,
        }


def build_theorem_family(psi0: ScalarFunction, n: int, N: int, nu: Sequence[float], q: float,
                         c: float | None = None, packing: BallPacking | None = None,
                         m: int | None = None) -> TheoremFamily:
    """Assemble the family for stage n; c defaults to the scale constant for L^q."""
    nu = tuple(float(v) for v in np.atleast_1d(nu))
    if len(nu) != N:
        raise ValueError(f"need one speed per strip: got {len(nu)} for N={N}")
    lines = VerticalLines.uniform(N) if packing is None else packing.lines
    phi = build_locally_radial(psi0, n, lines, q, packing=packing, m=m)
    chis = tuple(build_chi_jM(j, phi.packing.M, lines) for j in range(N))
    F = ShearBackground(chis, nu)
    if c is None:
        c = scale_constant(F, n, q)
    return TheoremFamily(phi, nu, float(c), F)
