"""Locally radial approximation phi = sum_l a_l H_m(rho(x, y_l) / r_l) of a stream function.

The amplitudes a_l are disk averages of psi0.  Disk integrals use polar
Gauss-Legendre rules whose size depends on the disk radius relative to the
largest radius r0:

* r >= 0.25 r0: 64 radial x 128 angular nodes for the averages, and 24 + 8
  radial (plateau + ramp of H_m) x 64 angular nodes for error integrals;
* 0.02 r0 <= r < 0.25 r0: 6 x 16 nodes (3 on the ramp);
* smaller disks: the one-point rule, so a_l = psi0(y_l).  Such disks are far
  too many to store, so their amplitudes are recomputed when needed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import j0

from ..fields import TWO_PI, SmoothStep, wrap_to_pi
from .packing import BallPacking, DiskChunk, VerticalLines, pack_balls

TIERS = ((0.25, 64, 16, 128), (0.02, 6, 3, 16))  # (min radius / r0, radial nodes, ramp nodes, angles)
# Error integrals on the largest disks use a lighter rule than the averages.
MEASURE_TIERS = ((0.25, 24, 8, 64), (0.02, 6, 3, 16))
CHUNK_NODES = 1 << 22
REFERENCE_GRID = 4096


@dataclass(frozen=True, eq=False)
class ScalarFunction:
    """A scalar field on T^2 with optional bounds sup|f| and sup|grad f|."""

    fn: Callable[[np.ndarray], np.ndarray]
    name: str = "psi0"
    sup: float | None = None
    grad_sup: float | None = None

    def __call__(self, x):
        return np.asarray(self.fn(np.asarray(x, dtype=float)), dtype=float)

    def bounds(self, grid: int = 1024) -> tuple[float, float]:
        """(sup, grad_sup), estimated on a grid where not supplied."""
        sup, grad = self.sup, self.grad_sup
        if sup is None or grad is None:
            h = TWO_PI / grid
            ax = np.arange(grid) * h
            vals = self(np.stack(np.meshgrid(ax, ax, indexing="ij"), axis=-1))
            if sup is None:
                sup = float(np.abs(vals).max())
            if grad is None:
                g1 = (np.roll(vals, -1, 0) - np.roll(vals, 1, 0)) / (2 * h)
                g2 = (np.roll(vals, -1, 1) - np.roll(vals, 1, 1)) / (2 * h)
                grad = float(np.sqrt(g1**2 + g2**2).max())
        return sup, grad


def _sin_sin(x):
    return np.sin(x[..., 0]) * np.sin(x[..., 1])


def _sign_sin(x):
    return np.sign(np.sin(x[..., 0]))


PSI0_REGISTRY: dict[str, ScalarFunction] = {
    "sin_sin": ScalarFunction(_sin_sin, "sin_sin", 1.0, 1.0),
    "sign_sin": ScalarFunction(_sign_sin, "sign_sin", 1.0, np.inf),
    "zero": ScalarFunction(lambda x: np.zeros(x.shape[:-1]), "zero", 0.0, 0.0),
    "one": ScalarFunction(lambda x: np.ones(x.shape[:-1]), "one", 1.0, 0.0),
}


def psi0_from_name(name: str) -> ScalarFunction:
    try:
        return PSI0_REGISTRY[name]
    except KeyError:
        raise ValueError(f"unknown psi0 {name!r}; known: {sorted(PSI0_REGISTRY)}")


def _gauss(lo: float, hi: float, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights for int_lo^hi g(s) s ds."""
    x, w = np.polynomial.legendre.leggauss(k)
    s = 0.5 * (hi - lo) * x + 0.5 * (hi + lo)
    return s, 0.5 * (hi - lo) * w * s


def _polar_points(centers, radii, s, n_theta):
    theta = TWO_PI * np.arange(n_theta) / n_theta
    dirs = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    return centers[:, None, None, :] + radii[:, None, None, None] * s[None, :, None, None] * dirs[None, None]


def _disk_average(psi0, centers, radii, n_rad, n_theta):
    s, w = _gauss(0.0, 1.0, n_rad)
    out = np.empty(len(radii))
    per = max(1, CHUNK_NODES // (n_rad * n_theta))
    for i in range(0, len(radii), per):
        pts = _polar_points(centers[i:i + per], radii[i:i + per], s, n_theta)
        vals = psi0(pts)
        out[i:i + per] = 2.0 * (vals.mean(axis=-1) @ w)
    return out


def smoothing_loss(m: int, q: float, nodes: int = 64) -> float:
    """2 int_0^1 |H_m(s) - 1|^q s ds: the share of a disk's |a|^q pi r^2 lost to the ramp."""
    s, w = _gauss(1.0 - 1.0 / m, 1.0, nodes)
    return float(2.0 * np.sum(np.abs(SmoothStep(m)(s) - 1.0) ** q * w))


def radial_mass(m: int, nodes: int = 64) -> float:
    """2 int_0^1 H_m(s) s ds."""
    s1, w1 = _gauss(0.0, 1.0 - 1.0 / m, nodes)
    s2, w2 = _gauss(1.0 - 1.0 / m, 1.0, nodes)
    return float(2.0 * (w1.sum() + np.sum(SmoothStep(m)(s2) * w2)))


@dataclass(eq=False)
class Amplitudes:
    """Disk averages of psi0: stored for the two quadrature tiers, recomputed for tiny disks."""

    packing: BallPacking
    psi0: ScalarFunction
    stored: list[np.ndarray]  # per block, shape (instances, tier_end)
    tier_bounds: list[tuple[int, int]]  # per block, template-prefix ends of tier A and tier B

    def values(self, chunk: DiskChunk) -> np.ndarray:
        end = self.tier_bounds[chunk.block][1]
        out = np.empty(chunk.radii.size)
        quad = chunk.tpl < end
        out[quad] = self.stored[chunk.block][chunk.inst[quad], chunk.tpl[quad]]
        if not quad.all():
            out[~quad] = self.psi0(chunk.centers[~quad])
        return out

    def lookup(self, nb, ni, nt) -> np.ndarray:
        out = np.zeros(len(nb))
        for bi in np.unique(nb[nb >= 0]):
            sel = np.flatnonzero(nb == bi)
            b = self.packing.blocks[bi]
            ch = DiskChunk(int(bi), ni[sel], nt[sel], b.centers(ni[sel], nt[sel]), b.radii(ni[sel], nt[sel]))
            out[sel] = self.values(ch)
        return out

    def power_sums(self, qs: Sequence[float] = (1.0, 2.0)) -> dict[float, tuple[float, float]]:
        """{q: (quadrature-tier sum, tiny-disk sum)} of |a_l|^q |B_l|, in one pass, cached."""
        cache = self.__dict__.setdefault("_power_cache", {})
        missing = [q for q in qs if q not in cache]
        if missing:
            sums = {q: [0.0, 0.0] for q in missing}
            for ch in self.packing.iter_disks():
                a = np.abs(self.values(ch))
                area = np.pi * ch.radii**2
                tiny = ch.tpl >= self.tier_bounds[ch.block][1]
                for q in missing:
                    w = a**q * area
                    sums[q][0] += float(w[~tiny].sum())
                    sums[q][1] += float(w[tiny].sum())
            cache.update({q: tuple(v) for q, v in sums.items()})
        return {q: cache[q] for q in qs}

    def power_sum(self, q: float) -> float:
        """sum_l |a_l|^q |B_l| (q = inf is read as q = 1)."""
        p = 1.0 if np.isinf(q) else float(q)
        return float(sum(self.power_sums(sorted({1.0, 2.0, p}))[p]))

    def max_abs(self) -> float:
        return max((float(np.abs(self.values(ch)).max()) for ch in self.packing.iter_disks()), default=0.0)


def _tier_bounds(packing: BallPacking) -> list[tuple[int, int]]:
    bounds = []
    for b in packing.blocks:
        scale = b.uniform_scale
        if b.template is None and scale is None:
            bounds.append((b.count, b.count))  # explicit disks: few, all on the finest rule
            continue
        cuts = [int(np.searchsorted(-b.tr[:b.count] * scale, -frac * packing.r0, side="right"))
                for frac, *_ in TIERS]
        bounds.append((cuts[0], cuts[1]))
    return bounds


def step_average(psi0: ScalarFunction, packing: BallPacking) -> Amplitudes:
    """Disk averages a_l; the step function Phi equals a_l on disk l and 0 elsewhere."""
    bounds = _tier_bounds(packing)
    stored = []
    for bi, (b, (ea, eb)) in enumerate(zip(packing.blocks, bounds)):
        arr = np.zeros((b.instances, eb))
        for (lo, hi), (_, nr, _, nt) in zip(((0, ea), (ea, eb)), TIERS):
            for ch in packing.iter_disks(tpl_range=(lo, hi), blocks=[bi]):
                arr[ch.inst, ch.tpl] = _disk_average(psi0, ch.centers, ch.radii, nr, nt)
        stored.append(arr)
    return Amplitudes(packing, psi0, stored, bounds)


def step_function(amplitudes: Amplitudes) -> Callable[[np.ndarray], np.ndarray]:
    def Phi(x):
        x = np.asarray(x, dtype=float)
        nb, ni, nt = amplitudes.packing.locate(x)
        return amplitudes.lookup(nb, ni, nt).reshape(x.shape[:-1])

    return Phi


def choose_smoothing_index(packing: BallPacking, amplitudes: Amplitudes, q: float, budget: float,
                           max_exponent: int = 40) -> int:
    """Smallest m = 2^k, k >= 1, with sum_l |a_l|^q |annulus_l(m)| <= budget^q.

    The annulus {1 - 1/m <= rho/r <= 1} has area pi r^2 (2/m - 1/m^2) and
    bounds ||phi - Phi||_q^q.  For q = inf the weak-* perturbation
    sum_l |a_l| |annulus_l| <= budget is used instead.
    """
    total = amplitudes.power_sum(q)
    target = budget if np.isinf(q) else budget**q
    for k in range(1, max_exponent + 1):
        m = 2**k
        if total * (2.0 / m - 1.0 / m**2) <= target:
            return m
    raise ValueError("no admissible smoothing index found")


@dataclass(eq=False)
class LocallyRadialFunction:
    packing: BallPacking
    amplitudes: Amplitudes
    m: int
    report: dict = field(default_factory=dict)

    @property
    def step(self) -> SmoothStep:
        return SmoothStep(self.m)

    def evaluate_located(self, x, nb, ni, nt) -> np.ndarray:
        c, r = self.packing.disk_geometry(nb, ni, nt)
        a = self.amplitudes.lookup(nb, ni, nt)
        rho = np.linalg.norm(wrap_to_pi(x - c), axis=-1)
        s = np.divide(rho, r, out=np.full_like(rho, 2.0), where=r > 0)
        return np.where(nb >= 0, a * self.step(s), 0.0)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1, 2)
        nb, ni, nt = self.packing.locate(flat)
        return self.evaluate_located(flat, nb, ni, nt).reshape(x.shape[:-1])


def reference_integral(fn: Callable[[np.ndarray], np.ndarray], grid: int = REFERENCE_GRID) -> float:
    """Midpoint rule on a grid x grid lattice of the torus, evaluated in row blocks."""
    h = TWO_PI / grid
    ax = (np.arange(grid) + 0.5) * h
    total = 0.0
    rows = max(1, (1 << 22) // grid)
    for i in range(0, grid, rows):
        pts = np.stack(np.meshgrid(ax[i:i + rows], ax, indexing="ij"), axis=-1)
        total += float(np.sum(fn(pts)))
    return total * h * h


def measured_error(lrf: LocallyRadialFunction, q: float) -> float:
    """||phi - psi0||_q^q, split as the disk integrals plus the integral over the uncovered set.

    The uncovered part is int_T |psi0|^q (fine midpoint grid) minus
    sum_l int_B |psi0|^q; both disk integrals use the tiered rules above.
    Returns the q-th root.
    """
    psi0, pk, amps, m = lrf.amplitudes.psi0, lrf.packing, lrf.amplitudes, lrf.m
    H = SmoothStep(m)
    inside = 0.0
    covered = 0.0
    for bi, (ea, eb) in enumerate(amps.tier_bounds):
        for (lo, hi), (_, nr, na, nt) in zip(((0, ea), (ea, eb)), MEASURE_TIERS):
            s1, w1 = _gauss(0.0, 1.0 - 1.0 / m, nr)
            s2, w2 = _gauss(1.0 - 1.0 / m, 1.0, na)
            s, w = np.concatenate([s1, s2]), np.concatenate([w1, w2])
            h = H(s)
            per = max(1, CHUNK_NODES // (s.size * nt))
            for ch in pk.iter_disks(tpl_range=(lo, hi), blocks=[bi], chunk=per):
                a = amps.values(ch)
                vals = psi0(_polar_points(ch.centers, ch.radii, s, nt))
                area = ch.radii**2 * TWO_PI
                diff = np.abs(a[:, None, None] * h[None, :, None] - vals) ** q
                inside += float(np.sum((diff.mean(axis=-1) @ w) * area))
                covered += float(np.sum((np.abs(vals) ** q).mean(axis=-1) @ w * area))
    tiny_power = amps.power_sums(sorted({1.0, 2.0, float(q)}))[float(q)][1]
    inside += tiny_power * smoothing_loss(m, q)
    covered += tiny_power
    total = reference_integral(lambda x: np.abs(psi0(x)) ** q)
    outside = max(total - covered, 0.0)
    return float((inside + outside) ** (1.0 / q))


def certified_bound(packing: BallPacking, q: float, sup: float, grad_sup: float) -> dict:
    """Upper bounds for ||phi - psi0||_q assembled from the approximation argument.

    ``bound``: (2 G / n)^q sum|B| + S^q / n, q-th root, plus 1/n for smoothing.
    ``tight``: the same with the actual largest radius and uncovered area.
    """
    n = packing.n
    area = packing.total_area
    loose = ((2.0 * grad_sup / n) ** q * area + sup**q / n) ** (1.0 / q) + 1.0 / n
    tight = ((2.0 * grad_sup * packing.max_radius) ** q * area
             + sup**q * max(packing.uncovered_area, 0.0)) ** (1.0 / q) + 1.0 / n
    return {"bound": float(loose), "tight": float(tight)}


def build_locally_radial(psi0: ScalarFunction, n: int, lines: VerticalLines, q: float,
                         packing: BallPacking | None = None, amplitudes: Amplitudes | None = None,
                         measure: bool = False, m: int | None = None) -> LocallyRadialFunction:
    """Pack, average and smooth; the report carries the packing data and the certified bound."""
    packing = packing or pack_balls(n, lines)
    amplitudes = amplitudes or step_average(psi0, packing)
    m = m or choose_smoothing_index(packing, amplitudes, q, 1.0 / n)
    lrf = LocallyRadialFunction(packing, amplitudes, m)
    report = {**packing.summary(), "q": q, "m": m}
    if not np.isinf(q):
        sup, grad = psi0.bounds()
        report.update({f"certified_{k}": v for k, v in certified_bound(packing, q, sup, grad).items()})
        if measure:
            report["error"] = measured_error(lrf, q)
    lrf.report = report
    return lrf


@dataclass(frozen=True)
class TrigTest:
    """g(x) = amplitude cos(k . x + phase)."""

    k: tuple[int, int] = (0, 0)
    phase: float = 0.0
    amplitude: float = 1.0

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return self.amplitude * np.cos(self.k[0] * x[..., 0] + self.k[1] * x[..., 1] + self.phase)


def _radial_moments(m: int, nodes: int = 64) -> np.ndarray:
    """2 int_0^1 H_m(s) s^(2j+1) ds for j = 0, 1, 2."""
    s1, w1 = _gauss(0.0, 1.0 - 1.0 / m, nodes)
    s2, w2 = _gauss(1.0 - 1.0 / m, 1.0, nodes)
    s = np.concatenate([s1, s2])
    w = np.concatenate([w1, w2]) * SmoothStep(m)(s)
    return np.array([2.0 * np.sum(w * s ** (2 * j)) for j in range(3)])


SERIES_LIMIT = 0.1


def _hankel_profile(m: int, z: np.ndarray, nodes: int = 64) -> np.ndarray:
    """2 int_0^1 H_m(s) J0(z s) s ds for each z.

    Below z = 0.1 the J0 series through z^4 is used (relative error < 1e-10).
    """
    z = np.asarray(z, dtype=float)
    mom = _radial_moments(m, nodes)
    out = mom[0] - z**2 / 4.0 * mom[1] + z**4 / 64.0 * mom[2]
    big = np.flatnonzero(z >= SERIES_LIMIT)
    if big.size:
        s1, w1 = _gauss(0.0, 1.0 - 1.0 / m, nodes)
        s2, w2 = _gauss(1.0 - 1.0 / m, 1.0, nodes)
        s = np.concatenate([s1, s2])
        w = np.concatenate([w1, w2]) * SmoothStep(m)(s)
        out[big] = 2.0 * (j0(np.outer(z[big], s)) @ w)
    return out


def pairing(lrf: LocallyRadialFunction, g: TrigTest) -> float:
    """int_T phi g, exact per disk: int_B H(rho/r) cos(k.x + p) = cos(k.y + p) pi r^2 hankel(|k| r)."""
    kk = float(np.hypot(*g.k))
    total = 0.0
    for ch in lrf.packing.iter_disks():
        a = lrf.amplitudes.values(ch)
        prof = _hankel_profile(lrf.m, kk * ch.radii)
        total += float(np.sum(a * g(ch.centers) * np.pi * ch.radii**2 * prof))
    return total


def weakstar_convergence_check(psi0: ScalarFunction, g: TrigTest, ns: Sequence[int],
                               lines: VerticalLines, exact: float | None = None) -> list[dict]:
    """Rows (n, int phi^n g, int psi0 g, difference) with m chosen by the q = inf rule."""
    ref = reference_integral(lambda x: psi0(x) * g(x)) if exact is None else exact
    rows = []
    for n in ns:
        lrf = build_locally_radial(psi0, n, lines, np.inf)
        val = pairing(lrf, g)
        rows.append({"n": n, "m": lrf.m, "pairing": val, "reference": ref, "difference": val - ref})
    return rows
