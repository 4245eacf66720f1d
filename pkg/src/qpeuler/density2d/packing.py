"""Disjoint disk packings of T^2 that stay clear of a set of vertical lines.

Each strip between consecutive lines, minus a margin 2/M on both sides, is
filled with columns of equal tangent disks (hexagonal arrangement, columns
along x2).  The curvilinear gaps between columns, and between the outer
columns and the strip walls, are filled with scaled Apollonian templates.  The
leftover slab at the right of the last column is packed again with smaller
columns.  Every disk with radius below a cutoff r_min is discarded, and r_min
is halved until the uncovered area drops below 1/n.

Disks are never listed one by one: a :class:`DiskBlock` stores one template
and the translations, reflections and scales of its copies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np
from scipy.spatial import cKDTree

from ..fields import TWO_PI, reduce_mod_2pi, wrap_to_pi
from .apollonian import SQRT3, GapTemplate, gap_template

SHRINK = 1e-5  # relative radius reduction that turns tangencies into strict gaps
MAX_HALVINGS = 24
LAYOUT_HALVINGS = 12
MAX_DEPTH = 16
TORUS_AREA = TWO_PI**2


class PackingError(ValueError):
    pass


@dataclass(frozen=True)
class VerticalLines:
    abscissae: tuple[float, ...]

    def __post_init__(self):
        s = sorted(float(v) for v in reduce_mod_2pi(np.atleast_1d(np.asarray(self.abscissae, dtype=float))))
        if not s:
            raise ValueError("at least one vertical line is required")
        if len(set(s)) != len(s):
            raise ValueError("vertical lines must be pairwise distinct")
        object.__setattr__(self, "abscissae", tuple(s))

    @classmethod
    def uniform(cls, N: int) -> "VerticalLines":
        return cls(tuple(TWO_PI * j / N for j in range(N)))

    @property
    def N(self) -> int:
        return len(self.abscissae)

    def strips(self) -> list[tuple[float, float]]:
        """Open strips (s_j, s_{j+1}); the last one wraps past 2 pi."""
        s = list(self.abscissae)
        return [(s[j], s[j + 1] if j + 1 < len(s) else s[0] + TWO_PI) for j in range(len(s))]

    def strip_of(self, x1) -> np.ndarray:
        """Index of the strip containing each abscissa (lines belong to the strip on their right)."""
        s = np.asarray(self.abscissae)
        x = reduce_mod_2pi(np.asarray(x1, dtype=float))
        j = np.searchsorted(s, x, side="right") - 1
        return np.where(j < 0, len(s) - 1, j)

    def distance(self, x1) -> np.ndarray:
        x = np.asarray(x1, dtype=float)[..., None]
        return np.abs(wrap_to_pi(x - np.asarray(self.abscissae))).min(axis=-1)


def choose_margin(n: int, lines: VerticalLines) -> int:
    """Smallest power of two M with 2/M below a quarter of the narrowest strip
    and with the excluded bands (total area 8 pi N / M) at most 1/(4n)."""
    width = min(b - a for a, b in lines.strips())
    M = 2
    while not (2.0 / M < width / 4.0 and 8.0 * np.pi * lines.N / M <= 1.0 / (4.0 * n)):
        M *= 2
    return M


_UNIT = np.zeros(1), np.zeros(1), np.ones(1)


@dataclass(eq=False)
class DiskBlock:
    """Copies of one template: disk (i, p) has centre origin_i + scale_i (flip_i x_p, y_p)
    and radius scale_i r_p (1 - SHRINK), for p below ``count``."""

    kind: str
    strip: int
    origins: np.ndarray
    scales: np.ndarray
    flips: np.ndarray
    template: GapTemplate | None = None
    count: int = 1
    x_range: tuple[float, float] = (0.0, TWO_PI)

    @property
    def tx(self):
        return self.template.x if self.template is not None else _UNIT[0]

    @property
    def ty(self):
        return self.template.y if self.template is not None else _UNIT[1]

    @property
    def tr(self):
        return self.template.r if self.template is not None else _UNIT[2]

    @property
    def instances(self) -> int:
        return len(self.origins)

    @property
    def n_disks(self) -> int:
        return self.instances * self.count

    @property
    def uniform_scale(self) -> float | None:
        s = self.scales
        return float(s[0]) if s.size and np.all(s == s[0]) else None

    def centers(self, inst: np.ndarray, tpl: np.ndarray) -> np.ndarray:
        x = self.origins[inst, 0] + self.scales[inst] * self.flips[inst] * self.tx[tpl]
        y = self.origins[inst, 1] + self.scales[inst] * self.ty[tpl]
        return reduce_mod_2pi(np.stack([x, y], axis=-1))

    def radii(self, inst: np.ndarray, tpl: np.ndarray) -> np.ndarray:
        return self.scales[inst] * self.tr[tpl] * (1.0 - SHRINK)

    def area(self) -> float:
        if self.template is None:
            return float(np.pi * np.sum(self.scales**2) * (1.0 - SHRINK) ** 2)
        return float(np.sum(self.scales**2) * self.template.cumulative_area[self.count] * (1.0 - SHRINK) ** 2)

    def max_radius(self) -> float:
        return float(self.scales.max() * self.tr[0] * (1.0 - SHRINK)) if self.n_disks else 0.0


@dataclass(frozen=True)
class DiskChunk:
    block: int
    inst: np.ndarray
    tpl: np.ndarray
    centers: np.ndarray
    radii: np.ndarray


@dataclass(eq=False)
class BallPacking:
    n: int
    lines: VerticalLines
    M: int
    blocks: list[DiskBlock]
    r0: float
    r_min: float
    _trees: dict = field(default_factory=dict, repr=False)

    @property
    def n_disks(self) -> int:
        return sum(b.n_disks for b in self.blocks)

    @property
    def total_area(self) -> float:
        return float(sum(b.area() for b in self.blocks))

    @property
    def uncovered_area(self) -> float:
        return TORUS_AREA - self.total_area

    @property
    def max_radius(self) -> float:
        return max((b.max_radius() for b in self.blocks), default=0.0)

    def strip_disk_counts(self) -> list[int]:
        counts = [0] * self.lines.N
        for b in self.blocks:
            counts[b.strip] += b.n_disks
        return counts

    def iter_disks(self, chunk: int = 1 << 21, tpl_range: tuple[int, int] | None = None,
                   blocks: Sequence[int] | None = None) -> Iterator[DiskChunk]:
        """All disks, block by block, in chunks of at most about ``chunk`` disks."""
        for bi in (range(len(self.blocks)) if blocks is None else blocks):
            b = self.blocks[bi]
            lo, hi = (0, b.count) if tpl_range is None else (tpl_range[0], min(tpl_range[1], b.count))
            if hi <= lo or b.instances == 0:
                continue
            step = max(1, chunk // b.instances)
            width = min(b.instances, max(1, chunk))
            for p0 in range(lo, hi, step):
                p1 = min(hi, p0 + step)
                for i0 in range(0, b.instances, width):
                    i1 = min(b.instances, i0 + width)
                    tpl = np.repeat(np.arange(p0, p1), i1 - i0)
                    inst = np.tile(np.arange(i0, i1), p1 - p0)
                    yield DiskChunk(bi, inst, tpl, b.centers(inst, tpl), b.radii(inst, tpl))

    def disk_arrays(self, limit: int = 5_000_000) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Centres, radii and strip indices of every disk (small packings only)."""
        if self.n_disks > limit:
            raise PackingError(f"{self.n_disks} disks exceed the explicit listing limit {limit}")
        cs, rs, ss = [], [], []
        for ch in self.iter_disks():
            cs.append(ch.centers)
            rs.append(ch.radii)
            ss.append(np.full(ch.radii.size, self.blocks[ch.block].strip))
        if not cs:
            return np.zeros((0, 2)), np.zeros(0), np.zeros(0, dtype=int)
        return np.concatenate(cs), np.concatenate(rs), np.concatenate(ss)

    # point location -------------------------------------------------------

    def _origin_tree(self, bi: int) -> cKDTree:
        if bi not in self._trees:
            self._trees[bi] = cKDTree(reduce_mod_2pi(self.blocks[bi].origins) % TWO_PI, boxsize=TWO_PI)
        return self._trees[bi]

    def locate(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """For each point: (block, instance, template index) of the disk containing it, -1 if none."""
        pts = reduce_mod_2pi(np.asarray(points, dtype=float).reshape(-1, 2))
        pts = np.where(pts >= TWO_PI, 0.0, pts)
        nb = np.full(len(pts), -1, dtype=np.int64)
        ni = np.full(len(pts), -1, dtype=np.int64)
        nt = np.full(len(pts), -1, dtype=np.int64)
        for bi, b in enumerate(self.blocks):
            if b.n_disks == 0:
                continue
            lo, hi = b.x_range
            rel = np.mod(pts[:, 0] - lo, TWO_PI)
            sel = np.flatnonzero((nb < 0) & (rel <= hi - lo))
            if sel.size == 0:
                continue
            tree = self._origin_tree(bi)
            if b.template is None:
                k = min(b.instances, 4)
                dist, idx = tree.query(pts[sel], k=k)
                dist, idx = dist.reshape(len(sel), k), idx.reshape(len(sel), k)
                inside = dist <= b.scales[idx] * (1.0 - SHRINK)
                ok = inside.any(axis=1)
                first = np.argmax(inside, axis=1)
                rows = sel[ok]
                nb[rows] = bi
                ni[rows] = idx[ok, first[ok]]
                nt[rows] = 0
                continue
            scale = b.uniform_scale
            k = min(b.instances, 8)
            dist, idx = tree.query(pts[sel], k=k, distance_upper_bound=scale * b.template.extent * 1.0001)
            dist, idx = dist.reshape(len(sel), k), idx.reshape(len(sel), k)
            chosen = np.full(len(sel), -1, dtype=np.int64)
            for col in range(k):
                todo = np.flatnonzero((chosen < 0) & (idx[:, col] < b.instances))
                if todo.size == 0:
                    continue
                inst = idx[todo, col]
                u = self._to_template(b, inst, pts[sel[todo]])
                hit = b.template.contains_region(u)
                chosen[todo[hit]] = inst[hit]
            have = np.flatnonzero(chosen >= 0)
            if have.size == 0:
                continue
            u = self._to_template(b, chosen[have], pts[sel[have]])
            tpl = b.template.locate(u, b.count)
            found = tpl >= 0
            # strict check with the shrunk radius
            rows = sel[have[found]]
            inst = chosen[have[found]]
            tp = tpl[found]
            c = b.centers(inst, tp)
            d = np.linalg.norm(wrap_to_pi(pts[rows] - c), axis=-1)
            ok = d <= b.radii(inst, tp)
            nb[rows[ok]] = bi
            ni[rows[ok]] = inst[ok]
            nt[rows[ok]] = tp[ok]
        return nb, ni, nt

    @staticmethod
    def _to_template(b: DiskBlock, inst: np.ndarray, pts: np.ndarray) -> np.ndarray:
        d = wrap_to_pi(pts - b.origins[inst]) / b.scales[inst][:, None]
        d[:, 0] *= b.flips[inst]
        return d

    def disk_geometry(self, nb, ni, nt) -> tuple[np.ndarray, np.ndarray]:
        """Centres and radii for located disks (entries with nb < 0 get radius 0)."""
        centers = np.zeros((len(nb), 2))
        radii = np.zeros(len(nb))
        for bi in np.unique(nb[nb >= 0]):
            sel = nb == bi
            b = self.blocks[bi]
            centers[sel] = b.centers(ni[sel], nt[sel])
            radii[sel] = b.radii(ni[sel], nt[sel])
        return centers, radii

    # serialization ---------------------------------------------------------

    def summary(self) -> dict:
        return {
            "n": self.n,
            "lines": list(self.lines.abscissae),
            "M": self.M,
            "L": self.n_disks,
            "r0": self.r0,
            "r_min": self.r_min,
            "max_radius": self.max_radius,
            "total_area": self.total_area,
            "uncovered_area": self.uncovered_area,
            "strip_counts": self.strip_disk_counts(),
        }

    def to_dict(self, explicit_limit: int = 200_000) -> dict:
        doc = self.summary()
        if self.n_disks <= explicit_limit:
            c, r, s = self.disk_arrays()
            doc["balls"] = [{"center": [float(a), float(b)], "radius": float(rr)} for (a, b), rr in zip(c, r)]
            doc["strips"] = [np.flatnonzero(s == j).tolist() for j in range(self.lines.N)]
        else:
            doc["blocks"] = [
                {
                    "kind": b.kind, "strip": b.strip, "count": b.count,
                    "instances": b.instances, "scale": b.uniform_scale,
                }
                for b in self.blocks
            ]
        return doc

    # construction ----------------------------------------------------------

    @classmethod
    def explicit(cls, centers, radii, lines: VerticalLines, M: int, n: int = 1) -> "BallPacking":
        """A packing from a given list of disks; every invariant is checked."""
        centers = reduce_mod_2pi(np.asarray(centers, dtype=float).reshape(-1, 2))
        radii = np.asarray(radii, dtype=float).reshape(-1) / (1.0 - SHRINK)
        if len(centers) != len(radii) or np.any(radii <= 0):
            raise PackingError("need one positive radius per centre")
        strips = lines.strip_of(centers[:, 0])
        blocks = []
        for j in range(lines.N):
            sel = strips == j
            if sel.any():
                a, bnd = lines.strips()[j]
                blocks.append(DiskBlock("explicit", j, centers[sel], radii[sel], np.ones(sel.sum()),
                                        x_range=(a, bnd)))
        pk = cls(n, lines, M, blocks, float(radii.max()), float(radii.min()))
        problems = packing_violations(pk, check_radius=False)
        if problems:
            raise PackingError("; ".join(problems))
        return pk


def _columns(a: float, b: float, r_cap: float, strip: int, r_floor: float, out: list, depth: int = 0):
    width = b - a
    # a slab thinner than 2 r_floor cannot hold an admissible disk
    if width < 2 * r_floor or depth > MAX_DEPTH:
        return
    K = math.ceil(max(np.pi / r_cap, TWO_PI / width) - 1e-12)
    r = np.pi / K
    if r < r_floor:
        return
    C = int(math.floor((width - 2 * r) / (SQRT3 * r) + 1e-12)) + 1
    xs = a + r + SQRT3 * r * np.arange(C)
    off = (np.arange(C) % 2) * r
    k = np.arange(K)
    col = np.array([[x, 2 * kk * r + o] for x, o in zip(xs, off) for kk in k]).reshape(-1, 2)
    ones = lambda n_: np.ones(n_)
    out.append(DiskBlock("column", strip, col, np.full(len(col), r), ones(len(col)),
                         x_range=(a, xs[-1] + r)))
    tri, flips = [], []
    for c in range(C - 1):
        ya = (2 * k + 1) * r + off[c]
        yb = (2 * k + 1) * r + off[c + 1]
        tri.extend(np.column_stack([np.full(K, xs[c] + r / SQRT3), ya]))
        flips.extend([1.0] * K)
        tri.extend(np.column_stack([np.full(K, xs[c + 1] - r / SQRT3), yb]))
        flips.extend([-1.0] * K)
    if tri:
        out.append(DiskBlock("triangle", strip, np.array(tri), np.full(len(tri), r), np.array(flips),
                             gap_template("triangle", 1.0), x_range=(xs[0], xs[-1])))
    left = np.column_stack([np.full(K, a), (2 * k + 1) * r])
    out.append(DiskBlock("wall", strip, left, np.full(K, r), np.ones(K), gap_template("wall", 1.0),
                         x_range=(a, a + r)))
    x_line = xs[-1] + r
    right = np.column_stack([np.full(K, x_line), (2 * k + 1) * r + off[-1]])
    out.append(DiskBlock("wall", strip, right, np.full(K, r), -np.ones(K), gap_template("wall", 1.0),
                         x_range=(x_line - r, x_line)))
    _columns(x_line, b, r, strip, r_floor, out, depth + 1)


def _apply_cutoff(blocks: list[DiskBlock], r_min: float) -> None:
    for b in blocks:
        if b.template is None:
            b.count = 1 if b.scales.min() >= r_min else 0
            continue
        scale = b.uniform_scale
        tpl = gap_template(b.template.kind, min(r_min / scale, 1.0))
        b.template = tpl
        b.count = tpl.prefix(r_min / scale)


def pack_balls(n: int, lines: VerticalLines, M: int | None = None) -> BallPacking:
    """Deterministic packing with radii <= 1/n, uncovered area <= 1/n and margin 2/M."""
    if n < 1:
        raise PackingError("stage index n must be >= 1")
    M = choose_margin(n, lines) if M is None else int(M)
    r0 = np.pi / math.ceil(np.pi * n - 1e-12)
    layout: list[DiskBlock] = []
    for j, (s_lo, s_hi) in enumerate(lines.strips()):
        a, b = s_lo + 2.0 / M, s_hi - 2.0 / M
        if b - a <= 4.0 / M:
            raise PackingError(f"strip {j} of width {s_hi - s_lo:.4g} is too thin for margin 2/M={2.0 / M:.4g}")
        _columns(a, b, r0, j, r0 * 2.0 ** (-LAYOUT_HALVINGS), layout)
    target = 1.0 / n
    for k in range(MAX_HALVINGS + 1):
        r_min = r0 * 2.0 ** (-k)
        _apply_cutoff(layout, r_min)
        packing = BallPacking(n, lines, M, [b for b in layout], r0, r_min)
        if packing.uncovered_area <= target:
            packing.blocks = [b for b in layout if b.n_disks > 0]
            return packing
    raise PackingError(f"could not reach uncovered area {target:.3g} after {MAX_HALVINGS} halvings")


def packing_violations(pk: BallPacking, check_radius: bool = True, pair_limit: int = 2_000_000) -> list[str]:
    """Human-readable list of broken invariants (empty when the packing is valid)."""
    problems = []
    if check_radius and pk.max_radius > 1.0 / pk.n:
        problems.append(f"max radius {pk.max_radius:.4g} exceeds 1/n={1.0 / pk.n:.4g}")
    if pk.total_area > TORUS_AREA:
        problems.append("total disk area exceeds the torus area")
    if pk.n_disks <= pair_limit:
        c, r, s = pk.disk_arrays()
        if len(r):
            margin = pk.lines.distance(c[:, 0]) - r
            if np.any(margin < 2.0 / pk.M):
                problems.append(f"disk closer than 2/M={2.0 / pk.M:.4g} to a line (worst {margin.min():.4g})")
            own = pk.lines.strip_of(c[:, 0])
            if np.any(own != s):
                problems.append("disk assigned to the wrong strip")
        if len(r) > 1:
            worst = min_clearance(c, r)
            if worst <= 0:
                problems.append(f"overlapping disks (worst gap {worst:.3g})")
    return problems


def min_clearance(centers: np.ndarray, radii: np.ndarray) -> float:
    """min over pairs of (distance - r - r'), on the torus.

    Disks are grouped by dyadic radius class; each disk is tested against the
    classes at least as large as its own, where disjointness bounds the number
    of candidates within reach.  Only centres closer than three times the
    class radius are compared, so the result is inf when no two disks come
    that close; any overlap is always found.
    """
    cls = np.floor(np.log2(radii.max() / radii)).astype(int)
    worst = np.inf
    K = 80
    for c in np.unique(cls):
        big = cls == c
        tree = cKDTree(centers[big], boxsize=TWO_PI)
        rbig = radii[big]
        reach = 3.0 * rbig.max()
        small = np.flatnonzero(cls >= c)
        k = min(K, int(big.sum()))
        dist, idx = tree.query(centers[small], k=k, distance_upper_bound=reach)
        dist, idx = dist.reshape(len(small), k), idx.reshape(len(small), k)
        valid = idx < big.sum()
        if k == K and np.any(valid[:, -1]):
            raise RuntimeError("neighbour search saturated; disks overlap heavily")
        j = np.flatnonzero(big)[np.minimum(idx, big.sum() - 1)]
        self_pair = j == small[:, None]
        gap = np.where(valid & ~self_pair, dist - radii[small][:, None] - radii[j], np.inf)
        worst = min(worst, float(gap.min()))
    return worst
