"""Apollonian filling of the two curvilinear gaps left by a column packing.

Unit coordinates, with the gap's reference point at the origin:

* ``triangle``: three mutually tangent unit circles centred at
  (-1/sqrt3, +-1) and (2/sqrt3, 0); the origin is their incentre.
* ``wall``: unit circles centred at (1, +-1) and the line x = 0.

Circles are produced by repeatedly inscribing the tangent circle in every
remaining three-sided gap, and are returned sorted by decreasing radius, so
truncating at a radius keeps a prefix.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.spatial import cKDTree

SQRT3 = np.sqrt(3.0)
LINE = None  # the bounding line x = 0 of the wall gap


def _descartes(c1, c2, c3):
    """Inner Soddy circle of three mutually tangent circles (x, y, r)."""
    ks = [1.0 / c[2] for c in (c1, c2, c3)]
    zs = [complex(c[0], c[1]) for c in (c1, c2, c3)]
    k4 = ks[0] + ks[1] + ks[2] + 2.0 * np.sqrt(ks[0] * ks[1] + ks[1] * ks[2] + ks[2] * ks[0])
    s = ks[0] * zs[0] + ks[1] * zs[1] + ks[2] * zs[2]
    root = 2.0 * np.sqrt(ks[0] * ks[1] * zs[0] * zs[1] + ks[1] * ks[2] * zs[1] * zs[2]
                         + ks[2] * ks[0] * zs[2] * zs[0])
    r4 = 1.0 / k4
    best, err = None, np.inf
    for z in ((s + root) / k4, (s - root) / k4):
        e = sum(abs(abs(z - zi) - (1.0 / ki + r4)) for zi, ki in zip(zs, ks))
        if e < err:
            best, err = z, e
    return (best.real, best.imag, r4)


def _wall_circle(c1, c2):
    """Circle tangent to x = 0 and to two circles that also touch x = 0."""
    k1, k2 = 1.0 / c1[2], 1.0 / c2[2]
    r4 = 1.0 / (k1 + k2 + 2.0 * np.sqrt(k1 * k2))
    y = c1[1] + np.sign(c2[1] - c1[1]) * 2.0 * np.sqrt(c1[2] * r4)
    return (r4, y, r4)


def _inscribe(gap):
    a, b, c = gap
    if c is LINE:
        return _wall_circle(a, b)
    return _descartes(a, b, c)


def _fill(boundary, limit):
    """Largest-first filling; every gap is (circle, circle, circle or LINE)."""
    out = []
    heap = []
    counter = 0

    def push(gap):
        nonlocal counter
        circ = _inscribe(gap)
        if circ[2] >= limit:
            heapq.heappush(heap, (-circ[2], counter, circ, gap))
            counter += 1

    push(boundary)
    while heap:
        _, _, circ, (a, b, c) = heapq.heappop(heap)
        out.append(circ)
        if c is LINE:
            push((a, circ, LINE))
            push((circ, b, LINE))
            push((a, b, circ))
        else:
            push((a, b, circ))
            push((b, c, circ))
            push((a, c, circ))
    return np.array(out, dtype=float).reshape(-1, 3)


@dataclass(eq=False)
class GapTemplate:
    """Circles filling one gap, in unit coordinates, sorted by decreasing radius."""

    kind: str
    limit: float
    x: np.ndarray
    y: np.ndarray
    r: np.ndarray
    gap_area: float
    extent: float
    _trees: dict = field(default_factory=dict, repr=False)

    @property
    def size(self) -> int:
        return self.r.size

    @cached_property
    def cumulative_area(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(np.pi * self.r**2)])

    def prefix(self, rmin: float) -> int:
        """Number of circles with radius >= rmin (requires rmin >= limit)."""
        if rmin < self.limit * (1 - 1e-12):
            raise ValueError(f"template filled only down to {self.limit}, asked for {rmin}")
        return int(np.searchsorted(-self.r, -rmin, side="right"))

    def contains_region(self, u: np.ndarray) -> np.ndarray:
        """Whether unit-coordinate points lie in the polygon enclosing the gap."""
        if self.kind == "wall":
            return (u[..., 0] >= 0) & (u[..., 0] <= 1) & (np.abs(u[..., 1]) <= 1)
        # triangle of the three centres
        x, y = u[..., 0], u[..., 1]
        left = x >= -1.0 / SQRT3
        upper = y <= 1.0 - (x + 1.0 / SQRT3) * SQRT3 / 3.0
        lower = y >= -1.0 + (x + 1.0 / SQRT3) * SQRT3 / 3.0
        return left & upper & lower

    def _class_trees(self):
        if not self._trees:
            cls = np.floor(-np.log2(self.r)).astype(int)
            for c in np.unique(cls):
                idx = np.flatnonzero(cls == c)
                self._trees[int(c)] = (idx, cKDTree(np.column_stack([self.x[idx], self.y[idx]])))
        return self._trees

    def locate(self, u: np.ndarray, count: int) -> np.ndarray:
        """Index (< count) of the template circle containing each point, or -1."""
        u = np.asarray(u, dtype=float).reshape(-1, 2)
        hit = np.full(len(u), -1, dtype=np.int64)
        if len(u) == 0 or count == 0:
            return hit
        for c, (idx, tree) in self._class_trees().items():
            if idx[0] >= count:
                continue
            todo = np.flatnonzero(hit < 0)
            if todo.size == 0:
                break
            k = min(17, idx.size)
            dist, nb = tree.query(u[todo], k=k, distance_upper_bound=2.0 ** (-c))
            dist = dist.reshape(len(todo), k)
            nb = nb.reshape(len(todo), k)
            valid = nb < idx.size
            cand = np.where(valid, idx[np.minimum(nb, idx.size - 1)], -1)
            inside = valid & (cand < count) & (dist <= np.where(valid, self.r[np.maximum(cand, 0)], 0.0))
            any_in = inside.any(axis=1)
            first = np.argmax(inside, axis=1)
            hit[todo[any_in]] = cand[any_in, first[any_in]]
        return hit


_BOUNDARIES = {
    "triangle": ((-1.0 / SQRT3, 1.0, 1.0), (-1.0 / SQRT3, -1.0, 1.0), (2.0 / SQRT3, 0.0, 1.0)),
    "wall": ((1.0, 1.0, 1.0), (1.0, -1.0, 1.0), LINE),
}
GAP_AREAS = {"triangle": SQRT3 - np.pi / 2.0, "wall": 2.0 - np.pi / 2.0}
EXTENTS = {"triangle": 1.0 / SQRT3, "wall": 1.0}

_CACHE: dict[str, GapTemplate] = {}


def gap_template(kind: str, limit: float) -> GapTemplate:
    """Template filled down to radius ``limit``; cached and deepened on demand."""
    if kind not in _BOUNDARIES:
        raise ValueError(f"unknown gap kind {kind!r}")
    cached = _CACHE.get(kind)
    if cached is not None and cached.limit <= limit:
        return cached
    circles = _fill(_BOUNDARIES[kind], limit)
    order = np.argsort(-circles[:, 2], kind="stable")
    circles = circles[order]
    tpl = GapTemplate(kind, limit, circles[:, 0].copy(), circles[:, 1].copy(), circles[:, 2].copy(),
                      GAP_AREAS[kind], EXTENTS[kind])
    _CACHE[kind] = tpl
    return tpl
