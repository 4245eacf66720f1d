import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qpeuler.density2d.apollonian import GAP_AREAS, gap_template
from qpeuler.density2d.packing import (BallPacking, PackingError, VerticalLines, choose_margin, min_clearance,
                                       pack_balls, packing_violations)
from qpeuler.fields import TWO_PI


class TestGapTemplates:
    """Apollonian fillings of the curvilinear gaps left by unit circles."""

    def test_triangle_first_circle(self):
        """Soddy circle of three mutually tangent unit circles: r = 2/sqrt(3) - 1, at the centroid."""
        t = gap_template("triangle", 1e-2)
        assert t.r[0] == pytest.approx(2 / np.sqrt(3) - 1)
        assert (t.x[0], t.y[0]) == pytest.approx((0.0, 0.0), abs=1e-7)

    def test_wall_first_circle(self):
        """Between x = 0 and unit circles at (1, +-1): curvature 1 + 1 + 2 = 4."""
        t = gap_template("wall", 1e-2)
        assert t.r[0] == pytest.approx(0.25)
        assert (t.x[0], t.y[0]) == pytest.approx((0.25, 0.0), abs=1e-12)

    @pytest.mark.parametrize("kind", ["triangle", "wall"])
    def test_fill_is_disjoint_and_inside(self, kind):
        t = gap_template(kind, 5e-3)
        k = t.prefix(5e-3)  # the shared cache may hold a deeper fill
        centers, r = np.stack([t.x[:k], t.y[:k]], axis=-1), t.r[:k]
        d = np.linalg.norm(centers[:, None] - centers[None], axis=-1) - r[:, None] - r[None]
        np.fill_diagonal(d, np.inf)
        assert d.min() > -1e-9
        assert np.all(np.diff(t.r) <= 0)
        assert t.cumulative_area[-1] < GAP_AREAS[kind]

    @pytest.mark.parametrize("kind", ["triangle", "wall"])
    def test_residual_shrinks_with_depth(self, kind):
        t = gap_template(kind, 2e-3)
        coarse, fine = t.cumulative_area[t.prefix(2e-2)], t.cumulative_area[t.prefix(2e-3)]
        assert GAP_AREAS[kind] - fine < GAP_AREAS[kind] - coarse

    def test_prefix(self):
        t = gap_template("triangle", 1e-3)
        k = t.prefix(0.01)
        assert np.all(t.r[:k] >= 0.01) and np.all(t.r[k:] < 0.01)


class TestVerticalLines:
    def test_strips_wrap(self):
        lines = VerticalLines.uniform(2)
        assert lines.strips() == [(0.0, np.pi), (np.pi, TWO_PI)]
        np.testing.assert_array_equal(lines.strip_of(np.array([0.0, 1.0, np.pi, 6.0])), [0, 0, 1, 1])

    def test_distinct(self):
        with pytest.raises(ValueError):
            VerticalLines((1.0, 1.0 + TWO_PI))

    @given(st.floats(0.0, TWO_PI, exclude_max=True))
    def test_distance(self, x):
        lines = VerticalLines.uniform(3)
        assert lines.distance(x) <= np.pi / 3 + 1e-12

    @given(st.integers(1, 64), st.integers(1, 4))
    def test_margin_rule(self, n, N):
        lines = VerticalLines.uniform(N)
        M = choose_margin(n, lines)
        assert M & (M - 1) == 0
        assert 2.0 / M < TWO_PI / N / 4 and 8 * np.pi * N / M <= 1.0 / (4 * n)
        assert not (M > 2 and 2.0 / (M // 2) < TWO_PI / N / 4 and 8 * np.pi * N / (M // 2) <= 1.0 / (4 * n))


class TestPackBalls:
    @pytest.mark.parametrize("n,N", [(1, 1), (1, 2), (2, 2), (3, 1)])
    def test_invariants(self, n, N):
        pk = pack_balls(n, VerticalLines.uniform(N))
        assert pk.max_radius <= 1.0 / n
        assert 0.0 <= pk.uncovered_area <= 1.0 / n
        assert packing_violations(pk) == []

    def test_margin_and_strip_assignment(self):
        pk = pack_balls(2, VerticalLines.uniform(2))
        c, r, s = pk.disk_arrays()
        assert np.all(pk.lines.distance(c[:, 0]) >= 2.0 / pk.M + r)
        np.testing.assert_array_equal(pk.lines.strip_of(c[:, 0]), s)
        assert sum(pk.strip_disk_counts()) == pk.n_disks == len(r)

    def test_deterministic(self):
        a = pack_balls(2, VerticalLines.uniform(2)).disk_arrays()
        b = pack_balls(2, VerticalLines.uniform(2)).disk_arrays()
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x, y)

    def test_thin_strips(self):
        with pytest.raises(PackingError, match="too thin"):
            pack_balls(1, VerticalLines.uniform(2), M=2)

    def test_stage_index(self):
        with pytest.raises(PackingError):
            pack_balls(0, VerticalLines.uniform(1))

    def test_large_stage_is_cheap(self):
        """n = 32 never lists its disks; the summary comes from block counts."""
        pk = pack_balls(32, VerticalLines.uniform(2))
        assert pk.n_disks > 10**8 and pk.uncovered_area <= 1 / 32 and pk.max_radius <= 1 / 32

    def test_locate(self, rng):
        pk = pack_balls(2, VerticalLines.uniform(2))
        c, r, _ = pk.disk_arrays()
        pick = rng.choice(len(r), 200, replace=False)
        nb, ni, nt = pk.locate(c[pick])
        cc, rr = pk.disk_geometry(nb, ni, nt)
        np.testing.assert_allclose(cc, c[pick])
        np.testing.assert_allclose(rr, r[pick])
        pts = rng.random((2000, 2)) * TWO_PI
        nb, ni, nt = pk.locate(pts)
        cc, rr = pk.disk_geometry(nb, ni, nt)
        inside = np.linalg.norm(((pts - cc + np.pi) % TWO_PI) - np.pi, axis=-1) <= rr
        assert np.all(inside[nb >= 0])
        # points outside every located disk really are uncovered
        d = np.linalg.norm(((pts[nb < 0, None] - c[None] + np.pi) % TWO_PI) - np.pi, axis=-1) - r[None]
        assert np.all(d.min(axis=1) > -1e-9 * r.max())


class TestExplicitPackings:
    lines = VerticalLines.uniform(2)

    def test_valid(self):
        pk = BallPacking.explicit([[np.pi / 2, 1.0], [3 * np.pi / 2, 2.0]], [0.5, 0.5], self.lines, 4)
        assert pk.n_disks == 2 and pk.strip_disk_counts() == [1, 1]

    def test_overlap(self):
        with pytest.raises(PackingError, match="overlapping"):
            BallPacking.explicit([[1.5, 1.0], [1.5, 1.5]], [0.3, 0.3], self.lines, 8)

    def test_too_close_to_line(self):
        with pytest.raises(PackingError, match="line"):
            BallPacking.explicit([[0.5, 1.0]], [0.3], self.lines, 8)

    def test_to_dict(self):
        pk = BallPacking.explicit([[np.pi / 2, 1.0]], [0.5], self.lines, 4)
        doc = pk.to_dict()
        assert doc["L"] == 1 and doc["strips"] == [[0], []]
        assert doc["balls"][0]["radius"] == pytest.approx(0.5)


class TestClearance:
    @given(st.floats(0.01, 0.45))
    def test_two_disks(self, gap):
        c = np.array([[1.0, 1.0], [2.0 + gap, 1.0]])
        assert min_clearance(c, np.array([0.5, 0.5])) == pytest.approx(gap)

    def test_across_the_seam(self):
        c = np.array([[0.1, 3.0], [TWO_PI - 0.1, 3.0]])
        assert min_clearance(c, np.array([0.08, 0.08])) == pytest.approx(0.04)

    def test_far_apart_reports_inf(self):
        c = np.array([[1.0, 1.0], [4.0, 4.0]])
        assert min_clearance(c, np.array([0.1, 0.1])) == np.inf

    def test_overlap_is_negative(self):
        c = np.array([[1.0, 1.0], [1.5, 1.0]])
        assert min_clearance(c, np.array([0.3, 0.3])) == pytest.approx(-0.1)
