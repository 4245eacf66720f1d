import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qpeuler.density2d.locally_radial import psi0_from_name
from qpeuler.density2d.packing import BallPacking, PackingError, VerticalLines
from qpeuler.density2d.theorem import ShearBackground, StripCoordinate, build_chi_jM, build_theorem_family
from qpeuler.fields import TWO_PI, grid_points
from qpeuler.verify.residual import euler_residual, sampler
from qpeuler.verify.spectral import SpectralWorkspace

LINES2 = VerticalLines.uniform(2)
NU = (1.0, np.sqrt(2.0))


@pytest.fixture(scope="module")
def family():
    pk = BallPacking.explicit([[np.pi / 2, 1.0], [3 * np.pi / 2, 4.0]], [0.8, 0.8], LINES2, 8)
    return build_theorem_family(psi0_from_name("sin_sin"), 1, 2, NU, 2.0, packing=pk, m=4, c=0.3)


@pytest.fixture(scope="module")
def staged():
    return build_theorem_family(psi0_from_name("sin_sin"), 2, 2, NU, 2.0)


def resolvable(c):
    """One strip, one large disk, sharpness 2: smooth enough for spectral checks."""
    lines = VerticalLines.uniform(1)
    pk = BallPacking.explicit([[np.pi, np.pi]], [1.1], lines, 1)
    return build_theorem_family(psi0_from_name("one"), 1, 1, (1.0,), 2.0, packing=pk, m=2, c=c)


class TestStripCoordinate:
    def test_identity_on_interior(self):
        chi = StripCoordinate(0, 8, 2)
        s = np.linspace(0.25 + 1e-9, np.pi - 0.25 - 1e-9, 50)
        np.testing.assert_allclose(chi(s), s, rtol=1e-14)
        np.testing.assert_allclose(chi.derivative(s), 1.0, rtol=1e-14)
        np.testing.assert_allclose(chi.second_derivative(s), 0.0, atol=1e-12)

    def test_vanishes_near_edges(self):
        chi = StripCoordinate(1, 8, 2)
        s = np.concatenate([np.linspace(0, np.pi + 1 / 8, 40), np.linspace(TWO_PI - 1 / 8, TWO_PI, 10)])
        assert np.all(chi(s) == 0.0)

    def test_disjoint_supports(self):
        s = np.linspace(0, TWO_PI, 4001)
        vals = [StripCoordinate(j, 10, 3)(s) for j in range(3)]
        for i in range(3):
            for j in range(i + 1, 3):
                assert np.all(vals[i] * vals[j] == 0.0)

    @given(st.floats(0.0, TWO_PI))
    def test_derivatives_by_differences(self, s):
        chi = StripCoordinate(0, 4, 1)
        h = 1e-5
        assert chi.derivative(s) == pytest.approx((chi(s + h) - chi(s - h)) / (2 * h), abs=2e-5)
        fd2 = (chi.derivative(s + h) - chi.derivative(s - h)) / (2 * h)
        assert chi.second_derivative(s) == pytest.approx(fd2, abs=2e-3)

    def test_infeasible_margin(self):
        with pytest.raises(PackingError):
            StripCoordinate(0, 1, 4)

    def test_needs_equal_spacing(self):
        with pytest.raises(ValueError):
            build_chi_jM(0, 8, VerticalLines((0.0, 1.0)))


class TestShearBackground:
    def test_lq_norm_of_single_strip(self):
        F = ShearBackground((StripCoordinate(0, 8, 1),), (1.0,))
        s = (np.arange(1 << 18) + 0.5) * TWO_PI / (1 << 18)
        midpoint = np.sqrt(TWO_PI * np.mean(F(s) ** 2) * TWO_PI)
        assert F.lq_norm(2.0) == pytest.approx(midpoint, rel=1e-9)
        assert TWO_PI - 2.0 / 8 <= F.lq_norm(np.inf) <= TWO_PI - 1.0 / 8

    def test_scale_constant_bound(self, staged):
        assert staged.c * staged.background.lq_norm(2.0) <= 1.0 / staged.packing.n + 1e-12


class TestFamily:
    def test_strip_speeds_on_disks(self, family):
        """On every disk the background velocity is exactly (0, c nu_j)."""
        for ch in family.packing.iter_disks():
            strip = family.lines.strip_of(ch.centers[:, 0])
            for rim in (0.0, 0.5, 1.0):
                x = ch.centers + rim * ch.radii[:, None] * np.array([0.6, 0.8])
                bg = family.c * family.background.derivative(x[:, 0])
                np.testing.assert_allclose(-bg, family.c * np.asarray(NU)[strip], rtol=1e-13)

    def test_zero_scale_is_steady(self, family):
        fam0 = build_theorem_family(psi0_from_name("sin_sin"), 1, 2, NU, 2.0, packing=family.packing, m=4, c=0.0)
        x = grid_points((64, 64)).reshape(-1, 2)
        np.testing.assert_array_equal(fam0.psi(3.7, x), fam0.phi(x))

    def test_transport_identity(self, family):
        """psi(t, x1, x2 + c nu_j t) - c F(x1) = phi(x) for x in strip j."""
        t = 1.3
        x = np.random.default_rng(1).random((500, 2)) * TWO_PI
        strip = family.lines.strip_of(x[:, 0])
        moved = x.copy()
        moved[:, 1] += family.c * np.asarray(NU)[strip] * t
        lhs = family.psi(t, moved) - family.c * family.background(x[:, 0])
        np.testing.assert_allclose(lhs, family.phi(x), atol=1e-13)

    @given(st.floats(0.0, TWO_PI), st.floats(0.0, TWO_PI))
    def test_velocity_by_differences(self, a, b):
        theta = np.array([a, b])
        fam = TestFamily._fam
        x = np.array([[np.pi / 2 + 0.3, 1.2 + a], [3 * np.pi / 2 - 0.5, 4.4 + b], [0.1, 2.0], [2.0, 0.5 + a]])
        h = 1e-6
        e1, e2 = np.array([h, 0]), np.array([0, h])
        d1 = (fam.psi_theta(theta, x + e1) - fam.psi_theta(theta, x - e1)) / (2 * h)
        d2 = (fam.psi_theta(theta, x + e2) - fam.psi_theta(theta, x - e2)) / (2 * h)
        np.testing.assert_allclose(fam.U(theta, x), np.stack([d2, -d1], -1), atol=1e-6)

    @given(st.floats(0.0, TWO_PI), st.floats(0.0, TWO_PI))
    def test_vorticity_by_differences(self, a, b):
        theta = np.array([a, b])
        fam = TestFamily._fam
        x = np.array([[np.pi / 2 + 0.3, 1.2 + a], [3 * np.pi / 2 - 0.5, 4.4 + b], [0.1, 2.0]])
        h = 1e-4
        lap = sum(fam.psi_theta(theta, x + e) + fam.psi_theta(theta, x - e) for e in (np.array([h, 0]), np.array([0, h])))
        lap = (lap - 4 * fam.psi_theta(theta, x)) / h**2
        np.testing.assert_allclose(fam.vorticity_theta(theta, x), lap, rtol=1e-5, atol=2e-4)

    @pytest.fixture(autouse=True)
    def _share(self, family):
        TestFamily._fam = family

    def test_grid_mean_velocity(self):
        fam = resolvable(0.1)
        u = fam.velocity(0.8, grid_points((256, 256)))
        np.testing.assert_allclose(u.mean(axis=(0, 1)), fam.mean_velocity(), atol=1e-8)

    def test_initial_datum(self, family):
        x = np.random.default_rng(2).random((200, 2)) * TWO_PI
        h = 1e-6
        d2 = (family.initial_datum(x + [0, h]) - family.initial_datum(x - [0, h])) / (2 * h)
        np.testing.assert_allclose(family.velocity(0.0, x)[:, 0], d2, atol=1e-6)

    def test_staged_parameters(self, staged):
        p = staged.parameters()
        assert p["N"] == 2 and p["n"] == 2 and p["L"] == staged.packing.n_disks
        assert p["M"] == staged.M and p["m"] >= 2 and 0 < p["c"] <= 0.5

    def test_speed_count(self):
        with pytest.raises(ValueError):
            build_theorem_family(psi0_from_name("one"), 1, 2, (1.0,), 2.0)


class TestExactness:
    def test_residual_converges(self):
        """The Leray residual falls with resolution, limited only by how well the ramps are sampled."""
        fam = resolvable(0.1)
        out = []
        for n in (256, 512, 1024):
            ws = SpectralWorkspace((n, n))
            out.append(euler_residual(sampler(fam.velocity, ws), None, 0.37, ws)["max_momentum"])
        assert out[0] > out[1] > out[2]
        assert out[2] < 1e-5
