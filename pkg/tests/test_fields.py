import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from qpeuler.fields import (TWO_PI, BumpProfile, CutoffChi, FrequencyVector, SampledField, SmoothStep,
                            TorusPoint, grid_points, lq_error, reduce_mod_2pi, smooth_partition,
                            smooth_partition_d1, smooth_partition_d2, torus_distance, weakstar_pairing,
                            wrap_to_pi)

coords = st.floats(-50.0, 50.0, allow_nan=False)


def points(m):
    return arrays(np.float64, (m,), elements=coords)


class TestTorusGeometry:
    """Canonical reduction and the geodesic distance on T^m."""

    def test_reduce_lands_in_half_open_interval(self):
        x = np.array([-1e-300, -TWO_PI, 0.0, TWO_PI, 3 * TWO_PI + 0.5])
        y = reduce_mod_2pi(x)
        assert np.all((y >= 0) & (y < TWO_PI))
        np.testing.assert_allclose(y[-1], 0.5, atol=1e-12)

    def test_wrap_to_pi(self):
        np.testing.assert_allclose(wrap_to_pi([3 * np.pi / 2, -3 * np.pi / 2]), [-np.pi / 2, np.pi / 2])

    def test_torus_point_reduces(self):
        p = TorusPoint((-1.0, 7.0))
        np.testing.assert_allclose(p.coords, (TWO_PI - 1.0, 7.0 - TWO_PI))
        q = p + (1.0, TWO_PI - 7.0)
        np.testing.assert_allclose(q.coords, (0.0, 0.0), atol=1e-12)

    def test_frequency_vector_rejects_zero(self):
        with pytest.raises(ValueError):
            FrequencyVector((0.0, 0.0))
        assert FrequencyVector((1.0, np.sqrt(2))).dim == 2

    def test_known_distances(self):
        assert torus_distance(np.array([0.1, 0.0]), np.array([TWO_PI - 0.1, 0.0])) == pytest.approx(0.2)
        assert torus_distance(TorusPoint((0.0, 0.0)), TorusPoint((np.pi, np.pi))) == pytest.approx(np.pi * np.sqrt(2))

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            torus_distance(np.zeros(2), np.zeros(3))

    @given(points(3), points(3), points(3))
    def test_metric_axioms(self, x, y, z):
        dxy, dyz, dxz = torus_distance(x, y), torus_distance(y, z), torus_distance(x, z)
        assert dxy == pytest.approx(torus_distance(y, x), abs=1e-12)
        assert dxz <= dxy + dyz + 1e-9
        assert dxy <= np.pi * np.sqrt(3) + 1e-12

    @given(points(2), st.integers(-3, 3), st.integers(-3, 3))
    def test_lattice_invariance(self, x, k1, k2):
        shifted = x + TWO_PI * np.array([k1, k2])
        assert torus_distance(x, shifted) == pytest.approx(0.0, abs=1e-9)


class TestSmoothPartition:
    """S is 0 below 0, 1 above 1, and S(t) + S(1 - t) = 1."""

    @given(st.floats(-2.0, 3.0))
    def test_symmetry(self, t):
        assert smooth_partition(t) + smooth_partition(1.0 - t) == pytest.approx(1.0, abs=1e-14)

    def test_plateaus(self):
        np.testing.assert_array_equal(smooth_partition(np.array([-1.0, 0.0, 1.0, 2.0])), [0, 0, 1, 1])
        assert smooth_partition(0.5) == pytest.approx(0.5)

    def test_monotone(self):
        t = np.linspace(-0.5, 1.5, 4001)
        assert np.all(np.diff(smooth_partition(t)) >= 0)

    def test_derivatives_match_differences(self):
        t = np.linspace(0.02, 0.98, 97)
        h = 1e-6
        fd1 = (smooth_partition(t + h) - smooth_partition(t - h)) / (2 * h)
        fd2 = (smooth_partition_d1(t + h) - smooth_partition_d1(t - h)) / (2 * h)
        np.testing.assert_allclose(smooth_partition_d1(t), fd1, rtol=1e-6, atol=1e-8)
        np.testing.assert_allclose(smooth_partition_d2(t), fd2, rtol=1e-5, atol=1e-6)

    def test_no_overflow_near_edges(self):
        t = np.array([1e-300, 1e-10, 1 - 1e-10])
        with np.errstate(over="raise", invalid="raise", divide="raise"):
            assert np.all(np.isfinite(smooth_partition_d2(t)))


class TestBumpProfile:
    """f(r) = A exp(a - 1 - a / (1 - (r/R)^2)) on |r| < R."""

    def test_centre_value_is_amplitude_over_e(self):
        for a in (1.0, 3.0, 8.0):
            assert BumpProfile(0.7, a, 2.0)(0.0) == pytest.approx(2.0 / np.e)

    def test_support(self):
        f = BumpProfile(0.5)
        assert f(0.5) == 0.0 and f(-0.6) == 0.0 and f(0.49) > 0.0

    def test_even(self):
        r = np.linspace(0, 0.5, 11)
        f = BumpProfile(0.5, 2.0)
        np.testing.assert_array_equal(f(r), f(-r))

    @given(st.floats(0.05, 0.95), st.floats(0.5, 10.0))
    def test_derivative(self, u, a):
        f = BumpProfile(1.3, a)
        r, h = 1.3 * u, 1e-7
        fd = (f(r + h) - f(r - h)) / (2 * h)
        assert f.derivative(r) == pytest.approx(fd, rel=1e-5, abs=1e-9)

    def test_rejects_bad_parameters(self):
        with pytest.raises(ValueError):
            BumpProfile(0.0)
        with pytest.raises(ValueError):
            BumpProfile(1.0, sharpness=-1.0)


class TestCutoffs:
    def test_chi_plateau_and_support(self):
        chi = CutoffChi(0.2)
        np.testing.assert_array_equal(chi(np.array([0.0, 0.19, -0.2, 0.4, 0.5])), [1, 1, 1, 0, 0])
        assert 0.0 < chi(0.3) < 1.0

    def test_chi_derivatives(self):
        chi = CutoffChi(0.2)
        r = np.linspace(-0.39, 0.39, 157)
        h = 1e-7
        np.testing.assert_allclose(chi.derivative(r), (chi(r + h) - chi(r - h)) / (2 * h), atol=1e-5)
        np.testing.assert_allclose(chi.second_derivative(r),
                                   (chi.derivative(r + h) - chi.derivative(r - h)) / (2 * h), atol=1e-3)

    def test_smooth_step(self):
        H = SmoothStep(8)
        assert H.plateau == pytest.approx(7 / 8)
        np.testing.assert_array_equal(H(np.array([0.0, 0.875, 1.0, 1.5])), [1, 1, 0, 0])
        assert H(1.0 - 1.0 / 16) == pytest.approx(0.5)

    def test_smooth_step_index(self):
        with pytest.raises(ValueError):
            SmoothStep(1)
        with pytest.raises(ValueError):
            SmoothStep(2.5)

    @given(st.integers(2, 64))
    def test_smooth_step_l1_gap(self, m):
        """The mass of 1 - H_m on [0, 1] is at most the ramp width 1/m."""
        s = (np.arange(20000) + 0.5) / 20000
        assert np.mean(1.0 - SmoothStep(m)(s)) <= 1.0 / m + 1e-12


class TestSampledField:
    def test_grid_points_layout(self):
        pts = grid_points((4, 8))
        assert pts.shape == (4, 8, 2)
        assert pts[1, 0, 0] == pytest.approx(TWO_PI / 4) and pts[0, 1, 1] == pytest.approx(TWO_PI / 8)

    def test_from_function(self):
        f = SampledField.from_function(lambda x: np.sin(x[..., 0]), (16, 16))
        assert f.components == 1 and f.shape == (16, 16) and f.dim == 2
        v = SampledField.from_function(lambda x: x, (8, 8))
        assert v.components == 2

    def test_rejects_flat_values(self):
        with pytest.raises(ValueError):
            SampledField(np.zeros(5))

    def test_lq_error_of_constant_shift(self):
        f = SampledField.scalar(np.zeros((32, 32)))
        g = SampledField.scalar(np.full((32, 32), 0.5))
        assert lq_error(f, g, 1) == pytest.approx(0.5 * TWO_PI**2)
        assert lq_error(f, g, 2) == pytest.approx(0.5 * TWO_PI)
        assert lq_error(f, g, np.inf) == pytest.approx(0.5)

    def test_lq_error_grid_mismatch(self):
        with pytest.raises(ValueError):
            lq_error(SampledField.scalar(np.zeros((8, 8))), SampledField.scalar(np.zeros((16, 16))), 2)

    def test_weakstar_pairing_orthogonality(self):
        a = SampledField.from_function(lambda x: np.cos(x[..., 0]), (32, 32))
        b = SampledField.from_function(lambda x: np.cos(2 * x[..., 0]), (32, 32))
        assert weakstar_pairing(a, b) == pytest.approx(0.0, abs=1e-12)
        assert weakstar_pairing(a, a) == pytest.approx(2 * np.pi**2)
