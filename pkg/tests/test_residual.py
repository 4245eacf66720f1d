import numpy as np
import pytest

from qpeuler.verify.residual import euler_residual, residual_from_samples, sampler, time_derivative
from qpeuler.verify.spectral import SpectralWorkspace


class TestTimeDerivative:
    def test_quartic_is_exact(self):
        u = lambda t: np.array([t**4 - 2 * t**2])
        assert time_derivative(u, 0.7, 1e-2)[0] == pytest.approx(4 * 0.7**3 - 4 * 0.7, rel=1e-12)


class TestResidual:
    """Shear flows u = (U(x2), 0) are steady with constant pressure."""

    ws = SpectralWorkspace((32, 32))

    def shear(self, t, x):
        return np.stack([np.sin(x[..., 1]) + 0 * t, np.zeros_like(x[..., 0])], axis=-1)

    def test_steady_shear(self):
        r = euler_residual(sampler(self.shear, self.ws), None, 0.3, self.ws)
        assert r["mode"] == "leray" and r["max_momentum"] < 1e-12 and r["max_div"] < 1e-12

    def test_translating_shear_is_not_steady(self):
        moving = lambda t, x: self.shear(0.0, x + np.array([0.0, t]))
        r = euler_residual(sampler(moving, self.ws), None, 0.0, self.ws)
        assert r["max_momentum"] == pytest.approx(1.0, rel=1e-6)

    def test_pressure_mode(self):
        """u = (cos x1, sin x1 ... ) style: the Taylor vortex needs its pressure."""
        from qpeuler.fields import grid_points
        x = grid_points(self.ws.shape)
        u = np.stack([np.sin(x[..., 0]) * np.cos(x[..., 1]), -np.cos(x[..., 0]) * np.sin(x[..., 1])])
        p = 0.25 * (np.cos(2 * x[..., 0]) + np.cos(2 * x[..., 1]))
        r = residual_from_samples(np.zeros_like(u), u, self.ws, p)
        assert r["mode"] == "pressure" and r["max_momentum"] < 1e-12
        wrong = residual_from_samples(np.zeros_like(u), u, self.ws, np.zeros_like(p))
        assert wrong["max_momentum"] > 0.1
