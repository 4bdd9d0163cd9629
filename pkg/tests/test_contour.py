import numpy as np
import pytest

from capres.contour import (RampProfile, ScalingContour, build_contour, contour_point, max_violation,
                            smoothstep7, smoothstep7_derivative, verify_contour)
from capres.errors import ConstructionFailure
from capres.model import THETA_MAX

PROPERTY_TOL = 1e-12
FD_TOL = 1e-8


class WobblyProfile(RampProfile):
    """Ramp plus a wiggle large enough to make ``s`` decrease somewhere."""

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        return super().__call__(u) + 0.3 * np.sin(2 * np.pi * np.clip(u, 0, 1)) / (2 * np.pi) * 3

    def derivative(self, u):
        u = np.asarray(u, dtype=float)
        inside = (u > 0) & (u < 1)
        return super().derivative(u) + np.where(inside, 0.9 * np.cos(2 * np.pi * u), 0.0)


class WobblyContour(ScalingContour):
    @property
    def profile(self):
        return WobblyProfile(self.eta)


def test_smoothstep_endpoints():
    assert smoothstep7(0.0) == 0 and smoothstep7(1.0) == 1
    assert abs(smoothstep7(0.5) - 0.5) < 1e-15
    assert smoothstep7_derivative(0.0) == 0 and smoothstep7_derivative(1.0) == 0


def test_identity_contour():
    c = build_contour(0.0, 3.0, 0.1)
    assert c.T0 == 3.0
    t = np.linspace(0, 50, 101)
    g, gp = c.evaluate(t)
    assert np.array_equal(g, t + 0j) and np.all(gp == 1)
    assert max_violation(verify_contour(c)) == 0


@pytest.mark.parametrize("theta", [np.pi / 16, 0.3, THETA_MAX - 1e-3])
@pytest.mark.parametrize("alpha0", [0.05, 0.1, 0.2])
def test_built_contours_satisfy_properties(theta, alpha0):
    c = build_contour(theta, 3.0, alpha0)
    rep = verify_contour(c, 10_000)
    assert [p.name for p in rep] == ["(1)", "(2)", "(3)", "(4)"]
    assert max_violation(rep) < PROPERTY_TOL


def test_frozen_T0():
    # log-radial ramp: T0 = R1 (1 + theta/alpha0) doubled until admissible
    assert abs(build_contour(0.3, 3.0, 0.2).T0 - 30.0) < 1e-12
    assert abs(build_contour(0.3, 3.0, 0.5).T0 - 9.6) < 1e-12


def test_contour_points():
    c = build_contour(0.3, 3.0, 0.2)
    assert contour_point(c, 0.0) == (0, 1)
    assert contour_point(c, 1.5)[0] == 1.5
    for t in (c.T0, 2 * c.T0, 100.0):
        g, gp = contour_point(c, t)
        assert abs(g - np.exp(0.3j) * t) < 1e-12 * t
        assert abs(gp - np.exp(0.3j)) < 1e-12


def test_derivative_matches_finite_difference():
    c = build_contour(0.3, 3.0, 0.2)
    t = (c.R1 + c.T0) / 2
    h = 1e-5
    fd = (contour_point(c, t + h)[0] - contour_point(c, t - h)[0]) / (2 * h)
    assert abs(fd - contour_point(c, t)[1]) < FD_TOL


def test_second_derivative_matches_finite_difference():
    c = build_contour(0.3, 3.0, 0.2)
    t = np.array([4.0, 10.0, 20.0])
    h = 1e-5
    fd = (c.evaluate(t + h)[1] - c.evaluate(t - h)[1]) / (2 * h)
    assert np.max(np.abs(fd - c.second_derivative(t))) < FD_TOL


def test_corrupted_profile_reports_location():
    c = WobblyContour(0.3, 3.0, 30.0, 0.2)
    rep = {p.name: p for p in verify_contour(c)}
    assert rep["(3)"].max_violation > 0
    assert c.R1 < rep["(3)"].at_t < c.T0


def test_inadmissible_inputs():
    with pytest.raises(ConstructionFailure):
        build_contour(0.5, 3.0, 0.1)
    with pytest.raises(ConstructionFailure):
        build_contour(0.3, 3.0, 0.0)
    with pytest.raises(ValueError):
        contour_point(build_contour(0.3, 3.0), -1.0)
