"""Complex scaling contours.

The radial contour is ``g(t) = t * exp(i * theta * s(u))`` with the
log-radial parameter ``u = log(t / R1) / log(T0 / R1)`` clipped to ``[0, 1]``.
Writing ``g`` this way makes ``arg g' - arg g = arctan(theta * s'(u) / log(T0/R1))``
so the angle-spread condition is controlled by the slope of ``s`` alone.

The profile ``s`` is a ramp with smooth shoulders: ``s'`` rises from 0 to a
plateau through a 7th-order smoothstep over a fraction ``eta`` of ``[0, 1]``,
stays flat, and falls back symmetrically.  Its peak slope is
``1 / (1 - eta)``, much smaller than the 2.19 of the plain 7th-order
smoothstep, which keeps ``T0`` moderate for small ``alpha0``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConstructionFailure
from .model import THETA_MAX

DEFAULT_ALPHA0 = 0.1
TOLERANCE = 1e-12
T0_CAP = 1e6
# largest angle accepted by the library; the sector bound itself is left untested
THETA_LIMIT = THETA_MAX - 1e-3


def smoothstep7(x):
    """7th-order smoothstep on ``[0, 1]`` (C3 junctions)."""
    x = np.clip(x, 0.0, 1.0)
    return x**4 * (35 - 84 * x + 70 * x**2 - 20 * x**3)


def smoothstep7_derivative(x):
    x = np.clip(x, 0.0, 1.0)
    return 140 * x**3 * (1 - x) ** 3


def smoothstep7_second(x):
    x = np.clip(x, 0.0, 1.0)
    return 420 * x**2 * (1 - x) ** 2 * (1 - 2 * x)


class RampProfile:
    """Nondecreasing ``s: [0, 1] -> [0, 1]`` with ``s' = A * (S(u/eta) - S((u - 1 + eta)/eta))``.

    ``S`` is :func:`smoothstep7`.  The integral of ``s'`` over ``[0, 1]`` is
    ``A * (1 - eta)`` so ``A = 1 / (1 - eta)``.
    """

    def __init__(self, eta=0.1):
        if not 0 < eta <= 0.5:
            raise ValueError("eta must lie in (0, 1/2]")
        self.eta = eta
        self.amplitude = 1.0 / (1.0 - eta)

    @staticmethod
    def _int_step(x):
        # antiderivative of smoothstep7 on [0, 1], continued linearly beyond 1
        xc = np.clip(x, 0.0, 1.0)
        inner = xc**5 * (7 - 14 * xc + 10 * xc**2 - 2.5 * xc**3)
        return inner + np.maximum(x - 1.0, 0.0) * 1.0

    def __call__(self, u):
        u = np.clip(u, 0.0, 1.0)
        e = self.eta
        val = e * (self._int_step(u / e) - self._int_step((u - 1 + e) / e))
        return np.clip(self.amplitude * val, 0.0, 1.0)

    def derivative(self, u):
        u = np.asarray(u, dtype=float)
        e = self.eta
        d = self.amplitude * (smoothstep7(u / e) - smoothstep7((u - 1 + e) / e))
        return np.where((u <= 0) | (u >= 1), 0.0, d)

    def second_derivative(self, u):
        u = np.asarray(u, dtype=float)
        e = self.eta
        d = self.amplitude / e * (smoothstep7_second(u / e) - smoothstep7_second((u - 1 + e) / e))
        return np.where((u <= 0) | (u >= 1), 0.0, d)

    @property
    def max_slope(self):
        return self.amplitude


@dataclass(frozen=True)
class ScalingContour:
    """Radial scaling contour ``g`` with its construction parameters.

    Attributes
    ----------
    theta : float
        Final angle; ``g(t) = exp(i theta) t`` for ``t >= T0``.
    R1 : float
        ``g(t) = t`` for ``t <= R1``.
    T0 : float
    alpha0 : float
        Allowed spread ``arg g' - arg g``.
    eta : float
        Shoulder width of the ramp profile.
    """

    theta: float
    R1: float
    T0: float
    alpha0: float = DEFAULT_ALPHA0
    eta: float = 0.1

    @property
    def profile(self):
        return RampProfile(self.eta)

    @property
    def log_ratio(self):
        return float(np.log(self.T0 / self.R1)) if self.T0 > self.R1 else 0.0

    def evaluate(self, t):
        """Vectorized ``(g, g')`` at radii ``t >= 0``."""
        t = np.asarray(t, dtype=float)
        if self.theta == 0.0 or self.T0 <= self.R1:
            return t.astype(complex), np.ones(t.shape, dtype=complex)
        lr = self.log_ratio
        safe = np.where(t > self.R1, t, self.R1)
        u = np.log(safe / self.R1) / lr
        prof = self.profile
        s = prof(u)
        ds = prof.derivative(u)
        phase = np.exp(1j * self.theta * s)
        g = t * phase
        gp = phase * (1 + 1j * self.theta * ds / lr)
        inside = t <= self.R1
        g = np.where(inside, t + 0j, g)
        gp = np.where(inside, 1.0 + 0j, gp)
        beyond = u >= 1
        g = np.where(beyond, np.exp(1j * self.theta) * t, g)
        gp = np.where(beyond, np.exp(1j * self.theta), gp)
        return g, gp

    def second_derivative(self, t):
        """``g''`` at radii ``t`` (used by checks only)."""
        t = np.asarray(t, dtype=float)
        if self.theta == 0.0 or self.T0 <= self.R1:
            return np.zeros(t.shape, dtype=complex)
        lr = self.log_ratio
        safe = np.where(t > self.R1, t, self.R1)
        u = np.log(safe / self.R1) / lr
        prof = self.profile
        a = 1j * self.theta / lr
        ds, dds = prof.derivative(u), prof.second_derivative(u)
        phase = np.exp(1j * self.theta * prof(u))
        val = phase / safe * (a * ds * (1 + a * ds) + a * dds)
        return np.where((t <= self.R1) | (u >= 1), 0.0, val)


def contour_point(contour, t):
    """``(g(t), g'(t))`` for a single radius ``t >= 0``."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    g, gp = contour.evaluate(np.array([float(t)]))
    return complex(g[0]), complex(gp[0])


@dataclass(frozen=True)
class PropertyViolation:
    name: str
    max_violation: float
    at_t: float


def _angle_gap(a, b):
    """Signed ``a - b`` for angles, wrapped to ``(-pi, pi]``."""
    return np.angle(np.exp(1j * (a - b)))


def verify_contour(contour, grid_points=10_000):
    """Worst violation of each defining property on a log-spaced grid.

    The grid has ``grid_points`` points, log-spaced in ``[0, 2 T0]`` (the
    first point is ``t = 0``), with the points ``R1`` and ``T0`` added.

    Returns
    -------
    list of PropertyViolation
        One entry per property ``"(1)" .. "(4)"``, zero when satisfied.
    """
    if grid_points < 1000:
        raise ValueError("grid_points must be at least 1000")
    top = 2.0 * max(contour.T0, contour.R1)
    lo = min(1e-6, contour.R1 * 1e-6)
    t = np.concatenate([[0.0], np.geomspace(lo, top, grid_points - 1), [contour.R1, contour.T0]])
    t = np.unique(t)
    g, gp = contour.evaluate(t)
    out = []

    def worst(name, v):
        v = np.maximum(np.asarray(v, dtype=float), 0.0)
        i = int(np.argmax(v))
        out.append(PropertyViolation(name, float(v[i]), float(t[i])))

    inside = t <= contour.R1
    worst("(1)", np.where(inside, np.abs(g - t), 0.0))

    arg_g = np.where(t > 0, np.angle(np.where(t > 0, g, 1.0)), 0.0)
    arg_gp = np.angle(gp)
    v2 = np.maximum.reduce([-arg_g, arg_g - contour.theta, np.where(np.abs(gp) == 0, 1.0, 0.0)])
    worst("(2)", v2)

    d = _angle_gap(arg_gp, arg_g)
    worst("(3)", np.maximum(-d, d - contour.alpha0))

    tail = t >= contour.T0
    worst("(4)", np.where(tail, np.abs(g - np.exp(1j * contour.theta) * t), 0.0))
    return out


def max_violation(report):
    return max(p.max_violation for p in report)


def build_contour(theta, R1, alpha0=DEFAULT_ALPHA0, eta=0.1, grid_points=10_000):
    """Construct an admissible contour.

    ``T0`` starts at ``R1 * (1 + theta / alpha0)`` and is doubled until every
    property holds to within ``1e-12`` on the verification grid.

    Raises
    ------
    ConstructionFailure
        If no ``T0 <= 1e6 * R1`` works or the inputs are inadmissible.
    """
    if not 0 <= theta <= THETA_MAX:
        raise ConstructionFailure(f"theta={theta} outside [0, pi/8]")
    if alpha0 <= 0 or R1 <= 0:
        raise ConstructionFailure(f"need alpha0 > 0 and R1 > 0 (alpha0={alpha0}, R1={R1})")
    if theta == 0:
        return ScalingContour(0.0, R1, R1, alpha0, eta)
    T0 = R1 * (1 + theta / alpha0)
    while T0 <= T0_CAP * R1:
        c = ScalingContour(theta, R1, T0, alpha0, eta)
        if max_violation(verify_contour(c, grid_points)) <= TOLERANCE:
            return c
        T0 *= 2
    raise ConstructionFailure(f"no T0 <= {T0_CAP:g} * R1 satisfies all properties "
                              f"(theta={theta}, alpha0={alpha0})")
