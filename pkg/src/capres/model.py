"""One-dimensional model problems.

A problem is the operator

    Q u = -(G(x) u')' + c(x) u

on the half line (Dirichlet condition at 0) or on the full line, where the
metric coefficient is ``G(x) = 1 + metric_beta / (1 + x**2)`` and the
potential ``c`` is zero, piecewise constant with support in ``[0, R0]``
(``[-R0, R0]`` on the full line), or ``beta / (1 + x**2)``.  The region
``|x| <= R0`` plays the part of the black box; ``R1 > R0`` is where a scaling
contour is allowed to leave the real axis.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import SectorViolation

HALF_LINE = "half_line"
FULL_LINE = "full_line"

# largest scaling angle any contour may use
THETA_MAX = np.pi / 8
POLE_GUARD = 1e-6


@dataclass(frozen=True)
class Segment:
    x_lo: float
    x_hi: float
    value: float


@dataclass(frozen=True)
class PotentialSpec:
    """Potential variant: ``"zero"``, ``"piecewise"`` or ``"rational"``."""

    kind: str = "zero"
    segments: tuple = ()
    beta: float = 0.0

    @classmethod
    def zero(cls):
        return cls("zero")

    @classmethod
    def piecewise_constant(cls, segments):
        segs = tuple(s if isinstance(s, Segment) else Segment(*map(float, s)) for s in segments)
        return cls("piecewise", tuple(sorted(segs, key=lambda s: s.x_lo)))

    @classmethod
    def rational_decay(cls, beta):
        return cls("rational", (), float(beta))

    @property
    def is_analytic(self):
        return self.kind != "piecewise"

    def jumps(self):
        """Positions and sizes ``c(x+) - c(x-)`` of the potential discontinuities."""
        if self.kind != "piecewise":
            return []
        out = {}
        for s in self.segments:
            out[s.x_lo] = out.get(s.x_lo, 0.0) + s.value
            out[s.x_hi] = out.get(s.x_hi, 0.0) - s.value
        return sorted((x, v) for x, v in out.items() if v != 0.0)

    def support_end(self):
        if self.kind != "piecewise" or not self.segments:
            return 0.0
        return max(s.x_hi for s in self.segments)

    def values(self, x):
        """Evaluate ``c`` at (possibly complex) points without region checks."""
        x = np.asarray(x)
        if self.kind == "zero":
            return np.zeros(x.shape, dtype=complex)
        if self.kind == "rational":
            return self.beta / (1.0 + x * x)
        out = np.zeros(x.shape, dtype=complex)
        xr = x.real
        on_axis = np.abs(x.imag) == 0.0
        for s in self.segments:
            out[on_axis & (xr >= s.x_lo) & (xr <= s.x_hi)] = s.value
        return out


@dataclass(frozen=True)
class ModelProblem:
    geometry: str = HALF_LINE
    potential: PotentialSpec = field(default_factory=PotentialSpec.zero)
    metric_beta: float = 0.0
    R0: float = 2.0
    R1: float = 3.0
    name: str = "problem"

    @property
    def is_flat(self):
        return self.metric_beta == 0.0

    def metric(self, x):
        """Metric coefficient ``G`` at (possibly complex) points."""
        x = np.asarray(x)
        if self.metric_beta == 0.0:
            return np.ones(x.shape, dtype=complex)
        return 1.0 + self.metric_beta / (1.0 + x * x)

    def metric_derivative(self, x):
        x = np.asarray(x)
        if self.metric_beta == 0.0:
            return np.zeros(x.shape, dtype=complex)
        return -2.0 * self.metric_beta * x / (1.0 + x * x) ** 2

    def potential_values(self, x):
        return self.potential.values(x)

    def has_poles(self):
        return self.metric_beta != 0.0 or self.potential.kind == "rational"


def barrier_problem(height=10.0, lo=1.0, hi=2.0, R0=2.0, R1=3.0):
    """Half-line square barrier used throughout the tests and demos."""
    return ModelProblem(HALF_LINE, PotentialSpec.piecewise_constant([(lo, hi, height)]),
                        0.0, R0, R1, name=f"barrier{height:g}")


def evaluate_coefficients(problem, point, theta0=THETA_MAX):
    """Analytic continuation of ``(G, c)`` at a single point.

    Allowed points are real ones with ``|x| <= R1`` (``0 <= x`` on the half
    line) and points ``s * exp(i phi)`` with ``|s| > R1`` and
    ``0 <= phi <= theta0`` (mirrored through the origin on the full line).

    Raises
    ------
    SectorViolation
        If the point is outside that region or within ``1e-6`` of a pole of
        ``1 / (1 + z**2)``.
    """
    z = complex(point)
    r = abs(z)
    w = z
    if problem.geometry == FULL_LINE and (z.real < 0 or (z.real == 0 and z.imag < 0)):
        w = -z
    if problem.geometry == HALF_LINE and z.imag == 0 and z.real < 0:
        raise SectorViolation(f"point {z} lies left of the half-line origin")
    if r > 0:
        phi = np.angle(w)
        tol = 1e-12
        if z.imag != 0:
            if r <= problem.R1:
                raise SectorViolation(f"complex point {z} inside |x| <= R1 = {problem.R1}")
            if phi < -tol or phi > theta0 + tol:
                raise SectorViolation(f"arg {phi:.6g} of {z} outside [0, {theta0:.6g}]")
    if problem.has_poles() and min(abs(z - 1j), abs(z + 1j)) < POLE_GUARD:
        raise SectorViolation(f"{z} within {POLE_GUARD} of a pole of 1/(1+z^2)")
    g = complex(problem.metric(z))
    c = complex(problem.potential_values(np.array([z]))[0])
    return g, c


def validate_problem(problem, theta0=THETA_MAX):
    """Check the problem invariants.

    Returns a list of ``(check, passed, detail)`` tuples; nothing is raised.
    """
    report = []

    def add(name, ok, detail=""):
        report.append((name, bool(ok), detail))

    add("R0 < R1", problem.R0 < problem.R1, f"R0={problem.R0}, R1={problem.R1}")
    add("R0 > 0", problem.R0 > 0, f"R0={problem.R0}")
    add("geometry", problem.geometry in (HALF_LINE, FULL_LINE), problem.geometry)

    pot = problem.potential
    if pot.kind == "piecewise":
        lo_bound = 0.0 if problem.geometry == HALF_LINE else -problem.R0
        bad = [s for s in pot.segments if s.x_lo < lo_bound or s.x_hi > problem.R0]
        add("support within R0", not bad,
            "" if not bad else f"support exceeds R0: segment [{bad[0].x_lo}, {bad[0].x_hi}] vs R0={problem.R0}")
        ordered = [s for s in pot.segments if not s.x_lo < s.x_hi]
        add("segments ordered", not ordered,
            "" if not ordered else f"empty segment [{ordered[0].x_lo}, {ordered[0].x_hi}]")
        overlap = [(a, b) for a, b in zip(pot.segments, pot.segments[1:]) if b.x_lo < a.x_hi]
        add("segments disjoint", not overlap,
            "" if not overlap else f"segments overlap at {overlap[0][1].x_lo}")
    elif pot.kind == "rational":
        add("potential amplitude |beta| < 1", abs(pot.beta) < 1, f"beta={pot.beta}")
    elif pot.kind != "zero":
        add("potential kind", False, f"unknown kind {pot.kind!r}")

    mb = problem.metric_beta
    add("coefficient bounded below", abs(mb) < 1,
        f"metric_beta={mb}" if abs(mb) < 1 else f"coefficient not bounded below: metric_beta={mb}")

    if problem.has_poles():
        # distance from +-i to the closed sector {s e^{i phi}: s >= R1, 0 <= phi <= theta0}
        dist = _pole_sector_distance(problem.R1, theta0)
        add("poles outside sector", dist > POLE_GUARD, f"distance={dist:.6g}")
    return report


def _pole_sector_distance(R1, theta0, samples=2001):
    phis = np.linspace(0.0, theta0, samples)
    rays = np.exp(1j * phis)
    best = np.inf
    for pole in (1j, -1j):
        for p in (pole, -pole):
            s = np.maximum(R1, (p * rays.conj()).real)
            best = min(best, float(np.min(np.abs(s * rays - p))))
    return best


def problem_is_valid(problem, theta0=THETA_MAX):
    return all(ok for _, ok, _ in validate_problem(problem, theta0))
