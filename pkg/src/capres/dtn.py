"""Dirichlet-to-Neumann counting of resonances on the half line.

The interface is a single point ``a`` with ``R0 < a < R1``; ``O = [0, a]``
and the conormal points into ``O``, so for a function ``u`` the conormal
derivative at ``a`` is ``-G(a) u'(a)``.

* ``N_in(z)`` comes from the solution on ``[0, a]`` with ``u(0) = 0``
  normalized to ``u(a) = 1``.  It has simple poles at the interior Dirichlet
  eigenvalues.
* ``N_out(z)`` comes from the scaled, possibly absorbing, problem on
  ``[a, L]`` with ``u(a) = 1`` and ``u(L) = 0``.  It has poles at the exterior
  Dirichlet eigenvalues.

Zeros of ``N = N_out - N_in`` are the eigenvalues of the full scaled
operator, so the winding number of ``N`` along a circle is the number of
eigenvalues inside minus the number of auxiliary Dirichlet eigenvalues inside.
The latter are kept away from the circle by choosing the interface.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.integrate import solve_ivp

from .discretize import Grid, assemble_exterior, assemble_interior, default_cutoff
from .eigen import eigenvalues, resolvent_solve
from .errors import (BoundaryZeroSuspected, ExteriorSingular, InteriorSingular, NearSingular,
                     NoSafeInterface, ZeroOnContour)
from .oracle import _phase_winding, _propagator

ONE_SIDED = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / 12.0
INTERIOR_SINGULAR_RATIO = 1e-12
MIN_ABS_N = 1e-8


@dataclass(frozen=True)
class Interface:
    a: float

    def check(self, problem):
        if not problem.R0 < self.a < problem.R1:
            raise ValueError(f"interface a={self.a} outside (R0, R1) = ({problem.R0}, {problem.R1})")


@dataclass(frozen=True)
class Disk:
    center: complex
    radius: float

    def distance(self, z):
        return np.maximum(np.abs(np.asarray(z) - self.center) - self.radius, 0.0)


@dataclass(frozen=True)
class Box:
    re_lo: float
    re_hi: float
    im_lo: float
    im_hi: float

    def distance(self, z):
        z = np.asarray(z)
        dx = np.maximum.reduce([self.re_lo - z.real, z.real - self.re_hi, np.zeros(z.shape)])
        dy = np.maximum.reduce([self.im_lo - z.imag, z.imag - self.im_hi, np.zeros(z.shape)])
        return np.hypot(dx, dy)


def as_window(window):
    if isinstance(window, (Disk, Box)):
        return window
    if len(window) == 2:
        return Disk(complex(window[0]), float(window[1]))
    return Box(*map(float, window))


@dataclass(frozen=True)
class DtNSample:
    z: complex
    n_in: complex
    n_out: complex

    @property
    def n_total(self):
        return self.n_out - self.n_in


@dataclass(frozen=True)
class CountResult:
    center: complex
    radius: float
    winding: int
    samples: int
    min_abs: float

    def to_dict(self):
        return {"center": [self.center.real, self.center.imag], "radius": self.radius,
                "winding": self.winding, "samples": self.samples, "min_abs_N": self.min_abs}


def _interior_transfer(problem, z, a, n_samples=64):
    """``(phi(a), phi'(a), max |phi|)`` by exact propagators."""
    k = np.sqrt(complex(z))
    edges = [0.0]
    values = []
    for s in problem.potential.segments if problem.potential.kind == "piecewise" else ():
        if s.x_lo > edges[-1]:
            edges.append(min(s.x_lo, a)); values.append(0.0)
        edges.append(min(s.x_hi, a)); values.append(s.value)
    if edges[-1] < a:
        edges.append(a); values.append(0.0)
    y = np.array([0.0, 1.0], dtype=complex)
    peak = 0.0
    for lo, hi, v in zip(edges[:-1], edges[1:], values):
        if hi <= lo:
            continue
        ts = np.linspace(0.0, hi - lo, max(2, int(n_samples * (hi - lo) / a) + 2))[1:]
        ms = np.stack([_propagator(k, ell, v) for ell in ts])
        peak = max(peak, float(np.abs(ms[:, 0, :] @ y).max()))
        y = ms[-1] @ y
    return y[0], y[1], peak


def _interior_ode(problem, z, a, rtol=1e-12, atol=1e-14):
    """``(phi(a), G(a) phi'(a), max |phi|)`` by adaptive Runge-Kutta between jumps."""
    z = complex(z)
    breaks = sorted({0.0, a, *[x for x, _ in problem.potential.jumps() if 0 < x < a]})

    y = np.array([0.0, complex(problem.metric(np.array([0.0]))[0])], dtype=complex)
    peak = 0.0
    for lo, hi in zip(breaks[:-1], breaks[1:]):
        mid = 0.5 * (lo + hi)
        c_mid = complex(problem.potential_values(np.array([mid]))[0])

        smooth = problem.potential.kind != "piecewise"

        def rhs_seg(t, y, c_mid=c_mid, smooth=smooth):
            # piecewise potentials are constant between breaks; take the segment value
            c = complex(problem.potential_values(np.array([t]))[0]) if smooth else c_mid
            G = complex(problem.metric(np.array([t]))[0])
            return [y[1] / G, (c - z) * y[0]]

        sol = solve_ivp(rhs_seg, (lo, hi), y, method="DOP853", rtol=rtol, atol=atol,
                        dense_output=False)
        if not sol.success:
            raise RuntimeError(f"ODE integration failed: {sol.message}")
        peak = max(peak, float(np.abs(sol.y[0]).max()))
        y = sol.y[:, -1]
    return y[0], y[1], peak


def dtn_interior(problem, z, interface, method="auto"):
    """Interior DtN value ``-G(a) phi'(a) / phi(a)``.

    ``phi`` solves ``(P - z) phi = 0`` on ``[0, a]`` with ``phi(0) = 0``,
    ``phi'(0) = 1``.  ``method`` is ``"transfer"`` (flat metric, piecewise
    potential), ``"ode"`` or ``"auto"``.

    Raises
    ------
    InteriorSingular
        If ``|phi(a)| < 1e-12 max |phi|``: ``z`` is an interior Dirichlet
        eigenvalue to working precision.
    """
    a = interface.a if isinstance(interface, Interface) else float(interface)
    if method == "auto":
        method = "transfer" if problem.is_flat and problem.potential.kind in ("zero", "piecewise") else "ode"
    if method == "transfer":
        u, du, peak = _interior_transfer(problem, z, a)
        flux = du * complex(problem.metric(np.array([a]))[0])
    elif method == "ode":
        u, flux, peak = _interior_ode(problem, z, a)
        peak = max(peak, abs(u))
    else:
        raise ValueError(f"unknown method {method!r}")
    if abs(u) < INTERIOR_SINGULAR_RATIO * max(peak, abs(u)):
        raise InteriorSingular(f"z={z} is an interior Dirichlet eigenvalue for a={a}")
    return -flux / u


class ExteriorSolver:
    """Exterior Dirichlet problem on ``[a, L]`` factored once, solved per ``z``.

    The matrix is banded (three neighbours plus the extrapolated ghost
    couplings at ``a``), so each ``z`` costs a banded LU solve.
    """

    def __init__(self, problem, contour, epsilon, a, L, h, cutoff=None):
        self.problem = problem
        self.a = float(a)
        cutoff = default_cutoff(problem) if cutoff is None else cutoff
        self.grid = Grid.with_spacing(self.a, L, h)
        self.matrix = assemble_exterior(problem, contour, epsilon, cutoff, self.a, self.grid)
        A = self.matrix.entries
        n = A.shape[0]
        i, j = np.nonzero(A)
        self.lower = int(np.max(i - j))
        self.upper = int(np.max(j - i))
        ab = np.zeros((self.lower + self.upper + 1, n), dtype=complex)
        for d in range(-self.lower, self.upper + 1):
            diag = np.diagonal(A, d)
            if d >= 0:
                ab[self.upper - d, d:] = diag
            else:
                ab[self.upper - d, :n + d] = diag
        self._band = ab
        self._rhs = -self.matrix.left_coupling
        self.G_a = complex(problem.metric(np.array([self.a]))[0])

    def solve(self, z, dense=False):
        """Interior values of ``u`` on the exterior grid for ``u(a) = 1``, ``u(L) = 0``."""
        if dense:
            try:
                return resolvent_solve(self.matrix, z, self._rhs)
            except NearSingular as exc:
                raise ExteriorSingular(str(exc)) from exc
        ab = self._band.copy()
        ab[self.upper] -= z
        try:
            x = sla.solve_banded((self.lower, self.upper), ab, self._rhs, check_finite=False)
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise ExteriorSingular(f"exterior solve failed at z={z}: {exc}") from exc
        if not np.all(np.isfinite(x)):
            raise ExteriorSingular(f"exterior solve produced non-finite values at z={z}")
        return x

    def full_solution(self, z, dense=False):
        return np.concatenate([[1.0], self.solve(z, dense), [0.0]])

    def dtn(self, z, dense=False):
        u = self.full_solution(z, dense)
        du = np.dot(ONE_SIDED, u[:5]) / self.grid.h
        return -self.G_a * du


def dtn_exterior(problem, contour, epsilon, z, interface, grid=None, cutoff=None, L=None, h=0.02,
                 dense=True):
    """Exterior DtN value ``-G(a) u'(a)`` of the scaled problem on ``[a, L]``.

    ``grid`` (starting at ``a``) fixes ``L`` and the spacing; otherwise ``L``
    and ``h`` are used.  ``u'(a)`` is the one-sided fourth-order difference.

    Raises
    ------
    ExteriorSingular
        If ``z`` is (numerically) an exterior Dirichlet eigenvalue.
    """
    a = interface.a if isinstance(interface, Interface) else float(interface)
    if grid is not None:
        L, h = grid.t_max, grid.h
    solver = ExteriorSolver(problem, contour, epsilon, a, L, h, cutoff)
    return solver.dtn(z, dense=dense)


def default_exterior_length(contour, extra=20.0):
    return float(max(contour.T0, contour.R1) + extra)


def spectrum_margin(problem, contour, epsilon, interface, window, L=None, h=0.02, cutoff=None,
                    return_spectra=False):
    """Distances from the window to the interior and exterior Dirichlet spectra.

    ``window`` is a :class:`Disk`, a :class:`Box`, ``(center, radius)`` or
    ``(re_lo, re_hi, im_lo, im_hi)``.
    """
    a = interface.a if isinstance(interface, Interface) else float(interface)
    win = as_window(window)
    L = default_exterior_length(contour) if L is None else L
    interior = eigenvalues(assemble_interior(problem, a, h))
    ext = ExteriorSolver(problem, contour, epsilon, a, L, h, cutoff)
    exterior = eigenvalues(ext.matrix)
    m_in = float(np.min(win.distance(interior)))
    m_out = float(np.min(win.distance(exterior)))
    if return_spectra:
        return m_in, m_out, interior, exterior
    return m_in, m_out


def _discretization_error(problem, contour, epsilon, a, win, L, h, cutoff):
    """Richardson-style error estimate of the auxiliary eigenvalues nearest the window."""
    est = 0.0
    fine = eigenvalues(assemble_interior(problem, a, h))
    coarse = eigenvalues(assemble_interior(problem, a, 2 * h))
    k = int(np.argmin(win.distance(fine)))
    est = max(est, float(np.min(np.abs(coarse - fine[k]))) / 15.0)
    ext_f = eigenvalues(ExteriorSolver(problem, contour, epsilon, a, L, h, cutoff).matrix)
    ext_c = eigenvalues(ExteriorSolver(problem, contour, epsilon, a, L, 2 * h, cutoff).matrix)
    k = int(np.argmin(win.distance(ext_f)))
    est = max(est, float(np.min(np.abs(ext_c - ext_f[k]))) / 15.0)
    return est


def choose_interface(problem, contour, epsilon, window, candidates, L=None, h=0.02, cutoff=None):
    """Candidate interface with the largest ``min(margin_interior, margin_exterior)``.

    Raises
    ------
    NoSafeInterface
        If the best margin is below ten times the estimated discretization
        error of the auxiliary eigenvalues.
    """
    if not candidates:
        raise NoSafeInterface("no candidates given")
    win = as_window(window)
    L = default_exterior_length(contour) if L is None else L
    scored = []
    for a in candidates:
        Interface(a).check(problem)
        m_in, m_out = spectrum_margin(problem, contour, epsilon, a, win, L, h, cutoff)
        scored.append((min(m_in, m_out), -abs(a - 0.5 * (problem.R0 + problem.R1)), a))
    best_margin, _, best = max(scored)
    err = _discretization_error(problem, contour, epsilon, best, win, L, h, cutoff)
    if best_margin < 10 * err or best_margin <= 0:
        raise NoSafeInterface(f"best margin {best_margin:.3g} at a={best} below 10 x error {err:.3g}")
    return Interface(best)


def dtn_function(problem, contour, epsilon, interface, L=None, h=0.02, cutoff=None,
                 interior_method="auto"):
    """Vectorized ``z -> N(z) = N_out(z) - N_in(z)``."""
    a = interface.a if isinstance(interface, Interface) else float(interface)
    L = default_exterior_length(contour) if L is None else L
    ext = ExteriorSolver(problem, contour, epsilon, a, L, h, cutoff)

    def N(zs):
        zs = np.atleast_1d(np.asarray(zs, dtype=complex))
        return np.array([ext.dtn(z) - dtn_interior(problem, z, a, interior_method) for z in zs])

    return N


def count_resonances_dtn(problem, contour, epsilon, interface, circle, samples=64, L=None, h=0.02,
                         cutoff=None, return_samples=False):
    """Winding number of ``N`` along a positively oriented circle.

    ``circle`` is ``(center, radius)``.  Phase increments are kept below
    pi/2 by adaptive bisection (12 levels at most).

    Raises
    ------
    ZeroOnContour
        If the phase cannot be resolved or ``min |N| <= 1e-8`` on the circle.
    InteriorSingular, ExteriorSingular
        If the circle passes through an auxiliary eigenvalue.
    """
    center, radius = complex(circle[0]), float(circle[1])
    N = dtn_function(problem, contour, epsilon, interface, L, h, cutoff)
    record = []

    def traced(zs):
        vals = N(zs)
        record.extend(zip(np.atleast_1d(zs), vals))
        return vals

    pts = center + radius * np.exp(2j * np.pi * np.arange(samples) / samples)
    try:
        wind, used, min_abs = _phase_winding(traced, pts)
    except BoundaryZeroSuspected as exc:
        raise ZeroOnContour(str(exc)) from exc
    if min_abs <= MIN_ABS_N:
        raise ZeroOnContour(f"min |N| = {min_abs:.3g} on the circle")
    res = CountResult(center, radius, wind, used, min_abs)
    if return_samples:
        order = sorted(record, key=lambda p: np.angle(p[0] - center) % (2 * np.pi))
        return res, order
    return res
