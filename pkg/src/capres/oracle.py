"""Exact resonances of half-line piecewise-constant potentials.

The solution with Dirichlet data ``(u, u') = (0, 1)`` at the origin is carried
across the potential support ``[0, b]`` by exact transfer matrices.  Beyond
``b`` the solution is outgoing iff ``u'(b) = i k u(b)``, so resonances are the
zeros of

    W(k) = u'(b) - i k u(b)

in ``Im k < 0``, with energy ``z = k**2``.  ``W`` is entire in ``k``; zeros are
counted with the argument principle on rectangles and polished by Newton's
method.  Nothing here shares code with the finite-difference path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BoundaryZeroSuspected, NewtonDiverged
from .model import HALF_LINE

MAX_LEVELS = 12


@dataclass(frozen=True)
class Rectangle:
    re_lo: float
    re_hi: float
    im_lo: float
    im_hi: float

    def corners(self):
        return (complex(self.re_lo, self.im_lo), complex(self.re_hi, self.im_lo),
                complex(self.re_hi, self.im_hi), complex(self.re_lo, self.im_hi))

    def contains(self, k):
        return self.re_lo < k.real < self.re_hi and self.im_lo < k.imag < self.im_hi

    @property
    def diameter(self):
        return float(np.hypot(self.re_hi - self.re_lo, self.im_hi - self.im_lo))


@dataclass(frozen=True)
class ZeroCount:
    rectangle: Rectangle
    count: int
    winding_samples: int
    refined: bool = True


@dataclass(frozen=True)
class ResonanceEntry:
    """A located resonance or eigenvalue.

    ``source`` is one of ``"oracle"``, ``"scaling"``, ``"cap-extrapolated"``,
    ``"dtn-count"``.
    """

    z: complex
    multiplicity: int = 1
    residual: float = 0.0
    source: str = "oracle"
    k: complex | None = None


def _layers(problem):
    """(length, potential value) pairs covering ``[0, b]``."""
    pot = problem.potential
    if pot.kind not in ("zero", "piecewise"):
        raise ValueError("transfer matrices need a zero or piecewise-constant potential")
    if not problem.is_flat:
        raise ValueError("transfer matrices need a flat metric")
    layers = []
    pos = 0.0
    for s in pot.segments:
        if s.x_lo > pos:
            layers.append((s.x_lo - pos, 0.0))
        layers.append((s.x_hi - s.x_lo, s.value))
        pos = s.x_hi
    return layers


def _propagator(k, length, value):
    """Exact 2x2 propagator of ``u'' = (V - k**2) u`` over ``length``; broadcasts in k."""
    k = np.asarray(k, dtype=complex)
    kappa2 = k * k - value
    kappa = np.sqrt(kappa2)
    # cos, sin(x)/x and x sin(x) are even in kappa, so the branch is irrelevant
    c = np.cos(kappa * length)
    s_over = length * np.sinc(kappa * length / np.pi)
    m = np.empty(k.shape + (2, 2), dtype=complex)
    m[..., 0, 0] = c
    m[..., 0, 1] = s_over
    m[..., 1, 0] = -kappa2 * s_over
    m[..., 1, 1] = c
    return m


def transfer_matrix(problem, k, length=None):
    """Transfer matrix acting on ``(u, u')`` from 0 to the end of the support.

    With ``length`` given, the free propagator over that length is returned
    instead (useful for checks).
    """
    k = np.asarray(k, dtype=complex)
    if length is not None:
        return _propagator(k, length, 0.0)
    m = np.broadcast_to(np.eye(2, dtype=complex), k.shape + (2, 2)).copy()
    for ell, v in _layers(problem):
        m = _propagator(k, ell, v) @ m
    return m


def matching_point(problem):
    """Right end ``b`` of the potential support (R0 when there is none)."""
    b = problem.potential.support_end()
    return b if b > 0 else problem.R0


def outgoing_condition(problem, k):
    """``W(k) = u'(b) - i k u(b)`` for the solution with ``u(0)=0, u'(0)=1``."""
    if problem.geometry != HALF_LINE:
        raise ValueError("outgoing condition is defined for the half line only")
    k = np.asarray(k, dtype=complex)
    m = transfer_matrix(problem, k)
    b = matching_point(problem)
    layers_len = sum(ell for ell, _ in _layers(problem))
    if layers_len < b:
        m = _propagator(k, b - layers_len, 0.0) @ m
    u, du = m[..., 0, 1], m[..., 1, 1]
    return du - 1j * k * u


def _phase_winding(func, points, max_levels=MAX_LEVELS):
    """Winding number of ``func`` along the closed polyline ``points``.

    Segments whose phase increment reaches pi/2 are bisected until every
    increment is below pi/2.  Returns ``(winding, samples, min_abs)``.
    """
    pts = np.asarray(points, dtype=complex)
    if pts[0] != pts[-1]:
        pts = np.append(pts, pts[0])
    vals = func(pts)
    for _ in range(max_levels + 1):
        if np.any(vals == 0) or not np.all(np.isfinite(vals)):
            raise BoundaryZeroSuspected("function vanished or blew up on the contour")
        dphi = np.angle(vals[1:] / vals[:-1])
        bad = np.abs(dphi) >= np.pi / 2
        if not bad.any():
            wind = dphi.sum() / (2 * np.pi)
            return int(np.rint(wind)), len(pts) - 1, float(np.abs(vals).min())
        idx = np.nonzero(bad)[0]
        mids = 0.5 * (pts[idx] + pts[idx + 1])
        mvals = func(mids)
        pts = np.insert(pts, idx + 1, mids)
        vals = np.insert(vals, idx + 1, mvals)
    raise BoundaryZeroSuspected(f"phase unresolved after {max_levels} refinement levels")


def _rectangle_path(rect, samples):
    c = rect.corners()
    w, h = rect.re_hi - rect.re_lo, rect.im_hi - rect.im_lo
    per = 2 * (w + h)
    edges = []
    for a, b, length in ((c[0], c[1], w), (c[1], c[2], h), (c[2], c[3], w), (c[3], c[0], h)):
        m = max(4, int(np.ceil(samples * length / per)))
        edges.append(a + (b - a) * np.arange(m) / m)
    return np.concatenate(edges + [np.array([c[0]])])


def count_zeros(problem, rect, samples=4096):
    """Number of zeros of ``W`` inside ``rect`` (argument principle).

    If the phase cannot be resolved the rectangle is enlarged by a tiny
    relative amount once and the count retried.
    """
    func = lambda k: outgoing_condition(problem, k)
    try:
        n, used, _ = _phase_winding(func, _rectangle_path(rect, samples))
        return ZeroCount(rect, n, used, True)
    except BoundaryZeroSuspected:
        d = 1e-7 * max(1.0, rect.diameter)
        bumped = Rectangle(rect.re_lo - d, rect.re_hi + 1.3 * d, rect.im_lo - 0.7 * d, rect.im_hi)
        n, used, _ = _phase_winding(func, _rectangle_path(bumped, samples))
        return ZeroCount(bumped, n, used, True)


def winding_on_circle(func, center, radius, samples=64):
    pts = center + radius * np.exp(2j * np.pi * np.arange(samples) / samples)
    return _phase_winding(func, pts)


def refine_zero(problem, k_seed, tol=1e-12, max_iter=100):
    """Newton iteration on ``W`` from ``k_seed``.

    Returns ``(k, multiplicity, |W(k)|)``.  The derivative is a central
    difference with step ``1e-7 * (1 + |k|)``; the multiplicity is the
    winding number of ``W`` on the circle of radius ``1e-4`` about the root.
    """
    k = complex(k_seed)
    W = lambda q: complex(outgoing_condition(problem, np.array([q]))[0])
    for _ in range(max_iter):
        f = W(k)
        if f == 0:
            break
        step = 1e-7 * (1 + abs(k))
        df = (W(k + step) - W(k - step)) / (2 * step)
        if df == 0 or not np.isfinite(df):
            raise NewtonDiverged(f"vanishing derivative at k={k}")
        dk = f / df
        k -= dk
        if abs(dk) < tol:
            break
    else:
        raise NewtonDiverged(f"no convergence from seed {k_seed} after {max_iter} iterations")
    mult, _, _ = winding_on_circle(lambda q: outgoing_condition(problem, q), k, 1e-4)
    return k, mult, abs(W(k))


def z_window_to_k_rect(window, pad=1e-3):
    """Bounding rectangle in the k-plane of ``sqrt`` of a z-plane window.

    ``window`` is ``(re_lo, re_hi, im_lo, im_hi)`` with ``im_hi <= 0``; the
    upper edge is kept just below the real k axis, where ``W`` has no zeros.
    """
    re_lo, re_hi, im_lo, im_hi = window
    t = np.linspace(0, 1, 400)
    edge = np.concatenate([re_lo + (re_hi - re_lo) * t + 1j * im_lo,
                           re_hi + 1j * (im_lo + (im_hi - im_lo) * t),
                           re_lo + (re_hi - re_lo) * t + 1j * im_hi,
                           re_lo + 1j * (im_lo + (im_hi - im_lo) * t)])
    ks = -np.sqrt(-edge + 0j) * 1j  # sqrt with Re k >= 0 for Im z <= 0
    ks = np.where(ks.real < 0, -ks, ks)
    return Rectangle(max(ks.real.min() - pad, 1e-3), ks.real.max() + pad,
                     ks.imag.min() - pad, -1e-12)


def find_resonances(problem, window, samples=2048, min_size=0.05, max_depth=14):
    """All resonances with ``z = k**2`` inside the z-plane ``window``.

    The covering k-rectangle is bisected recursively until each piece holds
    at most one zero (or is small), then every piece's zero is Newton
    polished.  Returns a list of ResonanceEntry sorted by ``Re z``.
    """
    re_lo, re_hi, im_lo, im_hi = window
    found = []

    def split(rect):
        if rect.re_hi - rect.re_lo >= rect.im_hi - rect.im_lo:
            m = rect.re_lo + (0.5 + 0.0137) * (rect.re_hi - rect.re_lo)
            return [Rectangle(rect.re_lo, m, rect.im_lo, rect.im_hi),
                    Rectangle(m, rect.re_hi, rect.im_lo, rect.im_hi)]
        m = rect.im_lo + (0.5 - 0.0113) * (rect.im_hi - rect.im_lo)
        return [Rectangle(rect.re_lo, rect.re_hi, rect.im_lo, m),
                Rectangle(rect.re_lo, rect.re_hi, m, rect.im_hi)]

    def visit(rect, depth):
        n = count_zeros(problem, rect, samples).count
        if n == 0:
            return
        if (n == 1 and rect.diameter <= 4 * min_size) or depth >= max_depth or rect.diameter < 1e-6:
            seed = complex(0.5 * (rect.re_lo + rect.re_hi), 0.5 * (rect.im_lo + rect.im_hi))
            try:
                k, mult, res = refine_zero(problem, seed)
            except NewtonDiverged:
                k = None
            if k is not None and rect.contains(k):
                found.append((k, mult, res))
                return
            if depth >= max_depth:
                raise NewtonDiverged(f"could not isolate zero in {rect}")
        for sub in split(rect):
            visit(sub, depth + 1)

    visit(z_window_to_k_rect(window), 0)
    out = []
    for k, mult, res in found:
        z = k * k
        if re_lo <= z.real <= re_hi and im_lo <= z.imag <= im_hi:
            out.append(ResonanceEntry(z, mult, res, "oracle", k))
    return sorted(out, key=lambda e: (e.z.real, e.z.imag))
