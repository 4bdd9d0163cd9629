"""Fourth-order finite-difference matrices.

All operators share the conservative staggered form

    (K u)_i = sum_m D[m, i] * w(t_m) * (D u)_m

where ``m`` runs over half-points and ``D`` is the fourth-order derivative
from nodes to half-points, ``(1, -27, 27, -1) / (24 h)``.  Each row couples
to at most three neighbours on either side.  Boundary values enter through
three ghost nodes per side, either by odd reflection about the boundary value
(keeps the matrix symmetric when the coefficients are) or by degree-5
polynomial extrapolation (used at artificial interfaces, where the solution is
not odd).

Discontinuities of a piecewise-constant potential are handled by jump
corrections: a row whose stencil straddles a jump is applied to the smooth
extension of the solution from the row's own side, which differs from the
true solution on the far side by the known polynomial
``[u''] d**2 / 2 + [u'''] d**3 / 6``.  This restores fourth-order-like
accuracy (third order in eigenvalues) at the cost of exact symmetry.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .contour import smoothstep7
from .errors import DomainTooSmall, GridTooCoarse, MatrixFormatError
from .model import FULL_LINE, HALF_LINE

STENCIL = np.array([1.0, -27.0, 27.0, -1.0]) / 24.0
MIN_POINTS_PER_UNIT = 8
CAPM_MAGIC = b"CAPM"
CAPM_VERSION = 1


@dataclass(frozen=True)
class Grid:
    t_min: float
    t_max: float
    n_points: int
    scheme: str = "FD4"

    def __post_init__(self):
        if self.n_points < 50:
            raise ValueError(f"n_points must be at least 50, got {self.n_points}")
        if not self.t_max > self.t_min:
            raise ValueError("t_max must exceed t_min")
        if self.scheme != "FD4":
            raise ValueError(f"unsupported scheme {self.scheme!r}")

    @property
    def h(self):
        return (self.t_max - self.t_min) / (self.n_points - 1)

    @property
    def nodes(self):
        return np.linspace(self.t_min, self.t_max, self.n_points)

    @property
    def interior(self):
        return self.nodes[1:-1]

    def refined(self, factor=2):
        return replace(self, n_points=factor * (self.n_points - 1) + 1)

    @classmethod
    def with_spacing(cls, t_min, t_max, h):
        n = int(round((t_max - t_min) / h)) + 1
        return cls(t_min, t_max, max(n, 50))


@dataclass(frozen=True)
class CutoffSpec:
    """``chi = 1`` for ``t <= r_inner``, ``0`` for ``t >= r_outer``."""

    r_inner: float
    r_outer: float
    order: int = 7

    def __post_init__(self):
        if not self.r_inner < self.r_outer:
            raise ValueError("r_inner must be smaller than r_outer")
        if self.order != 7:
            raise ValueError("only the 7th-order smoothstep is implemented")

    def check(self, problem):
        if not problem.R0 <= self.r_inner < self.r_outer <= problem.R1:
            raise ValueError(f"cutoff [{self.r_inner}, {self.r_outer}] not inside "
                             f"[R0, R1] = [{problem.R0}, {problem.R1}]")


def default_cutoff(problem):
    return CutoffSpec(problem.R0, problem.R1)


def cutoff_value(cutoff, t):
    """Cutoff ``chi(t)``; vectorized, symmetric in ``t``."""
    t = np.abs(np.asarray(t, dtype=float))
    x = (t - cutoff.r_inner) / (cutoff.r_outer - cutoff.r_inner)
    out = 1.0 - smoothstep7(x)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class MatrixMeta:
    kind: str
    epsilon: float = 0.0
    theta: float = 0.0
    problem: str = ""
    boundary: str = "dirichlet-dirichlet"
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        d = {"kind": self.kind, "epsilon": self.epsilon, "theta": self.theta,
             "problem": self.problem, "boundary": self.boundary}
        d.update(self.extra)
        return d


@dataclass
class OperatorMatrix:
    """Dense operator matrix on the interior nodes of ``grid``.

    ``left_coupling`` is the column multiplying the left boundary value; it
    is used to impose inhomogeneous Dirichlet data.
    """

    entries: np.ndarray
    grid: Grid
    meta: MatrixMeta
    left_coupling: np.ndarray | None = None

    @property
    def n(self):
        return self.entries.shape[0]

    @property
    def nodes(self):
        return self.grid.interior


def _lagrange_weights(nodes, x, deriv=0):
    """Weights ``w`` with ``sum w_k f(nodes_k) ~ f^(deriv)(x)``."""
    nodes = np.asarray(nodes, dtype=float)
    m = len(nodes)
    V = np.vander(nodes - x, m, increasing=True).T
    rhs = np.zeros(m)
    rhs[deriv] = float(np.prod(np.arange(1, deriv + 1)))
    return np.linalg.solve(V, rhs)


def _ghost_rows(n, side, mode):
    """Rows of the extension map for the three ghosts on ``side``.

    Returned as ``[(ghost_offset, {node_index: weight})]`` where the ghost sits
    at ``offset`` steps outside the boundary node.
    """
    rows = []
    if side == "left":
        b, inward = 0, 1
    else:
        b, inward = n - 1, -1
    if mode == "odd":
        for j in (1, 2, 3):
            rows.append((j, {b: 2.0, b + inward * j: -1.0}))
    else:
        base = np.arange(6)
        for j in (1, 2, 3):
            w = _lagrange_weights(base, -float(j))
            rows.append((j, {b + inward * int(k): float(wk) for k, wk in zip(base, w)}))
    return rows


def _stiffness(n, h, weights, left="odd", right="odd"):
    """Sparse ``(n x n)`` conservative stiffness ``D^T W D`` on all nodes.

    ``weights`` has ``n + 3`` entries: half-points ``t_{j+1/2}`` for
    ``j = -2 .. n``.  Rows for the boundary nodes are returned too; callers
    keep only the interior ones.
    """
    ne = n + 6
    rows, cols, vals = [], [], []
    for i in range(n):
        rows.append(i + 3); cols.append(i); vals.append(1.0)
    for side, mode in (("left", left), ("right", right)):
        for off, coeffs in _ghost_rows(n, side, mode):
            e = 3 - off if side == "left" else n - 1 + 3 + off
            for k, v in coeffs.items():
                rows.append(e); cols.append(k); vals.append(v)
    E = sp.csr_matrix((vals, (rows, cols)), shape=(ne, n))
    nh = n + 3  # half-points between extended nodes e and e+1, e = 1 .. n+3
    e0 = np.arange(1, n + 4)
    Dr = np.repeat(np.arange(nh), 4)
    Dc = (e0[:, None] + np.arange(-1, 3)[None, :]).ravel()
    Dv = np.tile(STENCIL / h, nh)
    D = sp.csr_matrix((Dv, (Dr, Dc)), shape=(nh, ne))
    K = D.T @ sp.diags(weights) @ D @ E
    return K.tocsr()[3:n + 3, :]


def _half_points(t, h):
    return np.concatenate([t[0] + h * (np.arange(-2, 0) + 0.5), t + 0.5 * h, [t[-1] + 1.5 * h]])


def _reflect(x, lo, hi, left, right):
    x = np.array(x, dtype=float)
    if left == "odd":
        x = np.where(x < lo, 2 * lo - x, x)
    if right == "odd":
        x = np.where(x > hi, 2 * hi - x, x)
    return x


def _assemble(t, weight_fn, row_scale, diag, left="odd", right="odd"):
    """Dense interior matrix and left-boundary coupling column."""
    n = len(t)
    h = t[1] - t[0]
    hp = _reflect(_half_points(t, h), t[0], t[-1], left, right)
    K = _stiffness(n, h, weight_fn(hp), left, right)
    K = K.toarray().astype(complex)
    full = row_scale[:, None] * K
    A = full[1:-1, 1:-1].copy()
    A[np.diag_indices_from(A)] += diag[1:-1]
    left_col = full[1:-1, 0].copy()
    return A, left_col, full


def _geometry(problem, contour, t):
    """Physical position x(t), metric weights and row scale on the contour."""
    at = np.abs(t)
    g, gp = contour.evaluate(at)
    x = np.where(t < 0, -g, g)
    return x, g, gp


def _jump_corrections(problem, t, full_rows, A):
    """Add the jump-polynomial corrections in place (rows/cols are interior)."""
    jumps = problem.potential.jumps()
    if not jumps:
        return
    h = t[1] - t[0]
    n = len(t)
    for xj, dc in jumps:
        if not t[0] + 4 * h < xj < t[-1] - 4 * h:
            continue
        tol = 1e-9 * h
        left = t <= xj + tol
        G = float(problem.metric(np.array([xj])).real[0])
        Gp = float(problem.metric_derivative(np.array([xj])).real[0])
        # interpolation of u and u' at the jump from five nodes on the left
        jl = int(np.nonzero(left)[0][-1])
        idx = np.arange(jl - 4, jl + 1)
        alpha = _lagrange_weights(t[idx], xj, 0)
        beta = _lagrange_weights(t[idx], xj, 1)
        d = t - xj
        p_u = dc / G * d**2 / 2 - 2 * Gp * dc / G**2 * d**3 / 6
        p_d = dc / G * d**3 / 6
        for i in range(max(1, jl - 3), min(n - 1, jl + 5)):
            nb = np.arange(max(0, i - 3), min(n, i + 4))
            far = nb[left[nb] != left[i]]
            if far.size == 0:
                continue
            sign = -1.0 if left[i] else 1.0
            ku = sign * np.dot(full_rows[i, far], p_u[far])
            kd = sign * np.dot(full_rows[i, far], p_d[far])
            A[i - 1, idx - 1] += ku * alpha + kd * beta


def _left_limit_potential(problem, t, c):
    h = t[1] - t[0]
    for xj, dc in problem.potential.jumps():
        on = np.abs(t - xj) < 1e-9 * h
        if on.any():
            c[on] = problem.potential.values(np.array([xj - 1e-6 * h]))[0]
    return c


def _check_resolution(problem, grid):
    if problem.potential.kind == "piecewise" and problem.potential.segments:
        if 1.0 / grid.h < MIN_POINTS_PER_UNIT:
            raise GridTooCoarse(f"{1.0 / grid.h:.3g} points per unit length over the "
                                f"potential support; need at least {MIN_POINTS_PER_UNIT}")


def assemble_scaled_operator(problem, contour, epsilon, cutoff, grid, jump_corrections=True):
    """Matrix of the complex-scaled operator with absorbing potential.

    Realizes ``-(1/g') d/dt((G(g)/g') du/dt) + c(g) u - i eps (1 - chi) g**2 u``
    with Dirichlet conditions at both ends of ``grid``.  On the half line the
    grid must start at 0; on the full line it must be symmetric, and the
    contour is applied to ``|t|``.

    Raises
    ------
    GridTooCoarse
        If the spacing gives fewer than 8 points per unit length over the
        potential support.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    _check_resolution(problem, grid)
    t = grid.nodes
    if problem.geometry == HALF_LINE and grid.t_min != 0:
        raise ValueError("half-line grids must start at t = 0")
    if problem.geometry == FULL_LINE and not np.isclose(grid.t_min, -grid.t_max):
        raise ValueError("full-line grids must be symmetric")
    if contour.theta > 0 and grid.t_max <= contour.T0:
        raise ValueError(f"grid end {grid.t_max} must exceed T0 = {contour.T0:.6g}")

    def weights(s):
        x, g, gp = _geometry(problem, contour, s)
        return problem.metric(x) / gp

    x, g, gp = _geometry(problem, contour, t)
    c = problem.potential_values(x).astype(complex)
    c = _left_limit_potential(problem, t, c)
    chi = cutoff_value(cutoff, t)
    diag = c - 1j * epsilon * (1.0 - chi) * g * g
    A, left_col, full = _assemble(t, weights, 1.0 / gp, diag)
    if jump_corrections:
        _jump_corrections(problem, t, full, A)
    meta = MatrixMeta("Scaled", float(epsilon), float(contour.theta), problem.name,
                      extra={"geometry": problem.geometry, "T0": contour.T0,
                             "r_inner": cutoff.r_inner, "r_outer": cutoff.r_outer})
    return OperatorMatrix(A, grid, meta, left_col)


def cap_diagonal(contour, cutoff, grid):
    """``(1 - chi) g**2`` on the interior nodes; the matrix is affine in eps along it."""
    t = grid.interior
    g, _ = contour.evaluate(np.abs(t))
    return (1.0 - cutoff_value(cutoff, t)) * g * g


def assemble_davies(epsilon, theta, grid):
    """Matrix of ``-exp(-2 i theta) d^2/dx^2 - i eps exp(2 i theta) x**2`` on ``[-L, L]``.

    Raises
    ------
    DomainTooSmall
        If ``eps**(1/4) * L < 8``.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    L = max(abs(grid.t_min), abs(grid.t_max))
    if epsilon**0.25 * L < 8:
        raise DomainTooSmall(f"eps^(1/4) * L = {epsilon**0.25 * L:.3g} < 8")
    t = grid.nodes
    scale = np.full(len(t), np.exp(-2j * theta))
    diag = -1j * epsilon * np.exp(2j * theta) * t * t
    A, left_col, _ = _assemble(t, lambda s: np.ones(len(s), dtype=complex), scale, diag)
    return OperatorMatrix(A, grid, MatrixMeta("Davies", float(epsilon), float(theta), "davies"), left_col)


def assemble_interior(problem, a, grid_or_h=0.01, jump_corrections=True):
    """Dirichlet reference operator on ``[0, a]`` (real coefficients, no absorption)."""
    if problem.geometry != HALF_LINE:
        raise ValueError("interior operator is defined for the half line")
    grid = grid_or_h if isinstance(grid_or_h, Grid) else Grid.with_spacing(0.0, a, grid_or_h)
    _check_resolution(problem, grid)
    t = grid.nodes
    c = _left_limit_potential(problem, t, problem.potential_values(t).astype(complex))
    A, left_col, full = _assemble(t, lambda s: problem.metric(s).astype(complex),
                                  np.ones(len(t), dtype=complex), c, "odd", "extrap")
    if jump_corrections:
        _jump_corrections(problem, t, full, A)
    meta = MatrixMeta("InteriorRef", 0.0, 0.0, problem.name, extra={"a": a})
    return OperatorMatrix(A, grid, meta, left_col)


def assemble_exterior(problem, contour, epsilon, cutoff, a, grid):
    """Scaled operator on ``[a, L]`` with Dirichlet ends; ``grid.t_min`` must be ``a``.

    The left ghosts are extrapolated, so ``left_coupling`` carries the effect
    of a nonzero boundary value ``u(a)``.
    """
    if not np.isclose(grid.t_min, a):
        raise ValueError("exterior grid must start at the interface")
    t = grid.nodes

    def weights(s):
        x, g, gp = _geometry(problem, contour, s)
        return problem.metric(x) / gp

    x, g, gp = _geometry(problem, contour, t)
    c = problem.potential_values(x).astype(complex)
    chi = cutoff_value(cutoff, t)
    diag = c - 1j * epsilon * (1.0 - chi) * g * g
    A, left_col, _ = _assemble(t, weights, 1.0 / gp, diag, "extrap", "odd")
    meta = MatrixMeta("ExteriorRef", float(epsilon), float(contour.theta), problem.name,
                      boundary="dirichlet(a)-dirichlet(L)", extra={"a": a})
    return OperatorMatrix(A, grid, meta, left_col)


def max_band_offset(matrix, tol=0.0):
    """Largest ``|i - j|`` with a nonzero entry."""
    i, j = np.nonzero(np.abs(matrix.entries) > tol)
    return int(np.max(np.abs(i - j))) if i.size else 0


def write_capm(path, matrix):
    """Write ``matrix`` in the CAPM binary format.

    Layout: ``b"CAPM"``, version (u32), n (u64), metadata length (u32) and
    UTF-8 JSON, then ``n * n`` row-major complex entries as little-endian
    float64 ``(re, im)`` pairs.
    """
    meta = dict(matrix.meta.to_dict())
    meta["grid"] = {"t_min": matrix.grid.t_min, "t_max": matrix.grid.t_max,
                    "n_points": matrix.grid.n_points, "scheme": matrix.grid.scheme}
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    n = matrix.n
    with open(path, "wb") as fh:
        fh.write(CAPM_MAGIC)
        fh.write(struct.pack("<IQI", CAPM_VERSION, n, len(blob)))
        fh.write(blob)
        fh.write(np.ascontiguousarray(matrix.entries, dtype="<c16").tobytes())


def read_capm(path):
    """Read a CAPM file; returns ``(entries, metadata dict)``."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != CAPM_MAGIC:
        raise MatrixFormatError("bad magic")
    try:
        version, n, mlen = struct.unpack_from("<IQI", data, 4)
    except struct.error as exc:
        raise MatrixFormatError("truncated header") from exc
    if version != CAPM_VERSION:
        raise MatrixFormatError(f"unsupported version {version}")
    off = 4 + struct.calcsize("<IQI")
    try:
        meta = json.loads(data[off:off + mlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MatrixFormatError("bad metadata") from exc
    body = data[off + mlen:]
    if len(body) != 16 * n * n:
        raise MatrixFormatError(f"expected {16 * n * n} payload bytes, found {len(body)}")
    return np.frombuffer(body, dtype="<c16").reshape(n, n).copy(), meta
