"""Dense eigenvalues and contour-integral spectral projections.

``eig_dense`` has two backends.  The in-repo one is the textbook pipeline:
diagonal balancing, Householder reduction to Hessenberg form and single-shift
complex QR with Wilkinson shifts and deflation.  It is written in numpy and
is meant for matrices up to a few hundred rows.  Larger matrices go to
LAPACK (``scipy.linalg.schur``), which runs the same algorithm family in
compiled code.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import ContourTooClose, NearSingular, NoConvergence

AUTO_QR_LIMIT = 300
PIVOT_RATIO_MIN = 1e-14


@dataclass
class EigenResult:
    eigenvalues: np.ndarray
    residual_bound: float
    iterations: int
    backend: str = "qr"


@dataclass
class ProjectionResult:
    center: complex
    radius: float
    quadrature_points: int
    trace_value: complex
    rank: int
    idempotency_defect: float
    singular_values: np.ndarray | None = None


def _entries(matrix):
    return np.asarray(getattr(matrix, "entries", matrix))


def balance(A, max_sweeps=50):
    """Parlett-Reinsch diagonal scaling by powers of two; returns ``(B, d)`` with ``B = D^-1 A D``."""
    B = np.array(A, dtype=complex)
    n = B.shape[0]
    d = np.ones(n)
    for _ in range(max_sweeps):
        converged = True
        for i in range(n):
            c = np.sum(np.abs(B[:, i])) - abs(B[i, i])
            r = np.sum(np.abs(B[i, :])) - abs(B[i, i])
            if c == 0 or r == 0:
                continue
            f = 1.0
            s = c + r
            while c < r / 2:
                c *= 2; r /= 2; f *= 2
            while c >= r * 2:
                c /= 2; r *= 2; f /= 2
            if (c + r) < 0.95 * s:
                converged = False
                d[i] *= f
                B[i, :] /= f
                B[:, i] *= f
        if converged:
            break
    return B, d


def hessenberg(A):
    """Householder reduction ``A = Q H Q*``; returns ``(H, Q)``."""
    H = np.array(A, dtype=complex)
    n = H.shape[0]
    Q = np.eye(n, dtype=complex)
    for k in range(n - 2):
        x = H[k + 1:, k]
        alpha = np.linalg.norm(x)
        if alpha == 0:
            continue
        phase = x[0] / abs(x[0]) if x[0] != 0 else 1.0
        v = x.copy()
        v[0] += phase * alpha
        v /= np.linalg.norm(v)
        H[k + 1:, :] -= 2.0 * np.outer(v, v.conj() @ H[k + 1:, :])
        H[:, k + 1:] -= 2.0 * np.outer(H[:, k + 1:] @ v, v.conj())
        Q[:, k + 1:] -= 2.0 * np.outer(Q[:, k + 1:] @ v, v.conj())
        H[k + 2:, k] = 0.0
    return H, Q


def _givens(a, b):
    """``(c, s, r)`` with ``[[c, s], [-conj(s), c]] @ [a, b] = [r, 0]`` and real ``c``."""
    if b == 0:
        return 1.0, 0j, a
    if a == 0:
        return 0.0, np.conj(b) / abs(b), abs(b)
    na = abs(a)
    nrm = np.hypot(na, abs(b))
    c = na / nrm
    s = (a / na) * np.conj(b) / nrm
    return c, s, (a / na) * nrm


def _wilkinson(a, b, c, d):
    """Eigenvalue of ``[[a, b], [c, d]]`` closer to ``d``."""
    tr = a + d
    det = a * d - b * c
    disc = np.sqrt(tr * tr / 4 - det)
    l1, l2 = tr / 2 + disc, tr / 2 - disc
    return l1 if abs(l1 - d) < abs(l2 - d) else l2


def schur_qr(H, Q=None, max_iter=None):
    """Single-shift QR on an upper Hessenberg matrix.

    Returns ``(T, Q, iterations)`` with ``T`` upper triangular (up to the
    deflation tolerance) and ``H_in = Q T Q*`` when ``Q`` starts as the
    identity.
    """
    T = np.array(H, dtype=complex)
    n = T.shape[0]
    Q = np.eye(n, dtype=complex) if Q is None else np.array(Q, dtype=complex)
    max_iter = 40 * n if max_iter is None else max_iter
    eps = np.finfo(float).eps
    hi = n - 1
    its = 0
    since = 0
    while hi > 0:
        # find the active unreduced block [lo, hi]
        lo = hi
        while lo > 0:
            if abs(T[lo, lo - 1]) <= eps * (abs(T[lo, lo]) + abs(T[lo - 1, lo - 1])):
                T[lo, lo - 1] = 0.0
                break
            lo -= 1
        if lo == hi:
            hi -= 1
            since = 0
            continue
        if its >= max_iter:
            raise NoConvergence(f"QR failed to deflate after {its} iterations (n={n})")
        its += 1
        since += 1
        if since % 11 == 0:
            mu = T[hi, hi] + 0.75 * abs(T[hi, hi - 1])  # exceptional shift
        else:
            mu = _wilkinson(T[hi - 1, hi - 1], T[hi - 1, hi], T[hi, hi - 1], T[hi, hi])
        # implicit single-shift sweep on rows/cols lo..hi
        x, y = T[lo, lo] - mu, T[lo + 1, lo]
        for k in range(lo, hi):
            c, s, _ = _givens(x, y)
            G = np.array([[c, s], [-np.conj(s), c]])
            j0 = max(lo, k - 1)
            T[k:k + 2, j0:] = G @ T[k:k + 2, j0:]
            top = min(hi, k + 2) + 1
            T[:top, k:k + 2] = T[:top, k:k + 2] @ G.conj().T
            Q[:, k:k + 2] = Q[:, k:k + 2] @ G.conj().T
            if k < hi - 1:
                x, y = T[k + 1, k], T[k + 2, k]
    return np.triu(T), Q, its


def _eig_qr(A):
    B, d = balance(A)
    H, Q = hessenberg(B)
    T, Q, its = schur_qr(H, Q)
    nb = np.linalg.norm(B)
    back = np.linalg.norm(B - Q @ T @ Q.conj().T) / nb if nb > 0 else 0.0
    return EigenResult(np.diag(T).copy(), float(back), its, "qr")


def _eig_lapack(A):
    T, Z = sla.schur(A, output="complex", check_finite=False)
    na = np.linalg.norm(A)
    back = np.linalg.norm(A - Z @ T @ Z.conj().T) / na if na > 0 else 0.0
    return EigenResult(np.diag(T).copy(), float(back), 0, "lapack")


def eig_dense(matrix, method="auto"):
    """All eigenvalues of a dense complex matrix.

    Parameters
    ----------
    matrix : OperatorMatrix or array_like
    method : {"auto", "qr", "lapack"}
        ``"auto"`` uses the in-repo QR up to 300 rows and LAPACK above.

    Returns
    -------
    EigenResult
        ``residual_bound`` is the relative backward error: the Schur
        factorization residual ``||B - Q T Q*|| / ||B||`` (``B`` the
        balanced matrix for ``"qr"``, the input for ``"lapack"``).

    Raises
    ------
    NoConvergence
        If QR needs more than ``40 n`` iterations.
    """
    A = _entries(matrix).astype(complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("matrix must be square")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    n = A.shape[0]
    if n == 0:
        return EigenResult(np.zeros(0, dtype=complex), 0.0, 0, "qr")
    if method == "auto":
        method = "qr" if n <= AUTO_QR_LIMIT else "lapack"
    if method == "qr":
        return _eig_qr(A)
    if method == "lapack":
        return _eig_lapack(A)
    raise ValueError(f"unknown method {method!r}")


def eigenvalues(matrix, method="auto"):
    """Eigenvalues only.

    Above the QR limit this calls LAPACK without forming the Schur vectors,
    which is about twice as fast; no backward error is computed.
    """
    A = _entries(matrix).astype(complex)
    if method == "auto" and A.shape[0] > AUTO_QR_LIMIT:
        return sla.eigvals(A, check_finite=False)
    return eig_dense(A, method).eigenvalues


def _lu_shifted(A, z):
    n = A.shape[0]
    M = A - z * np.eye(n)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv = sla.lu_factor(M, check_finite=False)
    d = np.abs(np.diag(lu))
    if d.max() == 0 or d.min() / d.max() < PIVOT_RATIO_MIN:
        raise NearSingular(f"pivot ratio {d.min() / max(d.max(), 1e-300):.3g} at z={z}")
    return M, (lu, piv)


def resolvent_solve(matrix, z, rhs):
    """Solve ``(A - z I) x = b`` by LU with partial pivoting and one refinement step.

    Raises
    ------
    NearSingular
        If the smallest/largest pivot ratio is below ``1e-14``.
    """
    A = _entries(matrix).astype(complex)
    b = np.asarray(rhs, dtype=complex)
    M, fac = _lu_shifted(A, z)
    x = sla.lu_solve(fac, b, check_finite=False)
    x = x + sla.lu_solve(fac, b - M @ x, check_finite=False)
    return x


def _apply_projector(A, center, radius, M, X):
    out = np.zeros(X.shape, dtype=complex)
    for k in range(M):
        w = np.exp(2j * np.pi * (k + 0.5) / M)
        try:
            Y = resolvent_solve(A, center + radius * w, X)
        except NearSingular as exc:
            raise ContourTooClose(str(exc)) from exc
        # (1/2 pi i) (z - A)^{-1} dz with dz = i r w dphi and (z - A)^{-1} = -(A - z)^{-1}
        out -= Y * (radius * w / M)
    return out


def projection_rank(matrix, center, radius, quadrature_points=32, probes=40, seed=0):
    """Rank of the spectral projector for the eigenvalues inside a circle.

    The projector ``Pi = (1 / 2 pi i) \\oint (z - A)^{-1} dz`` is applied by the
    trapezoid rule on ``quadrature_points`` nodes to ``min(n, probes)``
    Gaussian probe vectors.  An orthonormal basis ``U`` of the (numerically
    nonzero) range of ``Pi V`` gives the compression ``S = U* Pi U``, whose
    singular values are 1 for exact eigen-directions and small for leakage
    from eigenvalues just outside the circle.  The rank counts singular
    values of ``S`` above 1/2; the trace is ``tr S`` and the idempotency
    defect is ``||Pi U - U||``.

    Raises
    ------
    ContourTooClose
        If the shifted matrix is numerically singular at a quadrature node.
    """
    A = _entries(matrix).astype(complex)
    n = A.shape[0]
    m = min(n, probes)
    rng = np.random.default_rng(seed)
    V = rng.standard_normal((n, m)) + 1j * rng.standard_normal((n, m))
    PV = _apply_projector(A, center, radius, quadrature_points, V)
    U, s, _ = np.linalg.svd(PV, full_matrices=False)
    keep = s > max(1e-8 * np.sqrt(n), 1e-8 * (s[0] if s.size else 0.0))
    U = U[:, keep]
    if U.shape[1] == 0:
        return ProjectionResult(complex(center), float(radius), int(quadrature_points), 0j, 0, 0.0,
                                np.zeros(0))
    PU = _apply_projector(A, center, radius, quadrature_points, U)
    S = U.conj().T @ PU
    sv = np.linalg.svd(S, compute_uv=False)
    rank = int(np.sum(sv > 0.5))
    defect = float(np.linalg.norm(PU - U, 2)) if rank == U.shape[1] else \
        float(np.linalg.norm(_apply_projector(A, center, radius, quadrature_points, PU) - PU, 2))
    return ProjectionResult(complex(center), float(radius), int(quadrature_points),
                            complex(np.trace(S)), rank, defect, sv)
