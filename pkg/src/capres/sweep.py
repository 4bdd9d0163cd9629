"""Absorbing-potential sweeps: eigenvalue trajectories as the strength goes to 0.

For each strength ``eps`` of a decreasing geometric schedule the scaled
operator with absorption ``-i eps (1 - chi) g**2`` is assembled and all its
eigenvalues computed.  Eigenvalues inside a window are linked across
consecutive strengths into trajectories, which are then classified:

* ``Converging``: reaches the smallest strength with at least four points,
  step sizes shrinking over the last three steps, and a step-size exponent
  above 0.65;
* ``Branch``: step-size exponent in ``[0.35, 0.65]``, the square-root
  scaling of the string of eigenvalues the absorbing potential creates along
  ``arg z = -pi/4``;
* ``Truncated``: anything else (too short, never reaching the smallest
  strength, or erratic).

Without complex scaling (``theta = 0``) an outgoing wave is only damped
inside the absorbing region, so the truncation length grows as
``eps**(-1/3)``: the damping exponent ``eps L**3 / (3 k)`` must stay large.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .contour import DEFAULT_ALPHA0, build_contour
from .discretize import Grid, assemble_scaled_operator, default_cutoff
from .eigen import eigenvalues
from .errors import FitUnstable, PairingFailed
from .model import HALF_LINE, THETA_MAX

CONVERGING = "Converging"
BRANCH = "Branch"
TRUNCATED = "Truncated"
BRANCH_RANGE = (0.35, 0.65)
MIN_CONVERGING_EXPONENT = 0.65
CROSSING_FRACTION = 0.1


def geometric_schedule(eps_max=1e-1, eps_min=1e-5, steps=9):
    """Decreasing geometric list from ``eps_max`` to ``eps_min`` (``steps`` values)."""
    return list(np.geomspace(eps_max, eps_min, steps))


@dataclass(frozen=True)
class SweepConfig:
    """Sweep parameters.

    Attributes
    ----------
    window : tuple
        ``(re_lo, re_hi, im_lo, im_hi)`` in the energy plane.
    epsilon_schedule : list of float
        Strictly decreasing absorption strengths.
    delta : float
        Disk radius for the containment/count checks.
    matching_radius : float
        Largest allowed move between consecutive strengths.
    theta, alpha0 : float
        Scaling angle and contour spread (``theta = 0``: no scaling).
    h : float
        Grid spacing.
    L_min, absorb_constant : float
        Truncation ``L(eps) = max(L_min, (absorb_constant / eps)**(1/3))``.
    """

    window: tuple = (2.0, 9.0, -1.5, 0.0)
    epsilon_schedule: tuple = tuple(geometric_schedule())
    delta: float = 0.05
    matching_radius: float = 0.02
    theta: float = 0.0
    alpha0: float = DEFAULT_ALPHA0
    h: float = 0.05
    L_min: float = 20.0
    absorb_constant: float = 125.0

    def validate(self, theta0=THETA_MAX):
        eps = np.asarray(self.epsilon_schedule, dtype=float)
        if eps.size < 2 or np.any(np.diff(eps) >= 0) or np.any(eps <= 0):
            raise ValueError("epsilon_schedule must be positive and strictly decreasing")
        re_lo, re_hi, im_lo, im_hi = self.window
        if not (re_lo < re_hi and im_lo < im_hi):
            raise ValueError("empty window")
        corners = np.array([complex(r, i) for r in (re_lo, re_hi) for i in (im_lo, im_hi)])
        corners = corners[corners != 0]
        args = np.angle(corners)
        if np.any(args <= -2 * theta0) or np.any(args >= 1.5 * np.pi + 2 * theta0):
            raise ValueError(f"window leaves the sector -2 theta0 < arg z < 3 pi/2 + 2 theta0 "
                             f"(theta0={theta0:.6g})")
        if self.matching_radius <= 0 or self.delta <= 0 or self.h <= 0:
            raise ValueError("matching_radius, delta and h must be positive")

    def truncation(self, epsilon, T0=0.0):
        L = max(self.L_min, (self.absorb_constant / epsilon) ** (1.0 / 3.0), T0 + 10.0)
        return float(np.ceil(L / self.h) * self.h)


def in_window(z, window):
    z = np.asarray(z)
    re_lo, re_hi, im_lo, im_hi = window
    return (z.real >= re_lo) & (z.real <= re_hi) & (z.imag >= im_lo) & (z.imag < im_hi)


@dataclass
class Trajectory:
    points: list = field(default_factory=list)  # (epsilon, z, residual)
    status: str = TRUNCATED
    extrapolated_limit: complex | None = None
    fit_exponent: float | None = None
    fit_residual: float | None = None
    displacement_exponent: float | None = None
    crossing: bool = False

    @property
    def epsilons(self):
        return np.array([p[0] for p in self.points])

    @property
    def values(self):
        return np.array([p[1] for p in self.points])

    @property
    def last(self):
        return self.points[-1][1]

    def steps(self):
        return np.abs(np.diff(self.values))


def _crossing_pairs(prev, cur, pairs):
    """Flag matches that are within 10% of their swapped alternative."""
    flags = set()
    for a in range(len(pairs)):
        for b in range(a + 1, len(pairs)):
            (i, j), (k, m) = pairs[a], pairs[b]
            chosen = abs(prev[i] - cur[j]) + abs(prev[k] - cur[m])
            swapped = abs(prev[i] - cur[m]) + abs(prev[k] - cur[j])
            if swapped <= (1 + CROSSING_FRACTION) * chosen:
                flags.update((a, b))
    return flags


def _match_levels(prev, cur, radius):
    """Greedy nearest pairs under ``radius`` followed by pairwise swap improvement."""
    cand = []
    for i, p in enumerate(prev):
        d = np.abs(cur - p)
        for j in np.nonzero(d <= radius)[0]:
            cand.append((d[j], p.real, p.imag, cur[j].real, cur[j].imag, i, int(j)))
    cand.sort()
    used_i, used_j, pairs = set(), set(), []
    for *_, i, j in cand:
        if i in used_i or j in used_j:
            continue
        used_i.add(i); used_j.add(j); pairs.append((i, j))
    improved = True
    while improved:
        improved = False
        for a in range(len(pairs)):
            for b in range(a + 1, len(pairs)):
                (i, j), (k, m) = pairs[a], pairs[b]
                now = abs(prev[i] - cur[j]) + abs(prev[k] - cur[m])
                alt = abs(prev[i] - cur[m]) + abs(prev[k] - cur[j])
                if alt < now - 1e-15 and abs(prev[i] - cur[m]) <= radius and abs(prev[k] - cur[j]) <= radius:
                    pairs[a], pairs[b] = (i, m), (k, j)
                    improved = True
    return pairs


def match_trajectories(per_epsilon, epsilons=None, matching_radius=0.02, residuals=None):
    """Link eigenvalue lists ordered by decreasing strength into trajectories.

    Matching between consecutive levels is greedy by distance (ties broken by
    ``(Re, Im)`` order), restricted to ``matching_radius``, then improved by
    pairwise swaps that lower the total displacement.  Matches within 10% of
    their swapped alternative are flagged as crossings.  Unmatched
    eigenvalues end or start trajectories.  Trajectories are returned
    unclassified (status ``Truncated``); see :func:`classify`.
    """
    levels = [np.sort_complex(np.asarray(v, dtype=complex)) for v in per_epsilon]
    if epsilons is None:
        epsilons = list(range(len(levels), 0, -1))
    residuals = [0.0] * len(levels) if residuals is None else residuals
    open_ = {}
    done = []
    for lvl, vals in enumerate(levels):
        eps = float(epsilons[lvl])
        if lvl == 0:
            open_ = {j: Trajectory([(eps, complex(z), residuals[lvl])]) for j, z in enumerate(vals)}
            continue
        prev = levels[lvl - 1]
        pairs = _match_levels(prev, vals, matching_radius)
        flags = _crossing_pairs(prev, vals, pairs)
        new_open = {}
        for idx, (i, j) in enumerate(pairs):
            tr = open_.pop(i)
            tr.points.append((eps, complex(vals[j]), residuals[lvl]))
            tr.crossing |= idx in flags
            new_open[j] = tr
        done.extend(open_.values())
        for j, z in enumerate(vals):
            if j not in new_open:
                new_open[j] = Trajectory([(eps, complex(z), residuals[lvl])])
        open_ = new_open
    done.extend(open_.values())
    done.sort(key=lambda t: (t.points[0][0] * -1, t.points[0][1].real, t.points[0][1].imag))
    return done


def displacement_exponent(trajectory):
    """Least-squares slope of ``log |z_{i+1} - z_i|`` against ``log eps_i``."""
    eps = trajectory.epsilons
    steps = trajectory.steps()
    good = steps > 0
    if good.sum() < 2:
        return None
    x = np.log(eps[:-1][good])
    y = np.log(steps[good])
    return float(np.polyfit(x, y, 1)[0])


def _triple_exponents(eps, z):
    out = []
    for i in range(len(z) - 2):
        s1, s2 = abs(z[i + 1] - z[i]), abs(z[i + 2] - z[i + 1])
        if s1 == 0 or s2 == 0:
            continue
        # steps between geometric levels scale like eps**p
        out.append(np.log(s1 / s2) / np.log(eps[i] / eps[i + 1]))
    return np.array(out)


def extrapolate(trajectory, tail=4):
    """Fit ``z(eps) = z0 + c eps**p`` to the final ``tail`` points.

    The exponent is the slope of the step sizes against ``eps``, which is
    exact for a pure power law on a geometric schedule; ``z0`` and ``c`` then
    solve a linear least-squares problem.  Returns ``(z0, p, fit_residual)``
    with the residual the largest misfit of the final points.

    Raises
    ------
    FitUnstable
        If exponents from consecutive point triples differ by more than 0.5.
    """
    if len(trajectory.points) < tail:
        raise ValueError(f"need at least {tail} points")
    eps = trajectory.epsilons[-tail:]
    z = trajectory.values[-tail:]
    trip = _triple_exponents(eps, z)
    if trip.size and trip.max() - trip.min() > 0.5:
        raise FitUnstable(f"triple exponents {np.round(trip, 3).tolist()} spread more than 0.5")
    sub = Trajectory([(e, v, 0.0) for e, v in zip(eps, z)])
    p = displacement_exponent(sub)
    if p is None or not np.isfinite(p) or p <= 0:
        z0 = complex(z[-1])
        return z0, float("nan"), float(np.max(np.abs(z - z0)))
    M = np.stack([np.ones(len(eps)), eps**p], axis=1).astype(complex)
    coef, *_ = np.linalg.lstsq(M, z, rcond=None)
    resid = float(np.max(np.abs(M @ coef - z)))
    return complex(coef[0]), float(p), resid


def classify(trajectory, smallest_epsilon):
    """Set status, exponents and (for converging paths) the extrapolated limit."""
    t = trajectory
    t.displacement_exponent = displacement_exponent(t)
    reaches = np.isclose(t.points[-1][0], smallest_epsilon, rtol=1e-12)
    p = t.displacement_exponent
    if p is not None and BRANCH_RANGE[0] <= p <= BRANCH_RANGE[1]:
        t.status = BRANCH
    elif reaches and len(t.points) >= 4 and p is not None and p > MIN_CONVERGING_EXPONENT:
        s = t.steps()[-3:]
        t.status = CONVERGING if np.all(np.diff(s) < 0) else TRUNCATED
    else:
        t.status = TRUNCATED
    if t.status == CONVERGING:
        try:
            t.extrapolated_limit, t.fit_exponent, t.fit_residual = extrapolate(t)
        except FitUnstable:
            t.status = TRUNCATED
    return t


@dataclass
class SweepResult:
    config: SweepConfig
    epsilons: list
    spectra: list  # full eigenvalue arrays per epsilon
    lengths: list
    sizes: list
    trajectories: list
    backward_errors: list

    def window_values(self, window=None):
        window = self.config.window if window is None else window
        return [s[in_window(s, window)] for s in self.spectra]

    def retrack(self, window, matching_radius):
        """Trajectories for another window from the stored spectra."""
        trs = match_trajectories(self.window_values(window), self.epsilons, matching_radius,
                                 self.backward_errors)
        return [classify(t, self.epsilons[-1]) for t in trs]

    def converging(self):
        return [t for t in self.trajectories if t.status == CONVERGING]


def sweep_operator(problem, epsilon, config, cutoff=None, contour=None):
    """Assemble the absorbing operator at one strength on the sweep's grid."""
    cutoff = default_cutoff(problem) if cutoff is None else cutoff
    contour = build_contour(config.theta, problem.R1, config.alpha0) if contour is None else contour
    L = config.truncation(epsilon, contour.T0 if config.theta > 0 else 0.0)
    if problem.geometry == HALF_LINE:
        grid = Grid.with_spacing(0.0, L, config.h)
    else:
        n = int(round(2 * L / config.h)) + 1
        grid = Grid(-L, L, n)
    return assemble_scaled_operator(problem, contour, epsilon, cutoff, grid)


def cap_sweep(problem, config, cutoff=None, solver=eigenvalues, progress=None):
    """Eigenvalues over the strength schedule and the window's classified trajectories.

    ``solver`` maps an OperatorMatrix to its eigenvalues.  The backward
    error recorded per strength is the a-priori bound ``n * machine eps`` of
    a backward-stable dense eigensolver.
    """
    config.validate()
    cutoff = default_cutoff(problem) if cutoff is None else cutoff
    contour = build_contour(config.theta, problem.R1, config.alpha0)
    spectra, lengths, sizes, backs = [], [], [], []
    for eps in config.epsilon_schedule:
        try:
            M = sweep_operator(problem, eps, config, cutoff, contour)
            ev = np.asarray(solver(M))
        except Exception as exc:  # annotate with the strength that failed
            exc.args = (f"[epsilon={eps:.6g}] " + (str(exc.args[0]) if exc.args else ""),) + exc.args[1:]
            raise
        spectra.append(ev)
        lengths.append(M.grid.t_max)
        sizes.append(M.n)
        backs.append(M.n * np.finfo(float).eps)
        if progress:
            progress(eps, M.n)
    res = SweepResult(config, list(config.epsilon_schedule), spectra, lengths, sizes, [], backs)
    res.trajectories = res.retrack(config.window, config.matching_radius)
    return res


def string_trajectories(result, count=3, angle_tol=0.3):
    """Trajectories of the lowest ``count`` eigenvalues near the ``arg z = -pi/4`` ray.

    String eigenvalues move by a multiple of their own spacing between
    strengths, so they are linked by rank in modulus instead of by distance.
    """
    trs = [Trajectory() for _ in range(count)]
    for eps, spec, back in zip(result.epsilons, result.spectra, result.backward_errors):
        near = spec[np.abs(np.angle(spec) + np.pi / 4) < angle_tol]
        near = near[np.argsort(np.abs(near))][:count]
        for t, z in zip(trs, near):
            t.points.append((eps, complex(z), back))
    return [classify(t, result.epsilons[-1]) for t in trs if t.points]


def optimal_pairing(a, b):
    """Minimum-cost perfect pairing; returns the pair distances."""
    a, b = np.asarray(a), np.asarray(b)
    if len(a) != len(b):
        raise PairingFailed(f"eigenvalue counts differ: {len(a)} vs {len(b)}")
    if len(a) == 0:
        return np.zeros(0)
    C = np.abs(a[:, None] - b[None, :])
    i, j = linear_sum_assignment(C)
    return C[i, j]


def theta_invariance_check(problem, epsilon, theta1, theta2, window, grid, cutoff=None, alpha0=0.5):
    """Largest distance between optimally paired window eigenvalues at two angles.

    Returns ``(max_discrepancy, count)``.

    Raises
    ------
    PairingFailed
        If the window holds different numbers of eigenvalues at the two angles.
    """
    cutoff = default_cutoff(problem) if cutoff is None else cutoff
    vals = []
    for th in (theta1, theta2):
        c = build_contour(th, problem.R1, alpha0)
        ev = eigenvalues(assemble_scaled_operator(problem, c, epsilon, cutoff, grid))
        vals.append(ev[in_window(ev, window)])
    d = optimal_pairing(*vals)
    return (float(d.max()) if d.size else 0.0), len(vals[0])


@dataclass
class VerificationReport:
    passed: bool
    checks: list  # (name, passed, detail)
    flags: list = field(default_factory=list)

    def to_dict(self):
        return {"passed": self.passed, "flags": self.flags,
                "checks": [{"name": n, "passed": bool(ok), "detail": d} for n, ok, d in self.checks]}


def default_delta(resonances, window=None):
    """Half the smallest pairwise distance of the resonances, at least 0.01."""
    z = np.asarray([getattr(r, "z", r) for r in resonances])
    if z.size < 2:
        return 0.05
    d = np.abs(z[:, None] - z[None, :])
    d[np.diag_indices_from(d)] = np.inf
    return max(0.5 * float(d.min()), 1e-2)


def verify_convergence(trajectories, oracle_resonances, delta, retained=None):
    """Check containment, counts and monotone approach at the smallest strength.

    Parameters
    ----------
    trajectories : list of Trajectory
        Classified trajectories of the window.
    oracle_resonances : list
        Reference resonances (``ResonanceEntry`` or complex); multiplicity 1
        is assumed for plain complex values.
    delta : float
    retained : array_like, optional
        Eigenvalues at the smallest strength that survived spurious
        filtering; defaults to the final points of converging trajectories.
    """
    refs = [(complex(getattr(r, "z", r)), int(getattr(r, "multiplicity", 1))) for r in oracle_resonances]
    conv = [t for t in trajectories if t.status == CONVERGING]
    checks, flags = [], []
    if len(refs) > 1:
        zs = np.array([z for z, _ in refs])
        d = np.abs(zs[:, None] - zs[None, :])
        d[np.diag_indices_from(d)] = np.inf
        if d.min() < 2 * delta:
            flags.append("AmbiguousDisks")
            checks.append(("disks disjoint", False, f"min separation {d.min():.3g} < 2 delta = {2 * delta:.3g}"))
    final = np.array([t.last for t in conv]) if retained is None else np.asarray(retained)
    outside = [z for z in final if not any(abs(z - r) < delta for r, _ in refs)]
    checks.append(("containment", not outside,
                   "" if not outside else f"{len(outside)} eigenvalue(s) outside all disks, e.g. {outside[0]:.6g}"))
    for r, m in refs:
        cnt = int(sum(abs(z - r) < delta for z in final))
        checks.append((f"count at {r:.6g}", cnt == m, f"count={cnt}, multiplicity={m}"))
    for k, t in enumerate(conv):
        ref = min(refs, key=lambda rm: abs(t.last - rm[0]))[0] if refs else t.extrapolated_limit
        dist = np.abs(t.values[-4:] - ref)
        ok = bool(np.all(np.diff(dist) <= 0))
        checks.append((f"trajectory {k} monotone", ok, f"distances {dist.tolist()}"))
    return VerificationReport(all(ok for _, ok, _ in checks), checks, flags)


def filter_spurious(trajectories, refined_positions=None, smallest_epsilon=None):
    """Partition the final eigenvalues of ``trajectories`` into candidate, branch and artifact.

    ``branch``: displacement exponent in ``[0.35, 0.65]``.  ``artifact``:
    a single unmatched point, or (when ``refined_positions`` from a refined
    grid is given) a point whose nearest refined eigenvalue is further than
    ten times the median such move.  ``candidate``: the rest.  Only
    trajectories ending at ``smallest_epsilon`` (default: the smallest
    strength present) are considered.
    """
    if not trajectories:
        return {"candidate": [], "branch": [], "artifact": []}
    if smallest_epsilon is None:
        smallest_epsilon = min(t.points[-1][0] for t in trajectories)
    ending = [t for t in trajectories if np.isclose(t.points[-1][0], smallest_epsilon, rtol=1e-12)]
    out = {"candidate": [], "branch": [], "artifact": []}
    moves = None
    if refined_positions is not None and len(refined_positions):
        ref = np.asarray(refined_positions)
        moves = np.array([np.min(np.abs(ref - t.last)) for t in ending])
        med = float(np.median(moves))
    for k, t in enumerate(ending):
        p = t.displacement_exponent if t.displacement_exponent is not None else displacement_exponent(t)
        if len(t.points) < 2:
            out["artifact"].append(t.last)
        elif p is not None and BRANCH_RANGE[0] <= p <= BRANCH_RANGE[1]:
            out["branch"].append(t.last)
        elif moves is not None and moves[k] > 10 * med and moves[k] > 0:
            out["artifact"].append(t.last)
        else:
            out["candidate"].append(t.last)
    return out
