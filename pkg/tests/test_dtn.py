import numpy as np
import pytest

from capres.contour import build_contour
from capres.dtn import (Box, Disk, ExteriorSolver, Interface, choose_interface, count_resonances_dtn,
                        dtn_exterior, dtn_interior, spectrum_margin)
from capres.eigen import projection_rank
from capres.discretize import Grid, assemble_scaled_operator, default_cutoff
from capres.errors import InteriorSingular, NoSafeInterface
from capres.model import HALF_LINE, ModelProblem, PotentialSpec
from conftest import BARRIER_Z

CLOSED_FORM_TOL = 1e-12
DUAL_PATH_TOL = 1e-9
EXTERIOR_TOL = 1e-5


def free():
    return ModelProblem(HALF_LINE, PotentialSpec.zero())


def test_interior_closed_form():
    a = 2.5
    for z in (1.0 + 0.3j, 4 - 0.5j, 9.5 - 2j):
        k = np.sqrt(z)
        exact = -k * np.cos(k * a) / np.sin(k * a)
        for method in ("transfer", "ode"):
            assert abs(dtn_interior(free(), z, Interface(a), method) - exact) < 1e-9 * max(1, abs(exact))
        assert abs(dtn_interior(free(), z, a, "transfer") - exact) < CLOSED_FORM_TOL * max(1, abs(exact))


def test_interior_pole():
    lam = (np.pi / 2.5) ** 2
    vals = [abs(dtn_interior(free(), lam + d, 2.5)) for d in (1e-2, 1e-4, 1e-6)]
    assert vals[0] < vals[1] < vals[2]
    with pytest.raises(InteriorSingular):
        dtn_interior(free(), lam, 2.5)


def test_interior_dual_path(barrier):
    a = Interface(2.5)
    z = 4 - 0.5j
    assert abs(dtn_interior(barrier, z, a, "transfer") - dtn_interior(barrier, z, a, "ode")) < DUAL_PATH_TOL


def test_exterior_outgoing():
    c = build_contour(0.3, 3.0, 0.5)
    z = 4 - 0.5j
    k = np.sqrt(z)
    val = dtn_exterior(free(), c, 0.0, z, Interface(2.5), L=c.T0 + 20, h=0.0125)
    assert abs(val - (-1j * k)) < EXTERIOR_TOL


def test_exterior_boundary_values():
    c = build_contour(0.3, 3.0, 0.5)
    s = ExteriorSolver(free(), c, 0.0, 2.5, 30.0, 0.05)
    u = s.full_solution(4 - 0.5j)
    assert u[0] == 1 and u[-1] == 0
    # banded and dense solves agree
    assert abs(s.dtn(4 - 0.5j) - s.dtn(4 - 0.5j, dense=True)) < 1e-10


def test_exterior_stable_in_epsilon(barrier):
    c = build_contour(0.3, 3.0, 0.5)
    z = 4 - 0.5j
    base = dtn_exterior(barrier, c, 0.0, z, 2.5, L=30.0, h=0.05)
    eps = np.array([1e-2, 1e-3, 1e-4])
    diff = np.array([abs(dtn_exterior(barrier, c, e, z, 2.5, L=30.0, h=0.05) - base) for e in eps])
    slope = np.polyfit(np.log(eps), np.log(diff), 1)[0]
    assert abs(slope - 1) < 0.1


def test_margin_free_interior():
    c = build_contour(0.3, 3.0, 0.5)
    a = 2.5
    win = Disk(2.0 - 0.5j, 0.1)
    m_in, m_out = spectrum_margin(free(), c, 0.0, a, win, L=30.0, h=0.05)
    lam = (np.arange(1, 4) * np.pi / a) ** 2
    assert abs(m_in - (np.min(np.abs(lam - win.center)) - 0.1)) < 1e-6
    assert m_out > 0


def test_margin_window_below_axis():
    c = build_contour(0.3, 3.0, 0.5)
    m_in, _ = spectrum_margin(free(), c, 0.0, 2.2, Box(1.0, 3.0, -2.0, -1.0), L=30.0, h=0.05)
    assert abs(m_in - 1.0) < 1e-9


def test_choose_interface(barrier):
    c = build_contour(0.3, 3.0, 0.5)
    win = (BARRIER_Z, 0.1)
    # interior Dirichlet eigenvalues for a in [2.2, 2.8] all fall within 0.1 of z*
    with pytest.raises(NoSafeInterface):
        choose_interface(barrier, c, 0.0, win, [2.2, 2.5, 2.8], L=30.0, h=0.05)
    assert choose_interface(barrier, c, 0.0, win, [2.2, 2.5, 2.8, 2.9], L=30.0, h=0.05).a == 2.9
    assert choose_interface(barrier, c, 0.0, (BARRIER_Z, 0.05), [2.8], L=30.0, h=0.05).a == 2.8
    # an interior eigenvalue of a=2.5 sits at 1.579; a window there excludes that candidate
    lam = (np.pi / 2.5) ** 2
    pick = choose_interface(free(), c, 0.0, (lam, 0.05), [2.5, 2.8], L=30.0, h=0.05)
    assert pick.a == 2.8
    with pytest.raises(NoSafeInterface):
        choose_interface(free(), c, 0.0, (lam, 0.05), [2.5], L=30.0, h=0.05)


def test_count_barrier_matches_projection(barrier):
    c = build_contour(0.3, 3.0, 0.5)
    circle = (BARRIER_Z, 0.05)
    res = count_resonances_dtn(barrier, c, 0.0, Interface(2.9), circle, L=30.0, h=0.05)
    A = assemble_scaled_operator(barrier, c, 0.0, default_cutoff(barrier), Grid(0.0, 30.0, 601))
    assert res.winding == projection_rank(A, *circle).rank == 1
    assert res.to_dict()["winding"] == 1
    # resonance-free disk
    assert count_resonances_dtn(barrier, c, 0.0, 2.9, (3 - 0.3j, 0.05), L=30.0, h=0.05).winding == 0


def test_count_free_problem():
    c = build_contour(0.3, 3.0, 0.5)
    assert count_resonances_dtn(free(), c, 0.0, 2.5, (3.0 - 0.3j, 0.2), L=30.0, h=0.05).winding == 0
    # around an interior eigenvalue N has a pole
    lam = (np.pi / 2.5) ** 2
    assert count_resonances_dtn(free(), c, 0.0, 2.5, (lam + 0.01j, 0.05), L=30.0, h=0.05).winding == -1


def test_count_samples_returned(barrier):
    c = build_contour(0.3, 3.0, 0.5)
    res, samples = count_resonances_dtn(barrier, c, 0.0, 2.9, (BARRIER_Z, 0.05), L=30.0, h=0.05,
                                        return_samples=True)
    assert len(samples) >= res.samples
    assert all(abs(abs(z - BARRIER_Z) - 0.05) < 1e-12 for z, _ in samples)
