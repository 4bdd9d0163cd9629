import numpy as np
import pytest

from capres.model import HALF_LINE, ModelProblem, PotentialSpec
from capres.oracle import (Rectangle, count_zeros, find_resonances, outgoing_condition, refine_zero,
                           transfer_matrix, z_window_to_k_rect)
from conftest import BARRIER_K, BARRIER_Z

TOL = 1e-12
NEWTON_TOL = 1e-10

# golden value: the example rectangle's upper edge Im k = -0.01 lies below the
# barrier's only nearby zero (Im k* = -0.0093), so the count is 0
GOLDEN_EXAMPLE_COUNT = 0
EXAMPLE_RECT = Rectangle(0.5, 3.5, -1.2, -0.01)


def free():
    return ModelProblem(HALF_LINE, PotentialSpec.zero())


def test_free_propagator(rng):
    for k in rng.standard_normal(5) + 1j * rng.standard_normal(5):
        ell = 1.7
        m = transfer_matrix(free(), k, ell)
        ref = np.array([[np.cos(k * ell), np.sin(k * ell) / k], [-k * np.sin(k * ell), np.cos(k * ell)]])
        assert np.max(np.abs(m - ref)) < TOL


def test_sinc_limit():
    # k^2 = V inside a single segment: zero local momentum
    p = ModelProblem(HALF_LINE, PotentialSpec.piecewise_constant([(0.0, 2.0, 4.0)]))
    m = transfer_matrix(p, 2.0 + 0j)
    assert np.max(np.abs(m - np.array([[1, 2], [0, 1]]))) < TOL


def test_unimodular(barrier, rng):
    for k in rng.standard_normal(10) * 3 + 1j * rng.standard_normal(10):
        assert abs(np.linalg.det(transfer_matrix(barrier, k)) - 1) < 1e-10


def test_free_outgoing_never_vanishes(rng):
    p = free()
    b = 2.0
    for k in rng.standard_normal(5) + 1j * rng.standard_normal(5):
        assert abs(outgoing_condition(p, k) - np.exp(-1j * k * b)) < TOL


def test_conjugate_symmetry(barrier, rng):
    ks = rng.standard_normal(20) * 3 + 1j * rng.standard_normal(20)
    defect = max(abs(outgoing_condition(barrier, -k.conjugate()) - np.conj(outgoing_condition(barrier, k)))
                 for k in ks)
    assert defect < TOL


def test_free_has_no_zeros():
    assert count_zeros(free(), Rectangle(0.2, 5.0, -2.0, -0.01)).count == 0


def test_example_rectangle_golden(barrier):
    assert count_zeros(barrier, EXAMPLE_RECT, samples=10_000).count == GOLDEN_EXAMPLE_COUNT
    # cross-check at double density
    assert count_zeros(barrier, EXAMPLE_RECT, samples=20_000).count == GOLDEN_EXAMPLE_COUNT
    # lowering the upper edge past Im k* picks the zero up
    assert count_zeros(barrier, Rectangle(0.5, 3.5, -1.2, -1e-3), samples=10_000).count == 1


def test_counts_add(barrier):
    whole = count_zeros(barrier, Rectangle(0.5, 6.0, -1.2, -1e-3)).count
    left = count_zeros(barrier, Rectangle(0.5, 3.1, -1.2, -1e-3)).count
    right = count_zeros(barrier, Rectangle(3.1, 6.0, -1.2, -1e-3)).count
    assert whole == left + right
    assert whole >= 2


def test_refine_barrier_zero(barrier, rng):
    k, mult, res = refine_zero(barrier, 2.3 - 0.01j)
    assert res < NEWTON_TOL and mult == 1
    assert abs(k - BARRIER_K) < NEWTON_TOL
    assert (k * k).imag < 0
    k2, _, _ = refine_zero(barrier, k + 1e-6 * complex(*rng.standard_normal(2)))
    assert abs(k2 - k) < NEWTON_TOL


def test_find_resonances_window(barrier):
    res = find_resonances(barrier, (1.0, 9.0, -2.0, 0.0))
    assert len(res) == 1
    assert abs(res[0].z - BARRIER_Z) < NEWTON_TOL
    assert res[0].multiplicity == 1


def test_window_mapping():
    r = z_window_to_k_rect((1.0, 9.0, -2.0, 0.0))
    assert r.im_hi < 0 and r.re_lo > 0
    for z in (1 - 1e-3j, 9 - 2j, 5 - 1j):
        assert r.contains(np.sqrt(z))


def test_full_line_rejected():
    from capres.model import FULL_LINE
    with pytest.raises(ValueError):
        outgoing_condition(ModelProblem(FULL_LINE, PotentialSpec.zero()), 1.0)
