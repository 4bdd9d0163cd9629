import numpy as np
import pytest

from capres.discretize import Grid, assemble_davies
from capres.eigen import (balance, eig_dense, eigenvalues, hessenberg, projection_rank, resolvent_solve,
                          schur_qr)
from capres.errors import ContourTooClose, NearSingular, NoConvergence
from capres.sweep import optimal_pairing

ROUND = 1e-14
SIMILARITY_TOL = 1e-8
TRACE_TOL = 1e-8


def random_matrix(rng, n):
    return rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))


def test_diagonal():
    ev = eig_dense(np.diag([1, 2 + 1j, -3])).eigenvalues
    assert np.max(optimal_pairing(ev, [1, 2 + 1j, -3])) < ROUND


def test_rotation():
    ev = eig_dense(np.array([[0.0, 1.0], [-1.0, 0.0]])).eigenvalues
    assert np.max(optimal_pairing(ev, [1j, -1j])) < ROUND


def test_empty_and_bad_input():
    assert eig_dense(np.zeros((0, 0))).eigenvalues.size == 0
    with pytest.raises(ValueError):
        eig_dense(np.array([[np.nan]]))
    with pytest.raises(ValueError):
        eig_dense(np.ones((2, 3)))


def test_hessenberg_similarity(rng):
    A = random_matrix(rng, 30)
    H, Q = hessenberg(A)
    assert np.max(np.abs(np.tril(H, -2))) == 0
    assert np.linalg.norm(Q @ H @ Q.conj().T - A) < 1e-12 * np.linalg.norm(A)
    assert np.linalg.norm(Q.conj().T @ Q - np.eye(30)) < 1e-12


def test_balance_preserves_spectrum(rng):
    A = random_matrix(rng, 12)
    D = np.diag(2.0 ** rng.integers(-8, 8, 12))
    B = D @ A @ np.linalg.inv(D)
    Bb, d = balance(B)
    assert np.linalg.norm(Bb, 1) <= np.linalg.norm(B, 1)
    assert np.max(optimal_pairing(np.linalg.eigvals(Bb), np.linalg.eigvals(A))) < 1e-10


@pytest.mark.parametrize("n", [5, 40, 120])
def test_qr_matches_lapack(rng, n):
    A = random_matrix(rng, n)
    qr = eig_dense(A, "qr")
    lp = eig_dense(A, "lapack")
    assert qr.residual_bound < 1e-13 and lp.residual_bound < 1e-13
    assert np.max(optimal_pairing(qr.eigenvalues, lp.eigenvalues)) < 1e-10
    assert qr.iterations > 0


def test_similarity_invariance(rng):
    n = 60
    A = random_matrix(rng, n)
    S = np.eye(n) + 0.1 * random_matrix(rng, n)
    B = S @ A @ np.linalg.inv(S)
    d = optimal_pairing(eig_dense(A, "qr").eigenvalues, eig_dense(B, "qr").eigenvalues)
    assert np.max(d) < SIMILARITY_TOL


def test_trace_consistency(rng):
    for n in (10, 80, 400):
        A = random_matrix(rng, n)
        ev = eig_dense(A).eigenvalues
        assert abs(ev.sum() - np.trace(A)) < TRACE_TOL * np.linalg.norm(A) * n


def test_no_convergence_reported(rng):
    H, _ = hessenberg(random_matrix(rng, 20))
    with pytest.raises(NoConvergence):
        schur_qr(H, max_iter=3)


def test_davies_string_qr():
    A = assemble_davies(1.0, 0.0, Grid(-12.0, 12.0, 281))
    ev = eig_dense(A, "qr").eigenvalues
    ev = ev[np.argsort(np.abs(ev))][:3]
    exact = np.exp(-1j * np.pi / 4) * np.array([1, 3, 5])
    assert np.max(optimal_pairing(ev, exact)) < 5e-3


def test_resolvent_examples(rng):
    assert np.allclose(resolvent_solve(np.diag([1.0, 2.0]), 0.0, [1, 1]), [1, 0.5], atol=ROUND)
    b = rng.standard_normal(4)
    assert np.allclose(resolvent_solve(np.zeros((4, 4)), -1.0, b), b, atol=ROUND)
    A = random_matrix(rng, 50) + 20 * np.eye(50)
    b = random_matrix(rng, 50)[:, 0]
    x = resolvent_solve(A, 10j, b)
    assert np.linalg.norm((A - 10j * np.eye(50)) @ x - b) / np.linalg.norm(b) < 1e-10


def test_resolvent_near_singular():
    with pytest.raises(NearSingular):
        resolvent_solve(np.diag([1.0, 2.0]), 1.0, [1, 1])


def test_projection_diagonal():
    A = np.diag([1, 2 + 1j, -3])
    pr = projection_rank(A, 2 + 1j, 0.5)
    assert pr.rank == 1 and abs(pr.trace_value - 1) < 1e-6 and pr.idempotency_defect < 1e-6
    assert projection_rank(A, 10, 0.5).rank == 0


def test_projection_additivity(rng):
    vals = np.array([0.0, 0.3, 1.0 + 1j, 1.2 + 1j, 3.0 - 1j])
    S = np.eye(5) + 0.2 * random_matrix(rng, 5)
    A = S @ np.diag(vals) @ np.linalg.inv(S)
    r1 = projection_rank(A, 0.15, 0.4).rank
    r2 = projection_rank(A, 1.1 + 1j, 0.4).rank
    r_all = projection_rank(A, 1.0, 3.0).rank
    assert (r1, r2) == (2, 2)
    assert r_all == 5 == r1 + r2 + projection_rank(A, 3 - 1j, 0.4).rank


def test_projection_davies():
    A = assemble_davies(1.0, 0.0, Grid(-12.0, 12.0, 601))
    pr = projection_rank(A, 3 * np.exp(-1j * np.pi / 4), 0.3)
    assert pr.rank == 1
    assert abs(pr.trace_value - 1) < 0.2 and pr.idempotency_defect < 1e-6


def test_projection_too_close():
    with pytest.raises(ContourTooClose):
        # first quadrature node sits on the eigenvalue 1
        projection_rank(np.diag([1.0, 5.0]), 1 - 0.5 * np.exp(1j * np.pi / 8), 0.5, quadrature_points=8)


def test_eigenvalues_fast_path(rng):
    A = random_matrix(rng, 320)
    assert np.max(optimal_pairing(eigenvalues(A), eig_dense(A, "lapack").eigenvalues)) < 1e-10
