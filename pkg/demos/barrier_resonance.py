"""Locate the resonance of a square barrier three ways.

The half-line operator -u'' + V u with V = 10 on [1, 2] has one resonance
with 1 < Re z < 9.  We find it from the outgoing condition (transfer
matrices), as an eigenvalue of the complex-scaled matrix, and count it with
the Dirichlet-to-Neumann winding number.
"""

import numpy as np

from capres.contour import build_contour
from capres.discretize import Grid, assemble_scaled_operator, default_cutoff
from capres.dtn import choose_interface, count_resonances_dtn
from capres.eigen import eigenvalues, projection_rank
from capres.model import barrier_problem
from capres.oracle import find_resonances

problem = barrier_problem()

(res,) = find_resonances(problem, (1.0, 9.0, -2.0, 0.0))
print(f"oracle      z* = {res.z:.12f}   (|W(k*)| = {res.residual:.1e})")

contour = build_contour(0.3, problem.R1, alpha0=0.5)
print(f"contour     theta = 0.3, T0 = {contour.T0:.3g}")
for n in (601, 1201):
    A = assemble_scaled_operator(problem, contour, 0.0, default_cutoff(problem), Grid(0.0, 30.0, n))
    ev = eigenvalues(A)
    z = ev[np.argmin(np.abs(ev - res.z))]
    print(f"scaling     h = {30 / (n - 1):.4f}: z = {z:.12f}   error {abs(z - res.z):.1e}")

circle = (res.z, 0.05)
iface = choose_interface(problem, contour, 0.0, circle, [2.5, 2.7, 2.9], L=30.0, h=0.05)
count = count_resonances_dtn(problem, contour, 0.0, iface, circle, L=30.0, h=0.02)
rank = projection_rank(A, *circle)
print(f"counting    interface a = {iface.a}: DtN winding {count.winding}, projector rank {rank.rank} "
      f"(trace {rank.trace_value.real:.6f})")
