"""The Davies operator -d^2/dx^2 - i eps x^2 and its rotated twin.

Its eigenvalues are exp(-i pi/4) sqrt(eps) (2k + 1) for every scaling angle;
the discrete spectra at theta = 0 and theta = 0.1 reproduce them.
"""

import numpy as np

from capres.discretize import Grid, assemble_davies
from capres.eigen import eigenvalues

eps = 1.0
exact = np.exp(-1j * np.pi / 4) * np.sqrt(eps) * (2 * np.arange(6) + 1)
for theta in (0.0, 0.1):
    ev = eigenvalues(assemble_davies(eps, theta, Grid(-12.0, 12.0, 1600)))
    ev = ev[np.argsort(np.abs(ev))][:6]
    print(f"theta = {theta}")
    for k, (z, e) in enumerate(zip(ev, exact)):
        print(f"  k = {k}: {z:.10f}   rel. error {abs(z - e) / abs(e):.1e}")
