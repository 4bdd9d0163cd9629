"""Scattering resonances of 1D model operators by complex scaling, complex
absorbing potentials and Dirichlet-to-Neumann winding numbers."""

__version__ = "0.1.0"
