"""Shape uncertainty quantification for electromagnetic scattering.

Boundary element solvers for PEC and dielectric scatterers, shape-derivative
right-hand sides and second moments computed with the sparse tensor
combination technique.
"""
__version__ = "0.1.0"
