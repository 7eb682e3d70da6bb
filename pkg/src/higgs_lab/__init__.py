"""Numerical laboratory for harmonic metrics of split Higgs bundles on the disk.

Modules: ``algebra`` (compatible metrics and their identities), ``bundle``
(the split bundle, its Higgs fields and the model metric), ``domain`` (polar
grids and metric fields), ``solver`` (Dirichlet problems), ``diagnostics``
(domination, energy and cooperative checks) and ``cli``.
"""

__version__ = "0.1.0"
