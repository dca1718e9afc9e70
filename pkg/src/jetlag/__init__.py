"""Geometry of time-dependent Lagrangians on the 1-jet bundle of curves.

Layers, bottom to top:

* :mod:`jetlag.expr` - symbolic scalar fields on jet coordinates.
* :mod:`jetlag.numdiff` - finite differences for derived (non-symbolic) fields.
* :mod:`jetlag.dtensor` - distinguished tensors, adapted/covariant derivatives,
  chart transforms.
* :mod:`jetlag.geometry` - Lagrange spaces: metrics, sprays, connections,
  torsion and curvature.
* :mod:`jetlag.fields` - deflections, electromagnetic form, Maxwell identities,
  Ricci/Einstein blocks, conservation residuals.
* :mod:`jetlag.dynamics` - harmonic curves, action integrals.
* :mod:`jetlag.checks` / :mod:`jetlag.cli` - identity sweeps and the ``jetlag``
  command line tool.
"""

from jetlag.expr import JetPoint, ScalarField, parse

__all__ = ["JetPoint", "ScalarField", "parse"]
__version__ = "0.1.0"
