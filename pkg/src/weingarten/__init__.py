"""Finite-difference solver for prescribed Weingarten curvature of graphs in hyperbolic space.

Modules:

* :mod:`symcurv` elementary symmetric functions, cone tests, f = sigma_k^(1/k)
* :mod:`hypgraph` curvature of vertical graphs in the half-space model
* :mod:`meshdom` grids, level-set domains and finite-difference jets
* :mod:`sparsela` CSR storage and BiCGSTAB
* :mod:`nlsolve` damped Newton and the two-stage continuation
* :mod:`plateau` epsilon sweep and verification oracles
* :mod:`exprparse` expressions for psi(x, u) and the subsolution
"""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .nlsolve import ProblemSpec, continuity_solve, mean_curvature_solve  # noqa: F401
