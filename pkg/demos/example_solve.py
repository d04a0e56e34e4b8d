# The model problem sigma_2^(1/2)(kappa[u]) = 2 u^2 over {ubar > eps}, where
# ubar is the cap of curvature 0.5. Solve at eps = 0.3 and run the checks.
import math

import numpy as np

from weingarten import plateau
from weingarten.nlsolve import ProblemSpec, continuity_solve, zeroth_order_margin, uniqueness_probe

spec = ProblemSpec.from_text(
    2, 2, "2*u^2", "sqrt(1-x1^2-x2^2)-0.5", (-1, -1), (1, 1), 1 / 64,
    enclosing_radius=math.sqrt(0.75), enclosing_center=(0.0, 0.0),
)
eps, sigma = 0.3, 0.09

report = plateau.check_compatibility(spec, eps, sigma)
for name, c in report.conditions.items():
    print(f"{name:22s} {c.status:8s} {c.value: .4g}")

u, history = continuity_solve(spec, eps, logger=print)
vals = u.interior_values
print("nodes", vals.size, "range", vals.min(), vals.max())

# eps <= ubar <= u <= C0, and G_u - psi_u < 0 at every node
print(plateau.sandwich_check(u, spec))
print("max G_u - psi_u", zeroth_order_margin(u, spec).max())

# w = sqrt(1 + |Du|^2) next to the boundary stays below 1 / sigma
bg = plateau.boundary_gradient_check(u, spec, sigma, math.inf, eps)
print("boundary w", bg["max_w"], "bound", bg["bound"])

# quadratic test functions D^2u +- alpha I at random nodes
rng = np.random.default_rng(0)
nodes = rng.choice(u.mask.interior_nodes, 50, replace=False)
probe = plateau.viscosity_probe(u, spec, nodes, [1e-3, 1e-2])
print("probe tolerance", probe["tol_probe"], "violations", len(probe["violations"]))
for row in probe["per_alpha"]:
    print(row)

# restart from a perturbed admissible state and land on the same solution
dist, stats, amp = uniqueness_probe(u, spec)
print("restart distance", dist, "after", stats.iterations, "Newton steps")
