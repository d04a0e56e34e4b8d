# Curvature of an equidistant sphere cap from finite-difference jets.
# The cap sqrt(1 - |x|^2) - 0.5 has all hyperbolic curvatures equal to 0.5.
import numpy as np

from weingarten import hypgraph, meshdom, symcurv

cap = hypgraph.SphereCap(np.zeros(2), 1.0, 0.5)

# analytic jets reproduce the curvatures to rounding
x = np.array([[0.0, 0.0], [0.3, -0.2], [0.6, 0.1]])
print(hypgraph.curvature_matrix(hypgraph.sphere_cap_jet(cap, x)).kappa)

# FD jets on {cap > 0.3}; the fixed disk |x| <= 0.5 shows second order,
# rows next to the cut boundary are first order
print(f"{'h':>8} {'|x|<=0.5':>10} {'all nodes':>10}")
for h in (1 / 32, 1 / 64, 1 / 128, 1 / 256):
    grid = meshdom.Grid.from_box((-1, -1), (1, 1), h)
    mask = meshdom.mask_from_levelset(cap, grid, 0.3)
    pts = grid.points[mask.interior_nodes]
    jet = mask.jet_operator.jets(cap(pts), 0.3)
    err = np.abs(hypgraph.curvature_matrix(jet).kappa - 0.5).max(axis=1)
    inner = np.linalg.norm(pts, axis=1) <= 0.5
    print(f"{h:8.5f} {err[inner].max():10.2e} {err.max():10.2e}")

# f = sigma_2^(1/2) at kappa = (0.5, 0.5) is the right-hand side the cap solves
print(symcurv.f_eval(np.array([0.5, 0.5]), 2).f_value)
