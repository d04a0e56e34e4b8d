# Lowering the boundary level eps: solutions increase and settle on a fixed
# inner region, while the level sets stay bracketed by the k = 1 solution.
import math

from weingarten import plateau
from weingarten.nlsolve import ProblemSpec

spec = ProblemSpec.from_text(
    2, 2, "2*u^2", "sqrt(1-x1^2-x2^2)-0.5", (-1, -1), (1, 1), 1 / 64,
    enclosing_radius=math.sqrt(0.75), enclosing_center=(0.0, 0.0),
)

rep = plateau.epsilon_sweep(spec, [0.4, 0.3, 0.2, 0.1], reference_eps0=0.4, sigma=0.09)
print(f"{'eps':>5} {'nodes':>6} {'residual':>9} {'sup|Du|':>8} {'viol':>5} {'w max':>6}")
for e in rep.entries:
    print(f"{e.eps:5.2f} {e.num_interior:6d} {e.residual:9.1e} {e.sup_grad_ref:8.4f} "
          f"{e.monotonicity_violations:5d} {e.boundary_gradient['max_w']:6.3f}")

print("gradient ratio", rep.grad_ratio)
print("neighbour differences", rep.successive_differences)
print("distance to finest", rep.limit_differences)

out = plateau.bracket_domains(spec, 0.3, 0.1, u_eps=rep.solutions[0.1], u_mid=rep.solutions[0.2])
for key, c in out["checks"].items():
    print(f"{key:20s} {c['holds']}  {c['statement']}")
print("delta_eps0", out["delta_eps0"])
