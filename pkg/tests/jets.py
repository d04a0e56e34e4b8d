"""Random admissible jets shared by the geometry and acceptance tests."""

import numpy as np

from weingarten import hypgraph, symcurv


def random_admissible_jet(rng, n, k, min_margin=1e-2):
    while True:
        u = rng.uniform(0.2, 2.0)
        du = rng.normal(size=n)
        M = rng.normal(size=(n, n))
        d2u = 0.5 * (M + M.T) + rng.uniform(-1.0, 1.0) * np.eye(n)
        jet = hypgraph.JetPoint(np.array(u), du, d2u)
        st = hypgraph.curvature_matrix(jet)
        if symcurv.cone_margin(st.kappa, k) > min_margin:
            return jet


def linearization_fd_error(jet, k, step=1e-6):
    """Max relative discrepancy between analytic coefficients and central FD of G."""
    n = jet.n
    c = hypgraph.linearization(jet, k)

    def G(u, du, d2u):
        return hypgraph.G_value(hypgraph.JetPoint(np.array(u), du, d2u), k)

    u, du, d2u = float(jet.u), jet.du, jet.d2u
    errs = []
    hs = step * max(1.0, np.max(np.abs(d2u)))
    for s in range(n):
        for t in range(s, n):
            E = np.zeros((n, n))
            E[s, t] = E[t, s] = hs
            d = (G(u, du, d2u + E) - G(u, du, d2u - E)) / (2 * hs)
            exact = c.Gst[s, t] if s == t else c.Gst[s, t] + c.Gst[t, s]
            errs.append((d, exact))
    hg = step * max(1.0, np.max(np.abs(du)))
    for s in range(n):
        e = np.zeros(n)
        e[s] = hg
        errs.append(((G(u, du + e, d2u) - G(u, du - e, d2u)) / (2 * hg), c.Gs[s]))
    hu = step * u
    errs.append(((G(u + hu, du, d2u) - G(u - hu, du, d2u)) / (2 * hu), float(c.Gu)))
    fd = np.array([a for a, _ in errs])
    ex = np.array([b for _, b in errs])
    scale = max(np.max(np.abs(ex)), 1e-300)
    return float(np.max(np.abs(fd - ex)) / scale)
