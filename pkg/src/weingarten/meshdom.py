"""Rectangular grids, level-set domains {ubar > eps} and finite-difference jets.

Node classification:

* ``INTERIOR`` nodes lie strictly inside the level-set domain and carry unknowns.
* ``CUT`` nodes lie outside but inside the stencil of some interior node. They
  hold ghost values (see :func:`apply_dirichlet`) used for dumps and trace
  reconstruction; the jet operators themselves use the boundary crossings
  directly (Shortley-Weller), not the ghost values.
* ``EXTERIOR`` nodes are everything else.

Edge fractions ``theta`` are measured from an interior node toward its axis
neighbour: the level set crosses the edge at distance ``theta * h``, with
``theta`` in (0, 1]. A fully interior edge has ``theta == 1``.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from . import exprparse
from .errors import DegenerateDomainError, DomainError, ShapeError
from .hypgraph import JetPoint

__all__ = [
    "EXTERIOR",
    "INTERIOR",
    "CUT",
    "Grid",
    "DomainMask",
    "ScalarField",
    "JetOperator",
    "mask_from_levelset",
    "fd_jet",
    "apply_dirichlet",
    "field_compare",
    "write_csv",
    "sample",
]

EXTERIOR, INTERIOR, CUT = 0, 1, 2


@dataclass(frozen=True, eq=False)
class Grid:
    origin: np.ndarray
    h: float
    dims: tuple

    def __post_init__(self):
        origin = np.atleast_1d(np.asarray(self.origin, dtype=float))
        dims = tuple(int(d) for d in np.atleast_1d(self.dims))
        if len(dims) != origin.size or not 1 <= len(dims) <= 3:
            raise ShapeError("grid dimension must be 1, 2 or 3 and match origin")
        if self.h <= 0:
            raise ShapeError("grid spacing must be positive")
        if min(dims) < 3:
            raise ShapeError("need at least 3 nodes per axis")
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "dims", dims)

    @classmethod
    def from_box(cls, lower, upper, h: float) -> "Grid":
        """Grid with spacing ``h`` whose nodes cover [lower, upper] (rounded outward)."""
        lower = np.atleast_1d(np.asarray(lower, dtype=float))
        upper = np.atleast_1d(np.asarray(upper, dtype=float))
        counts = np.ceil((upper - lower) / h - 1e-9).astype(int) + 1
        return cls(lower, float(h), tuple(counts))

    @property
    def n(self) -> int:
        return len(self.dims)

    @property
    def size(self) -> int:
        return int(np.prod(self.dims))

    @cached_property
    def points(self) -> np.ndarray:
        axes = [self.origin[i] + self.h * np.arange(d) for i, d in enumerate(self.dims)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    @cached_property
    def strides(self) -> tuple:
        return tuple(int(s) for s in np.cumprod((1,) + self.dims[::-1])[-2::-1])

    def multi_index(self, flat) -> np.ndarray:
        return np.stack(np.unravel_index(flat, self.dims), axis=-1)

    def same_as(self, other: "Grid") -> bool:
        return (
            self.dims == other.dims
            and self.h == other.h
            and np.array_equal(self.origin, other.origin)
        )


@dataclass(frozen=True, eq=False)
class DomainMask:
    grid: Grid
    kind: np.ndarray
    levelset: np.ndarray
    level: float
    theta_minus: np.ndarray
    theta_plus: np.ndarray

    @cached_property
    def interior_nodes(self) -> np.ndarray:
        return np.nonzero(self.kind == INTERIOR)[0]

    @cached_property
    def cut_nodes(self) -> np.ndarray:
        return np.nonzero(self.kind == CUT)[0]

    @cached_property
    def interior_index(self) -> np.ndarray:
        idx = np.full(self.grid.size, -1, dtype=np.int64)
        idx[self.interior_nodes] = np.arange(self.interior_nodes.size)
        return idx

    @property
    def num_interior(self) -> int:
        return int(self.interior_nodes.size)

    @cached_property
    def near_boundary(self) -> np.ndarray:
        """Interior nodes (flat ids) with some non-interior node in their 3^n block."""
        inside = self.kind == INTERIOR
        flags = np.zeros(self.grid.size, dtype=bool)
        for off in _block_offsets(self.grid):
            flags[self.interior_nodes] |= ~inside[self.interior_nodes + off]
        return np.nonzero(flags & inside)[0]

    @cached_property
    def deep_interior(self) -> np.ndarray:
        return np.setdiff1d(self.interior_nodes, self.near_boundary)

    def contains(self, other: "DomainMask") -> bool:
        """True iff every interior node of ``other`` is interior here."""
        return bool(np.all(self.kind[other.interior_nodes] == INTERIOR))

    @cached_property
    def jet_operator(self) -> "JetOperator":
        return JetOperator(self)


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: Grid
    values: np.ndarray
    mask: DomainMask
    boundary_value: float | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.size,):
            raise ShapeError(f"field needs {self.grid.size} values, got {v.shape}")
        object.__setattr__(self, "values", v)
        if self.boundary_value is None:
            object.__setattr__(self, "boundary_value", float(self.mask.level))

    @classmethod
    def from_interior(cls, mask: DomainMask, u_int, boundary_value=None) -> "ScalarField":
        vals = np.full(mask.grid.size, np.nan)
        vals[mask.interior_nodes] = u_int
        return cls(mask.grid, vals, mask, boundary_value)

    @property
    def interior_values(self) -> np.ndarray:
        return self.values[self.mask.interior_nodes]

    def jets(self) -> JetPoint:
        """FD jets at every interior node, in interior order."""
        return self.mask.jet_operator.jets(self.interior_values, self.boundary_value)


def _block_offsets(grid: Grid):
    """Flat offsets of the 3^n neighbourhood, centre excluded."""
    offs = []
    for d in itertools.product((-1, 0, 1), repeat=grid.n):
        if any(d):
            offs.append(int(np.dot(d, grid.strides)))
    return offs


def sample(grid: Grid, func, strict: bool = False) -> np.ndarray:
    """Evaluate an AST, callable or array at every grid node."""
    if _is_expr(func):
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.asarray(exprparse.evaluate(func, grid.points, 0.0, strict=strict), dtype=float)
    if isinstance(func, ScalarField):
        return func.values
    if callable(func):
        with np.errstate(invalid="ignore"):
            return np.asarray(func(grid.points), dtype=float)
    vals = np.asarray(func, dtype=float)
    if vals.shape != (grid.size,):
        raise ShapeError("level-set values do not match the grid")
    return vals


def _is_expr(func) -> bool:
    return isinstance(func, (exprparse.Const, exprparse.Var, exprparse.Unary, exprparse.Binary))


def _refine_crossings(func, grid, base, s, sign, eps, theta, iters=60):
    """Illinois regula falsi for ubar(base + t*h*e_s) = eps on t in (0, theta_lin]."""
    lo = np.zeros_like(theta)
    hi = np.ones_like(theta)
    flo = np.ones_like(theta)  # only the sign matters at the left end
    fhi = -np.ones_like(theta)
    t = theta.copy()
    side = np.zeros(theta.shape, dtype=int)
    for _ in range(iters):
        pts = base.copy()
        pts[:, s] += sign * t * grid.h
        ft = sample_points(func, pts) - eps
        ft = np.where(np.isfinite(ft), ft, -1.0)
        pos = ft > 0
        lo = np.where(pos, t, lo)
        hi = np.where(pos, hi, t)
        # Illinois: halve the stale endpoint value after two same-side steps
        fhi = np.where(pos, np.where(side == 1, 0.5 * fhi, fhi), ft)
        flo = np.where(pos, ft, np.where(side == -1, 0.5 * flo, flo))
        side = np.where(pos, 1, -1)
        with np.errstate(invalid="ignore", divide="ignore"):
            tn = hi - fhi * (hi - lo) / (fhi - flo)
        bad = ~np.isfinite(tn) | (tn <= lo) | (tn >= hi)
        tn = np.where(bad, 0.5 * (lo + hi), tn)
        done = np.abs(tn - t) <= 4e-16 * np.maximum(t, 1e-300)
        t = tn
        if np.all(done | (hi - lo < 1e-15)):
            break
    return t


def sample_points(func, pts) -> np.ndarray:
    if _is_expr(func):
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.asarray(exprparse.evaluate(func, pts, 0.0, strict=False), dtype=float)
    with np.errstate(invalid="ignore"):
        return np.asarray(func(pts), dtype=float)


def mask_from_levelset(ubar, grid: Grid, eps: float, refine: bool = True) -> DomainMask:
    """Classify nodes of ``grid`` against the domain {ubar > eps}.

    ``ubar`` may be a parsed expression, a callable on points, a ScalarField
    or an array of node values. Edge crossings are first located by linear
    interpolation of ubar; when ubar can be evaluated off the grid (expression
    or callable) and ``refine`` is set, they are then solved to rounding
    accuracy, which keeps boundary-adjacent second differences O(h).
    """
    if not eps > 0:
        raise DomainError("level eps must be positive")
    vals = sample(grid, ubar)
    analytic = _is_expr(ubar) or (callable(ubar) and not isinstance(ubar, ScalarField))
    inside = np.nan_to_num(vals, nan=-np.inf) > eps
    if not np.any(inside):
        raise DegenerateDomainError(f"level set {{ubar > {eps}}} has no grid nodes")
    multi = np.stack(np.unravel_index(np.arange(grid.size), grid.dims), axis=-1)
    edge = np.any((multi == 0) | (multi == np.array(grid.dims) - 1), axis=-1)
    if np.any(inside & edge):
        raise DegenerateDomainError("level-set domain touches the grid boundary")
    nodes = np.nonzero(inside)[0]
    n = grid.n
    tm = np.full((grid.size, n), np.nan)
    tp = np.full((grid.size, n), np.nan)
    vp = vals[nodes]
    for s in range(n):
        for sign, out in ((-1, tm), (1, tp)):
            nb = nodes + sign * grid.strides[s]
            vq = vals[nb]
            crossing = ~inside[nb]
            if np.any(crossing & ~np.isfinite(vq)):
                raise DegenerateDomainError(
                    "level-set function undefined next to the domain; enlarge its region of definition"
                )
            with np.errstate(invalid="ignore", divide="ignore"):
                theta = np.where(crossing, (vp - eps) / (vp - vq), 1.0)
            theta = np.clip(theta, np.finfo(float).tiny, 1.0)
            if refine and analytic and np.any(crossing):
                theta[crossing] = _refine_crossings(
                    ubar, grid, grid.points[nodes[crossing]], s, sign, eps, theta[crossing]
                )
            out[nodes, s] = np.clip(theta, np.finfo(float).tiny, 1.0)
    kind = np.zeros(grid.size, dtype=np.int8)
    near = np.zeros(grid.size, dtype=bool)
    for off in _block_offsets(grid):
        near[nodes + off] = True
    kind[near & ~inside] = CUT
    kind[inside] = INTERIOR
    return DomainMask(grid, kind, vals, float(eps), tm, tp)


class JetOperator:
    """Affine maps from interior values to FD gradients and Hessians.

    For interior values ``u`` and a Dirichlet value ``b`` on the level set,
    ``grad[s] = D1[s] @ u + b * o1[s]`` and
    ``hess[s][t] = D2[s][t] @ u + b * o2[s][t]`` (symmetric in s, t).

    Pure derivatives use the three-point nonuniform stencil through the edge
    crossings (exact on quadratics). Mixed derivatives difference the
    gradient rows across the other axis, centred when both neighbours are
    interior and one-sided otherwise, averaged over both orders.
    """

    def __init__(self, mask: DomainMask):
        self.mask = mask
        g = mask.grid
        n, h = g.n, g.h
        nodes = mask.interior_nodes
        idx = mask.interior_index
        m = nodes.size
        self.n = n
        self.m = m
        self.D1, self.o1 = [], []
        D2d, o2d = [], []
        for s in range(n):
            a = mask.theta_minus[nodes, s] * h
            b = mask.theta_plus[nodes, s] * h
            jm = idx[nodes - g.strides[s]]
            jp = idx[nodes + g.strides[s]]
            c1 = (-b / (a * (a + b)), (b - a) / (a * b), a / (b * (a + b)))
            c2 = (2.0 / (a * (a + b)), -2.0 / (a * b), 2.0 / (b * (a + b)))
            for coeffs, mats, offs in ((c1, self.D1, self.o1), (c2, D2d, o2d)):
                M, o = _three_point(m, jm, jp, coeffs)
                mats.append(M)
                offs.append(o)
        # difference-across-axis operators used for mixed derivatives
        T, avail = [], []
        for t in range(n):
            jm = idx[nodes - g.strides[t]]
            jp = idx[nodes + g.strides[t]]
            has_m, has_p = jm >= 0, jp >= 0
            both = has_m & has_p
            wp = np.where(both, 0.5 / h, np.where(has_p, 1.0 / h, 0.0))
            wm = np.where(both, -0.5 / h, np.where(has_m, -1.0 / h, 0.0))
            w0 = np.where(both, 0.0, np.where(has_p, -1.0 / h, np.where(has_m, 1.0 / h, 0.0)))
            rows = np.arange(m)
            r = np.concatenate([rows[has_p], rows[has_m], rows])
            c = np.concatenate([jp[has_p], jm[has_m], rows])
            v = np.concatenate([wp[has_p], wm[has_m], w0])
            T.append(sp.csr_matrix((v, (r, c)), shape=(m, m)))
            avail.append(has_m | has_p)
        self.D2 = [[None] * n for _ in range(n)]
        self.o2 = [[None] * n for _ in range(n)]
        self.mixed_fallback = 0
        for s in range(n):
            self.D2[s][s] = D2d[s]
            self.o2[s][s] = o2d[s]
            for t in range(s + 1, n):
                a_st = avail[t].astype(float)  # d/dt of the s-gradient
                a_ts = avail[s].astype(float)
                tot = a_st + a_ts
                self.mixed_fallback += int(np.sum(tot == 0))
                with np.errstate(invalid="ignore", divide="ignore"):
                    w_st = np.where(tot > 0, a_st / tot, 0.0)
                    w_ts = np.where(tot > 0, a_ts / tot, 0.0)
                M = sp.diags(w_st) @ (T[t] @ self.D1[s]) + sp.diags(w_ts) @ (T[s] @ self.D1[t])
                o = w_st * (T[t] @ self.o1[s]) + w_ts * (T[s] @ self.o1[t])
                M = M.tocsr()
                self.D2[s][t] = self.D2[t][s] = M
                self.o2[s][t] = self.o2[t][s] = o

    def gradient(self, u, b):
        return np.stack([D @ u + b * o for D, o in zip(self.D1, self.o1)], axis=-1)

    def hessian(self, u, b):
        n = self.n
        H = np.empty((self.m, n, n))
        for s in range(n):
            for t in range(s, n):
                H[:, s, t] = self.D2[s][t] @ u + b * self.o2[s][t]
                if t != s:
                    H[:, t, s] = H[:, s, t]
        return H

    def jets(self, u, b) -> JetPoint:
        u = np.asarray(u, dtype=float)
        return JetPoint(u, self.gradient(u, b), self.hessian(u, b))


def _three_point(m, jm, jp, coeffs):
    cm, c0, cp = coeffs
    rows = np.arange(m)
    im, ip = jm >= 0, jp >= 0
    r = np.concatenate([rows[im], rows, rows[ip]])
    c = np.concatenate([jm[im], rows, jp[ip]])
    v = np.concatenate([cm[im], c0, cp[ip]])
    M = sp.csr_matrix((v, (r, c)), shape=(m, m))
    o = np.where(im, 0.0, cm) + np.where(ip, 0.0, cp)
    return M, o


def fd_jet(u: ScalarField, node: int) -> JetPoint:
    """FD jet of ``u`` at one interior node (flat grid index)."""
    mask = u.mask
    if mask.kind[node] != INTERIOR:
        raise DomainError(f"node {node} is not an interior node")
    op = mask.jet_operator
    i = mask.interior_index[node]
    uv = u.interior_values
    b = u.boundary_value
    n = op.n
    du = np.array([op.D1[s][i] @ uv + b * op.o1[s][i] for s in range(n)]).ravel()
    d2u = np.empty((n, n))
    for s in range(n):
        for t in range(n):
            d2u[s, t] = (op.D2[s][t][i] @ uv).item() + b * op.o2[s][t][i]
    return JetPoint(float(uv[i]), du, d2u)


def apply_dirichlet(mask: DomainMask, fld: ScalarField, boundary_value: float) -> ScalarField:
    """Fill CUT nodes with ghost values carrying the Dirichlet condition.

    Each CUT node extrapolates linearly from the axis neighbour whose edge
    crossing lies farthest from that neighbour (largest theta), so the linear
    trace on that edge equals ``boundary_value`` at the crossing. CUT nodes
    touching the domain only diagonally use the diagonal edge instead.
    """
    g = mask.grid
    vals = np.array(fld.values, dtype=float)
    cut = mask.cut_nodes
    inside = mask.kind == INTERIOR
    best = np.zeros(cut.size)
    ghost = np.full(cut.size, np.nan)

    def consider(nb, theta):
        nonlocal best, ghost
        better = theta > best
        ui = vals[nb]
        cand = ui + (boundary_value - ui) / np.where(better, theta, 1.0)
        ghost = np.where(better, cand, ghost)
        best = np.where(better, theta, best)

    for s in range(g.n):
        # a CUT node's -e_s neighbour sees it through its +e_s edge and vice versa
        for sign, th in ((-1, mask.theta_plus), (1, mask.theta_minus)):
            nb = cut + sign * g.strides[s]
            ok = inside[nb]
            consider(nb, np.where(ok, th[nb, s], 0.0))
    ls = mask.levelset
    lonely = best == 0.0
    if np.any(lonely):
        for off in _block_offsets(g):
            nb = cut + off
            ok = inside[nb] & lonely
            with np.errstate(invalid="ignore", divide="ignore"):
                theta = (ls[nb] - mask.level) / (ls[nb] - ls[cut])
            consider(nb, np.where(ok & np.isfinite(theta), np.clip(theta, 1e-12, 1.0), 0.0))
    vals[cut] = ghost
    return ScalarField(g, vals, mask, float(boundary_value))


def boundary_trace(fld: ScalarField) -> np.ndarray:
    """Linear reconstruction of ``fld`` at every axis-edge crossing of the level set."""
    mask = fld.mask
    g = mask.grid
    nodes = mask.interior_nodes
    out = []
    for s in range(g.n):
        for sign, th in ((-1, mask.theta_minus), (1, mask.theta_plus)):
            nb = nodes + sign * g.strides[s]
            cross = mask.kind[nb] != INTERIOR
            t = th[nodes[cross], s]
            ui = fld.values[nodes[cross]]
            uc = fld.values[nb[cross]]
            out.append(ui + t * (uc - ui))
    return np.concatenate(out)


def crossing_points(mask: DomainMask) -> np.ndarray:
    """Coordinates of every axis-edge crossing of the level set."""
    g = mask.grid
    nodes = mask.interior_nodes
    pts = []
    for s in range(g.n):
        for sign, th in ((-1, mask.theta_minus), (1, mask.theta_plus)):
            nb = nodes + sign * g.strides[s]
            cross = mask.kind[nb] != INTERIOR
            p = g.points[nodes[cross]].copy()
            p[:, s] += sign * th[nodes[cross], s] * g.h
            pts.append(p)
    return np.concatenate(pts)


def field_compare(a: ScalarField, b: ScalarField, mask: DomainMask, tol: float = 0.0):
    """``(min, max, count)`` of a - b over interior nodes of ``mask``.

    ``count`` is the number of nodes where a - b < -tol.
    """
    if not (a.grid.same_as(b.grid) and a.grid.same_as(mask.grid)):
        raise ShapeError("fields live on different grids")
    nodes = mask.interior_nodes
    d = a.values[nodes] - b.values[nodes]
    if not np.all(np.isfinite(d)):
        raise DomainError("a field is undefined on part of the comparison mask")
    return float(d.min()), float(d.max()), int(np.sum(d < -tol))


def write_csv(fld: ScalarField, path) -> None:
    """Dump every node as ``x1..xn,value,mask`` in row-major node order."""
    g = fld.grid
    header = [f"x{i + 1}" for i in range(g.n)] + ["value", "mask"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for p, v, k in zip(g.points, fld.values, fld.mask.kind):
            w.writerow([repr(float(c)) for c in p] + [repr(float(v)), int(k)])


def read_csv(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Inverse of :func:`write_csv`: ``(points, values, kinds)``."""
    data = np.genfromtxt(path, delimiter=",", names=True)
    names = data.dtype.names
    pts = np.stack([data[c] for c in names[:-2]], axis=-1)
    return pts, np.asarray(data["value"]), np.asarray(data["mask"]).astype(int)

