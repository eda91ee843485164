"""The barrier functional J, its residuals, and its discrete calculus.

A(u) = h^2 sum_interior G(det D^2 u) with centered-difference Hessians,
J = A - h^2 sum_interior f u.  The first variation and Hessian below are
EXACT derivatives of this discrete object (chain rule through G and the
stencils), which is what makes Newton-accelerated ascent reliable.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
import scipy.sparse as sp

from .barrier import BarrierG
from .convexity import ConvexGridFunction, hessian_fields
from .grid import GridDomain, shift
from .mameasure import ma_measure


@dataclass
class FunctionalValue:
    total: float
    barrier_part: float
    linear_part: float          # h^2 sum f u; total = barrier_part - linear_part
    quadrature: str = "midpoint-interior"
    minus_infinity: bool = False   # J0 with det <= 0 somewhere
    clamped_nodes: int = 0         # barrier evaluated at det clamped to 0


def _interior_fields(u: ConvexGridFunction):
    uxx, uyy, uxy = hessian_fields(u.values, u.h)
    interior = u.interior
    d = uxx * uyy - uxy ** 2
    return interior, uxx, uyy, uxy, d


def eval_J(u: ConvexGridFunction, f_vals: np.ndarray, bar: BarrierG) -> FunctionalValue:
    """J(u) = int G(det D^2 u) - int f u, midpoint rule on interior nodes."""
    interior, _, _, _, d = _interior_fields(u)
    h2 = u.h ** 2
    dd = d[interior]
    clamped = int(np.count_nonzero(dd < 0))
    A = float(np.sum(bar.G(np.maximum(dd, 0.0))) * h2)
    # linear part over the whole region: the barrier needs full stencils,
    # the f u term does not, and dropping the rim costs an O(h) ring
    lin = float(np.sum(np.asarray(f_vals)[u.region] * u.values[u.region]) * h2)
    return FunctionalValue(A - lin, A, lin, clamped_nodes=clamped)


def eval_J0(u: ConvexGridFunction, f_vals: np.ndarray) -> FunctionalValue:
    """The unmodified functional with G = log; -infinity if det <= 0 anywhere."""
    interior, _, _, _, d = _interior_fields(u)
    h2 = u.h ** 2
    dd = d[interior]
    lin = float(np.sum(np.asarray(f_vals)[u.region] * u.values[u.region]) * h2)
    if np.any(dd <= 0):
        return FunctionalValue(-np.inf, -np.inf, lin, minus_infinity=True)
    A = float(np.sum(np.log(dd)) * h2)
    return FunctionalValue(A - lin, A, lin)


def jensen_bound(u: ConvexGridFunction, node_set: np.ndarray, bar: BarrierG):
    """|E| G(mu[u](E)/|E|) and the quadrature side h^2 sum_E G(det).

    Concavity of G gives quadrature <= bound + O(h); both are returned.
    """
    E = np.asarray(node_set, bool)
    n = int(np.count_nonzero(E))
    if n == 0:
        raise ValueError("jensen bound needs a nonempty node set")
    area = n * u.h ** 2
    mass, degenerate = ma_measure(u, E)
    bound = area * bar.G(mass / area)
    interior, _, _, _, d = _interior_fields(u)
    ok = E & interior
    lhs = float(np.sum(bar.G(np.maximum(d[ok], 0.0))) * u.h ** 2)
    return float(bound), lhs, degenerate


# ----------------------------------------------------------------------
# Euler residuals
# ----------------------------------------------------------------------

def margin_mask(u: ConvexGridFunction, layers: int = 2) -> np.ndarray:
    """Interior nodes at least ``layers`` stencil applications inside."""
    m = u.region
    for _ in range(layers + 1):
        m = u.domain.interior_of(m)
    return m


def _second_ops_of_field(w: np.ndarray, h: float):
    wxx = (shift(w, 0, 1) - 2.0 * w + shift(w, 0, -1)) / h ** 2
    wyy = (shift(w, 1, 0) - 2.0 * w + shift(w, -1, 0)) / h ** 2
    wxy = (shift(w, 1, 1) - shift(w, 1, -1) - shift(w, -1, 1) + shift(w, -1, -1)) / (4.0 * h ** 2)
    return wxx, wyy, wxy


@dataclass
class ResidualReport:
    linf: float
    l2: float
    n_nodes: int
    n_excluded: int
    field: np.ndarray


def _residual_from_weight(u: ConvexGridFunction, w: np.ndarray, f_vals: np.ndarray,
                          valid: np.ndarray, layers: int = 2) -> ResidualReport:
    uxx, uyy, uxy = hessian_fields(u.values, u.h)
    wxx, wyy, wxy = _second_ops_of_field(w, u.h)
    res = uyy * wxx + uxx * wyy - 2.0 * uxy * wxy - np.asarray(f_vals)
    mm = margin_mask(u, layers) & valid
    excl = int(np.count_nonzero(margin_mask(u, layers) & ~valid))
    vals = res[mm]
    out = np.full(u.domain.shape, np.nan)
    out[mm] = vals
    l2 = float(np.sqrt(np.sum(vals ** 2) * u.h ** 2)) if vals.size else np.nan
    linf = float(np.max(np.abs(vals))) if vals.size else np.nan
    return ResidualReport(linf, l2, int(vals.size), excl, out)


def euler_residual(u: ConvexGridFunction, f_vals: np.ndarray, bar: BarrierG,
                   layers: int = 2) -> ResidualReport:
    """Residual of U^{ij} d_ij(G'(det D^2 u)) = f on an interior margin."""
    interior, _, _, _, d = _interior_fields(u)
    w = np.full(u.domain.shape, np.nan)
    pos = interior & (d > 0)
    w[pos] = bar.G1(d[pos])
    # weight defined wherever det > 0 at interior nodes
    valid_w = np.isfinite(w)
    wxx_valid = valid_w.copy()
    return _residual_from_weight(u, np.where(valid_w, w, np.nan), f_vals,
                                 _erode_valid(wxx_valid), layers)


def abreu_residual(u: ConvexGridFunction, f_vals: np.ndarray,
                   layers: int = 2) -> ResidualReport:
    """Residual of sum d_ij(u^{ij}) = f, i.e. the weight is 1/det."""
    interior, _, _, _, d = _interior_fields(u)
    w = np.full(u.domain.shape, np.nan)
    pos = interior & (d > 0)
    w[pos] = 1.0 / d[pos]
    return _residual_from_weight(u, w, f_vals, _erode_valid(np.isfinite(w)), layers)


def _erode_valid(valid: np.ndarray) -> np.ndarray:
    """Nodes whose full 9-point neighbourhood carries a finite weight."""
    out = valid.copy()
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            out &= np.nan_to_num(shift(valid.astype(float), di, dj, fill=0.0)) > 0.5
    return out


# ----------------------------------------------------------------------
# Exact discrete gradient and Hessian of J
# ----------------------------------------------------------------------

def _adj_xx(g: np.ndarray, h: float) -> np.ndarray:
    return (shift(g, 0, 1, 0.0) - 2.0 * g + shift(g, 0, -1, 0.0)) / h ** 2


def _adj_yy(g: np.ndarray, h: float) -> np.ndarray:
    return (shift(g, 1, 0, 0.0) - 2.0 * g + shift(g, -1, 0, 0.0)) / h ** 2


def _adj_xy(g: np.ndarray, h: float) -> np.ndarray:
    return (shift(g, 1, 1, 0.0) - shift(g, 1, -1, 0.0)
            - shift(g, -1, 1, 0.0) + shift(g, -1, -1, 0.0)) / (4.0 * h ** 2)


def first_variation(u: ConvexGridFunction, f_vals: np.ndarray,
                    bar: BarrierG) -> np.ndarray:
    """Exact gradient of the discrete J with respect to node values.

    The adjoint stencil sums (g shifted back through each second-difference
    operator) distribute G'(d) * cofactor onto the nodes each stencil reads.
    """
    interior, uxx, uyy, uxy, d = _interior_fields(u)
    h = u.h
    gp = np.zeros(u.domain.shape)
    dd = np.where(interior, np.maximum(d, 0.0), 0.0)
    # the lower clamp keeps G'(d) ~ d^(-3/4) finite on degenerate iterates
    gp[interior] = bar.G1(np.maximum(dd[interior], 1e-18))
    # clamped nodes (d < 0) contribute G(0) locally: zero derivative there
    gp[interior & (d < 0)] = 0.0
    a = np.where(interior, gp * uyy, 0.0)
    b = np.where(interior, gp * uxx, 0.0)
    c = np.where(interior, gp * uxy, 0.0)
    grad = h ** 2 * (_adj_xx(a, h) + _adj_yy(b, h) - 2.0 * _adj_xy(c, h))
    grad -= np.where(u.region, np.asarray(f_vals), 0.0) * h ** 2
    grad[~u.region] = 0.0
    return grad


def _stencil_matrices(domain: GridDomain, interior: np.ndarray):
    """Sparse (Lxx, Lyy, Lxy): rows = interior nodes, cols = all grid nodes."""
    ny, nx = domain.shape
    N = ny * nx
    rows_mask = np.flatnonzero(interior.ravel())
    nrows = rows_mask.size
    row_of = -np.ones(N, dtype=int)
    row_of[rows_mask] = np.arange(nrows)
    ii, jj = np.unravel_index(rows_mask, (ny, nx))
    h2 = domain.h ** 2

    def mat(entries):
        data, ci = [], []
        rr = []
        for (di, dj, wgt) in entries:
            cols = np.ravel_multi_index((ii + di, jj + dj), (ny, nx))
            rr.append(np.arange(nrows))
            ci.append(cols)
            data.append(np.full(nrows, wgt))
        return sp.csr_matrix((np.concatenate(data),
                              (np.concatenate(rr), np.concatenate(ci))),
                             shape=(nrows, N))

    lxx = mat([(0, 1, 1.0 / h2), (0, 0, -2.0 / h2), (0, -1, 1.0 / h2)])
    lyy = mat([(1, 0, 1.0 / h2), (0, 0, -2.0 / h2), (-1, 0, 1.0 / h2)])
    q = 1.0 / (4.0 * h2)
    lxy = mat([(1, 1, q), (1, -1, -q), (-1, 1, -q), (-1, -1, q)])
    return lxx, lyy, lxy


def hessian_of_J(u: ConvexGridFunction, bar: BarrierG,
                 free: Optional[np.ndarray] = None) -> Tuple[sp.csr_matrix, np.ndarray]:
    """Sparse Hessian of the discrete J restricted to free nodes.

    d''J = h^2 [ S^T diag(G'') S + T ] with S the linearization of det
    through the stencils and T the curvature of det itself weighted by G'.
    Returns (H, flat indices of the free nodes).
    """
    interior, uxx, uyy, uxy, d = _interior_fields(u)
    if free is None:
        free = u.interior
    lxx, lyy, lxy = _stencil_matrices(u.domain, interior)
    dd = np.maximum(d[interior], 1e-18)
    g1 = bar.G1(dd)
    g2 = bar.G2(dd)
    neg = d[interior] < 0
    g1[neg] = 0.0
    g2[neg] = 0.0
    D1 = sp.diags(g1)
    D2 = sp.diags(g2)
    A = sp.diags(uyy[interior]) @ lxx + sp.diags(uxx[interior]) @ lyy \
        - 2.0 * sp.diags(uxy[interior]) @ lxy
    S = A
    T = lxx.T @ D1 @ lyy + lyy.T @ D1 @ lxx - 2.0 * lxy.T @ D1 @ lxy
    H = u.h ** 2 * (S.T @ D2 @ S + T)
    cols = np.flatnonzero(free.ravel())
    H = H.tocsr()[cols][:, cols]
    return H.tocsr(), cols
