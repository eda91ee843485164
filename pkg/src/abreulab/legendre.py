"""Legendre transform, sections, modulus of convexity, graph rotation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .convexity import ConvexGridFunction
from .grid import GridDomain
from .mameasure import min_norm_subgradient, normal_map_polygon


class RotationError(ValueError):
    pass


# ----------------------------------------------------------------------
# Legendre transform (brute force over grid nodes)
# ----------------------------------------------------------------------

@dataclass
class DualGrid:
    """Uniform rectangular grid in gradient space."""

    y1: np.ndarray
    y2: np.ndarray

    @classmethod
    def cover(cls, lo1, hi1, lo2, hi2, n: int = 65) -> "DualGrid":
        a = np.linspace(lo1, hi1, n)
        b = np.linspace(lo2, hi2, n)
        y1, y2 = np.meshgrid(a, b)
        return cls(y1, y2)

    @classmethod
    def covering_gradients(cls, u: ConvexGridFunction, n: int = 65,
                           pad: float = 0.05) -> "DualGrid":
        img = normal_map_polygon(u).polygon
        if len(img) == 0:
            return cls.cover(-1, 1, -1, 1, n)
        lo = img.min(axis=0)
        hi = img.max(axis=0)
        span = np.maximum(hi - lo, 1e-12)
        lo -= pad * span
        hi += pad * span
        return cls.cover(lo[0], hi[0], lo[1], hi[1], n)


@dataclass
class LegendreResult:
    dual: DualGrid
    values: np.ndarray      # u* on the dual grid
    argmax_x1: np.ndarray   # maximizing primal node coordinates
    argmax_x2: np.ndarray
    clipped: bool           # True if the dual grid misses part of N_u(Omega)


def legendre_transform(u: ConvexGridFunction, dual: Optional[DualGrid] = None,
                       chunk: int = 2048) -> LegendreResult:
    """u*(y) = max_x (x . y - u(x)), maximized over the grid nodes of u."""
    if dual is None:
        dual = DualGrid.covering_gradients(u)
    reg = u.region
    px1 = u.domain.x1[reg]
    px2 = u.domain.x2[reg]
    pv = u.values[reg]
    q1 = dual.y1.ravel()
    q2 = dual.y2.ravel()
    vals = np.empty(q1.size)
    a1 = np.empty(q1.size)
    a2 = np.empty(q1.size)
    for s in range(0, q1.size, chunk):
        e = min(s + chunk, q1.size)
        z = q1[s:e, None] * px1[None, :] + q2[s:e, None] * px2[None, :] - pv[None, :]
        k = np.argmax(z, axis=1)
        vals[s:e] = z[np.arange(e - s), k]
        a1[s:e] = px1[k]
        a2[s:e] = px2[k]
    sh = dual.y1.shape
    img = normal_map_polygon(u).polygon
    clipped = False
    if len(img):
        clipped = bool(img[:, 0].min() < dual.y1.min() - 1e-12 or
                       img[:, 0].max() > dual.y1.max() + 1e-12 or
                       img[:, 1].min() < dual.y2.min() - 1e-12 or
                       img[:, 1].max() > dual.y2.max() + 1e-12)
    return LegendreResult(dual, vals.reshape(sh), a1.reshape(sh), a2.reshape(sh),
                          clipped)


def legendre_back(res: LegendreResult, u: ConvexGridFunction,
                  chunk: int = 2048) -> np.ndarray:
    """(u*)* evaluated on the primal region nodes of u."""
    q1 = res.dual.y1.ravel()
    q2 = res.dual.y2.ravel()
    qv = res.values.ravel()
    reg = u.region
    px1 = u.domain.x1[reg]
    px2 = u.domain.x2[reg]
    out = np.empty(px1.size)
    for s in range(0, px1.size, chunk):
        e = min(s + chunk, px1.size)
        z = px1[s:e, None] * q1[None, :] + px2[s:e, None] * q2[None, :] - qv[None, :]
        out[s:e] = z.max(axis=1)
    full = np.full(u.domain.shape, np.nan)
    full[reg] = out
    return full


# ----------------------------------------------------------------------
# Sections and the modulus of convexity
# ----------------------------------------------------------------------

@dataclass
class Section:
    center: Tuple[int, int]
    height: float
    tangent_value: float          # a_x at the center
    tangent_gradient: np.ndarray  # subgradient p defining a_x
    nodes: np.ndarray             # boolean mask over the grid
    touches_boundary: bool


def section(u: ConvexGridFunction, node: Tuple[int, int], delta: float,
            tangent: Optional[np.ndarray] = None) -> Section:
    """Sublevel set S_{delta,u}(x) = {u < delta + a_x} on the region nodes.

    The tangent plane a_x uses the minimal-norm discrete subgradient at
    the center unless one is supplied.
    """
    i, j = node
    if not u.region[i, j]:
        raise ValueError(f"section center {node} outside the region")
    p = min_norm_subgradient(u, node) if tangent is None else np.asarray(tangent, float)
    x0 = np.array([u.domain.x1[i, j], u.domain.x2[i, j]])
    a = u.values[i, j] + p[0] * (u.domain.x1 - x0[0]) + p[1] * (u.domain.x2 - x0[1])
    with np.errstate(invalid="ignore"):
        nodes = u.region & (u.values < delta + a)
    touches = bool(np.any(nodes & ~u.interior))
    return Section((i, j), float(delta), float(u.values[i, j]), p, nodes, touches)


def _section_radius(u: ConvexGridFunction, node, delta, p) -> Tuple[float, bool]:
    """max distance from the center over the section; also boundary-touch flag."""
    s = section(u, node, delta, tangent=p)
    i, j = node
    dx = u.domain.x1[s.nodes] - u.domain.x1[i, j]
    dy = u.domain.x2[s.nodes] - u.domain.x2[i, j]
    r = float(np.hypot(dx, dy).max()) if s.nodes.any() else 0.0
    return r, s.touches_boundary


def section_height(u: ConvexGridFunction, node: Tuple[int, int], r: float,
                   tol: float = 1e-12,
                   tangent: Optional[np.ndarray] = None) -> Tuple[float, bool]:
    """Largest delta with S_{delta,u}(x) inside the r-ball around x (bisection).

    Returns (delta, capped) where capped means the section hit the region
    boundary before leaving B_r, so delta is only a lower bound.
    """
    p = min_norm_subgradient(u, node) if tangent is None else tangent
    lo = 0.0
    hi = float(np.nanmax(u.values[u.region]) - np.nanmin(u.values[u.region])) + 1.0
    rad, touched = _section_radius(u, node, hi, p)
    if rad <= r:
        return hi, touched
    capped = False
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        rad, touch = _section_radius(u, node, mid, p)
        if rad <= r:
            lo = mid
            capped = capped or touch
        else:
            hi = mid
        if hi - lo <= tol * max(1.0, lo):
            break
    return lo, capped


def modulus_of_convexity(u: ConvexGridFunction, r: float,
                         sample_stride: int = 1) -> float:
    """h_{u,Omega}(r): min over interior nodes of the section height in B_r."""
    from .mameasure import min_norm_subgradients_bulk
    interior = u.interior
    idx = np.argwhere(interior)[::sample_stride]
    nodes = [(int(i), int(j)) for (i, j) in idx]
    tangents = min_norm_subgradients_bulk(u, nodes)
    best = np.inf
    for n in nodes:
        d, _ = section_height(u, n, r, tangent=tangents[n])
        best = min(best, d)
        if best == 0.0:
            break
    return float(best) if np.isfinite(best) else 0.0


# ----------------------------------------------------------------------
# Graph rotation of section 4: z1 = -x3, z3 = x1
# ----------------------------------------------------------------------

@dataclass
class RotatedGraph:
    z1: np.ndarray        # grid in the rotated first coordinate (= -u values)
    z2: np.ndarray
    v: np.ndarray         # v(z1, z2) = x1
    v_hat: np.ndarray     # v - eps*z1 - c
    eps: float
    c: float


def rotate_graph(u_func, x1_range: Tuple[float, float], x2_vals: np.ndarray,
                 eps: float = 0.0, c: float = 0.0, n_z1: int = 0,
                 n_x1: int = 257) -> RotatedGraph:
    """Rotate the graph x3 = u(x) about the x2-axis: z1 = -x3, z3 = x1.

    ``u_func(x1, x2)`` must be increasing in x1 on the range (u_1 > 0), so
    each line x2 = const gives a monotone map x1 -> -u that is inverted by
    interpolation: v(z1, z2) = x1 with -u(x1, z2) = z1.
    """
    a, b = x1_range
    xs = np.linspace(a, b, n_x1)
    x2_vals = np.asarray(x2_vals, float)
    # common z1 range: intersection over lines so the grid is rectangular
    z_lo, z_hi = -np.inf, np.inf
    samples = []
    for x2 in x2_vals:
        uu = np.asarray(u_func(xs, np.full_like(xs, x2)), float)
        if np.any(np.diff(uu) <= 0):
            raise RotationError("not graph-representable after rotation: "
                                "u_1 <= 0 on a grid line")
        z = -uu  # decreasing in x1
        samples.append(z)
        z_lo = max(z_lo, z.min())
        z_hi = min(z_hi, z.max())
    if z_hi <= z_lo:
        raise RotationError("rotated ranges do not overlap across grid lines")
    if n_z1 <= 0:
        n_z1 = n_x1
    z1_axis = np.linspace(z_lo, z_hi, n_z1)
    z1g, z2g = np.meshgrid(z1_axis, x2_vals)
    v = np.empty_like(z1g)
    for k in range(len(x2_vals)):
        z = samples[k]
        # z decreasing in x1: flip for np.interp
        v[k] = np.interp(z1_axis, z[::-1], xs[::-1])
    v_hat = v - eps * z1g - c
    return RotatedGraph(z1g, z2g, v, v_hat, float(eps), float(c))


def rotated_gradient_to_primal(dv: np.ndarray) -> np.ndarray:
    """Map Dv = (v_1, v_2) to Du = (-1/v_1, v_2/v_1)."""
    dv = np.asarray(dv, float)
    v1, v2 = dv[..., 0], dv[..., 1]
    return np.stack([-1.0 / v1, v2 / v1], axis=-1)
