"""Monge-Ampere measures of grid functions via the lifted lower hull.

The piecewise-linear interpolant of the node values is the lower convex
hull of the lifted points (x_i, u_i).  Its normal mapping assigns to each
hull vertex the polygon of incident facet gradients; the Monge-Ampere
mass of a node set is the total area of those polygons (Aleksandrov /
Oliker-Prussner cells).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, List, Optional, Tuple

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .convexity import ConvexGridFunction


class DegenerateHullError(ValueError):
    pass


@dataclass
class SubdifferentialImage:
    """Polygon in gradient space attached to a node (or node set)."""

    nodes: List[Tuple[int, int]]
    polygon: np.ndarray  # (m, 2) hull vertices, counterclockwise
    area: float


@dataclass
class _HullData:
    node_index: np.ndarray          # flat indices of lifted points
    facet_gradients: np.ndarray     # (F, 2)
    facet_vertices: np.ndarray      # (F, 3) indices into node_index
    degenerate: bool


def _lift_and_hull(u: ConvexGridFunction) -> _HullData:
    region = u.region
    idx = np.flatnonzero(region.ravel())
    x1 = u.domain.x1.ravel()[idx]
    x2 = u.domain.x2.ravel()[idx]
    z = u.values.ravel()[idx]
    pts = np.column_stack([x1, x2, z])
    try:
        hull = ConvexHull(pts)
    except QhullError:
        return _HullData(idx, np.zeros((0, 2)), np.zeros((0, 3), int), True)
    eq = hull.equations
    lower = eq[:, 2] < -1e-12
    c = eq[lower, 2]
    grads = np.column_stack([-eq[lower, 0] / c, -eq[lower, 1] / c])
    simplices = hull.simplices[lower]
    return _HullData(idx, grads, simplices, False)


def _cells(u: ConvexGridFunction, wanted_flat: Optional[np.ndarray] = None):
    """Map flat node index -> list of incident lower-facet gradients."""
    hd = _lift_and_hull(u)
    cells: dict = {}
    if hd.degenerate:
        return cells, hd
    flat_of_vertex = hd.node_index  # maps hull point id -> flat grid index
    want = None if wanted_flat is None else set(int(i) for i in wanted_flat)
    for f in range(len(hd.facet_vertices)):
        g = hd.facet_gradients[f]
        for v in hd.facet_vertices[f]:
            fi = int(flat_of_vertex[v])
            if want is not None and fi not in want:
                continue
            cells.setdefault(fi, []).append(g)
    return cells, hd


def _poly_area(points: np.ndarray) -> Tuple[np.ndarray, float]:
    """Convex hull of 2D points and its shoelace area."""
    if len(points) < 3:
        return np.asarray(points, float).reshape(-1, 2), 0.0
    pts = np.asarray(points, float)
    try:
        hull = ConvexHull(pts)
    except QhullError:
        return pts, 0.0
    poly = pts[hull.vertices]
    x, y = poly[:, 0], poly[:, 1]
    area = 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))
    return poly, float(area)


def subdifferential(u: ConvexGridFunction, node: Tuple[int, int]) -> SubdifferentialImage:
    """Subdifferential cell of the PL interpolant at one node."""
    flat = int(np.ravel_multi_index(node, u.domain.shape))
    cells, hd = _cells(u, wanted_flat=[flat])
    grads = cells.get(flat, [])
    if not grads:
        # node not a hull vertex: single supporting gradient from a facet
        g = _containing_facet_gradient(u, node, hd)
        return SubdifferentialImage([node], g.reshape(1, 2), 0.0)
    poly, area = _poly_area(np.asarray(grads))
    return SubdifferentialImage([node], poly, area)


def _containing_facet_gradient(u: ConvexGridFunction, node, hd: _HullData) -> np.ndarray:
    if hd.degenerate or len(hd.facet_gradients) == 0:
        return np.zeros(2)
    i, j = node
    x = np.array([u.domain.x1[i, j], u.domain.x2[i, j]])
    # the facet whose plane is highest at x supports the hull there
    idx = hd.node_index
    x1 = u.domain.x1.ravel()[idx]
    x2 = u.domain.x2.ravel()[idx]
    z = u.values.ravel()[idx]
    v0 = hd.facet_vertices[:, 0]
    offs = z[v0] - hd.facet_gradients[:, 0] * x1[v0] - hd.facet_gradients[:, 1] * x2[v0]
    vals = hd.facet_gradients[:, 0] * x[0] + hd.facet_gradients[:, 1] * x[1] + offs
    return hd.facet_gradients[int(np.argmax(vals))]


def ma_measure(u: ConvexGridFunction, node_set: np.ndarray) -> Tuple[float, bool]:
    """Total Monge-Ampere mass of the node set (boolean mask or index list).

    Returns (mass, degenerate_flag).  Mass is the summed area of the
    subdifferential cells; degenerate lifted data (coplanar) yields 0.
    """
    if node_set.dtype == bool:
        flat = np.flatnonzero(node_set.ravel())
    else:
        flat = np.asarray([np.ravel_multi_index(tuple(n), u.domain.shape)
                           for n in node_set])
    cells, hd = _cells(u, wanted_flat=flat)
    if hd.degenerate:
        return 0.0, True
    total = 0.0
    for fi in flat:
        grads = cells.get(int(fi))
        if grads:
            _, area = _poly_area(np.asarray(grads))
            total += area
    return total, False


def normal_map_polygon(u: ConvexGridFunction) -> SubdifferentialImage:
    """Convex hull of all lower-facet gradients: the normal-map image."""
    hd = _lift_and_hull(u)
    if hd.degenerate or len(hd.facet_gradients) == 0:
        return SubdifferentialImage([], np.zeros((0, 2)), 0.0)
    poly, area = _poly_area(hd.facet_gradients)
    return SubdifferentialImage([], poly, area)


def min_norm_subgradients_bulk(u: ConvexGridFunction, nodes) -> dict:
    """Minimal-norm subgradients for many nodes from a single lifted hull."""
    shape = u.domain.shape
    flats = [int(np.ravel_multi_index(n, shape)) for n in nodes]
    cells, hd = _cells(u, wanted_flat=flats)
    out = {}
    for n, fi in zip(nodes, flats):
        grads = cells.get(fi)
        if grads:
            poly, _ = _poly_area(np.asarray(grads))
            out[tuple(n)] = _min_norm_point(poly) if len(poly) > 1 else poly[0]
        else:
            out[tuple(n)] = _containing_facet_gradient(u, tuple(n), hd)
    return out


def min_norm_subgradient(u: ConvexGridFunction, node: Tuple[int, int]) -> np.ndarray:
    """Minimal-norm element of the discrete subdifferential at a node."""
    img = subdifferential(u, node)
    pts = img.polygon
    if len(pts) == 1:
        return pts[0]
    return _min_norm_point(pts)


def _min_norm_point(pts: np.ndarray) -> np.ndarray:
    pts = np.asarray(pts, float)
    if len(pts) == 0:
        return np.zeros(2)
    if len(pts) >= 3:
        if _origin_inside(pts):
            return np.zeros(2)
    best = pts[int(np.argmin((pts ** 2).sum(axis=1)))]
    bd = float((best ** 2).sum())
    m = len(pts)
    for k in range(m):
        a, b = pts[k], pts[(k + 1) % m]
        ab = b - a
        denom = float((ab ** 2).sum())
        if denom == 0:
            continue
        t = np.clip(-float(a @ ab) / denom, 0.0, 1.0)
        p = a + t * ab
        d = float((p ** 2).sum())
        if d < bd:
            bd, best = d, p
    return best


def _origin_inside(poly: np.ndarray) -> bool:
    poly2, area = _poly_area(poly)
    if area == 0.0:
        return False
    m = len(poly2)
    sign = 0
    for k in range(m):
        a, b = poly2[k], poly2[(k + 1) % m]
        cr = a[0] * (b[1] - a[1]) - a[1] * (b[0] - a[0])
        s = 1 if cr > 0 else (-1 if cr < 0 else 0)
        if s == 0:
            continue
        if sign == 0:
            sign = s
        elif s != sign:
            return False
    return True
