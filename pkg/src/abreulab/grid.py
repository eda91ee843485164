"""Uniform grids over an enclosing disc with a convex inner domain.

The computational lattice covers the closed disc B_R(0).  Nodes are
classified into four disjoint masks:

* ``omega_interior`` -- inside the inner domain with all 8 neighbours inside,
* ``omega_boundary`` -- inside the inner domain but next to its boundary,
* ``band``           -- in B_R but outside the inner domain,
* ``ball_boundary``  -- in B_R with an 8-neighbour outside B_R.

Grid functions are stored as full ``(ny, nx)`` arrays with NaN outside
their region of definition.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import shapely
from shapely.geometry import Polygon


class GridError(ValueError):
    pass


def _disc_polygon(radius: float, n: int = 128) -> np.ndarray:
    ang = 2.0 * np.pi * np.arange(n) / n
    return radius * np.stack([np.cos(ang), np.sin(ang)], axis=1)


def _check_convex_ccw(verts: np.ndarray) -> None:
    n = len(verts)
    if n < 3:
        raise GridError("polygon needs at least 3 vertices")
    e = np.roll(verts, -1, axis=0) - verts
    cross = e[:, 0] * np.roll(e, -1, axis=0)[:, 1] - e[:, 1] * np.roll(e, -1, axis=0)[:, 0]
    if np.any(cross <= 0):
        raise GridError("polygon vertices must be convex and counterclockwise")


@dataclass
class GridDomain:
    """Convex domain Omega inside an enclosing disc B_R, on a uniform grid."""

    polygon_vertices: np.ndarray
    ball_radius: float
    spacing: float
    disc_radius: Optional[float] = None  # set when Omega is a disc

    # filled in __post_init__
    x1: np.ndarray = field(init=False, repr=False)
    x2: np.ndarray = field(init=False, repr=False)
    in_ball: np.ndarray = field(init=False, repr=False)
    in_omega: np.ndarray = field(init=False, repr=False)
    omega_interior: np.ndarray = field(init=False, repr=False)
    omega_boundary: np.ndarray = field(init=False, repr=False)
    band: np.ndarray = field(init=False, repr=False)
    ball_boundary: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        h = float(self.spacing)
        R = float(self.ball_radius)
        if h <= 0:
            raise GridError("spacing must be positive")
        verts = np.asarray(self.polygon_vertices, dtype=float)
        _check_convex_ccw(verts)
        self.polygon_vertices = verts
        self._poly = Polygon(verts)

        # strict containment: Omega must sit well inside the disc
        rmax = np.hypot(verts[:, 0], verts[:, 1]).max()
        if self.disc_radius is not None:
            rmax = self.disc_radius
        if R - rmax <= 2.0 * h:
            raise GridError("enclosing disc too tight: need dist(Omega, circle) > 2h")

        n = int(np.floor(R / h + 1e-12))
        coords = h * np.arange(-n, n + 1)
        self.x1, self.x2 = np.meshgrid(coords, coords)  # x1 varies along axis=1
        r = np.hypot(self.x1, self.x2)
        self.in_ball = r <= R + 1e-12
        if self.disc_radius is not None:
            self.in_omega = r <= self.disc_radius + 1e-12
        else:
            pts = shapely.points(self.x1.ravel(), self.x2.ravel())
            self.in_omega = shapely.covers(self._poly, pts).reshape(self.x1.shape)
        self.in_omega &= self.in_ball

        self.omega_interior = self.in_omega & _all_neighbors(self.in_omega)
        self.omega_boundary = self.in_omega & ~self.omega_interior
        ball_inner = self.in_ball & _all_neighbors(self.in_ball)
        self.ball_boundary = self.in_ball & ~ball_inner
        self.band = self.in_ball & ~self.in_omega & ~self.ball_boundary

        if not self.omega_interior.any():
            raise GridError("grid too coarse: no interior nodes in Omega")
        masks = (self.omega_interior.astype(int) + self.omega_boundary
                 + self.band + self.ball_boundary)
        assert np.all(masks[self.in_ball] == 1), "masks must partition B_R nodes"

    @classmethod
    def disc(cls, radius: float, ball_radius: float, spacing: float,
             n_poly: int = 128) -> "GridDomain":
        return cls(_disc_polygon(radius, n_poly), ball_radius, spacing,
                   disc_radius=float(radius))

    @classmethod
    def polygon(cls, vertices, ball_radius: float, spacing: float) -> "GridDomain":
        return cls(np.asarray(vertices, dtype=float), ball_radius, spacing)

    @property
    def h(self) -> float:
        return float(self.spacing)

    @property
    def shape(self):
        return self.x1.shape

    def boundary_distance(self, x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
        """Distance to the boundary of Omega (positive inside and outside)."""
        if self.disc_radius is not None:
            return np.abs(self.disc_radius - np.hypot(x1, x2))
        pts = shapely.points(np.asarray(x1, float).ravel(), np.asarray(x2, float).ravel())
        d = shapely.distance(self._poly.exterior, pts)
        return d.reshape(np.shape(x1))

    def ball_distance(self, x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
        """Distance to the enclosing circle."""
        return np.abs(self.ball_radius - np.hypot(x1, x2))

    def sample(self, func: Callable, region: Optional[np.ndarray] = None) -> np.ndarray:
        """Evaluate ``func(x1, x2)`` on the region (default: all of Omega)."""
        if region is None:
            region = self.in_omega
        out = np.full(self.shape, np.nan)
        out[region] = func(self.x1[region], self.x2[region])
        return out

    def interior_of(self, region: np.ndarray) -> np.ndarray:
        """Nodes of ``region`` whose full 8-neighbourhood lies in ``region``."""
        return region & _all_neighbors(region)


def _all_neighbors(mask: np.ndarray) -> np.ndarray:
    """True where all 8 neighbours exist and are inside ``mask``."""
    m = np.zeros_like(mask)
    inner = np.ones(mask.shape, dtype=bool)
    inner[[0, -1], :] = False
    inner[:, [0, -1]] = False
    ok = np.ones(mask.shape, dtype=bool)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di == 0 and dj == 0:
                continue
            shifted = np.zeros_like(mask)
            src = mask[_sl(di), _sl(dj)]
            shifted[_sl(-di), _sl(-dj)] = src
            ok &= shifted
    m[inner] = ok[inner]
    return m & mask


def _sl(d: int):
    if d < 0:
        return slice(None, d)
    if d > 0:
        return slice(d, None)
    return slice(None)


def shift(a: np.ndarray, di: int, dj: int, fill=np.nan) -> np.ndarray:
    """Array with entry [i, j] equal to a[i + di, j + dj]."""
    out = np.full_like(a, fill, dtype=float)
    out[_sl(-di), _sl(-dj)] = a[_sl(di), _sl(dj)]
    return out
