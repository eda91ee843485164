"""Discrete convex calculus: Hessians, certificates, projection, envelopes."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .grid import GridDomain, shift


class StencilError(ValueError):
    pass


class ConvexityError(ValueError):
    pass


def default_tau_psd(values: np.ndarray, h: float) -> float:
    """One ulp-amplified second difference: 1e-8 * scale(u) / h^2."""
    scale = float(np.nanmax(np.abs(values)))
    return 1e-8 * max(scale, 1.0) / h ** 2


def hessian_fields(values: np.ndarray, h: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Centered (u_xx, u_yy, u_xy); valid wherever the 9-point stencil exists."""
    v = values
    uxx = (shift(v, 0, 1) - 2.0 * v + shift(v, 0, -1)) / h ** 2
    uyy = (shift(v, 1, 0) - 2.0 * v + shift(v, -1, 0)) / h ** 2
    uxy = (shift(v, 1, 1) - shift(v, 1, -1) - shift(v, -1, 1) + shift(v, -1, -1)) / (4.0 * h ** 2)
    return uxx, uyy, uxy


def diagonal_second_differences(values: np.ndarray, h: float) -> Tuple[np.ndarray, np.ndarray]:
    v = values
    d1 = (shift(v, 1, 1) + shift(v, -1, -1) - 2.0 * v) / (2.0 * h ** 2)
    d2 = (shift(v, 1, -1) + shift(v, -1, 1) - 2.0 * v) / (2.0 * h ** 2)
    return d1, d2


@dataclass
class ConvexityCertificate:
    passed: bool
    tau_psd: float
    worst_eigenvalue: float
    worst_eig_node: Tuple[int, int]
    worst_second_difference: float
    worst_dir_node: Tuple[int, int]
    n_violations: int

    def summary(self) -> dict:
        return {
            "passed": bool(self.passed),
            "tau_psd": float(self.tau_psd),
            "worst_eigenvalue": float(self.worst_eigenvalue),
            "worst_second_difference": float(self.worst_second_difference),
            "n_violations": int(self.n_violations),
        }


@dataclass
class ConvexGridFunction:
    """Node values over a region of the grid, with a convexity certificate."""

    domain: GridDomain
    values: np.ndarray
    region: Optional[np.ndarray] = None
    certificate: Optional[ConvexityCertificate] = None

    def __post_init__(self):
        if self.region is None:
            self.region = self.domain.in_omega
        vals = self.values[self.region]
        if not np.all(np.isfinite(vals)):
            raise ConvexityError("grid function has non-finite values on its region")

    @property
    def h(self) -> float:
        return self.domain.h

    @property
    def interior(self) -> np.ndarray:
        return self.domain.interior_of(self.region)

    def copy_with(self, values: np.ndarray) -> "ConvexGridFunction":
        return ConvexGridFunction(self.domain, values, self.region)

    def certify(self, tau_psd: Optional[float] = None) -> ConvexityCertificate:
        self.certificate = certify_convex(self, tau_psd)
        return self.certificate


def from_callable(domain: GridDomain, func, region=None) -> ConvexGridFunction:
    if region is None:
        region = domain.in_omega
    return ConvexGridFunction(domain, domain.sample(func, region), region)


def discrete_hessian(u: ConvexGridFunction, node: Tuple[int, int]) -> np.ndarray:
    """2x2 centered-difference Hessian at a single interior node."""
    i, j = node
    if not u.interior[i, j]:
        raise StencilError(f"stencil incomplete at node {node}")
    uxx, uyy, uxy = hessian_fields(u.values, u.h)
    return np.array([[uxx[i, j], uxy[i, j]], [uxy[i, j], uyy[i, j]]])


def certify_convex(u: ConvexGridFunction, tau_psd: Optional[float] = None) -> ConvexityCertificate:
    """PSD Hessian plus 1D convexity along axes and both diagonals."""
    if tau_psd is None:
        tau_psd = default_tau_psd(u.values[u.region], u.h)
    interior = u.interior
    uxx, uyy, uxy = hessian_fields(u.values, u.h)
    eigmin = 0.5 * (uxx + uyy) - np.sqrt(0.25 * (uxx - uyy) ** 2 + uxy ** 2)
    d1, d2 = diagonal_second_differences(u.values, u.h)
    dirmin = np.minimum(np.minimum(uxx, uyy), np.minimum(d1, d2))

    eigmin = np.where(interior, eigmin, np.inf)
    dirmin = np.where(interior, dirmin, np.inf)
    ie = np.unravel_index(np.argmin(eigmin), eigmin.shape)
    idd = np.unravel_index(np.argmin(dirmin), dirmin.shape)
    worst_eig = float(eigmin[ie])
    worst_dir = float(dirmin[idd])
    nviol = int(np.count_nonzero((eigmin < -tau_psd) | (dirmin < -tau_psd)))
    return ConvexityCertificate(
        passed=(worst_eig >= -tau_psd and worst_dir >= -tau_psd),
        tau_psd=float(tau_psd),
        worst_eigenvalue=worst_eig,
        worst_eig_node=(int(ie[0]), int(ie[1])),
        worst_second_difference=worst_dir,
        worst_dir_node=(int(idd[0]), int(idd[1])),
        n_violations=nviol,
    )


def det_and_cofactor(u: ConvexGridFunction):
    """det D^2 u and the cofactor matrix fields at interior nodes.

    Returns (d, (U11, U12, U22), certificate).  In 2D the cofactor matrix
    is [[u_yy, -u_xy], [-u_xy, u_xx]].
    """
    cert = u.certificate if u.certificate is not None else certify_convex(u)
    uxx, uyy, uxy = hessian_fields(u.values, u.h)
    d = uxx * uyy - uxy ** 2
    mask = ~u.interior
    for a in (d, uxx, uyy, uxy):
        a[mask] = np.nan
    return d, (uyy, -uxy, uxx), cert


# ----------------------------------------------------------------------
# Projection onto the discretely-convex cone (Dykstra)
# ----------------------------------------------------------------------

_DIRS = ((0, 1), (1, 0), (1, 1), (1, -1))


@dataclass
class ProjectionReport:
    converged: bool
    iterations: int
    residual: float  # worst constraint violation at exit


def project_convex(u: ConvexGridFunction, tau_psd: Optional[float] = None,
                   max_iter: int = 300, free: Optional[np.ndarray] = None):
    """Nearest certified-convex function with the boundary trace held fixed.

    Dykstra's alternating projections over the directional
    second-difference half-spaces (axes and diagonals), grouped into
    non-overlapping vectorizable families; if the sweeps have not
    certified by max_iter, the convex envelope of the current iterate is
    taken as a guaranteed-convex fallback.  Returns (function, report).
    """
    if tau_psd is None:
        tau_psd = default_tau_psd(u.values[u.region], u.h)
    cert = certify_convex(u, tau_psd)
    if cert.passed:
        out = u.copy_with(u.values.copy())
        out.certificate = cert
        return out, ProjectionReport(True, 0, max(0.0, -cert.worst_second_difference))

    region = u.region
    interior = u.interior
    if free is None:
        free = interior
    v = u.values.copy()
    h2 = u.h ** 2

    # family index -> (direction, phase); Dykstra corrections per family
    families = []
    ii, jj = np.indices(v.shape)
    for (di, dj) in _DIRS:
        phase_coord = jj if dj != 0 else ii
        for r in range(3):
            centers = interior & (phase_coord % 3 == r)
            families.append(((di, dj), centers))
    corrections = [np.zeros_like(v) for _ in families]
    # per-family correction for the three stencil slots (center, +, -)
    corr = [(np.zeros_like(v), np.zeros_like(v), np.zeros_like(v)) for _ in families]

    free_f = free.astype(float)
    it = 0
    for it in range(1, max_iter + 1):
        worst = 0.0
        for k, ((di, dj), centers) in enumerate(families):
            cc, cp, cm = corr[k]
            # remove previous correction (same free-mask as when applied)
            v = v - _apply_stencil(cc, cp, cm, di, dj, free_f)
            # constraint: v[p+d] + v[p-d] - 2 v[p] >= 0 at centers
            s = shift(v, di, dj, fill=0.0) + shift(v, -di, -dj, fill=0.0) - 2.0 * v
            viol = np.where(centers, np.minimum(s, 0.0), 0.0)
            # effective norm^2 of the constraint over free coordinates
            wc = free_f
            wp = shift(free_f, di, dj, fill=0.0)
            wm = shift(free_f, -di, -dj, fill=0.0)
            nrm2 = 4.0 * wc + wp + wm
            lam = np.where((centers) & (nrm2 > 0), -viol / np.maximum(nrm2, 1.0), 0.0)
            ncc = -2.0 * lam * wc
            ncp = lam  # applied at p+d, masked by freeness there
            ncm = lam
            corr[k] = (ncc, ncp, ncm)
            v = v + _apply_stencil(ncc, ncp, ncm, di, dj, free_f)
            worst = max(worst, float(-viol.min()) if viol.size else 0.0)
        if worst <= 0.25 * tau_psd * h2:
            break
    out = u.copy_with(v)
    cert = certify_convex(out, tau_psd)
    if not cert.passed:
        # envelope fallback: largest convex minorant of the iterate
        reg = u.region
        env = envelope_from_points(u.domain.x1[reg], u.domain.x2[reg], v[reg],
                                   u.domain.x1[reg], u.domain.x2[reg])
        v2 = v.copy()
        v2[reg] = env
        fixed = reg & ~free
        v2[fixed] = u.values[fixed]
        out = u.copy_with(v2)
        cert = certify_convex(out, tau_psd)
    out.certificate = cert
    report = ProjectionReport(cert.passed, it, worst / h2)
    return out, report


def _apply_stencil(cc, cp, cm, di, dj, free_f=None):
    """Scatter center/plus/minus correction fields onto the grid."""
    upd = cc.copy()
    upd += shift(cp, -di, -dj, fill=0.0)
    upd += shift(cm, di, dj, fill=0.0)
    if free_f is not None:
        upd *= free_f
    return upd


# ----------------------------------------------------------------------
# Convex envelopes via the lifted lower hull
# ----------------------------------------------------------------------

def lower_hull_planes(x1: np.ndarray, x2: np.ndarray, vals: np.ndarray) -> np.ndarray:
    """Supporting planes (p, q, r) with z = p x + q y + r of the lower hull."""
    pts = np.column_stack([x1, x2, vals])
    try:
        hull = ConvexHull(pts)
    except QhullError:
        # coplanar lifted data (affine trace): joggle to recover the planes
        hull = ConvexHull(pts, qhull_options="QJ")
    eq = hull.equations  # a x + b y + c z + d = 0, outward normals
    lower = eq[:, 2] < -1e-12
    a, b, c, d = eq[lower, 0], eq[lower, 1], eq[lower, 2], eq[lower, 3]
    return np.column_stack([-a / c, -b / c, -d / c])


def envelope_from_points(x1, x2, vals, qx1, qx2, chunk: int = 4096) -> np.ndarray:
    """Convex envelope of the data points, evaluated at query nodes.

    The lower hull of the lifted points is the largest convex function
    below the data; at any query point it equals the max over the hull's
    facet planes.
    """
    planes = lower_hull_planes(np.asarray(x1, float).ravel(),
                               np.asarray(x2, float).ravel(),
                               np.asarray(vals, float).ravel())
    qx1 = np.asarray(qx1, float).ravel()
    qx2 = np.asarray(qx2, float).ravel()
    out = np.empty(qx1.size)
    for s in range(0, qx1.size, chunk):
        e = min(s + chunk, qx1.size)
        z = planes[:, 0] * qx1[s:e, None] + planes[:, 1] * qx2[s:e, None] + planes[:, 2]
        out[s:e] = z.max(axis=1)
    return out


def envelope_of_boundary(u_or_domain, boundary_values=None) -> np.ndarray:
    """Convex envelope of the boundary trace, on the full Omega region."""
    if isinstance(u_or_domain, ConvexGridFunction):
        dom = u_or_domain.domain
        bmask = dom.omega_boundary
        bvals = u_or_domain.values[bmask]
    else:
        dom = u_or_domain
        bmask = dom.omega_boundary
        bvals = boundary_values[bmask] if boundary_values.shape == bmask.shape \
            else np.asarray(boundary_values)
    vals = envelope_from_points(dom.x1[bmask], dom.x2[bmask], bvals,
                                dom.x1[dom.in_omega], dom.x2[dom.in_omega])
    out = np.full(dom.shape, np.nan)
    out[dom.in_omega] = vals
    return out
