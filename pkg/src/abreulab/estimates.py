"""A priori estimate diagnostics: determinant bounds, duality, strict convexity.

These never abort a solve; they measure the quantities the theory bounds
-- sup (-u)^2 det D^2 u on normalized sections, its dual and rotated
analogues, and the modulus of convexity -- and attach them to reports so
delta- and h-dependence can be compared across runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np

from .barrier import BarrierG
from .convexity import ConvexGridFunction, hessian_fields
from .grid import shift
from .legendre import (DualGrid, LegendreResult, RotatedGraph, legendre_transform,
                       modulus_of_convexity, rotate_graph, section)


@dataclass
class DiagnosticReport:
    delta: float
    h: float
    entries: dict = field(default_factory=dict)

    def set(self, name: str, value, section_ref: str = ""):
        self.entries[name] = {"value": value, "targets": section_ref,
                              "delta": self.delta, "h": self.h}

    def to_dict(self) -> dict:
        return {"delta": self.delta, "h": self.h, "entries": self.entries}


# ----------------------------------------------------------------------
# Primal determinant bound (normalized sections)
# ----------------------------------------------------------------------

def primal_det_bound(u: ConvexGridFunction, center: Tuple[int, int],
                     delta: float) -> Optional[float]:
    """sup over a normalized section of (-u_bar)^2 det D^2 u.

    u_bar = u - delta - a_x < 0 inside S_{delta,u}(x), = 0 on its rim.
    """
    s = section(u, center, delta)
    inner = u.domain.interior_of(s.nodes) & u.interior
    if not inner.any():
        return None
    i, j = center
    x0 = (u.domain.x1[i, j], u.domain.x2[i, j])
    p = s.tangent_gradient
    a = s.tangent_value + p[0] * (u.domain.x1 - x0[0]) + p[1] * (u.domain.x2 - x0[1])
    ubar = u.values - delta - a
    uxx, uyy, uxy = hessian_fields(u.values, u.h)
    det = uxx * uyy - uxy ** 2
    vals = (np.maximum(-ubar[inner], 0.0) ** 2) * np.maximum(det[inner], 0.0)
    return float(np.max(vals))


def primal_det_bound_domain(u: ConvexGridFunction, delta_frac: float = 0.25,
                            n_centers: int = 5) -> float:
    """Max of the section diagnostic over a few spread-out centers."""
    idx = np.argwhere(u.interior)
    if len(idx) == 0:
        return 0.0
    osc = float(np.nanmax(u.values[u.region]) - np.nanmin(u.values[u.region]))
    delta = max(delta_frac * osc, 1e-12)
    picks = idx[np.linspace(0, len(idx) - 1, n_centers).astype(int)]
    best = 0.0
    for (i, j) in picks:
        v = primal_det_bound(u, (int(i), int(j)), delta)
        if v is not None:
            best = max(best, v)
    return best


# ----------------------------------------------------------------------
# Dual determinant bound and dual Euler residual
# ----------------------------------------------------------------------

def _hess_uniform(vals: np.ndarray, h1: float, h2: float):
    """Anisotropic centered Hessian of a plain 2D array (axis 0 = dim 2)."""
    vxx = (np.roll(vals, -1, 1) - 2 * vals + np.roll(vals, 1, 1)) / h1 ** 2
    vyy = (np.roll(vals, -1, 0) - 2 * vals + np.roll(vals, 1, 0)) / h2 ** 2
    vxy = (np.roll(np.roll(vals, -1, 0), -1, 1) - np.roll(np.roll(vals, -1, 0), 1, 1)
           - np.roll(np.roll(vals, 1, 0), -1, 1) + np.roll(np.roll(vals, 1, 0), 1, 1)) \
        / (4 * h1 * h2)
    edge = np.zeros(vals.shape, bool)
    edge[[0, -1], :] = True
    edge[:, [0, -1]] = True
    for a in (vxx, vyy, vxy):
        a[edge] = np.nan
    return vxx, vyy, vxy


@dataclass
class DualDiagnostics:
    det_bound: Optional[float]
    dual_residual_linf: Optional[float]
    clipped: bool


def dual_det_bound(u: ConvexGridFunction, bar: BarrierG,
                   f_func: Optional[Callable] = None,
                   n_dual: int = 65, delta_frac: float = 0.25) -> DualDiagnostics:
    """Dual-section diagnostic sup (-u*_bar)^2 det D^2 u* and (3.3) residual."""
    res = legendre_transform(u, DualGrid.covering_gradients(u, n_dual))
    y1, y2 = res.dual.y1, res.dual.y2
    h1 = float(y1[0, 1] - y1[0, 0])
    h2 = float(y2[1, 0] - y2[0, 0])
    us = res.values
    sxx, syy, sxy = _hess_uniform(us, h1, h2)
    dstar = sxx * syy - sxy ** 2
    valid = np.isfinite(dstar) & (dstar > 0)

    # normalized dual section around the grid center
    ci, cj = us.shape[0] // 2, us.shape[1] // 2
    gy1 = (np.roll(us, -1, 1) - np.roll(us, 1, 1)) / (2 * h1)
    gy2 = (np.roll(us, -1, 0) - np.roll(us, 1, 0)) / (2 * h2)
    p = (gy1[ci, cj], gy2[ci, cj])
    a = us[ci, cj] + p[0] * (y1 - y1[ci, cj]) + p[1] * (y2 - y2[ci, cj])
    osc = float(np.nanmax(us) - np.nanmin(us))
    dsec = max(delta_frac * osc, 1e-12)
    ubar = us - dsec - a
    sec = ubar < 0
    inner = sec & valid
    bound = None
    if inner.any():
        bound = float(np.max((np.maximum(-ubar[inner], 0.0) ** 2) * dstar[inner]))

    resid = None
    if f_func is not None:
        # dual Euler equation: u*^{ij} w*_ij = -f(Du*)
        wstar = np.where(valid, bar.dual_weight(np.maximum(dstar, 1e-300)), np.nan)
        wxx, wyy, wxy = _hess_uniform(wstar, h1, h2)
        lhs = syy * wxx + sxx * wyy - 2 * sxy * wxy  # cofactor contraction
        fx = np.asarray(f_func(gy1, gy2), float)
        r = lhs + fx
        margin = np.zeros(us.shape, bool)
        m = max(3, us.shape[0] // 6)
        margin[m:-m, m:-m] = True
        ok = margin & np.isfinite(r)
        if ok.any():
            resid = float(np.max(np.abs(r[ok])))
    return DualDiagnostics(bound, resid, res.clipped)


def det_duality_probe(u: ConvexGridFunction, n_dual: int = 65) -> float:
    """Worst |det D^2 u(x) * det D^2 u*(Du(x)) - 1| over sampled nodes."""
    res = legendre_transform(u, DualGrid.covering_gradients(u, n_dual))
    y1, y2 = res.dual.y1, res.dual.y2
    h1 = float(y1[0, 1] - y1[0, 0])
    h2 = float(y2[1, 0] - y2[0, 0])
    sxx, syy, sxy = _hess_uniform(res.values, h1, h2)
    dstar = sxx * syy - sxy ** 2
    uxx, uyy, uxy = hessian_fields(u.values, u.h)
    det = uxx * uyy - uxy ** 2
    # map each well-interior primal node through Du and sample det* nearby
    margin = u.interior.copy()
    for _ in range(2):
        margin = u.domain.interior_of(margin)
    g1 = (shift(u.values, 0, 1) - shift(u.values, 0, -1)) / (2 * u.h)
    g2 = (shift(u.values, 1, 0) - shift(u.values, -1, 0)) / (2 * u.h)
    worst = 0.0
    ii, jj = np.nonzero(margin)
    for k in range(0, len(ii), max(1, len(ii) // 200)):
        i, j = ii[k], jj[k]
        a = int(round((g2[i, j] - y2[0, 0]) / h2))
        b = int(round((g1[i, j] - y1[0, 0]) / h1))
        if 1 <= a < dstar.shape[0] - 1 and 1 <= b < dstar.shape[1] - 1 \
                and np.isfinite(dstar[a, b]) and det[i, j] > 0:
            worst = max(worst, abs(det[i, j] * dstar[a, b] - 1.0))
    return worst


# ----------------------------------------------------------------------
# Rotated determinant bound (section 4)
# ----------------------------------------------------------------------

@dataclass
class RotatedDiagnostics:
    det_bound: Optional[float]
    g_hat_max: Optional[float]
    residual_linf: Optional[float]
    omega_hat_empty: bool


def rotated_det_bound(u_func: Callable, x1_range, x2_vals, eps: float, c: float,
                      f_func: Optional[Callable] = None,
                      delta: float = 1e-6) -> RotatedDiagnostics:
    """sup over Omega-hat = {v-hat < 0} of (-v-hat)^2 det D^2 v-hat, plus g-hat.

    Also the residual of the rotated Euler equation
    V^{ij}(d^{-1})_{ij} = g - f1 z1 v1 + f1 z1 + f, evaluated on
    {v1^(-4) d > delta}.
    """
    rg = rotate_graph(u_func, x1_range, np.asarray(x2_vals, float),
                      eps=eps, c=c)
    z1, z2, v, vh = rg.z1, rg.z2, rg.v, rg.v_hat
    h1 = float(z1[0, 1] - z1[0, 0])
    h2 = float(z2[1, 0] - z2[0, 0]) if z1.shape[0] > 1 else 1.0
    vxx, vyy, vxy = _hess_uniform(v, h1, h2)
    d = vxx * vyy - vxy ** 2
    om = vh < 0
    if not np.any(om & np.isfinite(d)):
        return RotatedDiagnostics(None, None, None, True)
    sel = om & np.isfinite(d)
    bound = float(np.max((np.maximum(-vh[sel], 0.0) ** 2) * np.maximum(d[sel], 0.0)))

    v1 = np.gradient(v, h2, h1)[1]
    # g-hat = 2 (log d)_1 / (v1) - 4 v11 / v1^2   (v-hat_1 + eps = v_1)
    with np.errstate(invalid="ignore", divide="ignore"):
        logd = np.where(d > 0, np.log(np.maximum(d, 1e-300)), np.nan)
        logd1 = np.gradient(logd, h2, h1)[1]
        ghat = 2.0 * logd1 / v1 - 4.0 * vxx / v1 ** 2
    gmax = float(np.nanmax(np.abs(ghat[sel]))) if np.any(np.isfinite(ghat[sel])) else None

    resid = None
    if f_func is not None:
        with np.errstate(invalid="ignore", divide="ignore"):
            dinv = np.where(d > 0, 1.0 / d, np.nan)
        pxx, pyy, pxy = _hess_uniform(dinv, h1, h2)
        lhs = vyy * pxx + vxx * pyy - 2 * vxy * pxy
        fx = np.asarray(f_func(v, z2), float)
        dq = 1e-6
        f1 = (np.asarray(f_func(v + dq, z2), float) - np.asarray(f_func(v - dq, z2), float)) / (2 * dq)
        rhs = ghat - f1 * z1 * v1 + f1 * z1 + fx
        on_set = sel & (np.where(v1 > 0, v1, np.nan) ** -4.0 * d > delta)
        r = lhs - rhs
        ok = on_set & np.isfinite(r)
        if ok.any():
            resid = float(np.max(np.abs(r[ok])))
    return RotatedDiagnostics(bound, gmax, resid, False)


# ----------------------------------------------------------------------
# Strict convexity report
# ----------------------------------------------------------------------

@dataclass
class StrictConvexityReport:
    modulus: List[Tuple[float, float]]       # (r, h_{u,Omega}(r))
    segments: List[dict]                     # affine-piece candidates
    min_det: float
    remark_probe_held: bool                  # min det > 0 implies modulus > 0

    def to_dict(self):
        return {"modulus": [[r, m] for r, m in self.modulus],
                "segments": self.segments, "min_det": self.min_det,
                "remark_probe_held": bool(self.remark_probe_held)}


def detect_segments(u: ConvexGridFunction, tol: Optional[float] = None) -> List[dict]:
    """Maximal runs of vanishing directional second differences, length > 4h."""
    if tol is None:
        scale = float(np.nanmax(np.abs(u.values[u.region])))
        tol = 1e-8 * max(scale, 1.0)
    out = []
    h = u.h
    for (di, dj) in ((0, 1), (1, 0), (1, 1), (1, -1)):
        sec = shift(u.values, di, dj) + shift(u.values, -di, -dj) - 2 * u.values
        flat = u.interior & (np.abs(sec) <= tol)
        # walk runs along the direction
        visited = np.zeros(u.domain.shape, bool)
        ii, jj = np.nonzero(flat)
        for i, j in zip(ii, jj):
            if visited[i, j]:
                continue
            n = 0
            a, b = i, j
            while 0 <= a < flat.shape[0] and 0 <= b < flat.shape[1] and flat[a, b]:
                visited[a, b] = True
                n += 1
                a += di
                b += dj
            length = (n + 1) * h * float(np.hypot(di, dj))
            if length > 4 * h:
                out.append({"direction": [int(di), int(dj)],
                            "start": [int(i), int(j)], "nodes": int(n),
                            "length": length})
    return out


def strict_convexity_report(u: ConvexGridFunction,
                            radii: Optional[List[float]] = None,
                            sample_stride: int = 4) -> StrictConvexityReport:
    h = u.h
    if radii is None:
        radii = [2 * h, 4 * h, 8 * h]
    table = [(float(r), modulus_of_convexity(u, r, sample_stride)) for r in radii]
    segs = detect_segments(u)
    uxx, uyy, uxy = hessian_fields(u.values, h)
    det = uxx * uyy - uxy ** 2
    min_det = float(np.nanmin(np.where(u.interior, det, np.nan)))
    held = (min_det <= 0) or all(m > 0 for _, m in table)
    return StrictConvexityReport(table, segs, min_det, held)
