"""Monge-Ampere Dirichlet solver and the linearized cofactor operator.

det D^2 u = rho is discretized with the monotone wide-stencil scheme
(axis and diagonal bases, 8 directions):

    MA_h(u) = min over bases of  a+ b+ + a- + b-

with a, b the directional second differences of the basis.  The scheme is
degenerate-elliptic, so damped Newton (with a nonlinear Gauss-Seidel
fallback) converges from a convex start even when rho touches zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .convexity import ConvexGridFunction, certify_convex
from .grid import GridDomain, shift


class MASolveError(RuntimeError):
    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history or []


class EllipticityError(ValueError):
    pass


_BASES = (((0, 1), (1, 0), 1.0),       # axes, |e|^2 = 1
          ((1, 1), (1, -1), 2.0))      # diagonals, |e|^2 = 2


def _dir_second(v: np.ndarray, d, scale: float, h: float) -> np.ndarray:
    di, dj = d
    return (shift(v, di, dj, np.nan) + shift(v, -di, -dj, np.nan) - 2.0 * v) \
        / (scale * h ** 2)


def ma_operator(values: np.ndarray, h: float, interior: np.ndarray):
    """Monotone MA value and the active-basis data at interior nodes."""
    best = None
    best_parts = None
    choice = np.zeros(values.shape, dtype=int)
    for k, (e1, e2, s) in enumerate(_BASES):
        a = _dir_second(values, e1, s, h)
        b = _dir_second(values, e2, s, h)
        val = np.maximum(a, 0.0) * np.maximum(b, 0.0) \
            + np.minimum(a, 0.0) + np.minimum(b, 0.0)
        if best is None:
            best = val
            best_parts = [(a, b)]
        else:
            take = val < best
            choice = np.where(take, k, choice)
            best = np.where(take, val, best)
            best_parts.append((a, b))
    return best, choice, best_parts


def _gs_sweep(values: np.ndarray, rho: np.ndarray, h: float,
              interior: np.ndarray) -> np.ndarray:
    """One vectorized nonlinear Gauss-Seidel (Jacobi-style) pass."""
    v = values
    new = v.copy()
    cand = np.full(v.shape, np.inf)
    for (e1, e2, s) in _BASES:
        sa = 0.5 * (shift(v, e1[0], e1[1], np.nan) + shift(v, -e1[0], -e1[1], np.nan))
        sb = 0.5 * (shift(v, e2[0], e2[1], np.nan) + shift(v, -e2[0], -e2[1], np.nan))
        q = rho * (s * h ** 2) ** 2 / 4.0
        x = 0.5 * ((sa + sb) - np.sqrt((sa - sb) ** 2 + 4.0 * q))
        cand = np.minimum(cand, x)
    new[interior] = v[interior] + 0.9 * (cand[interior] - v[interior])
    return new


def _ma_jacobian(values: np.ndarray, h: float, interior: np.ndarray,
                 free_cols: np.ndarray) -> sp.csr_matrix:
    ny, nx = values.shape
    N = ny * nx
    _, choice, parts = ma_operator(values, h, interior)
    rows_flat = np.flatnonzero(interior.ravel())
    nrows = rows_flat.size
    ii, jj = np.unravel_index(rows_flat, (ny, nx))
    data, rr, cc = [], [], []
    for k, (e1, e2, s) in enumerate(_BASES):
        a, b = parts[k]
        active = (choice == k) & interior
        act = active.ravel()[rows_flat]
        if not act.any():
            continue
        ca = np.where(a > 0, np.maximum(b, 0.0), 1.0)
        cb = np.where(b > 0, np.maximum(a, 0.0), 1.0)
        caf = ca.ravel()[rows_flat] * act
        cbf = cb.ravel()[rows_flat] * act
        w = 1.0 / (s * h ** 2)
        for coef, (di, dj) in ((caf, e1), (cbf, e2)):
            for (sd, wgt) in (((di, dj), w), ((-di, -dj), w), ((0, 0), -2.0 * w)):
                cols = np.ravel_multi_index((ii + sd[0], jj + sd[1]), (ny, nx))
                rr.append(np.arange(nrows))
                cc.append(cols)
                data.append(coef * wgt)
    J = sp.csr_matrix((np.concatenate(data), (np.concatenate(rr), np.concatenate(cc))),
                      shape=(nrows, N))
    return J[:, free_cols].tocsr()


@dataclass
class MASolveReport:
    converged: bool
    iterations: int
    residual: float
    history: list
    gs_sweeps: int = 0


def solve_ma_dirichlet(domain: GridDomain, rho: np.ndarray, trace: np.ndarray,
                       region: Optional[np.ndarray] = None,
                       initial: Optional[np.ndarray] = None,
                       tol: float = 1e-10, max_newton: int = 60,
                       max_gs: int = 4000) -> Tuple[ConvexGridFunction, MASolveReport]:
    """Solve MA_h(u) = rho on the region interior with Dirichlet trace.

    rho >= 0 node-wise; the trace is read on region \\ interior nodes.
    """
    if region is None:
        region = domain.in_omega
    interior = domain.interior_of(region)
    bmask = region & ~interior
    rho = np.asarray(rho, float)
    if np.any(rho[interior] < -1e-12):
        raise ValueError("rho must be nonnegative")
    rho = np.maximum(rho, 0.0)

    v = np.full(domain.shape, np.nan)
    v[region] = np.asarray(trace, float)[region] if initial is None \
        else np.asarray(initial, float)[region]
    v[bmask] = np.asarray(trace, float)[bmask]
    if initial is None:
        # convex start: boundary data plus a shallow paraboloid dip
        r2 = domain.x1 ** 2 + domain.x2 ** 2
        v[interior] += 0.5 * np.sqrt(np.maximum(rho[interior], 0.0)) \
            * (r2[interior] - np.nanmax(r2[region]))

    free_cols = np.flatnonzero(interior.ravel())
    history = []
    gs_done = 0

    def resid(vals):
        F, _, _ = ma_operator(vals, domain.h, interior)
        r = F - rho
        return r, float(np.max(np.abs(r[interior])))

    # a few smoothing sweeps to settle the active bases
    for _ in range(10):
        v = _gs_sweep(v, rho, domain.h, interior)
        gs_done += 1
    r, rn = resid(v)
    history.append(rn)

    for it in range(1, max_newton + 1):
        if rn <= tol:
            break
        J = _ma_jacobian(v, domain.h, interior, free_cols)
        rhs = -r[interior]
        try:
            step = spla.spsolve(J.tocsc(), rhs)
        except Exception:
            step = None
        accepted = False
        if step is not None and np.all(np.isfinite(step)):
            lam = 1.0
            for _ in range(30):
                trial = v.copy()
                trial.ravel()[free_cols] += lam * step
                _, tn = resid(trial)
                if tn < rn * (1.0 - 1e-4 * lam):
                    v = trial
                    rn = tn
                    accepted = True
                    break
                lam *= 0.5
        if not accepted:
            # fall back to Gauss-Seidel until the residual moves again
            before = rn
            for _ in range(200):
                v = _gs_sweep(v, rho, domain.h, interior)
                gs_done += 1
                if gs_done >= max_gs:
                    break
            _, rn = resid(v)
            if rn >= before * (1.0 - 1e-12) and gs_done >= max_gs:
                history.append(rn)
                raise MASolveError(f"MA solve failed: residual {rn:.3e}", history)
        r, rn = resid(v)
        history.append(rn)

    out = ConvexGridFunction(domain, v, region)
    out.certify()
    rep = MASolveReport(rn <= tol * 10, len(history), rn, history, gs_done)
    if rn > max(tol * 100, 1e-6 * max(1.0, float(np.max(rho[interior], initial=0.0)))):
        raise MASolveError(f"MA solve failed: residual {rn:.3e}", history)
    return out, rep


# ----------------------------------------------------------------------
# Linearized operator U^{ij} d_ij with cofactors frozen from u
# ----------------------------------------------------------------------

def linearized_ma_matrix(u: ConvexGridFunction, region: Optional[np.ndarray] = None,
                         lambda_floor: float = 0.0):
    """Sparse 9-point U^{ij} d_ij over region-interior rows, all-node columns."""
    from .convexity import hessian_fields
    if region is None:
        region = u.region
    domain = u.domain
    interior = domain.interior_of(region)
    uxx, uyy, uxy = hessian_fields(u.values, u.h)
    eigmin = 0.5 * (uxx + uyy) - np.sqrt(0.25 * (uxx - uyy) ** 2 + uxy ** 2)
    if lambda_floor > 0:
        bad = interior & ~(eigmin > lambda_floor)
        nbad = int(np.count_nonzero(bad))
        if nbad:
            # wide-stencil solutions can kink against irregular rim
            # stencils, leaving centered Hessians indefinite along the
            # rim ring; lift those to the floor so the frozen-coefficient
            # operator stays elliptic.  Only degeneracy away from the rim
            # counts as genuine loss of ellipticity.
            rim = region & ~interior
            near_rim = np.zeros_like(rim)
            for di in (-1, 0, 1):
                for dj in (-1, 0, 1):
                    near_rim |= np.nan_to_num(
                        shift(rim.astype(float), di, dj, 0.0)) > 0.5
            ndeep = int(np.count_nonzero(bad & ~near_rim))
            if ndeep > max(8, int(0.02 * np.count_nonzero(interior))):
                raise EllipticityError(
                    "ellipticity lost: Hessian eigenvalue below floor at "
                    f"{ndeep} nodes away from the rim")
            lift = np.where(bad, lambda_floor - np.minimum(eigmin, 0.0), 0.0)
            uxx = uxx + lift
            uyy = uyy + lift
    ny, nx = domain.shape
    rows_flat = np.flatnonzero(interior.ravel())
    nrows = rows_flat.size
    ii, jj = np.unravel_index(rows_flat, (ny, nx))
    h2 = u.h ** 2
    A = uyy.ravel()[rows_flat]
    B = uxx.ravel()[rows_flat]
    C = uxy.ravel()[rows_flat]
    entries = [
        ((0, 1), A / h2), ((0, -1), A / h2),
        ((1, 0), B / h2), ((-1, 0), B / h2),
        ((0, 0), -2.0 * (A + B) / h2),
        ((1, 1), -2.0 * C / (4.0 * h2)), ((-1, -1), -2.0 * C / (4.0 * h2)),
        ((1, -1), 2.0 * C / (4.0 * h2)), ((-1, 1), 2.0 * C / (4.0 * h2)),
    ]
    data, rr, cc = [], [], []
    for (sd, coef) in entries:
        cols = np.ravel_multi_index((ii + sd[0], jj + sd[1]), (ny, nx))
        rr.append(np.arange(nrows))
        cc.append(cols)
        data.append(coef)
    L = sp.csr_matrix((np.concatenate(data), (np.concatenate(rr), np.concatenate(cc))),
                      shape=(nrows, ny * nx))
    return L, rows_flat, interior


def solve_linearized_ma(u: ConvexGridFunction, rhs: np.ndarray, trace: np.ndarray,
                        region: Optional[np.ndarray] = None,
                        lambda_floor: float = 1e-12) -> np.ndarray:
    """Solve U^{ij} w_ij = rhs with Dirichlet data ``trace`` on the region rim."""
    if region is None:
        region = u.region
    domain = u.domain
    L, rows_flat, interior = linearized_ma_matrix(u, region, lambda_floor)
    bmask = region & ~interior
    w_known = np.zeros(domain.shape)
    w_known[bmask] = np.asarray(trace, float)[bmask]
    free_cols = np.flatnonzero(interior.ravel())
    b = np.asarray(rhs, float).ravel()[rows_flat] - L @ w_known.ravel()
    A = L[:, free_cols].tocsc()
    sol = spla.spsolve(A, b)
    w = np.full(domain.shape, np.nan)
    w[bmask] = w_known[bmask]
    w.ravel()[free_cols] = sol
    res = float(np.max(np.abs(A @ sol - b))) if sol.size else 0.0
    scale = max(float(np.max(np.abs(b))), 1.0)
    if not np.all(np.isfinite(sol)) or res > 1e-8 * scale:
        raise MASolveError(f"linear solve residual too large: {res:.3e}")
    return w
