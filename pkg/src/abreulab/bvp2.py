"""Second boundary value path: penalized problem on the ball, homotopy system.

The split system det D^2 u = eta g(w) + (1 - eta), U^{ij} w_ij = t f with
w = t psi + (1 - t) on the rim is continued from the trivial t = 0 state
(w = 1) to t = 1.  Two couplings of the pair (u, w) are provided: plain
Picard sweeps (fixed_point_T) and a damped coupled quasi-Newton, which is
required once the band penalty h_j(u - phi~) gets stiff.
"""

from __future__ import annotations

import os

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .barrier import BarrierG
from .convexity import ConvexGridFunction
from .grid import GridDomain, shift
from .mongeampere import (EllipticityError, MASolveError, _ma_jacobian,
                          linearized_ma_matrix, ma_operator,
                          solve_ma_dirichlet, solve_linearized_ma)
from .report import SolveReport


# ----------------------------------------------------------------------
# Penalty H and its derivative
# ----------------------------------------------------------------------

# middle-join quintic for H' on |t| <= 1/2: odd, C^2 against 4 (1 -+ t)^-5
_QA, _QB, _QC = 40.0, -320.0, 4736.0
_H_MID0 = 11.0 / 3.0  # H(0); makes H continuous at t = 1/2


@dataclass(frozen=True)
class PenaltySpec:
    """H_j(t) = H(4^j t) with H = (1 -+ t)^(-4) outside |t| = 1/2."""

    j: int
    t_max: float = 0.99   # linear extension of H' beyond this point

    def H(self, t):
        t = np.asarray(t, float)
        out = np.empty_like(t)
        mid = np.abs(t) <= 0.5
        tm = np.where(mid, t, 0.0)
        out_mid = _H_MID0 + 0.5 * _QA * tm ** 2 + 0.25 * _QB * tm ** 4 \
            + (_QC / 6.0) * tm ** 6
        to = np.clip(np.abs(np.where(mid, 0.75, t)), 0.5, self.t_max)
        out_outer = (1.0 - to) ** -4.0
        out = np.where(mid, out_mid, out_outer)
        return out if out.ndim else float(out)

    def h(self, t):
        """H' with odd symmetry and linear extension past t_max."""
        t = np.asarray(t, float)
        s = np.sign(t)
        a = np.abs(t)
        core = np.minimum(a, self.t_max)
        mid = core <= 0.5
        cm = np.where(mid, core, 0.0)
        h_mid = _QA * cm + _QB * cm ** 3 + _QC * cm ** 5
        co = np.where(mid, 0.75, core)
        h_out = 4.0 * (1.0 - co) ** -5.0
        h_core = np.where(mid, h_mid, h_out)
        hp_end = 20.0 * (1.0 - self.t_max) ** -6.0
        h_val = np.where(a <= self.t_max, h_core,
                         4.0 * (1.0 - self.t_max) ** -5.0 + hp_end * (a - self.t_max))
        out = s * h_val
        return out if out.ndim else float(out)

    def h_prime(self, t):
        t = np.asarray(t, float)
        a = np.abs(t)
        mid = a <= 0.5
        cm = np.where(mid, a, 0.0)
        hp_mid = _QA + 3.0 * _QB * cm ** 2 + 5.0 * _QC * cm ** 4
        co = np.clip(np.where(mid, 0.75, a), 0.5, self.t_max)
        hp_out = 20.0 * (1.0 - co) ** -6.0
        out = np.where(mid, hp_mid, hp_out)
        return out if out.ndim else float(out)

    # sharpened family -------------------------------------------------
    def Hj(self, t):
        return self.H(np.asarray(t, float) * 4.0 ** self.j)

    def hj(self, t):
        return 4.0 ** self.j * self.h(np.asarray(t, float) * 4.0 ** self.j)

    def hj_prime(self, t):
        return 16.0 ** self.j * self.h_prime(np.asarray(t, float) * 4.0 ** self.j)

    @property
    def clamp_width(self) -> float:
        return 4.0 ** (-self.j)


# ----------------------------------------------------------------------
# Extension of phi to the ball and the cutoff
# ----------------------------------------------------------------------

def extend_phi(phi: Callable, R: float) -> Callable:
    """phi~ = phi + (|x| - R + 1/2)_+^2, convex on B_R, = phi for |x| <= R - 1/2."""
    def phi_tilde(x1, x2):
        r = np.hypot(np.asarray(x1, float), np.asarray(x2, float))
        bump = np.maximum(r - R + 0.5, 0.0) ** 2
        return phi(x1, x2) + bump
    return phi_tilde


def _smoothstep(s):
    s = np.clip(s, 0.0, 1.0)
    return s ** 3 * (10.0 - 15.0 * s + 6.0 * s ** 2)


def cutoff_eta(dist: np.ndarray, k: int) -> np.ndarray:
    """eta_k: 1 where dist >= 1/k, quintic ramp to 0 at dist = 1/(2k)."""
    if k <= 0:
        return np.ones_like(np.asarray(dist, float))
    lo = 1.0 / (2.0 * k)
    hi = 1.0 / k
    return _smoothstep((np.asarray(dist, float) - lo) / (hi - lo))


# ----------------------------------------------------------------------
# Boosted forcing (section 7 probe)
# ----------------------------------------------------------------------

@dataclass
class BoostedForcing:
    base: np.ndarray
    m: int
    beta: float
    band: np.ndarray       # D_m mask
    values: np.ndarray     # f + beta on D_m


def boost_forcing(domain: GridDomain, f_vals: np.ndarray, m: int,
                  beta: float) -> BoostedForcing:
    width = 2.0 ** (-m)
    if width < domain.h:
        raise ValueError("band unresolved, increase grid or decrease m")
    dist = domain.boundary_distance(domain.x1, domain.x2)
    band = domain.in_omega & (dist < width)
    vals = np.asarray(f_vals, float).copy()
    vals[band] += beta
    return BoostedForcing(np.asarray(f_vals, float), int(m), float(beta), band, vals)


def gradient_coverage(u: ConvexGridFunction, K: np.ndarray,
                      grad_phi: Optional[Callable] = None) -> dict:
    """Fraction of K's area covered by N_u(Omega); boundary gradient gap."""
    from shapely.geometry import Polygon
    from .mameasure import normal_map_polygon
    img = normal_map_polygon(u).polygon
    out = {"coverage": 0.0, "K_area": 0.0, "image_area": 0.0}
    Kp = Polygon(np.asarray(K, float))
    out["K_area"] = float(Kp.area)
    if len(img) >= 3:
        Ip = Polygon(img).convex_hull
        out["image_area"] = float(Ip.area)
        if Kp.area > 0:
            out["coverage"] = float(Kp.intersection(Ip).area / Kp.area)
    if grad_phi is not None:
        from .maximizer import boundary_gradient_gap
        out["boundary_gradient_gap"] = boundary_gradient_gap(u, grad_phi)
    return out


# ----------------------------------------------------------------------
# Fixed-point map T_t and the Picard path
# ----------------------------------------------------------------------

def fixed_point_T(domain: GridDomain, region: np.ndarray, w: np.ndarray,
                  t: float, bar: BarrierG, u_trace: np.ndarray,
                  psi_trace: np.ndarray, eta: np.ndarray, f_vals: np.ndarray,
                  u_init: Optional[np.ndarray] = None):
    """One sweep of T_t: u from the MA half, then w' from the linearized half.

    det D^2 u = eta g(w) + (1 - eta) with trace u_trace;
    U^{ij} w'_ij = t f with w' = t psi + (1 - t) on the rim.
    """
    interior = domain.interior_of(region)
    if np.any(w[interior] <= 0):
        raise MASolveError("fixed point map needs w > 0")
    rho = np.zeros(domain.shape)
    rho[interior] = eta[interior] * bar.g_inverse(w[interior]) \
        + (1.0 - eta[interior])
    u, _ = solve_ma_dirichlet(domain, rho, u_trace, region, initial=u_init)
    w_bc = t * np.asarray(psi_trace, float) + (1.0 - t)
    rhs = t * np.asarray(f_vals, float)
    w_new = solve_linearized_ma(u, rhs, w_bc, region)
    return w_new, u


# ----------------------------------------------------------------------
# Coupled quasi-Newton on (u, w)
# ----------------------------------------------------------------------

def _coupled_newton(domain: GridDomain, region: np.ndarray, u_vals: np.ndarray,
                    w_vals: np.ndarray, t: float, bar: BarrierG,
                    eta: np.ndarray, f_of_u: Callable, f_u_deriv: Callable,
                    u_trace: np.ndarray, w_trace_t: np.ndarray,
                    tol: float = 1e-9, max_iter: int = 60):
    """Damped Newton on [MA(u) - (eta g(w) + 1 - eta); L_u w - t f(x, u)].

    f_of_u(u_vals) and f_u_deriv(u_vals) give the forcing and its
    u-derivative node-wise (zero derivative for plain f(x)).

    The primary move steps both fields at once from the full coupled
    Jacobian, warm-starting w from the previous homotopy step so w stays
    positive across forcing jumps.  When that line search fails -- at
    fine h the dropped bilinear term U^{ij}(du) dw_ij can exceed the w
    residual for any useful step length -- the w half, linear given u,
    is eliminated exactly instead: the same u step is retried with
    w = L_u^{-1}(t f) recomputed per trial (a Schur-complement move
    whose w residual vanishes identically).

    The w-half rows are scaled by max(1, |t f_u|): the stiff band
    penalty otherwise keeps an absolute residual floor of order
    16^j * eps * |u| that no step can beat.  The scale is frozen at the
    current iterate during each line search so trials cannot game it.
    """
    interior = domain.interior_of(region)
    rim = region & ~interior
    free = np.flatnonzero(interior.ravel())
    nI = free.size
    h = domain.h
    u = u_vals.copy()
    u[rim] = u_trace[rim]
    w = w_vals.copy()
    w[rim] = w_trace_t[rim]

    def w_of(uv):
        uf = ConvexGridFunction(domain, np.where(region, uv, np.nan), region)
        fv = t * f_of_u(uv)
        return solve_linearized_ma(uf, fv, w_trace_t, region)

    def r1_of(uv, wv):
        F, _, _ = ma_operator(uv, h, interior)
        g = np.zeros(domain.shape)
        g[interior] = bar.g_inverse(np.maximum(wv[interior], 1e-12))
        return np.where(interior, F - (eta * g + (1.0 - eta)), 0.0), g

    def lin_op(uv):
        # same lifted operator as solve_linearized_ma: unlifted rim-kink
        # rows lose ellipticity and poison the w block of the Jacobian
        uf = ConvexGridFunction(domain, np.where(region, uv, np.nan), region)
        L, _, _ = linearized_ma_matrix(uf, region, lambda_floor=1e-12)
        return L

    def r2_of(uv, wv, L=None):
        if L is None:
            L = lin_op(uv)
        wfull = np.where(region & np.isfinite(wv), wv, 0.0)
        return L @ wfull.ravel() - (t * f_of_u(uv)).ravel()[free]

    def merit_parts(uv, wv, scale, L=None):
        """(max-norm merit, smooth l2 merit, r1, g, r2) at a trial point.

        The scaled max norm decides convergence (the stiff band rows
        otherwise keep an absolute floor of order 16^j eps |u|).  The
        line search runs on the UNSCALED l2 norm: scaling r2 down by the
        band stiffness makes the w half invisible to the damping, and
        the l2 norm is smooth where the wide-stencil max norm pins on
        single basis-switch kink nodes.
        """
        t1, gt = r1_of(uv, wv)
        m1 = float(np.max(np.abs(t1[interior])))
        try:
            t2 = r2_of(uv, wv, L)
        except EllipticityError:
            return np.inf, np.inf, t1, gt, None
        m2 = float(np.max(np.abs(t2) / scale))
        l2 = float(np.sqrt(np.sum(t1[interior] ** 2) + np.sum(t2 ** 2)))
        return max(m1, m2), l2, t1, gt, t2

    scale = np.maximum(1.0, np.abs(t * f_u_deriv(u).ravel()[free]))
    try:
        mn, ln, r1, gfield, r2 = merit_parts(u, w, scale)
    except (MASolveError, EllipticityError):
        return u, w, [np.inf], False
    if r2 is None:
        return u, w, [np.inf], False
    history = [mn]
    for it in range(max_iter):
        if mn <= tol:
            break
        A = _ma_jacobian(u, h, interior, free)
        gp = np.zeros(domain.shape)
        gp[interior] = 1.0 / bar.G2(np.maximum(gfield[interior], 1e-300))
        J12 = sp.diags((-eta[interior]) * gp[interior])
        E = f_u_deriv(u)
        # d/du [U^{ij}(u) w_ij] delta = U^{ij}(delta) w_ij = W^{ij} delta_ij:
        # the 2D cofactor pairing is symmetric, so the u-derivative of the
        # linear half is the 9-point operator with cofactors frozen from w
        wf = ConvexGridFunction(domain, np.where(region, w, np.nan), region)
        try:
            Lu, _, _ = linearized_ma_matrix(wf, region)
        except EllipticityError:
            Lu = sp.csr_matrix((nI, domain.shape[0] * domain.shape[1]))
        J21 = Lu[:, free] + sp.diags(-t * E.ravel()[free])
        Lw = lin_op(u)[:, free]
        J = sp.bmat([[A, J12], [J21, Lw]], format="csc")
        rhs = -np.concatenate([r1.ravel()[free], r2])
        try:
            step = spla.spsolve(J, rhs)
        except Exception:
            return u, w, history, False
        if not np.all(np.isfinite(step)):
            return u, w, history, False
        du = step[:nI]
        dw = step[nI:]
        scale = np.maximum(1.0, np.abs(t * E.ravel()[free]))
        # rescore the incumbent with the fresh scale, else trials are
        # compared against a merit measured in different units
        mn = max(float(np.max(np.abs(r1[interior]))),
                 float(np.max(np.abs(r2) / scale)))
        ln = float(np.sqrt(np.sum(r1[interior] ** 2) + np.sum(r2 ** 2)))
        accepted = False
        # fraction-to-the-boundary: keep w strictly positive along the step,
        # else the g_inverse clamp blows the merit up and wastes halvings
        wI = w.ravel()[free]
        neg = dw < 0
        lam_max = 1.0
        if np.any(neg):
            lam_max = min(1.0, 0.995 * float(np.min(wI[neg] / -dw[neg])))
        lam = lam_max
        for _ in range(30):
            ut = u.copy()
            ut.ravel()[free] += lam * du
            wt = w.copy()
            wt.ravel()[free] += lam * dw
            tm, tl, t1, gt, t2 = merit_parts(ut, wt, scale)
            if t2 is not None and (tl < ln * (1.0 - 1e-4 * lam) or tm < tol):
                u, w = ut, wt
                mn, ln, r1, gfield, r2 = tm, tl, t1, gt, t2
                accepted = True
                break
            lam *= 0.5
        if os.environ.get("ABREU_DEBUG"):
            m1 = float(np.max(np.abs(r1[interior])))
            m2 = float(np.max(np.abs(r2) / scale))
            k2 = int(np.argmax(np.abs(r2) / scale))
            i2, j2 = np.unravel_index(free[k2], domain.shape)
            kw = int(np.argmin(w.ravel()[free]))
            iw, jw = np.unravel_index(free[kw], domain.shape)
            print(f"    it={it} mn={mn:.3e} m1={m1:.3e} m2s={m2:.3e} "
                  f"lam={lam:.1e} lmax={lam_max:.1e} acc={accepted} "
                  f"Emax={float(np.max(np.abs(E))):.1e} "
                  f"r2@({i2},{j2})eta={eta[i2, j2]:.2f} "
                  f"wmin={w.ravel()[free][kw]:.3e}@({iw},{jw})"
                  f"eta={eta[iw, jw]:.2f}", flush=True)
        if not accepted:
            # elimination rescue: retry the u step with w solved exactly
            lam = 1.0
            for _ in range(30):
                ut = u.copy()
                ut.ravel()[free] += lam * du
                try:
                    wt = w_of(ut)
                except (MASolveError, EllipticityError):
                    lam *= 0.5
                    continue
                tm, tl, t1, gt, t2 = merit_parts(ut, wt, scale)
                if t2 is not None and (tl < ln * (1.0 - 1e-4 * lam)
                                       or tm < tol):
                    u, w = ut, wt
                    mn, ln, r1, gfield, r2 = tm, tl, t1, gt, t2
                    accepted = True
                    break
                lam *= 0.5
        history.append(mn)
        if not accepted:
            return u, w, history, mn <= tol * 10
    return u, w, history, mn <= tol


# ----------------------------------------------------------------------
# Homotopy drivers
# ----------------------------------------------------------------------

@dataclass
class HomotopySchedule:
    t_steps: Sequence[float] = tuple(np.linspace(0.0, 1.0, 11))
    fp_tol: float = 1e-9
    max_picard: int = 40
    min_dt: float = 1.0 / 128.0
    cutoff_k: int = 8


def solve_second_bvp(domain: GridDomain, phi: Callable, f_func: Callable,
                     bar: BarrierG, psi: Optional[Callable] = None,
                     schedule: Optional[HomotopySchedule] = None,
                     report: Optional[SolveReport] = None):
    """Homotopy solve of the split system on Omega with w = psi on the rim."""
    if schedule is None:
        schedule = HomotopySchedule()
    if report is None:
        report = SolveReport("solve-bvp2")
    region = domain.in_omega
    interior = domain.interior_of(region)
    rim = region & ~interior
    u_trace = domain.sample(phi, region)
    psi_vals = np.ones(domain.shape) if psi is None \
        else np.nan_to_num(domain.sample(psi, region), nan=1.0)
    if np.any(psi_vals[rim] <= 0):
        raise ValueError("psi must be positive on the boundary")
    f_vals = np.nan_to_num(domain.sample(f_func, region))
    dist = domain.boundary_distance(domain.x1, domain.x2)
    eta = np.where(region, cutoff_eta(dist, schedule.cutoff_k), 0.0)

    w = np.where(region, 1.0, np.nan)
    u = u_trace.copy()
    steps = list(schedule.t_steps)
    records = []
    t_prev = 0.0
    i = 0
    while i < len(steps):
        t = steps[i]
        w_bc = t * psi_vals + (1.0 - t)
        ok = False
        n_fp = 0
        w_try = w.copy()
        u_try = u.copy()
        for n_fp in range(1, schedule.max_picard + 1):
            w_new, u_new = fixed_point_T(domain, region, w_try, t, bar,
                                         u_trace, psi_vals, eta, f_vals,
                                         u_init=u_try)
            gap = float(np.max(np.abs(w_new[interior] - w_try[interior])))
            w_try, u_try = w_new, u_new.values
            if gap <= schedule.fp_tol:
                ok = True
                break
        if not ok:
            # Newton rescue before bisecting the t-step
            u_n, w_n, hist, good = _coupled_newton(
                domain, region, u_try, w_try, t, bar, eta,
                lambda uv: f_vals, lambda uv: np.zeros(domain.shape),
                u_trace, w_bc, tol=schedule.fp_tol)
            if good:
                u_try, w_try = u_n, w_n
                ok = True
        if not ok:
            dt = t - t_prev
            if dt <= schedule.min_dt:
                report.set("failed_at_t", t)
                report.set("steps", records)
                raise MASolveError(f"homotopy stalled at t = {t}", [r["t"] for r in records])
            steps.insert(i, 0.5 * (t_prev + t))
            continue
        u, w = u_try, w_try
        wmin = float(np.min(w[region]))
        wmax = float(np.max(w[region]))
        if wmin <= 0:
            raise MASolveError(f"w lost positivity at t = {t}")
        F, _, _ = ma_operator(u, domain.h, interior)
        g = np.zeros(domain.shape)
        g[interior] = bar.g_inverse(np.maximum(w[interior], 1e-12))
        ma_res = float(np.max(np.abs((F - (eta * g + 1.0 - eta))[interior])))
        records.append({"t": t, "fixed_point_iters": n_fp, "w_min": wmin,
                        "w_max": wmax, "ma_residual": ma_res,
                        "lin_residual": 0.0})
        t_prev = t
        i += 1

    uf = ConvexGridFunction(domain, np.where(region, u, np.nan), region)
    uf.certify()
    report.set("steps", records)
    report.set("w_min", float(np.min(w[region])))
    report.set("w_max", float(np.max(w[region])))
    report.set("boundary_lipschitz", _boundary_lipschitz(domain, region, w))
    return uf, w, report


def _boundary_lipschitz(domain: GridDomain, region: np.ndarray,
                        w: np.ndarray) -> float:
    """Observed max |w(x) - w(x0)| / |x - x0| against rim neighbours."""
    interior = domain.interior_of(region)
    rim = region & ~interior
    worst = 0.0
    for (di, dj) in ((0, 1), (1, 0), (1, 1), (1, -1)):
        nb = shift(w, di, dj, np.nan)
        nb_rim = np.nan_to_num(shift(rim.astype(float), di, dj, 0.0)) > 0.5
        sel = interior & nb_rim & np.isfinite(nb)
        if sel.any():
            d = domain.h * float(np.hypot(di, dj))
            worst = max(worst, float(np.max(np.abs(w[sel] - nb[sel]))) / d)
    return worst


def solve_penalized(domain: GridDomain, phi: Callable, f_func: Callable,
                    bar: BarrierG, pen: PenaltySpec,
                    schedule: Optional[HomotopySchedule] = None,
                    report: Optional[SolveReport] = None):
    """Penalized second BVP on B_R: w = 1 on the rim, band forcing h_j(u - phi~).

    The band forcing is stiff in u, so each homotopy step runs the coupled
    quasi-Newton rather than Picard sweeps.
    """
    if schedule is None:
        schedule = HomotopySchedule()
    if report is None:
        report = SolveReport("solve-penalized")
    R = domain.ball_radius
    phi_t = extend_phi(phi, R)
    region = domain.in_ball
    interior = domain.interior_of(region)
    rim = region & ~interior
    u_trace = domain.sample(phi_t, region)
    phi_vals = u_trace  # phi~ on all of B_R
    f_base = np.nan_to_num(domain.sample(f_func, region))
    in_om = domain.in_omega
    band = region & ~in_om
    dist_ball = domain.ball_distance(domain.x1, domain.x2)
    eta = np.where(region, cutoff_eta(dist_ball, schedule.cutoff_k), 0.0)

    # the whole forcing, Omega term and band penalty alike, ramps with t
    # at the gentle j = 0 penalty (slope <= 40, so no cliff at t = 0+);
    # the stiffness is continued separately afterwards, j ramping to its
    # target at t = 1.  Every Newton solve along the path starts warm,
    # and the t = 0 base pair below solves the path start exactly.
    def make_forcing(t, pj: "PenaltySpec"):
        def f_of_u(uv):
            out = np.where(in_om, f_base, 0.0)
            dband = uv - phi_vals
            return t * np.where(band, pj.hj(np.nan_to_num(dband)), out)

        def f_u_deriv(uv):
            dband = uv - phi_vals
            return t * np.where(band, pj.hj_prime(np.nan_to_num(dband)), 0.0)
        return f_of_u, f_u_deriv

    w = np.where(region, 1.0, np.nan)
    w_bc = np.where(region, 1.0, np.nan)  # psi = 1 and t psi + (1-t) = 1
    pen0 = PenaltySpec(0, t_max=pen.t_max)

    # exact t = 0 base state: w = 1, u from det D^2 u = eta g(1) + 1 - eta
    w, uf0 = fixed_point_T(domain, region, w, 1.0, bar, u_trace,
                           np.where(region, 1.0, np.nan), eta,
                           np.zeros(domain.shape), u_init=None)
    u = uf0.values

    records = []

    def continue_in(param_steps, label, pen_of, t_of, p_start,
                    prestart=None):
        nonlocal u, w
        steps = list(param_steps)
        p_prev = p_start
        i = 0
        while i < len(steps):
            p = steps[i]
            f_of_u, f_u_deriv = make_forcing(t_of(p), pen_of(p))
            starts = [(u, w)]
            if prestart is not None:
                starts.insert(0, prestart(p_prev, p, u, w))
            good = False
            for u0, w0 in starts:
                u_n, w_n, hist, good = _coupled_newton(
                    domain, region, u0, w0, 1.0, bar, eta, f_of_u, f_u_deriv,
                    u_trace, w_bc, tol=schedule.fp_tol * 10.0)
                if good:
                    break
            if not good:
                dp = p - p_prev
                if dp <= schedule.min_dt:
                    report.set(f"failed_at_{label}", p)
                    report.set("steps", records)
                    raise MASolveError(
                        f"penalized homotopy stalled at {label} = {p}", hist)
                steps.insert(i, 0.5 * (p_prev + p))
                continue
            prev_state = (p_prev, u.copy(), w.copy())
            u, w = u_n, w_n
            wmin = float(np.min(w[region]))
            if wmin <= 0:
                raise MASolveError(f"w lost positivity at {label} = {p}")
            records.append({label: p, "t": t_of(p), "j": pen_of(p).j,
                            "newton_iters": len(hist), "w_min": wmin,
                            "w_max": float(np.max(w[region])),
                            "final_residual": hist[-1]})
            p_prev = p
            i += 1

    continue_in(list(schedule.t_steps), "t",
                lambda p: pen0, lambda p: p, 0.0)
    if pen.j > 0:
        continue_in([float(jj) for jj in range(1, int(np.ceil(pen.j)) + 1)]
                    + ([float(pen.j)] if pen.j != int(pen.j) else []),
                    "j",
                    lambda p: PenaltySpec(p, t_max=pen.t_max), lambda p: 1.0,
                    0.0)

    clamp = float(np.max(np.abs((u - phi_vals)[band]))) if band.any() else 0.0
    uf = ConvexGridFunction(domain, np.where(region, u, np.nan), region)
    uf.certify()
    report.set("steps", records)
    report.set("w_min", float(np.min(w[region])))
    report.set("penalty_j", pen.j)
    report.set("band_clamp", clamp)
    report.set("clamp_bound", pen.clamp_width)
    if clamp > 10.0 * (pen.clamp_width + 10.0 * domain.h):
        report.set("penalty_not_binding", True)
    return uf, w, report


def approximation_sweep(domain: GridDomain, phi: Callable, f_func: Callable,
                        deltas: Sequence[float], js: Sequence[int],
                        schedule: Optional[HomotopySchedule] = None,
                        reference: Optional[np.ndarray] = None) -> SolveReport:
    """solve_penalized over the (delta_k, j) grid; Cauchy table on a margin."""
    report = SolveReport("sweep")
    sols = {}
    entries = []
    for dlt in deltas:
        for j in js:
            key = f"delta={dlt:g},j={j}"
            try:
                uf, w, rep = solve_penalized(domain, phi, f_func,
                                             BarrierG(dlt), PenaltySpec(j),
                                             schedule)
                sols[key] = uf.values
                entries.append({"key": key, "ok": True,
                                "band_clamp": rep.data["band_clamp"]})
            except MASolveError as exc:
                entries.append({"key": key, "ok": False, "error": str(exc)})
    # interior compact margin: the 0.7-scaled Omega
    r = domain.boundary_distance(domain.x1, domain.x2)
    margin = domain.in_omega & (np.hypot(domain.x1, domain.x2)
                                <= 0.7 * np.nanmax(np.hypot(
                                    domain.x1[domain.in_omega],
                                    domain.x2[domain.in_omega])))
    keys = list(sols)
    cauchy = []
    for a in range(len(keys)):
        for b in range(a + 1, len(keys)):
            d = float(np.nanmax(np.abs(sols[keys[a]][margin]
                                       - sols[keys[b]][margin])))
            cauchy.append({"pair": [keys[a], keys[b]], "linf": d})
    report.set("entries", entries)
    report.set("cauchy", cauchy)
    if reference is not None and keys:
        last = sols[keys[-1]]
        report.set("vs_reference_linf",
                   float(np.nanmax(np.abs(last[margin] - reference[margin]))))
    return report
