"""Projected concave ascent for the barrier functional over the admissible class.

The admissible class pins the boundary trace, requires certified discrete
convexity, and confines the gradient range to the polygon K = D(phi)(Omega),
tested through chord slopes against K's support function.  Each barrier
stage (delta_k decreasing) runs Newton-accelerated ascent of the discrete
J with projection back into the class after every step.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.spatial import ConvexHull

from .barrier import BarrierG
from .convexity import (ConvexGridFunction, certify_convex, default_tau_psd,
                        envelope_of_boundary, hessian_fields, project_convex)
from .functional import eval_J, eval_J0, euler_residual, first_variation, hessian_of_J
from .grid import GridDomain, shift
from .report import SolveReport


_CHORD_DIRS = ((0, 1), (1, 0), (1, 1), (1, -1), (0, -1), (-1, 0), (-1, -1), (-1, 1))


@dataclass
class AdmissibleClass:
    """Trace + convexity + gradient-range membership data."""

    domain: GridDomain
    trace: np.ndarray                 # phi on the omega_boundary nodes
    K: np.ndarray                     # gradient-range polygon vertices
    tau_psd: float
    range_tol: float                  # slope slack in the chord test
    chord_caps: np.ndarray            # per direction in _CHORD_DIRS

    @classmethod
    def build(cls, domain: GridDomain, phi: Callable, grad_phi: Callable,
              tau_psd: Optional[float] = None, range_tol: Optional[float] = None,
              n_sweep: int = 720) -> "AdmissibleClass":
        trace = domain.sample(phi, domain.omega_boundary)
        # gradient-range polygon from a fine boundary sweep
        per = domain._poly.exterior
        ts = np.linspace(0.0, per.length, n_sweep, endpoint=False)
        pts = np.array([per.interpolate(t).coords[0] for t in ts])
        g1, g2 = grad_phi(pts[:, 0], pts[:, 1])
        G = np.column_stack([np.asarray(g1, float), np.asarray(g2, float)])
        hull = ConvexHull(G)
        K = G[hull.vertices]
        vals = domain.sample(phi, domain.in_omega)
        if tau_psd is None:
            tau_psd = default_tau_psd(vals[domain.in_omega], domain.h)
        if range_tol is None:
            range_tol = domain.h ** 2
        # the discrete support function of the class is measured the same
        # way membership is tested: by chord slopes of the sampled phi.
        # Comparing the iterate's chords to the continuum support h_K would
        # leave O(h) slack (the steepest chord of a curved function sits
        # O(h) short of its sup gradient), letting the functional inflate
        # the curvature by O(h); phi's own chords close that gap.
        phi_f = ConvexGridFunction(domain, vals, domain.in_omega)
        caps = np.empty(len(_CHORD_DIRS))
        for k, e in enumerate(_CHORD_DIRS):
            ehat = np.asarray(e, float) / np.hypot(*e)
            sup = float(np.max(K @ ehat))
            caps[k] = min(sup, float(np.max(chord_slopes(phi_f, e))))
        return cls(domain, trace, K, float(tau_psd), float(range_tol), caps)

    def support(self, e: np.ndarray) -> float:
        return float(np.max(self.K @ np.asarray(e, float)))

    def chord_cap(self, k: int) -> float:
        """Admissible chord-slope bound for direction _CHORD_DIRS[k]."""
        return float(self.chord_caps[k]) + self.range_tol


def chord_slopes(u: ConvexGridFunction, direction) -> np.ndarray:
    """One-step chord slopes (u(p+e) - u(p)) / (h |e|) where both nodes exist."""
    di, dj = direction
    scale = u.h * float(np.hypot(di, dj))
    ahead = shift(u.values, di, dj, np.nan)
    s = (ahead - u.values) / scale
    valid = u.region & (np.nan_to_num(shift(u.region.astype(float), di, dj, 0.0)) > 0.5)
    out = np.where(valid, s, -np.inf)
    return out


@dataclass
class MembershipReport:
    passed: bool
    convex_ok: bool
    trace_ok: bool
    range_ok: bool
    worst_eigenvalue: float
    trace_gap: float
    range_excess: float   # worst chord slope minus (support + tol)

    def summary(self) -> dict:
        return {k: (bool(v) if isinstance(v, (bool, np.bool_)) else float(v))
                for k, v in self.__dict__.items()}


def membership(u: ConvexGridFunction, cls: AdmissibleClass) -> MembershipReport:
    cert = u.certificate if u.certificate is not None else certify_convex(u, cls.tau_psd)
    bmask = cls.domain.omega_boundary
    trace_gap = float(np.max(np.abs(u.values[bmask] - cls.trace[bmask]))) \
        if bmask.any() else 0.0
    excess = -np.inf
    for k, e in enumerate(_CHORD_DIRS):
        cap = cls.chord_cap(k)
        s = chord_slopes(u, e)
        excess = max(excess, float(np.max(s)) - cap)
    convex_ok = bool(cert.passed)
    trace_ok = trace_gap == 0.0
    range_ok = excess <= 0.0
    return MembershipReport(convex_ok and trace_ok and range_ok,
                            convex_ok, trace_ok, range_ok,
                            cert.worst_eigenvalue, trace_gap, float(excess))


def _range_contraction(u: ConvexGridFunction, phi_vals: np.ndarray,
                       cls: AdmissibleClass) -> Tuple[ConvexGridFunction, float]:
    """Largest s with phi + s (u - phi) passing the chord test; applies it.

    Chord slopes are affine in s, so the admissible s is computed exactly.
    """
    phi_f = u.copy_with(phi_vals)
    s_max = 1.0
    for k, e in enumerate(_CHORD_DIRS):
        cap = cls.chord_cap(k)
        base = chord_slopes(phi_f, e)
        full = chord_slopes(u, e)
        with np.errstate(invalid="ignore"):
            extra = full - base
        bad = np.isfinite(extra) & (extra > 0) & (base + extra > cap)
        if np.any(bad):
            s_dir = np.min((cap - base[bad]) / extra[bad])
            s_max = min(s_max, max(0.0, float(s_dir)))
    if s_max >= 1.0:
        return u, 1.0
    s = 0.999 * s_max
    return u.copy_with(phi_vals + s * (u.values - phi_vals)), s


@dataclass
class AscentOptions:
    deltas: Sequence[float] = (0.5, 0.125, 0.03125, 0.0078125, 0.001953125,
                               0.00048828125, 0.00012207031250)
    max_stage_iters: int = 40
    armijo_c: float = 1e-4
    grad_tol_factor: float = 1e-8    # tol = factor * h^2 * |Omega| * scale
    stall_limit: int = 3
    delta_floor: float = 1.2e-4

    def schedule(self) -> List[float]:
        return [max(d, self.delta_floor) for d in self.deltas]


class ConcavityViolation(RuntimeError):
    pass


_SD_DIRS = ((0, 1), (1, 0), (1, 1), (1, -1))


def _feasible_step_cap(u: ConvexGridFunction, step_full: np.ndarray,
                       cls: AdmissibleClass) -> float:
    """Largest lam keeping u + lam*step inside the class, computed exactly.

    Directional second differences and chord slopes are both affine in
    lam, so starting the line search at this cap keeps the trial points
    certified and the per-trial projection on its cheap early-exit path.
    """
    lam = 1.0
    h2 = u.h ** 2
    interior = u.interior
    for (di, dj) in _SD_DIRS:
        w = h2 * (di * di + dj * dj)
        du = (shift(u.values, di, dj, np.nan) - 2.0 * u.values
              + shift(u.values, -di, -dj, np.nan)) / w
        ds = (shift(step_full, di, dj, 0.0) - 2.0 * step_full
              + shift(step_full, -di, -dj, 0.0)) / w
        with np.errstate(invalid="ignore"):
            bad = interior & np.isfinite(du) & (ds < 0)
            if np.any(bad):
                room = np.maximum(du[bad] + cls.tau_psd, 0.0)
                lam = min(lam, float(np.min(room / (-ds[bad]))))
    step_f = u.copy_with(step_full)
    for k, e in enumerate(_CHORD_DIRS):
        cap = cls.chord_cap(k)
        cu = chord_slopes(u, e)
        cs = chord_slopes(step_f, e)
        with np.errstate(invalid="ignore"):
            bad = np.isfinite(cu) & np.isfinite(cs) & (cs > 0)
            if np.any(bad):
                room = np.maximum(cap - cu[bad], 0.0)
                lam = min(lam, float(np.min(room / cs[bad])))
    return lam


def _project(u: ConvexGridFunction, phi_vals: np.ndarray, cls: AdmissibleClass,
             pin: Optional[np.ndarray] = None,
             free: Optional[np.ndarray] = None):
    """Trace and ring pin, convexity projection, gradient-range contraction."""
    v = u.values.copy()
    v[cls.domain.omega_boundary] = cls.trace[cls.domain.omega_boundary]
    if pin is not None:
        v[pin] = phi_vals[pin]
    w = u.copy_with(v)
    w, _ = project_convex(w, cls.tau_psd, free=free)
    w, s = _range_contraction(w, phi_vals, cls)
    if s < 1.0:
        w, _ = project_convex(w, cls.tau_psd, free=free)
    return w


def maximize(domain: GridDomain, phi: Callable, grad_phi: Callable,
             f_func: Callable, options: Optional[AscentOptions] = None,
             cls: Optional[AdmissibleClass] = None,
             initial: Optional[np.ndarray] = None,
             report: Optional[SolveReport] = None
             ) -> Tuple[ConvexGridFunction, SolveReport]:
    """Maximize J_delta over the admissible class along the delta schedule."""
    if options is None:
        options = AscentOptions()
    if cls is None:
        cls = AdmissibleClass.build(domain, phi, grad_phi)
    if report is None:
        report = SolveReport("solve-direct")
    phi_vals = domain.sample(phi, domain.in_omega)
    f_vals = domain.sample(f_func, domain.in_omega)
    f_vals = np.nan_to_num(f_vals)
    vals = phi_vals.copy() if initial is None else np.asarray(initial, float).copy()
    u = ConvexGridFunction(domain, vals, domain.in_omega)
    interior = domain.interior_of(domain.in_omega)
    inner = domain.interior_of(interior)
    # the natural boundary condition Du = D(phi) of the first problem is
    # imposed by pinning the first interior ring to phi: u - phi and its
    # gradient vanish on the boundary, so this is O(h^2)-consistent, and
    # it removes the rim layer where centered determinants could trade
    # sub-grid oscillation against pinned trace values for a fake gain
    ring = interior & ~inner
    u = _project(u, phi_vals, cls, pin=ring, free=inner)
    # seeds with degenerate Hessians (e.g. the envelope of the trace) sit
    # where the barrier gradient blows up; blending toward phi stays in
    # the (convex) admissible class and lifts det quadratically in t
    for _ in range(60):
        uxx, uyy, uxy = hessian_fields(u.values, domain.h)
        dmin = np.nanmin((uxx * uyy - uxy ** 2)[u.interior])
        cert = u.certificate if u.certificate is not None \
            else certify_convex(u, cls.tau_psd)
        if dmin > 1e-6 and cert.passed:
            break
        u = _project(u.copy_with(0.9 * u.values + 0.1 * phi_vals),
                     phi_vals, cls, pin=ring, free=inner)
    area = float(np.count_nonzero(domain.in_omega)) * domain.h ** 2
    scale = max(1.0, float(np.nanmax(np.abs(phi_vals))))
    gtol = options.grad_tol_factor * domain.h ** 2 * area * scale
    free_cols = np.flatnonzero(inner.ravel())

    stages = []
    prev_stalled = False
    prev_delta = np.inf
    for delta in options.schedule():
        bar = BarrierG(delta)
        J = eval_J(u, f_vals, bar).total
        if prev_stalled:
            uxx, uyy, uxy = hessian_fields(u.values, domain.h)
            dmin = float(np.nanmin((uxx * uyy - uxy ** 2)[u.interior]))
            if dmin >= prev_delta:
                # the barrier agrees with log near the iterate for every
                # smaller delta, so the converged stage carries over
                stages.append({"delta": delta, "iterations": 0, "J_final": J,
                               "pg_norm": np.nan, "J_history": [J],
                               "stalled": True, "skipped": True})
                continue
        j_hist = [J]
        stalls = 0
        pg = np.inf
        it = 0
        for it in range(1, options.max_stage_iters + 1):
            g = first_variation(u, f_vals, bar)
            gf = g.ravel()[free_cols]
            pg = float(np.linalg.norm(gf))
            if pg < gtol:
                break
            accepted = False
            J_prev = J
            for ci, step in enumerate(_newton_steps(u, bar, gf, free_cols, cls)):
                gs = float(gf @ step)
                if not np.isfinite(gs) or gs <= 0:
                    continue
                step_full = np.zeros(domain.shape)
                step_full.ravel()[free_cols] = step
                lam_cap = min(1.0, 0.95 * _feasible_step_cap(u, step_full, cls))
                # feasible-capped trials keep the projection on its cheap
                # certify-only path; when the cap truncates the step badly
                # the projected full step lets the iterate slide along the
                # active constraints instead of stopping at first contact
                nhalf = 25 if ci else 6
                lams = [lam_cap * 0.5 ** k for k in range(nhalf)]
                if lam_cap < 0.5 and stalls == 0:
                    lams = [1.0, 0.25] + lams
                for lam in lams:
                    trial_vals = u.values.copy()
                    trial_vals.ravel()[free_cols] += lam * step
                    trial = _project(u.copy_with(trial_vals), phi_vals, cls,
                                     pin=ring, free=inner)
                    # an uncertified trial means the projection gave up;
                    # accepting it on J alone would let the iterate leave
                    # the class and jam the active-set step later
                    cert = trial.certificate
                    if cert is None:
                        cert = certify_convex(trial, cls.tau_psd)
                        trial.certificate = cert
                    if not cert.passed:
                        continue
                    Jt = eval_J(trial, f_vals, bar).total
                    if Jt >= J + options.armijo_c * min(lam, lam_cap) * gs \
                            or Jt > J:
                        u = trial
                        if Jt < J - 1e-9 * max(abs(J), 1.0):
                            raise ConcavityViolation(
                                "functional decreased on an accepted step")
                        J = Jt
                        accepted = True
                        break
                if accepted:
                    break
            j_hist.append(J)
            # a rejected step, or an accepted one the projection undid,
            # both mean the constraints are active: count as a stall
            if not accepted or J - J_prev < 1e-12 * max(abs(J), 1.0):
                stalls += 1
                if stalls >= options.stall_limit:
                    break
            else:
                stalls = 0
        stages.append({"delta": delta, "iterations": it, "J_final": J,
                       "pg_norm": pg, "J_history": j_hist,
                       "stalled": stalls >= options.stall_limit})
        prev_stalled = stalls >= options.stall_limit or pg < gtol
        prev_delta = delta
    # polish: when no constraint is active, plain Newton on the gradient
    # norm (no Armijo, J changes are below rounding here) removes the
    # solver floor so residuals reflect the discretization, not the stop
    # tolerance
    bar = BarrierG(options.schedule()[-1])
    g = first_variation(u, f_vals, bar)
    pg = float(np.linalg.norm(g.ravel()[free_cols]))
    for _ in range(10):
        gf = g.ravel()[free_cols]
        steps = _newton_steps(u, bar, gf, free_cols, None)
        step_full = np.zeros(domain.shape)
        step_full.ravel()[free_cols] = steps[0]
        if _feasible_step_cap(u, step_full, cls) < 1.0:
            break
        trial = u.copy_with(u.values + step_full)
        if not certify_convex(trial, cls.tau_psd).passed:
            break
        g_new = first_variation(trial, f_vals, bar)
        pg_new = float(np.linalg.norm(g_new.ravel()[free_cols]))
        if not np.isfinite(pg_new) or pg_new >= pg:
            break
        u, g, pg = trial, g_new, pg_new
    res = euler_residual(u, f_vals, BarrierG(options.schedule()[-1]))
    memb = membership(u, cls)
    bgap = boundary_gradient_gap(u, grad_phi)
    report.set("stages", stages)
    report.set("membership", memb.summary())
    report.set("euler_residual_linf", res.linf)
    report.set("euler_residual_l2", res.l2)
    report.set("boundary_gradient_gap", bgap)
    report.set("J0", eval_J0(u, f_vals).total)
    report.set("u_minus_phi_linf",
               float(np.nanmax(np.abs(u.values - phi_vals))))
    return u, report


def _active_rows(u: ConvexGridFunction, cls: AdmissibleClass,
                 free_cols: np.ndarray, act_tol: float) -> sp.csr_matrix:
    """Jacobian rows of the near-binding constraints, free columns only.

    Chord slopes within act_tol of their cap and directional second
    differences within act_tol/h^2 of -tau are treated as equalities for
    the step computation, so Newton slides along the active faces instead
    of stopping at first contact.
    """
    shape = u.domain.shape
    N = shape[0] * shape[1]
    col_of = -np.ones(N, dtype=np.int64)
    col_of[free_cols] = np.arange(free_cols.size)
    rows_i, cols_j, vals = [], [], []
    nrow = 0

    def add_entries(flat_idx, weights):
        nonlocal nrow
        for fl, wgt in zip(flat_idx, weights):
            c = col_of[fl]
            keep = c >= 0
            rows_i.append(np.arange(nrow, nrow + fl.size)[keep])
            cols_j.append(c[keep])
            vals.append(np.broadcast_to(wgt, fl.shape)[keep]
                        if np.ndim(wgt) else np.full(int(keep.sum()), wgt))
        nrow += flat_idx[0].size

    for k, e in enumerate(_CHORD_DIRS):
        di, dj = e
        cap = cls.chord_cap(k)
        cu = chord_slopes(u, e)
        act = np.isfinite(cu) & (cu > cap - act_tol)
        if not np.any(act):
            continue
        ii, jj = np.nonzero(act)
        w = 1.0 / (u.h * float(np.hypot(di, dj)))
        p0 = np.ravel_multi_index((ii, jj), shape)
        p1 = np.ravel_multi_index((ii + di, jj + dj), shape)
        add_entries((p1, p0), (w, -w))

    h2 = u.h ** 2
    interior = u.interior
    for (di, dj) in _SD_DIRS:
        w = 1.0 / (h2 * (di * di + dj * dj))
        du = (shift(u.values, di, dj, np.nan) - 2.0 * u.values
              + shift(u.values, -di, -dj, np.nan)) * w
        with np.errstate(invalid="ignore"):
            act = interior & np.isfinite(du) & (du < -cls.tau_psd + act_tol / h2)
        if not np.any(act):
            continue
        ii, jj = np.nonzero(act)
        p0 = np.ravel_multi_index((ii, jj), shape)
        pp = np.ravel_multi_index((ii + di, jj + dj), shape)
        pm = np.ravel_multi_index((ii - di, jj - dj), shape)
        add_entries((pp, p0, pm), (w, -2.0 * w, w))

    if nrow == 0:
        return sp.csr_matrix((0, free_cols.size))
    return sp.csr_matrix((np.concatenate(vals),
                          (np.concatenate(rows_i), np.concatenate(cols_j))),
                         shape=(nrow, free_cols.size))


def _kkt_solve(Hreg, A, gf) -> Tuple[Optional[np.ndarray], Optional[np.ndarray]]:
    """Equality-constrained Newton step and multipliers; None on failure."""
    n, m = Hreg.shape[0], A.shape[0]
    try:
        kkt = sp.bmat([[Hreg, A.T], [A, -1e-12 * sp.identity(m)]], format="csc")
        sol = spla.spsolve(kkt, np.concatenate([-gf, np.zeros(m)]))
    except Exception:
        return None, None
    if not np.all(np.isfinite(sol)):
        return None, None
    return sol[:n], sol[n:]


def _newton_steps(u: ConvexGridFunction, bar: BarrierG, gf: np.ndarray,
                  free_cols: np.ndarray,
                  cls: Optional[AdmissibleClass] = None) -> List[np.ndarray]:
    """Candidate ascent steps, best first.

    Near-binding constraints enter as KKT equalities so Newton slides
    along the active faces; since the working set may hold faces the
    ascent should leave, variants dropping rows by multiplier sign and
    the unconstrained Newton step are offered as fallbacks for the line
    search to test.
    """
    cands: List[np.ndarray] = []
    try:
        free = np.zeros(u.domain.shape, bool)
        free.ravel()[free_cols] = True
        H, cols = hessian_of_J(u, bar, free)
        mu = 1e-10 * max(1.0, float(np.abs(H.diagonal()).max()))
        Hreg = (H - mu * sp.identity(H.shape[0], format="csr")).tocsc()
        plain = None
        try:
            plain = spla.spsolve(Hreg, -gf)
            if not np.all(np.isfinite(plain)):
                plain = None
        except Exception:
            plain = None
        if cls is not None:
            scale = max(1.0, float(np.nanmax(np.abs(u.values[u.region]))))
            A = _active_rows(u, cls, free_cols, 1e-7 * scale)
            if A.shape[0] > 0:
                step, mus = _kkt_solve(Hreg, A, gf)
                if step is not None:
                    cands.append(step)
                    for keep in (mus <= 0.0, mus >= 0.0):
                        if 0 < int(keep.sum()) < keep.size:
                            s2, _ = _kkt_solve(Hreg, A[keep], gf)
                            if s2 is not None:
                                cands.append(s2)
        if plain is not None:
            cands.append(plain)
    except Exception:
        pass
    cands.append(gf.copy())
    return cands


def boundary_gradient_gap(u: ConvexGridFunction, grad_phi: Callable) -> float:
    """max over near-boundary nodes of |D(u - phi)| by one-sided differences."""
    dom = u.domain
    bmask = dom.omega_boundary
    g1, g2 = grad_phi(dom.x1, dom.x2)
    h = u.h
    gap = 0.0
    for (di, dj) in ((0, 1), (1, 0)):
        fwd = (shift(u.values, di, dj, np.nan) - u.values) / h
        bwd = (u.values - shift(u.values, -di, -dj, np.nan)) / h
        gphi = g1 if dj != 0 else g2
        for d in (fwd, bwd):
            diff = np.abs(d - gphi)
            vals = diff[bmask & np.isfinite(diff)]
            if vals.size:
                gap = max(gap, float(np.max(vals)))
    return gap


def uniqueness_probe(domain: GridDomain, phi: Callable, grad_phi: Callable,
                     f_func: Callable, seeds: Sequence[np.ndarray],
                     options: Optional[AscentOptions] = None) -> Tuple[float, list]:
    """Max pairwise distance of maximizers started from distinct seeds."""
    if len(seeds) < 2:
        raise ValueError("need at least two seeds")
    cls = AdmissibleClass.build(domain, phi, grad_phi)
    sols = []
    for s in seeds:
        u, _ = maximize(domain, phi, grad_phi, f_func, options=options,
                        cls=cls, initial=s)
        sols.append(u.values)
    dmax = 0.0
    for a in range(len(sols)):
        for b in range(a + 1, len(sols)):
            m = domain.in_omega
            dmax = max(dmax, float(np.nanmax(np.abs(sols[a][m] - sols[b][m]))))
    return dmax, sols


def default_seeds(domain: GridDomain, phi: Callable, n: int = 3) -> List[np.ndarray]:
    """phi itself, the convex envelope of its trace, and their midpoint."""
    phi_vals = domain.sample(phi, domain.in_omega)
    env = envelope_of_boundary(domain, phi_vals)
    env[domain.omega_boundary] = phi_vals[domain.omega_boundary]
    seeds = [phi_vals, env]
    if n >= 3:
        seeds.append(0.5 * (phi_vals + env))
    return seeds[:n]
