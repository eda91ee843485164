"""Concave barrier surrogate for log(det) and its calculus.

The family G_delta restores log d for d >= delta and switches to a
Hoelder-continuous power branch below, keeping G, G' and G'' continuous
across the joint.  Dimension is fixed to 2, so the Hoelder exponent is
theta = 1/4.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

THETA = 0.25  # 1/(n+2) with n = 2


class BarrierDomainError(ValueError):
    pass


@dataclass(frozen=True)
class BarrierG:
    """Barrier with parameter delta in (0, 1)."""

    delta: float
    theta: float = THETA

    def __post_init__(self):
        if not (0.0 < self.delta < 1.0):
            raise BarrierDomainError(f"delta must be in (0, 1), got {self.delta}")

    # branch coefficients ------------------------------------------------
    @property
    def _a(self) -> float:
        # coefficient of d^theta on the lower branch
        th = self.theta
        return self.delta ** (-th) / (th * (1.0 - th))

    @property
    def _b(self) -> float:
        # coefficient of d on the lower branch
        th = self.theta
        return th / (self.delta * (1.0 - th))

    @property
    def _c(self) -> float:
        th = self.theta
        return np.log(self.delta) - (1.0 + th) / th

    def value_at_zero(self) -> float:
        return float(self._c)

    # evaluation ---------------------------------------------------------
    def G(self, d):
        d = np.asarray(d, dtype=float)
        if np.any(d < 0):
            raise BarrierDomainError("G is defined on d >= 0")
        low = d < self.delta
        out = np.empty_like(d)
        dl = np.where(low, d, 1.0)
        out_low = self._a * dl ** self.theta - self._b * dl + self._c
        with np.errstate(divide="ignore"):
            out_high = np.log(np.where(low, 1.0, d))
        out = np.where(low, out_low, out_high)
        return out if out.ndim else float(out)

    def G1(self, d):
        """First derivative G'(d), positive and decreasing; d > 0."""
        d = np.asarray(d, dtype=float)
        if np.any(d <= 0):
            raise BarrierDomainError("G' is defined on d > 0")
        low = d < self.delta
        dl = np.where(low, d, 1.0)
        th = self.theta
        out_low = self._a * th * dl ** (th - 1.0) - self._b
        out = np.where(low, out_low, 1.0 / np.where(low, 1.0, d))
        return out if out.ndim else float(out)

    def G2(self, d):
        """Second derivative G''(d) < 0; d > 0."""
        d = np.asarray(d, dtype=float)
        if np.any(d <= 0):
            raise BarrierDomainError("G'' is defined on d > 0")
        low = d < self.delta
        dl = np.where(low, d, 1.0)
        th = self.theta
        out_low = -self.delta ** (-th) * dl ** (th - 2.0)
        out = np.where(low, out_low, -1.0 / np.where(low, 1.0, d) ** 2)
        return out if out.ndim else float(out)

    def G3(self, d):
        """Branch-wise third derivative; undefined exactly at d = delta."""
        d = np.asarray(d, dtype=float)
        if np.any(d <= 0):
            raise BarrierDomainError("G''' is defined on d > 0")
        low = d < self.delta
        dl = np.where(low, d, 1.0)
        th = self.theta
        out_low = (2.0 - th) * self.delta ** (-th) * dl ** (th - 3.0)
        out = np.where(low, out_low, 2.0 / np.where(low, 1.0, d) ** 3)
        return out if out.ndim else float(out)

    def eval(self, d):
        """(G, G', G'') at d; at d = 0 only G is finite."""
        return self.G(d), self.G1(np.maximum(d, np.finfo(float).tiny)), \
            self.G2(np.maximum(d, np.finfo(float).tiny))

    # inverse of G' ------------------------------------------------------
    def g_inverse(self, w):
        """d = g(w) with G'(d) = w, for w > 0.  Decreasing in w."""
        w_arr = np.asarray(w, dtype=float)
        if np.any(w_arr <= 0):
            raise BarrierDomainError("g is defined on w > 0")
        w_switch = 1.0 / self.delta
        out = np.where(w_arr <= w_switch, 1.0 / np.maximum(w_arr, 1e-300), 0.0)
        hard = w_arr > w_switch
        if np.any(hard):
            flat = np.atleast_1d(out)
            wflat = np.atleast_1d(w_arr)
            idx = np.flatnonzero(np.atleast_1d(hard))
            for i in idx:
                flat[i] = self._invert_lower_branch(float(wflat[i]))
            out = flat.reshape(np.shape(w_arr))
        return out if np.ndim(w) else float(out)

    def _invert_lower_branch(self, w: float) -> float:
        # closed-form seed, then a safeguarded root solve
        th = self.theta
        seed = ((w + self._b) / (self._a * th)) ** (1.0 / (th - 1.0))
        lo = min(seed * 0.5, self.delta)
        hi = min(self.delta, seed * 2.0)
        f = lambda d: self.G1(d) - w
        # widen the bracket if the seed was off
        for _ in range(80):
            if f(lo) > 0:
                break
            lo *= 0.5
        for _ in range(80):
            if f(hi) < 0 or hi >= self.delta:
                break
            hi = min(self.delta, hi * 2.0)
        if f(hi) > 0:
            return hi
        return brentq(f, lo, hi, xtol=1e-300, rtol=1e-14)

    # dual weight of the Legendre-side Euler equation --------------------
    def dual_weight(self, d_star):
        """w* = G(1/d*) - (1/d*) G'(1/d*), for d* > 0."""
        d_star = np.asarray(d_star, dtype=float)
        if np.any(d_star <= 0):
            raise BarrierDomainError("dual weight needs d* > 0")
        inv = 1.0 / d_star
        out = self.G(inv) - inv * self.G1(inv)
        return out if out.ndim else float(out)

    # condition-(c) auxiliary F(t) = G(t^2) ------------------------------
    def F(self, t):
        return self.G(np.asarray(t, float) ** 2)

    def F1(self, t):
        t = np.asarray(t, float)
        return 2.0 * t * self.G1(t ** 2)

    def F2(self, t):
        t = np.asarray(t, float)
        return 2.0 * self.G1(t ** 2) + 4.0 * t ** 2 * self.G2(t ** 2)

    # linear change of variables -----------------------------------------
    def transform(self, T) -> "TransformedBarrier":
        """Barrier for u(T^-1 y): G~(d~) = G(|T|^2 d~), delta~ = |T|^-2 delta."""
        T = np.asarray(T, dtype=float)
        det = float(np.linalg.det(T))
        if det == 0.0:
            raise BarrierDomainError("transformation must be nonsingular")
        return TransformedBarrier(base=self, jacobian=abs(det))


@dataclass(frozen=True)
class TransformedBarrier:
    """G~(d~) = G(|T|^2 d~) after a linear change of coordinates."""

    base: BarrierG
    jacobian: float  # |det T|

    @property
    def delta(self) -> float:
        return self.base.delta / self.jacobian ** 2

    def G(self, d):
        return self.base.G(np.asarray(d, float) * self.jacobian ** 2)

    def G1(self, d):
        return self.base.G1(np.asarray(d, float) * self.jacobian ** 2) * self.jacobian ** 2

    def G2(self, d):
        return self.base.G2(np.asarray(d, float) * self.jacobian ** 2) * self.jacobian ** 4


def check_conditions(delta: float, d_samples=None, t_samples=None) -> dict:
    """Measure the structural-condition witnesses of the barrier.

    Returns the JSON-ready report with measured C1 = sup(-d^2 G''),
    C2 = sup|d G''' / G''| (branch-wise, excluding a neighbourhood of the
    joint), C3 = sup of t F'(t) near 0, the branch gaps at d = delta, and
    a concavity flag for F.
    """
    bar = BarrierG(delta)
    if d_samples is None:
        d_samples = np.geomspace(1e-8, 1e4, 4001)
    if t_samples is None:
        t_samples = np.geomspace(1e-6, 1e-3, 200)
    d_samples = np.asarray(d_samples, float)

    # exclude the joint where G''' jumps
    away = np.abs(d_samples - delta) > 1e-6 * delta
    ds = d_samples[away]
    c1 = float(np.max(-(ds ** 2) * bar.G2(ds)))
    c2 = float(np.max(np.abs(ds * bar.G3(ds) / bar.G2(ds))))
    tF1 = t_samples * bar.F1(t_samples)
    c3 = float(np.max(tF1))

    eps = 1e-13
    d_lo = delta * (1.0 - eps)
    d_hi = delta * (1.0 + eps)

    def relgap(f):
        lo, hi = float(f(d_lo)), float(f(d_hi))
        scale = max(abs(lo), abs(hi), 1e-300)
        return abs(hi - lo) / scale

    t_all = np.geomspace(1e-6, 1e3, 2000)
    f_concave = bool(np.all(bar.F2(t_all) < 0))
    g1_pos = bool(np.all(bar.G1(d_samples[d_samples > 0]) > 0))

    return {
        "delta": float(delta),
        "theta": THETA,
        "C1": c1,
        "C2": c2,
        "C3": c3,
        "branch_gap_G": relgap(bar.G),
        "branch_gap_G1": relgap(bar.G1),
        "branch_gap_G2": relgap(bar.G2),
        "F_concave": f_concave,
        "G1_positive": g1_pos,
        "log_branch_exact": bool(abs(bar.G(1.0)) == 0.0 and abs(bar.G(np.e) - 1.0) < 1e-14),
        "G_at_zero": bar.value_at_zero(),
    }
