"""Problem file parsing and validation.

A problem is a JSON object with exactly the keys
{"domain", "R", "h", "phi", "f", "psi", "schedules", "tolerances", "out"};
expressions use the tiny grammar of :mod:`abreulab.expressions` so that
analytic gradients and Hessians are available everywhere on B_R.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .expressions import Expr, parse_expression
from .grid import GridDomain

_ALLOWED_KEYS = {"domain", "R", "h", "phi", "f", "psi", "schedules",
                 "tolerances", "out"}
_REQUIRED_KEYS = {"domain", "R", "h", "phi"}

# named manufactured forcings paired with the phi that solves them
MANUFACTURED = {
    "exp": "exp(-x1) + exp(-x2)",
    "zero": "0",
}

_DEFAULT_DELTAS = [0.5 * 4.0 ** (-k) for k in range(7)]


class ProblemError(ValueError):
    pass


@dataclass
class Schedules:
    deltas: List[float] = field(default_factory=lambda: list(_DEFAULT_DELTAS))
    homotopy_steps: int = 11
    penalty_j: List[int] = field(default_factory=lambda: [4, 6, 8])
    beta_m: List[float] = field(default_factory=lambda: [0.0, 10.0, 100.0])
    cutoff_k: int = 8


@dataclass
class ProblemSpec:
    domain_kind: str          # "disc" or "polygon"
    disc_radius: Optional[float]
    polygon: Optional[np.ndarray]
    R: float
    h: float
    phi_expr: Expr
    f_expr: Expr
    psi_expr: Expr
    schedules: Schedules
    tolerances: dict
    out: str

    def build_domain(self, h: Optional[float] = None) -> GridDomain:
        hh = float(h) if h is not None else self.h
        if self.domain_kind == "disc":
            return GridDomain.disc(self.disc_radius, self.R, hh)
        return GridDomain.polygon(self.polygon, self.R, hh)

    # callables ---------------------------------------------------------
    def phi(self, x1, x2):
        return self.phi_expr(x1, x2)

    def grad_phi(self, x1, x2):
        return self.phi_expr.grad(x1, x2)

    def f(self, x1, x2):
        return self.f_expr(x1, x2)

    def psi(self, x1, x2):
        return self.psi_expr(x1, x2)


def _parse_field_expr(text: str) -> Expr:
    text = str(text).strip()
    if text.startswith("manufactured:"):
        name = text.split(":", 1)[1]
        if name not in MANUFACTURED:
            raise ProblemError(f"unknown manufactured forcing {name!r}")
        text = MANUFACTURED[name]
    return parse_expression(text)


def _check_phi_convex(spec: ProblemSpec, n: int = 41):
    xs = np.linspace(-spec.R, spec.R, n)
    X1, X2 = np.meshgrid(xs, xs)
    inside = np.hypot(X1, X2) <= spec.R
    pxx, pxy, pyy = spec.phi_expr.hess(X1[inside], X2[inside])
    pxx = np.broadcast_to(np.asarray(pxx, float), X1[inside].shape)
    pyy = np.broadcast_to(np.asarray(pyy, float), X1[inside].shape)
    pxy = np.broadcast_to(np.asarray(pxy, float), X1[inside].shape)
    eigmin = 0.5 * (pxx + pyy) - np.sqrt(0.25 * (pxx - pyy) ** 2 + pxy ** 2)
    bad = eigmin < -1e-10
    if np.any(bad):
        k = int(np.argmax(bad))
        wx = float(X1[inside][k])
        wy = float(X2[inside][k])
        raise ProblemError(
            f"phi is not convex: Hessian indefinite at ({wx:g}, {wy:g})")


def parse_problem_dict(data: dict) -> ProblemSpec:
    if not isinstance(data, dict):
        raise ProblemError("problem file must hold a JSON object")
    unknown = set(data) - _ALLOWED_KEYS
    if unknown:
        raise ProblemError(f"unknown problem keys: {sorted(unknown)}")
    missing = _REQUIRED_KEYS - set(data)
    if missing:
        raise ProblemError(f"missing problem keys: {sorted(missing)}")

    dom = data["domain"]
    disc_radius = None
    polygon = None
    if isinstance(dom, dict) and "disc" in dom and len(dom) == 1:
        kind = "disc"
        disc_radius = float(dom["disc"])
    elif isinstance(dom, dict) and "polygon" in dom and len(dom) == 1:
        kind = "polygon"
        polygon = np.asarray(dom["polygon"], float)
    elif isinstance(dom, (int, float)):
        kind = "disc"
        disc_radius = float(dom)
    elif isinstance(dom, list):
        kind = "polygon"
        polygon = np.asarray(dom, float)
    else:
        raise ProblemError("domain must be {'disc': r}, {'polygon': [...]}, "
                           "a radius, or a vertex list")

    sched_in = data.get("schedules", {}) or {}
    known = {"deltas", "homotopy_steps", "penalty_j", "beta_m", "cutoff_k"}
    bad = set(sched_in) - known
    if bad:
        raise ProblemError(f"unknown schedule keys: {sorted(bad)}")
    sched = Schedules(
        deltas=[float(v) for v in sched_in.get("deltas", _DEFAULT_DELTAS)],
        homotopy_steps=int(sched_in.get("homotopy_steps", 11)),
        penalty_j=[int(v) for v in sched_in.get("penalty_j", [4, 6, 8])],
        beta_m=[float(v) for v in sched_in.get("beta_m", [0.0, 10.0, 100.0])],
        cutoff_k=int(sched_in.get("cutoff_k", 8)),
    )

    spec = ProblemSpec(
        domain_kind=kind,
        disc_radius=disc_radius,
        polygon=polygon,
        R=float(data["R"]),
        h=float(data["h"]),
        phi_expr=_parse_field_expr(data["phi"]),
        f_expr=_parse_field_expr(data.get("f", "0")),
        psi_expr=_parse_field_expr(data.get("psi", "1")),
        schedules=sched,
        tolerances=dict(data.get("tolerances", {}) or {}),
        out=str(data.get("out", ".")),
    )
    _check_phi_convex(spec)
    return spec


def parse_problem(path: str) -> ProblemSpec:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ProblemError(f"problem file parse error: {exc}") from exc
    return parse_problem_dict(data)
