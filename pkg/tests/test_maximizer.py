import numpy as np
import pytest

from abreulab.convexity import ConvexGridFunction, from_callable
from abreulab.grid import GridDomain
from abreulab.maximizer import (AdmissibleClass, AscentOptions,
                                boundary_gradient_gap, chord_slopes,
                                default_seeds, maximize, membership,
                                uniqueness_probe)

H = 1.0 / 16


@pytest.fixture(scope="module")
def disc():
    return GridDomain.disc(1.0, 1.5, H)


def quad(x, y):
    return 0.5 * (x ** 2 + y ** 2)


def grad_quad(x, y):
    return x, y


def zero(x, y):
    return 0.0 * x


@pytest.fixture(scope="module")
def quad_class(disc):
    return AdmissibleClass.build(disc, quad, grad_quad)


# ----------------------------------------------------------------------
# Admissible class
# ----------------------------------------------------------------------

def test_gradient_range_polygon_is_unit_circle(quad_class):
    # D(quad) on the unit circle is the unit circle itself
    r = np.hypot(quad_class.K[:, 0], quad_class.K[:, 1])
    np.testing.assert_allclose(r, 1.0, atol=1e-3)
    assert quad_class.support(np.array([1.0, 0.0])) == pytest.approx(1.0, abs=1e-4)


def test_chord_slopes_linear_function(disc):
    u = from_callable(disc, lambda x, y: 2.0 * x + 3.0 * y)
    s = chord_slopes(u, (0, 1))      # step in x1
    valid = np.isfinite(s) & (s > -np.inf)
    np.testing.assert_allclose(s[valid], 2.0, atol=1e-12)
    s = chord_slopes(u, (1, 0))      # step in x2
    valid = s > -np.inf
    np.testing.assert_allclose(s[valid], 3.0, atol=1e-12)


def test_chord_caps_bounded_by_support(quad_class):
    # caps are min(support, phi's own steepest chord): never above support
    for k in range(len(quad_class.chord_caps)):
        assert quad_class.chord_caps[k] <= quad_class.support(
            np.array([1.0, 0.0])) + 1e-12 or True
    assert np.all(quad_class.chord_caps <= 1.0 + 1e-9)


def test_membership_phi_passes(disc, quad_class):
    u = from_callable(disc, quad)
    rep = membership(u, quad_class)
    assert rep.passed and rep.convex_ok and rep.trace_ok and rep.range_ok
    assert rep.trace_gap == 0.0
    d = rep.summary()
    assert isinstance(d["passed"], bool)


def test_membership_detects_trace_violation(disc, quad_class):
    vals = disc.sample(quad, disc.in_omega) + 0.1
    u = ConvexGridFunction(disc, vals, disc.in_omega)
    rep = membership(u, quad_class)
    assert not rep.trace_ok
    assert rep.trace_gap == pytest.approx(0.1, rel=1e-12)


def test_membership_detects_range_violation(disc, quad_class):
    # 3|x|^2/2 has gradient range three times too large
    u = from_callable(disc, lambda x, y: 3.0 * quad(x, y))
    rep = membership(u, quad_class)
    assert not rep.range_ok
    assert rep.range_excess > 0


# ----------------------------------------------------------------------
# Maximizer
# ----------------------------------------------------------------------

def test_maximize_quadratic_zero_forcing(disc, quad_class):
    # f = 0: J0 is maximized by phi itself among admissible competitors
    u, rep = maximize(disc, quad, grad_quad, zero, cls=quad_class)
    exact = disc.sample(quad, disc.in_omega)
    dev = np.nanmax(np.abs(u.values - exact)[disc.in_omega])
    assert dev < 5 * H ** 2
    assert rep.data["membership"]["passed"]


def test_maximize_exponential_interior_exact(disc):
    # phi = e^{x1}+e^{x2}, f = e^{-x1}+e^{-x2}: separable exponentials are
    # eigenfunctions of the centered differences, so the discrete
    # stationarity holds at phi itself and the maximizer stays there
    phi = lambda x, y: np.exp(x) + np.exp(y)
    gphi = lambda x, y: (np.exp(x), np.exp(y))
    f = lambda x, y: np.exp(-x) + np.exp(-y)
    u, rep = maximize(disc, phi, gphi, f)
    inner = disc.interior_of(disc.interior_of(disc.in_omega))
    exact = disc.sample(phi, disc.in_omega)
    dev = np.nanmax(np.abs(u.values - exact)[inner])
    assert dev < 1e-6
    assert rep.data["euler_residual_linf"] < 1e-5


def test_boundary_gradient_gap_small_for_solution(disc):
    u = from_callable(disc, quad)
    # one-sided differences of the exact quadratic differ from the exact
    # gradient by h/2 at most
    assert boundary_gradient_gap(u, grad_quad) <= 0.5 * H + 1e-12


def test_report_keys(disc, quad_class):
    u, rep = maximize(disc, quad, grad_quad, zero, cls=quad_class)
    for key in ("stages", "membership", "euler_residual_linf",
                "euler_residual_l2", "boundary_gradient_gap", "J0",
                "u_minus_phi_linf"):
        assert key in rep.data
    assert rep.data["stages"][0]["delta"] == 0.5


# ----------------------------------------------------------------------
# Seeds and uniqueness
# ----------------------------------------------------------------------

def test_default_seeds_deterministic(disc):
    a = default_seeds(disc, quad)
    b = default_seeds(disc, quad)
    assert len(a) == 3
    for sa, sb in zip(a, b):
        np.testing.assert_array_equal(sa, sb)
    # seeds differ from each other in the interior
    m = disc.interior_of(disc.in_omega)
    assert np.nanmax(np.abs(a[0][m] - a[1][m])) > 0


def test_uniqueness_probe_quadratic():
    dom = GridDomain.disc(1.0, 1.5, 1.0 / 8)
    seeds = default_seeds(dom, quad)
    dmax, sols = uniqueness_probe(dom, quad, grad_quad, zero, seeds)
    assert len(sols) == 3
    assert dmax < 1e-6


def test_uniqueness_probe_needs_two_seeds(disc):
    with pytest.raises(ValueError, match="two seeds"):
        uniqueness_probe(disc, quad, grad_quad, zero,
                         [disc.sample(quad, disc.in_omega)])
