import numpy as np
import pytest

from abreulab.convexity import (ConvexGridFunction, ConvexityError,
                                certify_convex, det_and_cofactor,
                                diagonal_second_differences, discrete_hessian,
                                envelope_from_points, envelope_of_boundary,
                                from_callable, hessian_fields, project_convex,
                                StencilError)
from abreulab.grid import GridDomain


@pytest.fixture(scope="module")
def disc():
    return GridDomain.disc(1.0, 1.5, 1.0 / 8)


def quad(a, b, c):
    # (x, y) -> a x^2/2 + b x y + c y^2/2 has constant Hessian [[a, b], [b, c]]
    return lambda x, y: 0.5 * a * x ** 2 + b * x * y + 0.5 * c * y ** 2


def test_hessian_fields_exact_on_quadratic(disc):
    u = from_callable(disc, quad(2.0, 0.5, 3.0))
    uxx, uyy, uxy = hessian_fields(u.values, u.h)
    inner = u.interior
    np.testing.assert_allclose(uxx[inner], 2.0, atol=1e-10)
    np.testing.assert_allclose(uyy[inner], 3.0, atol=1e-10)
    np.testing.assert_allclose(uxy[inner], 0.5, atol=1e-10)


def test_diagonal_second_differences_quadratic(disc):
    # along (1, 1)/sqrt(2): second derivative = (a + 2b + c)/2
    u = from_callable(disc, quad(2.0, 0.5, 3.0))
    d1, d2 = diagonal_second_differences(u.values, u.h)
    inner = u.interior
    np.testing.assert_allclose(d1[inner], 0.5 * (2.0 + 1.0 + 3.0), atol=1e-9)
    np.testing.assert_allclose(d2[inner], 0.5 * (2.0 - 1.0 + 3.0), atol=1e-9)


def test_discrete_hessian_single_node(disc):
    u = from_callable(disc, quad(1.0, 0.25, 2.0))
    c = disc.shape[0] // 2
    H = discrete_hessian(u, (c, c))
    np.testing.assert_allclose(H, [[1.0, 0.25], [0.25, 2.0]], atol=1e-10)


def test_discrete_hessian_needs_full_stencil(disc):
    u = from_callable(disc, quad(1.0, 0.0, 1.0))
    ii, jj = np.nonzero(disc.omega_boundary)
    with pytest.raises(StencilError):
        discrete_hessian(u, (int(ii[0]), int(jj[0])))


def test_certify_convex_accepts_convex(disc):
    u = from_callable(disc, quad(1.0, 0.5, 1.0))   # eigenvalues 0.5, 1.5
    cert = certify_convex(u)
    assert cert.passed
    assert cert.worst_eigenvalue == pytest.approx(0.5, abs=1e-8)
    assert cert.n_violations == 0


def test_certify_convex_rejects_saddle(disc):
    u = from_callable(disc, quad(1.0, 0.0, -1.0))
    cert = certify_convex(u)
    assert not cert.passed
    assert cert.worst_eigenvalue == pytest.approx(-1.0, abs=1e-8)
    assert cert.n_violations > 0


def test_non_finite_values_rejected(disc):
    vals = disc.sample(quad(1.0, 0.0, 1.0), disc.in_omega)
    vals[disc.shape[0] // 2, disc.shape[1] // 2] = np.nan
    with pytest.raises(ConvexityError):
        ConvexGridFunction(disc, vals, disc.in_omega)


def test_det_and_cofactor_quadratic(disc):
    u = from_callable(disc, quad(2.0, 0.5, 3.0))
    d, (c11, c12, c22), cert = det_and_cofactor(u)
    inner = u.interior
    np.testing.assert_allclose(d[inner], 2.0 * 3.0 - 0.25, atol=1e-9)
    # cofactor of [[2, .5], [.5, 3]] is [[3, -.5], [-.5, 2]]
    np.testing.assert_allclose(c11[inner], 3.0, atol=1e-9)
    np.testing.assert_allclose(c12[inner], -0.5, atol=1e-9)
    np.testing.assert_allclose(c22[inner], 2.0, atol=1e-9)


def test_project_convex_identity_on_convex(disc):
    u = from_callable(disc, quad(1.0, 0.0, 1.0))
    out, rep = project_convex(u)
    assert rep.converged
    assert rep.iterations == 0
    np.testing.assert_array_equal(out.values[disc.in_omega],
                                  u.values[disc.in_omega])


def test_project_convex_repairs_bump(disc):
    vals = disc.sample(quad(1.0, 0.0, 1.0), disc.in_omega)
    c = disc.shape[0] // 2
    vals[c, c] += 0.05     # concave spike at the center
    u = ConvexGridFunction(disc, vals, disc.in_omega)
    assert not certify_convex(u).passed
    out, rep = project_convex(u)
    assert out.certificate.passed
    # trace untouched
    np.testing.assert_array_equal(out.values[disc.omega_boundary],
                                  vals[disc.omega_boundary])


def test_envelope_below_data_and_tight_for_convex():
    rng = np.random.default_rng(3)
    x = rng.uniform(-1, 1, 400)
    y = rng.uniform(-1, 1, 400)
    v = x ** 2 + y ** 2
    env = envelope_from_points(x, y, v, x, y)
    assert np.all(env <= v + 1e-9)
    # for convex data the envelope interpolates the points themselves
    assert np.max(v - env) < 0.05


def test_envelope_of_boundary_affine_data(disc):
    # affine boundary data extends to the same affine function
    vals = disc.sample(lambda x, y: 2.0 * x - y + 0.3, disc.in_omega)
    env = envelope_of_boundary(disc, vals)
    np.testing.assert_allclose(env[disc.in_omega], vals[disc.in_omega],
                               atol=1e-8)
