import numpy as np
import pytest

from abreulab.barrier import BarrierG
from abreulab.convexity import from_callable
from abreulab.functional import (abreu_residual, eval_J, eval_J0, euler_residual,
                                 first_variation, hessian_of_J, jensen_bound,
                                 margin_mask)
from abreulab.grid import GridDomain


@pytest.fixture(scope="module")
def disc():
    return GridDomain.disc(1.0, 1.5, 1.0 / 8)


@pytest.fixture(scope="module")
def bar():
    return BarrierG(0.01)


def quad_fn(a):
    return lambda x, y: 0.5 * a * (x ** 2 + y ** 2)


def test_J_zero_on_unit_determinant(disc, bar):
    # det D^2(|x|^2/2) = 1 and G(1) = log 1 = 0, so the barrier part vanishes
    u = from_callable(disc, quad_fn(1.0))
    J = eval_J(u, np.zeros(disc.shape), bar)
    assert J.barrier_part == pytest.approx(0.0, abs=1e-12)
    assert J.linear_part == 0.0
    assert J.total == pytest.approx(0.0, abs=1e-12)
    assert J.clamped_nodes == 0
    assert not J.minus_infinity


def test_J_barrier_part_scaled_quadratic(disc, bar):
    # det = a^2 everywhere: A(u) = (h^2 * n_interior) * G(a^2)
    a = 2.0
    u = from_callable(disc, quad_fn(a))
    J = eval_J(u, np.zeros(disc.shape), bar)
    n = np.count_nonzero(u.interior)
    assert J.barrier_part == pytest.approx(n * disc.h ** 2 * bar.G(a ** 2),
                                           rel=1e-12)


def test_J_linear_part(disc, bar):
    u = from_callable(disc, quad_fn(1.0))
    f = np.ones(disc.shape)
    J = eval_J(u, f, bar)
    expected = disc.h ** 2 * np.sum(u.values[u.region])
    assert J.linear_part == pytest.approx(expected, rel=1e-14)
    assert J.total == pytest.approx(J.barrier_part - J.linear_part, rel=1e-14)


def test_J0_minus_infinity_on_saddle(disc):
    u = from_callable(disc, lambda x, y: 0.5 * (x ** 2 - y ** 2))
    J = eval_J0(u, np.zeros(disc.shape))
    assert J.minus_infinity
    assert J.total == -np.inf


def test_J0_matches_J_log_branch(disc, bar):
    # for det values on the log branch the two functionals agree
    u = from_callable(disc, quad_fn(1.5))
    f = np.zeros(disc.shape)
    assert eval_J0(u, f).total == pytest.approx(eval_J(u, f, bar).total,
                                                rel=1e-12)


def test_clamped_nodes_counted(disc, bar):
    u = from_callable(disc, lambda x, y: 0.5 * (x ** 2 - y ** 2))
    J = eval_J(u, np.zeros(disc.shape), bar)
    assert J.clamped_nodes == np.count_nonzero(u.interior)


def test_margin_mask_nested(disc):
    u = from_callable(disc, quad_fn(1.0))
    m = margin_mask(u, layers=2)
    assert np.all(u.interior[m])
    assert np.count_nonzero(m) < np.count_nonzero(u.interior)


def test_euler_residual_zero_for_constant_weight(disc, bar):
    # quadratic: det constant so w = G'(det) is constant and the operator
    # annihilates it; with f = 0 the residual vanishes identically
    u = from_callable(disc, quad_fn(1.0))
    rep = euler_residual(u, np.zeros(disc.shape), bar)
    assert rep.n_nodes > 0
    assert rep.linf < 1e-11


def test_abreu_residual_constant_f(disc):
    # w = 1/det = 1/a^2 constant; residual of f = 0 vanishes
    u = from_callable(disc, quad_fn(2.0))
    rep = abreu_residual(u, np.zeros(disc.shape))
    assert rep.linf < 1e-11
    assert rep.n_excluded == 0


def test_jensen_bound_dominates_quadrature(disc, bar):
    u = from_callable(disc, quad_fn(1.3))
    r = np.hypot(disc.x1, disc.x2)
    E = (r < 0.5) & u.interior
    bound, lhs, degenerate = jensen_bound(u, E, bar)
    assert not degenerate
    # concavity of G: the averaged bound sits above the pointwise sum,
    # up to the O(h) mismatch between the MA mass and the cell count
    assert lhs <= bound + 0.1 * abs(bound) + 0.05


def test_jensen_bound_rejects_empty(disc, bar):
    u = from_callable(disc, quad_fn(1.0))
    with pytest.raises(ValueError):
        jensen_bound(u, np.zeros(disc.shape, bool), bar)


def _perturbed(disc):
    return from_callable(disc, lambda x, y: 0.5 * (x ** 2 + y ** 2)
                         + 0.02 * np.sin(2 * x) * np.cos(y))


def test_first_variation_matches_finite_differences(disc, bar):
    u = _perturbed(disc)
    f = disc.sample(lambda x, y: 0.3 * x + 0.1, u.region)
    f = np.where(u.region, f, 0.0)
    g = first_variation(u, f, bar)
    rng = np.random.default_rng(7)
    eps = 1e-6
    for _ in range(5):
        v = np.zeros(disc.shape)
        v[u.interior] = rng.normal(size=np.count_nonzero(u.interior))
        up = from_callable(disc, lambda x, y: 0.0)
        up.values[:] = u.values + eps * v
        um = from_callable(disc, lambda x, y: 0.0)
        um.values[:] = u.values - eps * v
        fd = (eval_J(up, f, bar).total - eval_J(um, f, bar).total) / (2 * eps)
        pred = float(np.sum(g * v))
        assert fd == pytest.approx(pred, rel=2e-6, abs=1e-10)


def test_first_variation_zero_outside_region(disc, bar):
    u = _perturbed(disc)
    g = first_variation(u, np.zeros(disc.shape), bar)
    assert np.all(g[~u.region] == 0.0)


def test_hessian_matches_gradient_differences(disc, bar):
    u = _perturbed(disc)
    f = np.zeros(disc.shape)
    H, cols = hessian_of_J(u, bar)
    rng = np.random.default_rng(11)
    eps = 1e-6
    v = np.zeros(disc.shape)
    v[u.interior] = rng.normal(size=np.count_nonzero(u.interior))
    up = from_callable(disc, lambda x, y: 0.0)
    up.values[:] = u.values + eps * v
    um = from_callable(disc, lambda x, y: 0.0)
    um.values[:] = u.values - eps * v
    fd = (first_variation(up, f, bar) - first_variation(um, f, bar)) / (2 * eps)
    pred = H @ v.ravel()[cols]
    np.testing.assert_allclose(pred, fd.ravel()[cols],
                               rtol=1e-4, atol=1e-6 * np.max(np.abs(fd)))


def test_hessian_negative_definite_near_unit_det(disc, bar):
    # G concave and det curvature small: J is locally concave at |x|^2/2
    u = from_callable(disc, quad_fn(1.0))
    H, cols = hessian_of_J(u, bar)
    rng = np.random.default_rng(3)
    for _ in range(5):
        v = rng.normal(size=len(cols))
        assert float(v @ (H @ v)) < 0.0
