import numpy as np
import pytest

from abreulab.barrier import BarrierG
from abreulab.bvp2 import (HomotopySchedule, PenaltySpec, boost_forcing,
                           cutoff_eta, extend_phi, fixed_point_T,
                           gradient_coverage, solve_second_bvp)
from abreulab.convexity import from_callable
from abreulab.grid import GridDomain


# ----------------------------------------------------------------------
# Penalty family H_j
# ----------------------------------------------------------------------

def test_H_outer_branch_values():
    p = PenaltySpec(0)
    assert p.H(0.75) == pytest.approx(256.0, rel=1e-14)
    assert p.h(0.75) == pytest.approx(4096.0, rel=1e-14)


def test_H_continuous_at_half():
    p = PenaltySpec(0)
    # mid quintic and (1 - t)^-4 meet at t = 1/2 with value 16, slope 128,
    # second derivative 1280
    assert p.H(0.5) == pytest.approx(16.0, rel=1e-12)
    assert p.H(0.5 - 1e-9) == pytest.approx(16.0, abs=1e-6)
    assert p.h(0.5) == pytest.approx(128.0, rel=1e-12)
    assert p.h(0.5 - 1e-9) == pytest.approx(128.0, abs=1e-5)
    assert p.h_prime(0.5) == pytest.approx(1280.0, rel=1e-12)
    assert p.h_prime(0.5 - 1e-9) == pytest.approx(1280.0, abs=1e-4)


def test_h_is_odd_and_pushes_toward_zero():
    p = PenaltySpec(3)
    ts = np.array([1e-3, 5e-3, 1e-2])
    np.testing.assert_allclose(p.hj(-ts), -p.hj(ts), rtol=1e-14)
    assert np.all(p.hj(ts) > 0)
    assert p.hj(0.0) == 0.0


def test_h_matches_H_derivative():
    p = PenaltySpec(0)
    ts = np.linspace(-0.9, 0.9, 41)
    eps = 1e-6
    fd = (p.H(ts + eps) - p.H(ts - eps)) / (2 * eps)
    np.testing.assert_allclose(p.h(ts), fd, rtol=1e-5, atol=1e-4)


def test_h_prime_matches_h_derivative():
    p = PenaltySpec(0)
    ts = np.linspace(-0.9, 0.9, 41)
    eps = 1e-6
    fd = (p.h(ts + eps) - p.h(ts - eps)) / (2 * eps)
    np.testing.assert_allclose(p.h_prime(ts), fd, rtol=1e-4, atol=1e-2)


def test_linear_extension_past_t_max():
    p = PenaltySpec(0, t_max=0.9)
    slope = (p.h(0.95 + 1e-6) - p.h(0.95 - 1e-6)) / 2e-6
    assert slope == pytest.approx(20.0 * (1.0 - 0.9) ** -6, rel=1e-6)


def test_sharpened_family_scaling():
    p = PenaltySpec(2)
    t = 0.01
    assert p.Hj(t) == pytest.approx(p.H(16.0 * t), rel=1e-14)
    assert p.hj(t) == pytest.approx(16.0 * p.h(16.0 * t), rel=1e-14)
    assert p.hj_prime(t) == pytest.approx(256.0 * p.h_prime(16.0 * t), rel=1e-14)
    assert p.clamp_width == 4.0 ** -2


def test_hj_stiffness_at_origin():
    for j in (0, 2, 4):
        p = PenaltySpec(j)
        eps = 4.0 ** (-j) * 1e-6
        slope = p.hj(eps) / eps
        assert slope == pytest.approx(40.0 * 16.0 ** j, rel=1e-4)


# ----------------------------------------------------------------------
# Extension and cutoff
# ----------------------------------------------------------------------

def test_extend_phi_identity_inside():
    phi = lambda x, y: x ** 2 + y ** 2
    pt = extend_phi(phi, 1.5)
    assert pt(0.5, 0.0) == phi(0.5, 0.0)
    assert pt(0.99, 0.0) == phi(0.99, 0.0)   # r < R - 1/2 = 1.0
    # at r = R the bump is exactly 1/4
    assert pt(1.5, 0.0) == pytest.approx(phi(1.5, 0.0) + 0.25, rel=1e-14)


def test_cutoff_eta_plateau_and_ramp():
    k = 8
    d = np.array([0.0, 1.0 / 16 - 1e-12, 1.0 / 8, 0.5])
    eta = cutoff_eta(d, k)
    assert eta[0] == 0.0
    assert eta[1] == pytest.approx(0.0, abs=1e-9)
    assert eta[2] == 1.0
    assert eta[3] == 1.0
    mids = cutoff_eta(np.linspace(1.0 / 16, 1.0 / 8, 50), k)
    assert np.all(np.diff(mids) >= 0)


def test_cutoff_eta_k_zero_is_one():
    np.testing.assert_array_equal(cutoff_eta(np.array([0.0, 1.0]), 0),
                                  [1.0, 1.0])


# ----------------------------------------------------------------------
# Boosted forcing
# ----------------------------------------------------------------------

def test_boost_forcing_band():
    dom = GridDomain.disc(1.0, 1.5, 1.0 / 16)
    f = np.ones(dom.shape)
    bf = boost_forcing(dom, f, m=3, beta=2.5)
    assert bf.band.any()
    dist = dom.boundary_distance(dom.x1, dom.x2)
    assert np.all(dist[bf.band] < 2.0 ** -3)
    np.testing.assert_allclose(bf.values[bf.band], 3.5)
    np.testing.assert_allclose(bf.values[dom.in_omega & ~bf.band], 1.0)


def test_boost_forcing_unresolved_band_rejected():
    dom = GridDomain.disc(1.0, 1.5, 1.0 / 8)
    with pytest.raises(ValueError, match="unresolved"):
        boost_forcing(dom, np.ones(dom.shape), m=5, beta=1.0)


# ----------------------------------------------------------------------
# Fixed point map and the homotopy
# ----------------------------------------------------------------------

@pytest.fixture(scope="module")
def disc():
    return GridDomain.disc(1.0, 1.5, 1.0 / 16)


def test_fixed_point_t_zero_returns_unit_weight(disc):
    # at t = 0 the w half is U^{ij} w_ij = 0 with w = 1 on the rim: w = 1
    bar = BarrierG(1e-3)
    region = disc.in_omega
    interior = disc.interior_of(region)
    u_trace = disc.sample(lambda x, y: np.exp(x) + np.exp(y), region)
    w = np.where(region, 1.0, np.nan)
    psi = np.where(region, 1.0, np.nan)
    eta = np.where(region, 1.0, 0.0)
    f = np.ones(disc.shape)
    w_new, u = fixed_point_T(disc, region, w, 0.0, bar, u_trace, psi, eta, f)
    assert np.max(np.abs(w_new[interior] - 1.0)) < 1e-12


def test_fixed_point_rejects_nonpositive_w(disc):
    bar = BarrierG(1e-3)
    region = disc.in_omega
    w = np.where(region, -1.0, np.nan)
    with pytest.raises(Exception):
        fixed_point_T(disc, region, w, 0.5, bar,
                      disc.sample(lambda x, y: x ** 2 + y ** 2, region),
                      np.ones(disc.shape), np.ones(disc.shape),
                      np.zeros(disc.shape))


def test_bvp2_quadratic_zero_forcing_exact(disc):
    # f = 0, phi = |x|^2/2, psi = 1: the pair (phi, 1) solves every t-step
    bar = BarrierG(1e-3)
    phi = lambda x, y: 0.5 * (x ** 2 + y ** 2)
    uf, w, rep = solve_second_bvp(disc, phi, lambda x, y: 0.0 * x, bar)
    exact = disc.sample(phi, disc.in_omega)
    dev = np.max(np.abs(uf.values - exact)[disc.in_omega])
    assert dev < 5 * disc.h ** 2
    assert np.max(np.abs(w[disc.in_omega] - 1.0)) < 1e-8


def test_bvp2_rejects_nonpositive_psi(disc):
    bar = BarrierG(1e-3)
    with pytest.raises(ValueError, match="psi"):
        solve_second_bvp(disc, lambda x, y: x ** 2 + y ** 2,
                         lambda x, y: 0.0 * x, bar,
                         psi=lambda x, y: 0.0 * x)


def test_bvp2_report_contents(disc):
    bar = BarrierG(1e-2)
    phi = lambda x, y: 0.5 * (x ** 2 + y ** 2)
    uf, w, rep = solve_second_bvp(disc, phi, lambda x, y: 0.0 * x, bar)
    assert rep.data["w_min"] > 0
    steps = rep.data["steps"]
    assert steps[0]["t"] == 0.0
    assert steps[-1]["t"] == 1.0
    assert all(s["w_min"] > 0 for s in steps)


# ----------------------------------------------------------------------
# Gradient coverage
# ----------------------------------------------------------------------

def test_gradient_coverage_paraboloid(disc):
    # N_u(Omega) for |x|^2/2 covers the unit disc, so it covers this square
    u = from_callable(disc, lambda x, y: 0.5 * (x ** 2 + y ** 2))
    K = np.array([[-0.5, -0.5], [0.5, -0.5], [0.5, 0.5], [-0.5, 0.5]])
    out = gradient_coverage(u, K)
    assert out["K_area"] == pytest.approx(1.0, rel=1e-12)
    assert out["coverage"] == pytest.approx(1.0, abs=1e-6)
    assert out["image_area"] > np.pi * 0.9
