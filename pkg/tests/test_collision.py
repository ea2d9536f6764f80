"""Operator representations: sigma form, kernel form, cancellation constant."""

import math

import numpy as np
import pytest

from boltzlb import collision as C
from boltzlb.core import ConstantsRegistry, InvariantError, KernelParams

PARAMS = KernelParams(gamma=-1.0, s=0.5)


def drifting_maxwellian(mean, temperature=1.0):
    u = np.asarray(mean, dtype=float)

    def fn(pts):
        pts = np.asarray(pts, dtype=float)
        d2 = np.sum((pts - u) ** 2, axis=-1)
        return ((2.0 * math.pi * temperature) ** -1.5
                * np.exp(-d2 / (2.0 * temperature)))

    return fn


def gaussian_pair():
    return drifting_maxwellian((0.4, 0.25, 0.15))


# -- quadrature validation -------------------------------------------------

def test_quadrature_invariants():
    with pytest.raises(InvariantError):
        C.SigmaQuadrature(theta_min=1.0)
    with pytest.raises(InvariantError):
        C.SigmaQuadrature(n_theta=4)
    with pytest.raises(InvariantError):
        C.CarlemanQuadrature(n_dir_azimuth=5)
    with pytest.raises(InvariantError):
        C.CarlemanQuadrature(t_min=0.0)
    with pytest.raises(InvariantError):
        C.ConvolutionQuadrature(n=32)
    with pytest.raises(InvariantError):
        C.PlaneQuadrature(n_rho=2)


# -- sigma representation --------------------------------------------------

def test_sigma_annihilates_maxwellian_pointwise():
    # the integrand M'M*' - M M* vanishes identically, so any resolution
    # returns pure roundoff
    M = gaussian_pair()
    quad = C.SigmaQuadrature(n_theta=8, n_phi=8, n_vstar=12,
                             vstar_extent=4.0, convergence_tol=10.0)
    val = C.q_sigma(M, M, np.zeros(3), PARAMS, quad)
    assert abs(val) < 1e-10


def test_sigma_nonconvergence_is_reported():
    M = gaussian_pair()
    quad = C.SigmaQuadrature(n_theta=8, n_phi=8, n_vstar=12,
                             theta_min=0.3, convergence_tol=1e-15)
    bump = C.default_battery(1)[0]
    with pytest.raises(C.NonConvergenceError):
        C.q_sigma(bump.f, bump.g, np.array([0.3, 0.0, 0.0]), PARAMS, quad)
    # a Maxwellian pair keeps the extrapolants at roundoff, so even the
    # absurd tolerance passes
    C.q_sigma(M, M, np.zeros(3), PARAMS, quad)


# -- Carleman kernel -------------------------------------------------------

def test_kernel_requires_distinct_arguments():
    M = gaussian_pair()
    with pytest.raises(ValueError):
        C.carleman_kernel(M, np.zeros(3), np.zeros(3), PARAMS,
                          C.PlaneQuadrature(16, 8, 4.0))


def test_kernel_positive_and_linear_in_f():
    M = gaussian_pair()
    two_m = lambda pts: 2.0 * M(pts)
    pq = C.PlaneQuadrature(48, 16, 7.0)
    v = np.zeros(3)
    vp = np.array([0.7, 0.1, 0.0])
    k1 = C.carleman_kernel(M, v, vp, PARAMS, pq)
    k2 = C.carleman_kernel(two_m, v, vp, PARAMS, pq)
    assert k1.value > 0
    assert k2.value == pytest.approx(2.0 * k1.value, rel=1e-12)
    assert not k1.truncation_warning


def test_kernel_truncation_warning_for_nondecaying_f():
    flat = lambda pts: np.ones(np.asarray(pts).shape[:-1])
    ev = C.carleman_kernel(flat, np.zeros(3), np.array([0.5, 0, 0]),
                           PARAMS, C.PlaneQuadrature(16, 8, 3.0))
    assert ev.truncation_warning


def test_kernel_recentring_captures_distant_mass():
    # f concentrated far from v: default polar nodes straddle the bump,
    # recentring the plane quadrature on it changes the answer materially
    far = np.array([0.0, 2.0, 0.0])
    f = C._bump(far, 0.4, 1.0)
    v = np.zeros(3)
    vp = np.array([0.3, 0.0, 0.0])
    coarse = C.PlaneQuadrature(12, 8, 3.0)
    fine = C.PlaneQuadrature(128, 64, 3.0)
    ref = C.carleman_kernel(f, v, vp, PARAMS, fine).value
    centred = C.carleman_kernel(f, v, vp, PARAMS, coarse,
                                plane_center=far).value
    plain = C.carleman_kernel(f, v, vp, PARAMS, coarse).value
    assert abs(centred - ref) < abs(plain - ref)
    assert centred == pytest.approx(ref, rel=0.25)


# -- convolution and cancellation constant ---------------------------------

def test_gamma_convolution_second_moment_oracle():
    # int |z|^2 M(v - z) dz = |v|^2 + 3T for a unit-mass Maxwellian
    M = drifting_maxwellian((0.0, 0.0, 0.0), temperature=0.4)
    quad = C.ConvolutionQuadrature(n=25, extent=4.0)
    for v in (np.zeros(3), np.array([0.8, 0.3, 0.0])):
        got = C.gamma_convolution(M, v, 2.0, quad)
        want = float(v @ v) + 3.0 * 0.4
        assert got == pytest.approx(want, rel=2e-2)


def test_gamma_convolution_mass_oracle():
    M = drifting_maxwellian((0.2, 0.0, 0.0), temperature=0.5)
    quad = C.ConvolutionQuadrature(n=25, extent=4.0)
    got = C.gamma_convolution(M, np.zeros(3), 0.0, quad)
    assert got == pytest.approx(1.0, rel=1e-3)


@pytest.mark.parametrize("gamma,s,expected", [
    (-1.0, 0.5, 2.4821143960784657),
    (0.0, 0.25, 3.3759336922087),
])
def test_cancellation_constant_golden(gamma, s, expected):
    val = C.cancellation_constant(KernelParams(gamma=gamma, s=s))
    assert val == pytest.approx(expected, rel=1e-9)


def test_measured_cancellation_matches_closed_form():
    M = gaussian_pair()
    quad = C.SigmaQuadrature(n_theta=16, n_phi=8, n_vstar=20,
                             vstar_extent=4.0, theta_min=0.1,
                             convergence_tol=10.0)
    conv = C.ConvolutionQuadrature(n=21, extent=4.0)
    samples = [np.zeros(3), np.array([0.5, 0.2, -0.1])]
    ratios, mean, spread = C.measure_cancellation_constant(
        M, samples, PARAMS, quad, conv)
    exact = C.cancellation_constant(PARAMS)
    assert mean == pytest.approx(exact, rel=0.05)
    assert spread < 0.05


def test_q_ns_vanishes_with_g():
    reg = ConstantsRegistry.with_defaults()
    M = gaussian_pair()
    zero_g = lambda pts: np.zeros(np.asarray(pts).shape[:-1])
    val = C.q_ns(M, zero_g, np.zeros(3), PARAMS, reg,
                 C.ConvolutionQuadrature(n=9, extent=2.0))
    assert val == 0.0


# -- split consistency -----------------------------------------------------

def test_carleman_split_annihilates_maxwellian_under_refinement():
    M = gaussian_pair()
    reg = ConstantsRegistry.with_defaults()
    reg.set("C_cancel", C.cancellation_constant(PARAMS),
            provenance="empirically-measured")
    vals = []
    for k in (1, 2):
        cq = C.CarlemanQuadrature(
            n_dir_polar=4 * k, n_dir_azimuth=6 * k, n_radial=12 * k,
            t_min=0.2 / k,
            plane=C.PlaneQuadrature(n_rho=12 * k, n_beta=8 * k, extent=6.0),
            convergence_tol=10.0)
        n = 13 * k + (0 if (13 * k) % 2 else 1)
        conv = C.ConvolutionQuadrature(n=n, extent=6.0)
        qs = C.q_s_carleman(M, M, np.zeros(3), PARAMS, cq)
        qn = C.q_ns(M, M, np.zeros(3), PARAMS, reg, conv)
        vals.append(abs(qs + qn))
    assert vals[0] < 5e-3
    assert vals[1] < vals[0] / 2.5       # second-order trend


def test_sigma_and_split_agree_on_battery_pair():
    pair = C.default_battery(1)[0]
    reg = ConstantsRegistry.with_defaults()
    reg.set("C_cancel", C.cancellation_constant(PARAMS),
            provenance="empirically-measured")
    sigma = C.SigmaQuadrature(n_theta=12, n_phi=12, theta_min=0.1,
                              n_vstar=24, vstar_extent=3.0)
    cq = C.CarlemanQuadrature(n_dir_polar=8, n_dir_azimuth=8, n_radial=32,
                              t_min=0.05,
                              plane=C.PlaneQuadrature(48, 24, 3.5))
    conv = C.ConvolutionQuadrature(n=25, extent=3.0)
    v = np.array([0.2, -0.1, 0.3])
    qs = C.q_sigma(pair.f, pair.g, v, PARAMS, sigma)
    qc = (C.q_s_carleman(pair.f, pair.g, v, PARAMS, cq)
          + C.q_ns(pair.f, pair.g, v, PARAMS, reg, conv))
    assert abs(qs - qc) / (1.0 + abs(qs)) < 0.05


# -- battery and measured coefficients -------------------------------------

def test_battery_is_deterministic_with_declared_sups():
    a = C.default_battery(5)
    b = C.default_battery(5)
    assert len(a) == 5
    pts = np.array([[0.1, 0.2, -0.1], [0.5, 0.0, 0.3]])
    for pa, pb in zip(a, b):
        np.testing.assert_array_equal(pa.f(pts), pb.f(pts))
        assert pa.name == pb.name
        # the declared sup of g is attained at the bump centre
        grid = np.random.default_rng(0).uniform(-2, 2, size=(500, 3))
        assert pa.g(grid).max() <= pa.g_sup + 1e-12


def test_measure_lambda_stores_registry_constants():
    reg = ConstantsRegistry.with_defaults()
    battery = C.default_battery(1)
    cq = C.CarlemanQuadrature(n_dir_polar=4, n_dir_azimuth=6, n_radial=12,
                              t_min=0.1,
                              plane=C.PlaneQuadrature(16, 8, 3.0),
                              convergence_tol=10.0)
    conv = C.ConvolutionQuadrature(n=13, extent=3.0)
    out = C.measure_lambda(battery, [np.array([0.3, 0.0, 0.0])],
                           PARAMS, cq, conv, registry=reg)
    assert out["lambda_conv"] > 0
    assert reg.get("Lambda") == pytest.approx(out["lambda_conv"])
    assert reg.provenance("Lambda") == "empirically-measured"
    assert reg.get("C1") == pytest.approx(
        out["lambda_conv"] * 10.0**PARAMS.s)
    with pytest.raises(ValueError):
        C.measure_lambda([], [np.zeros(3)], PARAMS, cq, conv)


# -- cone of nondegeneracy -------------------------------------------------

def test_cone_strip_geometry_and_positive_bounds():
    params = PARAMS
    v = np.array([2.0, 0.0, 0.0])
    cone, mu, lam = C.cone_of_nondegeneracy(
        v, np.zeros(3), 1.0, 1.0, params,
        plane_quad=C.PlaneQuadrature(24, 16, 2.5),
        n_strip_polar=2, n_strip_azimuth=4, n_offsets=2,
        sphere_resolution=100)
    assert mu > 0
    assert lam > 0 and math.isfinite(lam)
    # the strip is perpendicular to the core direction
    assert cone.contains(np.array([0.0, 1.0, 0.0]))
    assert not cone.contains(np.array([1.0, 0.0, 0.0]))
    # strip measure approximates 4 pi cos_width
    assert cone.measure == pytest.approx(4.0 * math.pi * cone.cos_width,
                                         rel=0.1)


def test_cone_engulfs_nearby_velocity():
    cone, mu, lam = C.cone_of_nondegeneracy(
        np.array([0.2, 0.0, 0.0]), np.zeros(3), 1.0, 1.0, PARAMS,
        plane_quad=C.PlaneQuadrature(24, 16, 2.5),
        n_strip_polar=2, n_strip_azimuth=4, n_offsets=2,
        sphere_resolution=100)
    assert cone.cos_width == 1.0           # whole sphere
    assert cone.measure == pytest.approx(4.0 * math.pi, rel=1e-6)
    assert mu > 0 and lam > 0
