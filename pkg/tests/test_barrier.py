"""Comparison barriers: profiles, certificates, transport/ODE identities."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from boltzlb import barrier as B
from boltzlb.core import (ConstantsRegistry, InvariantError, KernelParams,
                          SpatialGrid, VelocityGrid, ball_indicator)

PARAMS = KernelParams(gamma=-1.0, s=0.5)
REG = ConstantsRegistry.with_defaults()


def make_push_spec(delta=0.8, r=0.5, tau=0.3, v0=(1.0, 0.0, 0.0)):
    return B.PushBarrierSpec.from_mass_core(
        delta, np.zeros(3), np.array(v0), r, tau, PARAMS, REG)


# -- smooth positive part --------------------------------------------------

def test_positive_part_matches_identity_above_half():
    p = B.SmoothPositivePart()
    z = np.array([-1.0, -0.01, 0.5, 0.7, 3.0])
    np.testing.assert_allclose(p.value(z),
                               [0.0, 0.0, 0.5, 0.7, 3.0], atol=1e-14)
    assert p.deriv(0.5) == pytest.approx(1.0)
    assert p.second(0.499999) == pytest.approx(0.0, abs=1e-3)


def test_positive_part_monotone_and_c2():
    p = B.SmoothPositivePart()
    z = np.linspace(-0.2, 0.8, 2001)
    assert np.all(p.deriv(z) >= -1e-12)
    # derivative consistency by finite differences
    h = 1e-6
    zc = np.linspace(0.05, 0.45, 41)
    fd = (p.value(zc + h) - p.value(zc - h)) / (2 * h)
    np.testing.assert_allclose(fd, p.deriv(zc), rtol=1e-6, atol=1e-8)
    fd2 = (p.deriv(zc + h) - p.deriv(zc - h)) / (2 * h)
    np.testing.assert_allclose(fd2, p.second(zc), rtol=1e-4, atol=1e-6)


def test_positive_part_below_max():
    p = B.SmoothPositivePart()
    z = np.linspace(-1.0, 1.0, 501)
    assert np.all(p.value(z) <= np.maximum(z, 0.0) + 1e-14)


# -- cutoffs ---------------------------------------------------------------

@pytest.mark.parametrize("xi", [0.25, 0.125, 0.0625])
def test_velocity_cutoff_support_and_plateau(xi):
    r1 = math.sqrt(2.0) * (1.0 - xi)
    r2 = math.sqrt(2.0) * (1.0 - xi / 2.0)
    inside = np.array([0.5 * r1, 0.0, 0.0])
    outside = np.array([1.01 * r2, 0.0, 0.0])
    assert B.phi_xi(inside, xi) == pytest.approx(1.0)
    assert B.phi_xi(outside, xi) == 0.0


def test_cutoff_certificates_hold_with_margin():
    rng = np.random.default_rng(42)
    for xi, rho in [(0.25, 1.0), (0.0625, 0.125)]:
        cert = B.cutoff_certificates(xi, rho, 2000, rng)
        assert cert["hessian_violations"] == 0
        assert cert["grad_violations"] == 0
        assert cert["hessian_max"] <= 9.0 / xi**2          # ~8.89 by design
        assert cert["grad_max"] <= 3.8 / rho               # 3.75 by design


def test_spatial_cutoff_profile():
    rho = 0.5
    assert B.psi_rho(np.array([0.2, 0.0, 0.0]), rho) == pytest.approx(1.0)
    assert B.psi_rho(np.array([0.51, 0.0, 0.0]), rho) == 0.0
    mid = B.psi_rho(np.array([0.375, 0.0, 0.0]), rho)
    assert 0.0 < mid < 1.0


# -- push barrier ----------------------------------------------------------

def test_push_barrier_center_value():
    spec = make_push_spec()
    val = B.push_barrier_eval(spec, 0.0, spec.x0, spec.v0)
    assert val == pytest.approx(spec.c2)


def test_push_barrier_half_level():
    spec = make_push_spec()
    v = spec.v0 + np.array([spec.r / (spec.tau * math.sqrt(2.0)), 0, 0])
    val = B.push_barrier_eval(spec, 0.0, spec.x0, v)
    assert val == pytest.approx(spec.c2 / 2.0)


def test_push_barrier_negative_outside():
    spec = make_push_spec()
    v = spec.v0 + np.array([10.0, 0, 0])
    assert B.push_barrier_eval(spec, 0.3, spec.x0, v) == pytest.approx(
        -spec.c1 * 0.3)


def test_push_barrier_nonincreasing_along_characteristics():
    spec = make_push_spec()
    v = spec.v0 + np.array([0.2, 0.1, 0.0])
    x = spec.x0 + np.array([0.05, 0.0, 0.0])
    vals = [B.push_barrier_eval(spec, t, x + t * v, v)
            for t in (0.0, 0.1, 0.2)]
    assert vals[0] >= vals[1] >= vals[2]


def test_push_spec_requires_positive_parameters():
    with pytest.raises(InvariantError):
        B.PushBarrierSpec(c1=1.0, c2=-1.0, x0=np.zeros(3),
                          v0=np.zeros(3), r=1.0, tau=1.0)


def test_transport_residual_second_order():
    spec = make_push_spec()
    rng = np.random.default_rng(3)
    ratios = []
    while len(ratios) < 20:
        t = rng.uniform(0.01, 0.2)
        v = spec.v0 + rng.normal(size=3) * 0.5
        x = spec.x0 + t * v + rng.normal(size=3) * 0.2
        dv2 = np.sum((v - spec.v0) ** 2)
        dx2 = np.sum((x - spec.x0 - t * v) ** 2)
        form = 1 - dv2 * spec.tau**2 / spec.r**2 - dx2 / spec.r**2
        if not 0.05 < form < 0.45:
            continue
        r1 = B.push_barrier_transport_residual(spec, t, x, v, 2e-3)
        r2 = B.push_barrier_transport_residual(spec, t, x, v, 1e-3)
        if abs(r2) > 1e-12:
            ratios.append(abs(r1 / r2))
    assert np.median(ratios) == pytest.approx(4.0, abs=0.5)


def test_admissible_region_predicate_and_bound():
    spec = B.PushBarrierSpec(c1=1.0, c2=1.0, x0=np.zeros(3),
                             v0=np.zeros(3), r=1.0, tau=1.0)
    pred, bound = B.push_admissible_region(spec, 0.1, PARAMS, REG)
    assert pred(spec.x0 + 0.1 * spec.v0, spec.v0)
    # first term alone = 1/4 on the boundary: strict inequality fails
    v_edge = spec.v0 + np.array([spec.r / (2 * spec.tau), 0, 0])
    assert not pred(spec.x0 + 0.1 * v_edge, v_edge)
    # v0=0, r=tau=1, gamma+2s <= 0: bound reduces to the registry constant
    assert bound == pytest.approx(REG.get("C_push"))


# -- spread barrier --------------------------------------------------------

def make_spread_spec(**kw):
    base = dict(alpha=1e-2, xi=0.25, R=1.2, rho=0.5, ell=0.5,
                gamma=-1.0, s=0.5, C1=1.0)
    base.update(kw)
    return B.SpreadBarrierSpec(**base)


def test_spread_spec_derived_rate():
    sp = make_spread_spec()
    assert sp.q == pytest.approx(5.0)
    k_expected = (4 * math.sqrt(2) * sp.R / sp.rho
                  + math.sqrt(1 + 2 * sp.R**2) ** 0.0
                  * (sp.R * sp.xi) ** -1.0)
    assert sp.K == pytest.approx(k_expected)


def test_spread_spec_rejects_smallness_violation():
    with pytest.raises(InvariantError):
        make_spread_spec(xi=0.29, R=30.0, ell=0.9)


def test_spread_spec_rejects_bad_xi():
    with pytest.raises(InvariantError):
        make_spread_spec(xi=0.3)       # above 1 - 2^{-1/2}
    with pytest.raises(InvariantError):
        make_spread_spec(xi=0.0)


def test_spread_barrier_zero_at_t0_and_saturates():
    sp = make_spread_spec()
    v = np.zeros(3)
    x = np.zeros(3)
    assert B.spread_barrier_eval(sp, 0.0, x, v, epsilon=0.01) == pytest.approx(-0.01)
    assert sp.ell_tilde(1e9) == pytest.approx(sp.drive / sp.K)
    assert np.all(np.diff(sp.ell_tilde(np.linspace(0, 2, 50))) >= 0)


def test_spread_barrier_vanishes_outside_supports():
    sp = make_spread_spec()
    far_v = np.array([2.0 * sp.R, 0, 0])
    far_x = np.array([sp.rho * 1.1, 0, 0])
    assert B.spread_barrier_eval(sp, 1.0, np.zeros(3), far_v) == 0.0
    assert B.spread_barrier_eval(sp, 1.0, far_x, np.zeros(3)) == 0.0


@pytest.mark.parametrize("t", [0.0, 0.05, 0.5, 2.0])
def test_spread_ode_residual_second_order(t):
    sp = make_spread_spec()
    r1 = B.spread_barrier_ode_residual(sp, t, 1e-3)
    r2 = B.spread_barrier_ode_residual(sp, t, 5e-4)
    if abs(r2) > 1e-16:
        assert abs(r1 / r2) == pytest.approx(4.0, abs=0.5)
    else:
        assert abs(r1) < 1e-12


# -- ordering check --------------------------------------------------------

def test_ordering_check_large_field_has_no_violations():
    xg, vg = SpatialGrid(), VelocityGrid(3.0, 12)
    f = ball_indicator(xg, vg, delta=5.0, r=10.0)  # f = 5 everywhere
    spec = make_push_spec()
    report = B.barrier_ordering_check([(0.1, f)], vg, spec)
    assert report["violations"] == 0
    assert report["min_gap"] > 0


def test_ordering_check_vacuum_violates_positive_barrier():
    xg, vg = SpatialGrid(), VelocityGrid(3.0, 12)
    import numpy as _np
    from boltzlb.core import PhaseField
    f = PhaseField(_np.zeros((1, 12, 12, 12)), xg, vg)
    spec = make_push_spec(v0=(0.5, 0.0, 0.0))
    report = B.barrier_ordering_check([(0.0, f)], vg, spec)
    assert report["violations"] > 0
    assert report["min_gap"] < 0


@settings(max_examples=20, deadline=None)
@given(t=st.floats(0.0, 3.0))
def test_ell_tilde_stays_below_saturation(t):
    sp = make_spread_spec()
    assert 0.0 <= float(sp.ell_tilde(t)) <= sp.drive / sp.K + 1e-15
