"""Spreading iteration, decay-law fit, and Gaussian certificates."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from boltzlb import envelope as env
from boltzlb.core import (ConstantsRegistry, InvariantError, KernelParams,
                          VelocityGrid, PhaseField, SpatialGrid)


def make_config(**kw):
    base = dict(T0=1.0, gamma=0.0, s=0.5, c_spread=1.0, ell0=0.5, levels=20)
    base.update(kw)
    return env.IterationConfig(**base)


# -- iteration schedule ----------------------------------------------------

def test_schedule_values():
    trace = env.run_iteration(make_config())
    assert trace.q == pytest.approx(7.0)
    np.testing.assert_allclose(trace.T[:3], [0.0, 0.5, 0.75])
    np.testing.assert_allclose(trace.xi[:3], [0.5, 0.25, 0.125])
    np.testing.assert_allclose(trace.rho[:3], [1.0, 0.5, 0.25])
    assert trace.R[0] == 1.0
    assert trace.R[1] == pytest.approx(1.0606601717798214)


def test_radii_grow_like_sqrt2_per_level():
    trace = env.run_iteration(make_config(levels=30))
    ratio = trace.R[1:] / trace.R[:-1]
    assert np.all(ratio > 1.0)
    np.testing.assert_allclose(ratio[10:], math.sqrt(2.0), rtol=1e-3)
    # R_n / 2^{n/2} decreases to a positive constant
    c = trace.R / 2.0 ** (trace.n / 2.0)
    assert np.all(np.diff(c) <= 1e-15)
    assert c[-1] > 0.2


def test_amplitudes_decay_doubly_exponentially():
    trace = env.run_iteration(make_config())
    assert np.all(np.diff(trace.log_ell) < 0)
    # log log(1/ell_n) grows with slope ~ log 2 in the asymptotic range
    slope = env.loglog_slope(trace, 6, 12)
    assert slope == pytest.approx(math.log(2.0), rel=0.05)


def test_golden_decay_rate():
    trace = env.run_iteration(make_config())
    u = env.fit_double_exponential(trace)
    assert u == pytest.approx(1.2281843507738197e-05, rel=1e-12)
    # the fitted u really is a lower bound at every level
    np.testing.assert_array_less(
        2.0 ** trace.n * math.log(u), trace.log_ell + 1e-9)


def test_smallness_certificate_after_first_level():
    trace = env.run_iteration(make_config())
    assert np.all(trace.smallness()[1:] < 0.5)


def test_underflow_is_tracked_not_fatal():
    trace = env.run_iteration(make_config(levels=40))
    assert trace.underflow_level is not None
    assert np.all(np.isfinite(trace.log_ell))
    assert trace.ell[trace.underflow_level] == 0.0


def test_run_iteration_zero_seed_gives_empty_ladder():
    trace = env.run_iteration(make_config(ell0=0.0))
    assert np.all(np.isneginf(trace.log_ell))
    with pytest.raises(InvariantError):
        env.fit_double_exponential(trace)


def test_config_validation():
    with pytest.raises(InvariantError):
        make_config(ell0=1.5)
    with pytest.raises(InvariantError):
        make_config(levels=100)
    with pytest.raises(InvariantError):
        make_config(T0=-1.0)


@settings(max_examples=20, deadline=None)
@given(ell0=st.floats(1e-6, 1.0), c=st.floats(1e-4, 1.0))
def test_fitted_rate_bounds_every_level(ell0, c):
    trace = env.run_iteration(make_config(ell0=ell0, c_spread=c))
    u = env.fit_double_exponential(trace)
    assert 0.0 < u < 1.0
    assert np.all(2.0 ** trace.n * math.log(u) <= trace.log_ell + 1e-9)


# -- certificates ----------------------------------------------------------

def test_certificate_dominated_by_ladder_on_shells():
    trace = env.run_iteration(make_config())
    cert = env.certificate_from_trace(trace, r=1.0, v0=np.zeros(3))
    # envelope evaluated at each shell's inner radius stays below ell_n
    r_inner = np.concatenate([[0.0], trace.R[:-1]])
    log_env = math.log(cert.mu) - cert.eta * r_inner**2
    assert np.all(log_env <= trace.log_ell + 1e-9)
    assert cert.mu > 0 and cert.eta > 0
    assert not cert.degenerate


def test_certificate_rescaling():
    trace = env.run_iteration(make_config())
    c1 = env.certificate_from_trace(trace, r=1.0, v0=np.zeros(3))
    c2 = env.certificate_from_trace(trace, r=0.5, v0=np.array([1.0, 0, 0]))
    # velocity scale r halves => eta quadruples; amplitude scales r^{-(3+g)}
    assert c2.eta == pytest.approx(4.0 * c1.eta)
    assert c2.mu == pytest.approx(c1.mu * 0.5 ** (-3.0), rel=1e-9)
    np.testing.assert_allclose(c2.center, [1.0, 0, 0])


def test_certificate_evaluate_consistency():
    trace = env.run_iteration(make_config())
    cert = env.certificate_from_trace(trace, r=1.0, v0=np.array([0.5, 0, 0]))
    v = np.array([[0.5, 0.0, 0.0], [1.5, 0.0, 0.0]])
    vals = cert.evaluate(v)
    assert vals[0] == pytest.approx(cert.mu)
    assert np.log(vals[1]) == pytest.approx(cert.log_evaluate(v)[1])


def test_certificate_json_round_trip_precision():
    trace = env.run_iteration(make_config())
    cert = env.certificate_from_trace(trace, r=1.0, v0=np.zeros(3))
    d = cert.to_json_dict()
    assert float(d["mu"]) == pytest.approx(cert.mu, rel=1e-11)
    assert d["trace_digest"] == trace.digest()
    assert len(d["trace_digest"]) == 16


def test_stitch_prefers_best_envelope():
    trace = env.run_iteration(make_config())
    good = env.certificate_from_trace(trace, r=1.0, v0=np.zeros(3))
    weak = env.certificate_from_trace(trace, r=2.0, v0=np.zeros(3))
    best = env.stitch_certificates([weak, good])
    assert best in (good, weak)
    assert math.log(best.mu) / best.eta == pytest.approx(
        max(math.log(c.mu) / c.eta for c in (good, weak)))
    with pytest.raises(InvariantError):
        env.stitch_certificates([])


def test_trace_digest_distinguishes_configs():
    a = env.run_iteration(make_config())
    b = env.run_iteration(make_config(ell0=0.25))
    assert a.digest() != b.digest()
    assert a.digest() == env.run_iteration(make_config()).digest()


# -- orchestration ---------------------------------------------------------

def make_pipeline(T=0.5, times=(0.125, 0.25, 0.375, 0.5)):
    params = KernelParams(gamma=-1.0, s=0.5)
    registry = ConstantsRegistry.with_defaults()
    core = (np.zeros(3), np.array([1.0, 0.0, 0.0]), 0.25, 0.5)
    return env.orchestrate_theorem(core, params, registry, T=T,
                                   output_times=list(times))


def test_orchestration_covers_every_output_time():
    certs, log = make_pipeline()
    assert set(certs) == {0.125, 0.25, 0.375, 0.5}
    for t, c in certs.items():
        assert c.mu > 0 and c.eta > 0
        assert c.t_interval[0] < t <= c.t_interval[1] or c.t_interval[1] <= t
    text = log.text()
    assert "step1" in text and "step4" in text and "step5" in text


def test_orchestration_amplitude_within_physical_range():
    certs, _ = make_pipeline()
    for c in certs.values():
        # seeded from delta = 0.5 core: peak cannot exceed delta/2
        assert c.mu <= 0.25 + 1e-12


def test_certificate_violations_counts_subenvelope_points():
    xg, vg = SpatialGrid(), VelocityGrid(3.0, 12)
    center = np.array([vg.centers[7], vg.centers[6], vg.centers[6]])
    cert = env.EnvelopeCertificate(
        mu=0.2, eta=1.0, center=center, t_interval=(0.0, 0.25),
        x_center=np.zeros(3), x_radius=1.0, trace_digest="0" * 16)
    certs = {0.125: cert}
    above = PhaseField(np.full((1, 12, 12, 12), 0.3), xg, vg)
    report = env.certificate_violations([(0.125, above)], vg, certs,
                                        noise_margin=0.0)
    assert report["total_violations"] == 0
    vacuum = PhaseField(np.zeros((1, 12, 12, 12)), xg, vg)
    report = env.certificate_violations([(0.125, vacuum)], vg, certs,
                                        noise_margin=0.0)
    assert report["total_violations"] >= 1
    assert report["rows"][0]["min_gap"] == pytest.approx(-0.2)
    # a generous margin reclassifies everything as noise
    report = env.certificate_violations([(0.125, vacuum)], vg, certs,
                                        noise_margin=0.25)
    assert report["total_violations"] == 0


def test_certificate_violations_skips_uncertified_times():
    certs, _ = make_pipeline(times=(0.125,))
    xg, vg = SpatialGrid(), VelocityGrid(3.0, 12)
    f = PhaseField(np.zeros((1, 12, 12, 12)), xg, vg)
    report = env.certificate_violations([(0.999, f)], vg, certs,
                                        noise_margin=0.0)
    assert report["rows"] == [] and report["total_violations"] == 0
