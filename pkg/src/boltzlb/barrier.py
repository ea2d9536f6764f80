"""Explicit comparison barriers and their certificate checks.

Two families of closed-form subsolutions are provided:

* a "push" barrier: a bump transported along free streaming whose
  amplitude decays linearly in time, ``-c1*t + c2*psi(quadratic form)``;
* a "spread" barrier: a product ``ell_tilde(t) * phi_xi(v/R) * psi_rho(x)``
  whose amplitude solves a linear saturation ODE.

The cutoff profiles carry quantitative derivative certificates that are
relied on elsewhere: the spatial cutoff satisfies ``|grad psi_rho| <=
4/rho`` and the velocity cutoff satisfies ``||D^2 phi_xi|| <= 10/xi^2``.
Both bounds are met by construction with strict margin and are sampled
numerically by :func:`cutoff_certificates`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import ConstantsRegistry, InvariantError, KernelParams, PhaseField


# --------------------------------------------------------------------------
# smooth positive part
# --------------------------------------------------------------------------

class SmoothPositivePart:
    """C^2 regularisation of z -> max(z, 0).

    Equal to 0 for z <= 0 and to z for z >= 1/2; on [0, 1/2] a quintic
    blend matches value and first two derivatives at both ends, so the
    function is C^2, nondecreasing, and 0 <= psi(z) <= max(z, 0).
    """

    def __init__(self) -> None:
        # coefficients of a*z^3 + b*z^4 + c*z^5 with psi(1/2) = 1/2,
        # psi'(1/2) = 1, psi''(1/2) = 0
        m = np.array([
            [0.5**3, 0.5**4, 0.5**5],
            [3 * 0.5**2, 4 * 0.5**3, 5 * 0.5**4],
            [6 * 0.5, 12 * 0.5**2, 20 * 0.5**3],
        ])
        self.coeffs = np.linalg.solve(m, np.array([0.5, 1.0, 0.0]))

    def value(self, z):
        z = np.asarray(z, dtype=float)
        a, b, c = self.coeffs
        mid = z**3 * (a + z * (b + z * c))
        return np.where(z <= 0.0, 0.0, np.where(z >= 0.5, z, mid))

    def deriv(self, z):
        z = np.asarray(z, dtype=float)
        a, b, c = self.coeffs
        mid = z**2 * (3 * a + z * (4 * b + z * 5 * c))
        return np.where(z <= 0.0, 0.0, np.where(z >= 0.5, 1.0, mid))

    def second(self, z):
        z = np.asarray(z, dtype=float)
        a, b, c = self.coeffs
        mid = z * (6 * a + z * (12 * b + z * 20 * c))
        return np.where(z <= 0.0, 0.0, np.where(z >= 0.5, 0.0, mid))


_PSI = SmoothPositivePart()


# --------------------------------------------------------------------------
# transition profiles for the cutoffs
# --------------------------------------------------------------------------

def _smoothstep(z):
    """Quintic smoothstep: 0 -> 1 on [0, 1], C^2, max slope 15/8."""
    z = np.clip(np.asarray(z, dtype=float), 0.0, 1.0)
    return z**3 * (10.0 - 15.0 * z + 6.0 * z**2)


def _smoothstep_deriv(z):
    z = np.asarray(z, dtype=float)
    inside = (z > 0.0) & (z < 1.0)
    zc = np.clip(z, 0.0, 1.0)
    return np.where(inside, 30.0 * zc**2 * (1.0 - zc) ** 2, 0.0)


_RAMP = 0.05                      # jerk-ramp fraction of the unit transition
_ACC = 2.0 / (0.5 - _RAMP)        # peak |S''|; area constraint gives S'(1/2)=2


def _jerk_second(z):
    """Second derivative of the jerk-limited unit transition.

    Continuous, piecewise linear, odd about z = 1/2: a trapezoidal lobe of
    height ``_ACC`` on [0, 1/2] and its negative mirror on [1/2, 1].
    """
    z = np.asarray(z, dtype=float)
    u = np.where(z <= 0.5, z, 1.0 - z)
    sign = np.where(z <= 0.5, 1.0, -1.0)
    lobe = np.minimum(np.clip(u / _RAMP, 0.0, 1.0),
                      np.clip((0.5 - u) / _RAMP, 0.0, 1.0))
    return np.where((z <= 0.0) | (z >= 1.0), 0.0, sign * _ACC * lobe)


def _jerk_deriv(z):
    """First derivative of the jerk-limited transition (even about 1/2)."""
    z = np.asarray(z, dtype=float)
    u = np.where(z <= 0.5, z, 1.0 - z)
    a, e = _ACC, _RAMP
    ramp_up = a * u**2 / (2 * e)
    plateau = a * e / 2 + a * (u - e)
    ramp_dn = 2.0 - a * (0.5 - u) ** 2 / (2 * e)
    val = np.select([u <= e, u <= 0.5 - e], [ramp_up, plateau], ramp_dn)
    return np.where((z <= 0.0) | (z >= 1.0), 0.0, val)


def _jerk_value(z):
    """Jerk-limited unit transition: 0 -> 1 on [0, 1], C^2."""
    z = np.asarray(z, dtype=float)
    u = np.where(z <= 0.5, z, 1.0 - z)
    a, e = _ACC, _RAMP
    ramp_up = a * u**3 / (6 * e)
    plateau = a * e**2 / 6 + (a * e / 2) * (u - e) + a * (u - e) ** 2 / 2
    ramp_dn = 0.5 - 2.0 * (0.5 - u) + a * (0.5 - u) ** 3 / (6 * e)
    half = np.select([u <= e, u <= 0.5 - e], [ramp_up, plateau], ramp_dn)
    val = np.where(z <= 0.5, half, 1.0 - half)
    return np.where(z <= 0.0, 0.0, np.where(z >= 1.0, 1.0, val))


# --------------------------------------------------------------------------
# cutoffs with derivative certificates
# --------------------------------------------------------------------------

def psi_rho(x, rho: float):
    """Spatial cutoff: 1 on |x| <= rho/2, 0 on |x| >= rho, |grad| <= 4/rho."""
    x = np.asarray(x, dtype=float)
    r = np.sqrt(np.sum(x * x, axis=-1))
    return 1.0 - _smoothstep((r - rho / 2) / (rho / 2))


def psi_rho_grad_norm(x, rho: float):
    x = np.asarray(x, dtype=float)
    r = np.sqrt(np.sum(x * x, axis=-1))
    return _smoothstep_deriv((r - rho / 2) / (rho / 2)) / (rho / 2)


def phi_xi(z, xi: float):
    """Velocity cutoff: 1 on |z| <= sqrt2(1-xi), 0 on |z| >= sqrt2(1-xi/2).

    Radial profile uses the jerk-limited transition so that the Hessian
    certificate ||D^2 phi_xi|| <= 10/xi^2 holds with margin.
    """
    z = np.asarray(z, dtype=float)
    r = np.sqrt(np.sum(z * z, axis=-1))
    r1 = math.sqrt(2.0) * (1.0 - xi)
    w = math.sqrt(2.0) * xi / 2.0
    return 1.0 - _jerk_value((r - r1) / w)


def phi_xi_hessian_norm(z, xi: float):
    """Spectral norm of D^2 phi_xi at points z: max(|phi''|, |phi'|/r)."""
    z = np.asarray(z, dtype=float)
    r = np.sqrt(np.sum(z * z, axis=-1))
    r1 = math.sqrt(2.0) * (1.0 - xi)
    w = math.sqrt(2.0) * xi / 2.0
    u = (r - r1) / w
    second = np.abs(_jerk_second(u)) / w**2
    first = _jerk_deriv(u) / w
    radial = np.where(r > 0.0, first / np.maximum(r, 1e-300), 0.0)
    return np.maximum(second, radial)


def cutoff_certificates(xi: float, rho: float, n_samples: int,
                        rng: np.random.Generator) -> dict:
    """Sample both cutoff derivative bounds and count violations.

    Samples are concentrated where the bounds are active (the transition
    shells) plus uniform background points.
    """
    r2 = math.sqrt(2.0) * (1.0 - xi / 2.0)
    zdir = rng.normal(size=(n_samples, 3))
    zdir /= np.linalg.norm(zdir, axis=1, keepdims=True)
    radii = rng.uniform(0.0, 1.2 * r2, size=n_samples)
    shell = rng.integers(0, 2, size=n_samples).astype(bool)
    radii[shell] = rng.uniform(math.sqrt(2.0) * (1.0 - xi), r2,
                               size=int(shell.sum()))
    zv = radii[:, None] * zdir
    hess = phi_xi_hessian_norm(zv, xi)

    xdir = rng.normal(size=(n_samples, 3))
    xdir /= np.linalg.norm(xdir, axis=1, keepdims=True)
    xr = rng.uniform(0.0, 1.2 * rho, size=n_samples)
    xr[shell] = rng.uniform(rho / 2, rho, size=int(shell.sum()))
    xs = xr[:, None] * xdir
    grad = psi_rho_grad_norm(xs, rho)

    return {
        "hessian_bound": 10.0 / xi**2,
        "hessian_max": float(hess.max()),
        "hessian_violations": int(np.sum(hess > 10.0 / xi**2)),
        "grad_bound": 4.0 / rho,
        "grad_max": float(grad.max()),
        "grad_violations": int(np.sum(grad > 4.0 / rho)),
        "n_samples": n_samples,
    }


# --------------------------------------------------------------------------
# push barrier
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class PushBarrierSpec:
    """Transported bump -c1*t + c2*psi(1 - |v-v0|^2 tau^2/r^2 - |x-x0-tv|^2/r^2)."""

    c1: float
    c2: float
    x0: np.ndarray
    v0: np.ndarray
    r: float
    tau: float

    def __post_init__(self):
        if min(self.c1, self.c2, self.r, self.tau) <= 0:
            raise InvariantError("push barrier requires c1, c2, r, tau > 0")
        object.__setattr__(self, "x0", np.asarray(self.x0, dtype=float))
        object.__setattr__(self, "v0", np.asarray(self.v0, dtype=float))

    @classmethod
    def from_mass_core(cls, delta: float, x0, v0, r: float, tau: float,
                       params: KernelParams,
                       registry: ConstantsRegistry) -> "PushBarrierSpec":
        """Amplitudes matching the comparison argument for data >= delta on a core."""
        v0 = np.asarray(v0, dtype=float)
        c2 = 3.0 * delta / 4.0
        lam = registry.get("Lambda")
        speed = np.linalg.norm(v0) + r / tau
        c1 = (2.0 * lam * (1.0 + speed**2) ** (params.gamma_2s_plus / 2.0)
              * c2 * tau ** (2 * params.s) * r ** (-2 * params.s))
        return cls(c1=c1, c2=c2, x0=x0, v0=v0, r=r, tau=tau)


def push_barrier_eval(spec: PushBarrierSpec, t: float, x, v):
    """Evaluate the push barrier; negative where the bump has vanished."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    dv2 = np.sum((v - spec.v0) ** 2, axis=-1)
    dx2 = np.sum((x - spec.x0 - t * v) ** 2, axis=-1)
    form = 1.0 - dv2 * spec.tau**2 / spec.r**2 - dx2 / spec.r**2
    return -spec.c1 * t + spec.c2 * _PSI.value(form)


def push_barrier_transport_residual(spec: PushBarrierSpec, t: float, x, v,
                                    h: float) -> float:
    """Central-difference estimate of (d_t + v . grad_x) barrier + c1.

    The exact transport derivative is -c1 everywhere, so the return value
    is pure finite-difference error, O(h^2).
    """
    if h <= 0:
        raise InvariantError("finite-difference step must be positive")
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    dt_term = (push_barrier_eval(spec, t + h, x, v)
               - push_barrier_eval(spec, t - h, x, v)) / (2 * h)
    grad = np.zeros(3)
    for i in range(3):
        e = np.zeros(3)
        e[i] = h
        grad[i] = (push_barrier_eval(spec, t, x + e, v)
                   - push_barrier_eval(spec, t, x - e, v)) / (2 * h)
    return float(dt_term + v @ grad + spec.c1)


def push_admissible_region(spec: PushBarrierSpec, t: float,
                           params: KernelParams,
                           registry: ConstantsRegistry):
    """Region predicate over (x, v) and the time bound of the comparison claim.

    Returns ``(predicate, time_bound)`` where the predicate marks points
    with quadratic form < 1/4 and the claim holds for
    ``t < C_push * r^{2s} / (tau^{2s} <|v0| + r/tau>^{(gamma+2s)_+})``.
    """
    c_push = registry.get("C_push")
    speed = float(np.linalg.norm(spec.v0)) + spec.r / spec.tau
    bracket = (1.0 + speed**2) ** (params.gamma_2s_plus / 2.0)
    time_bound = (c_push * spec.r ** (2 * params.s)
                  / (spec.tau ** (2 * params.s) * bracket))

    def predicate(x, v):
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        dv2 = np.sum((v - spec.v0) ** 2, axis=-1)
        dx2 = np.sum((x - spec.x0 - t * v) ** 2, axis=-1)
        return dv2 * spec.tau**2 / spec.r**2 + dx2 / spec.r**2 < 0.25

    return predicate, time_bound


# --------------------------------------------------------------------------
# spread barrier
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SpreadBarrierSpec:
    """Saturating product barrier ell_tilde(t) * phi_xi(v/R) * psi_rho(x).

    The growth exponent is q = 5 + 2(gamma + 2s) and the decay rate is
    K = 4 sqrt2 R / rho + C1 <sqrt2 R>^{(gamma+2s)_+} (R xi)^{-2s}.
    """

    alpha: float
    xi: float
    R: float
    rho: float
    ell: float
    gamma: float
    s: float
    C1: float
    q: float = field(init=False)
    K: float = field(init=False)

    def __post_init__(self):
        if not 0.0 < self.xi < 1.0 - 2.0 ** (-0.5):
            raise InvariantError("xi must lie in (0, 1 - 2^{-1/2})")
        if self.R < 1.0:
            raise InvariantError("R must be >= 1")
        if min(self.alpha, self.rho, self.ell, self.C1) <= 0:
            raise InvariantError("alpha, rho, ell, C1 must be positive")
        q = 5.0 + 2.0 * (self.gamma + 2.0 * self.s)
        if self.xi**q * self.R ** (3.0 + self.gamma) * self.ell >= 0.5:
            raise InvariantError(
                "smallness violated: xi^q R^{3+gamma} ell must be < 1/2")
        plus = max(self.gamma + 2.0 * self.s, 0.0)
        bracket = (1.0 + 2.0 * self.R**2) ** (plus / 2.0)
        k = (4.0 * math.sqrt(2.0) * self.R / self.rho
             + self.C1 * bracket * (self.R * self.xi) ** (-2.0 * self.s))
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "K", k)

    @property
    def drive(self) -> float:
        """Constant forcing alpha xi^q R^{3+gamma} ell^2 of the amplitude ODE."""
        return self.alpha * self.xi**self.q * self.R ** (3.0 + self.gamma) \
            * self.ell**2

    def ell_tilde(self, t):
        """Amplitude: drive * (1 - exp(-K t)) / K, nondecreasing from 0."""
        t = np.asarray(t, dtype=float)
        return self.drive * (-np.expm1(-self.K * t)) / self.K


def spread_barrier_eval(spec: SpreadBarrierSpec, t, x, v,
                        epsilon: float = 0.0):
    """ell_tilde(t) * phi_xi(v/R) * psi_rho(x) - epsilon."""
    v = np.asarray(v, dtype=float)
    return (spec.ell_tilde(t) * phi_xi(v / spec.R, spec.xi)
            * psi_rho(x, spec.rho) - epsilon)


def spread_barrier_ode_residual(spec: SpreadBarrierSpec, t: float,
                                h: float = 1e-4) -> float:
    """Central-difference check of ell_tilde' = drive - K ell_tilde.

    Exact value is 0; the return is finite-difference error, O(h^2).
    """
    if t < 0:
        raise InvariantError("time must be nonnegative")
    if t >= h:
        fd = (spec.ell_tilde(t + h) - spec.ell_tilde(t - h)) / (2 * h)
    else:
        # one-sided second-order stencil near t = 0
        fd = (-3 * spec.ell_tilde(t) + 4 * spec.ell_tilde(t + h)
              - spec.ell_tilde(t + 2 * h)) / (2 * h)
    return float(fd - (spec.drive - spec.K * spec.ell_tilde(t)))


# --------------------------------------------------------------------------
# ordering checks against solver trajectories
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class OrderingRow:
    t: float
    min_gap: float
    argmin_x: tuple
    argmin_v: tuple


def barrier_ordering_check(snapshots, v_grid, spec, tolerance: float = 0.0,
                           x_points=None) -> dict:
    """Scan trajectory snapshots for points where f drops below a barrier.

    ``snapshots`` is an iterable of ``(t, PhaseField)``.  For homogeneous
    fields (single spatial cell) the barrier is evaluated at its own
    spatial centre; otherwise ``x_points`` must supply one 3-vector per
    spatial cell.  Violations below ``-tolerance`` are counted, not raised.
    """
    vmesh = v_grid.points()
    rows = []
    worst = np.inf
    violations = 0
    for t, fld in snapshots:
        n_x = fld.values.shape[0]
        if x_points is None:
            if n_x != 1:
                raise InvariantError(
                    "x_points required for spatially resolved fields")
            if isinstance(spec, PushBarrierSpec):
                centers = [spec.x0 + t * spec.v0]
            else:
                centers = [np.zeros(3)]
        else:
            centers = [np.asarray(p, dtype=float) for p in x_points]
        for ix, xc in enumerate(centers):
            if isinstance(spec, PushBarrierSpec):
                bar = push_barrier_eval(spec, t, xc, vmesh)
            else:
                bar = spread_barrier_eval(spec, t, xc, vmesh)
            gap = fld.values[ix].ravel() - bar
            k = int(np.argmin(gap))
            g = float(gap[k])
            rows.append(OrderingRow(
                t=float(t), min_gap=g, argmin_x=(ix,),
                argmin_v=tuple(np.unravel_index(k, (v_grid.n,) * 3))))
            worst = min(worst, g)
            violations += int(g < -tolerance)
    return {"rows": rows, "min_gap": worst, "violations": violations,
            "tolerance": tolerance}
