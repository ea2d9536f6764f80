"""Collision operator in sigma and Carleman (kernel) representations.

Angular convention: the deviation angle theta runs over (0, pi/2], i.e. the
angular factor is supported on cos(theta) >= 0.  Under the change to
Carleman variables (v', v*') this corresponds to restricting the plane
integral to |v*' - v| >= |v' - v|; without this restriction the split into
singular and non-singular parts diverges at head-on angles for gamma >= -1.

The exact plane-integral kernel is

    K_f(v, v') = (4 / |v'-v|) * int_{w perp (v'-v)}  f(v + w)
                 * (|v'-v|^2 + |w|^2)^{(gamma-1)/2}
                 * theta^{-2-2s} b~(cos theta) 1_{|w| >= |v'-v|}  dw,

with theta = 2 arctan(|v'-v| / |w|) and
cos theta = (|w|^2 - |v'-v|^2) / (|w|^2 + |v'-v|^2); the Jacobian factor
4 / (|v'-v| |v-v*|) makes the two representations agree exactly, not just
up to a bounded angular factor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.integrate

from .core import ConstantsRegistry, HydroBounds, InvariantError, KernelParams

__all__ = [
    "NonConvergenceError",
    "SigmaQuadrature",
    "PlaneQuadrature",
    "CarlemanQuadrature",
    "ConvolutionQuadrature",
    "CarlemanKernelEval",
    "Cone",
    "BatteryPair",
    "q_sigma",
    "carleman_kernel",
    "q_s_carleman",
    "q_ns",
    "gamma_convolution",
    "measure_cancellation_constant",
    "measure_lambda",
    "cone_of_nondegeneracy",
]


class NonConvergenceError(RuntimeError):
    """Quadrature refinement or cutoff extrapolation failed to settle."""


# ---------------------------------------------------------------------------
# quadrature configuration


@dataclass(frozen=True)
class SigmaQuadrature:
    """Resolution for the sigma-representation integral.

    The theta singularity is cut off at ``theta_min`` and removed by
    Richardson extrapolation in the cutoff (order 2 - 2s after the
    azimuthal pairing).  ``cancellation_mode`` selects the explicitly
    paired (phi, phi + pi) evaluation of the integrand difference.
    """

    n_theta: int = 16
    n_phi: int = 16
    theta_min: float = 0.1
    cancellation_mode: bool = True
    n_vstar: int = 32
    vstar_extent: float = 4.0
    convergence_tol: float = 0.05

    def __post_init__(self):
        if not (0.0 < self.theta_min < math.pi / 4):
            raise InvariantError("theta_min must lie in (0, pi/4)")
        if self.n_theta < 8 or self.n_phi < 8 or self.n_vstar < 8:
            raise InvariantError("sigma quadrature resolutions must be >= 8")


@dataclass(frozen=True)
class PlaneQuadrature:
    """Polar quadrature on the perpendicular plane of the Carleman kernel."""

    n_rho: int = 64
    n_beta: int = 32
    extent: float = 6.0

    def __post_init__(self):
        if self.n_rho < 4 or self.n_beta < 4 or self.extent <= 0:
            raise InvariantError("invalid plane quadrature")


@dataclass(frozen=True)
class CarlemanQuadrature:
    """Spherical-around-v scheme for the kernel form of the singular part.

    Directions come in antipodal pairs so the radial integrand carries the
    symmetric second difference of g; the remaining cutoff ``t_min`` is
    removed by Richardson extrapolation.
    """

    n_dir_polar: int = 8
    n_dir_azimuth: int = 8
    n_radial: int = 48
    t_min: float = 0.05
    plane: PlaneQuadrature = PlaneQuadrature()
    convergence_tol: float = 0.05

    def __post_init__(self):
        if self.n_dir_azimuth % 2 != 0:
            raise InvariantError("n_dir_azimuth must be even (antipodal pairing)")
        if self.t_min <= 0:
            raise InvariantError("t_min must be positive")


@dataclass(frozen=True)
class ConvolutionQuadrature:
    """Odd-count midpoint grid for |z|^e convolutions; the cell at z = 0 is
    integrated exactly over the equal-volume ball."""

    n: int = 33
    extent: float = 5.0

    def __post_init__(self):
        if self.n % 2 == 0 or self.n < 9:
            raise InvariantError("convolution grid needs odd n >= 9")


@dataclass(frozen=True)
class CarlemanKernelEval:
    """One kernel value with the quadrature that produced it."""

    v: np.ndarray
    v_prime: np.ndarray
    value: float
    plane_quadrature: PlaneQuadrature
    truncation_warning: bool = False


@dataclass(frozen=True)
class Cone:
    """Symmetric direction set {omega : |omega . axis| <= cos_width}.

    The set is a strip around the equator perpendicular to ``axis``;
    ``cos_width`` = 1 means the full sphere.
    """

    v: np.ndarray
    axis: np.ndarray
    cos_width: float
    measure: float

    def contains(self, omega) -> np.ndarray:
        omega = np.asarray(omega, dtype=float)
        return np.abs(omega @ self.axis) <= self.cos_width + 1e-12


# ---------------------------------------------------------------------------
# helpers


def _orthobasis(unit: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Two unit vectors spanning the plane perpendicular to each row of ``unit``."""
    unit = np.atleast_2d(unit)
    helper = np.where(np.abs(unit[:, 0:1]) < 0.9,
                      np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0]))
    e1 = np.cross(unit, helper)
    e1 /= np.linalg.norm(e1, axis=1, keepdims=True)
    e2 = np.cross(unit, e1)
    return e1, e2


def _log_midpoint(a: float, b: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Midpoint nodes and weights for int_a^b dt using the log substitution."""
    la, lb = math.log(a), math.log(b)
    dl = (lb - la) / n
    t = np.exp(la + (np.arange(n) + 0.5) * dl)
    return t, t * dl


def _richardson(coarse: float, fine: float, order: float) -> float:
    return fine + (fine - coarse) / (2.0**order - 1.0)


def _extrapolate_segments(base: float, seg1: float, seg2: float,
                          order: float, tol: float, context: str) -> float:
    """Cutoff extrapolation from nested integrals I(c), I(c/2), I(c/4).

    ``base`` is the integral over [c, upper]; seg1 and seg2 append
    [c/2, c] and [c/4, c/2].
    """
    i0 = base
    i1 = base + seg1
    i2 = base + seg1 + seg2
    r1 = _richardson(i0, i1, order)
    r2 = _richardson(i1, i2, order)
    if abs(r2 - r1) > tol * (1.0 + abs(r2)):
        raise NonConvergenceError(
            f"{context}: cutoff extrapolants differ by "
            f"{abs(r2 - r1):.3e} (tol {tol:.3e} * (1 + |I|)); "
            "refine the quadrature or relax theta_min"
        )
    return r2


def _vstar_grid(quad: SigmaQuadrature) -> tuple[np.ndarray, float]:
    n, L = quad.n_vstar, quad.vstar_extent
    h = 2.0 * L / n
    c = -L + (np.arange(n) + 0.5) * h
    X, Y, Z = np.meshgrid(c, c, c, indexing="ij")
    return np.stack([X, Y, Z], axis=-1).reshape(-1, 3), h**3


def _sigma_segment(integrand: Callable[[np.ndarray, np.ndarray], np.ndarray],
                   precomp: dict, params: KernelParams, quad: SigmaQuadrature,
                   theta_lo: float, theta_hi: float, n_theta: int) -> float:
    """Integrate the sigma-form over theta in [theta_lo, theta_hi].

    ``integrand(v_star_prime, v_prime)`` returns the collision difference
    term for each (v*, phi) node; the caller closes over f(v*) and g(v).
    """
    VS, wcell = precomp["VS"], precomp["wcell"]
    r, uh = precomp["r"], precomp["uh"]
    e1, e2 = precomp["e1"], precomp["e2"]
    rgam = precomp["rgam"]
    m = precomp["mid"]

    theta, wtheta = _log_midpoint(theta_lo, theta_hi, n_theta)
    s = params.s
    ang = theta ** (-2.0 - 2.0 * s) * params.b_tilde(np.cos(theta)) * np.sin(theta)

    if quad.cancellation_mode:
        n_half = max(1, quad.n_phi // 2)
        phis = (np.arange(n_half) + 0.5) * math.pi / n_half
        phi_nodes = np.concatenate([phis, phis + math.pi])
        wphi = math.pi / n_half
    else:
        phi_nodes = (np.arange(quad.n_phi) + 0.5) * 2.0 * math.pi / quad.n_phi
        wphi = 2.0 * math.pi / quad.n_phi

    total = 0.0
    half = r[:, None] / 2.0
    for th, wt, an in zip(theta, wtheta, ang):
        ct, st = math.cos(th), math.sin(th)
        acc = None
        for ph in phi_nodes:
            perp = math.cos(ph) * e1 + math.sin(ph) * e2
            sig = ct * uh + st * perp
            vp = m + sig * half
            vsp = m - sig * half
            term = integrand(vsp, vp)
            acc = term if acc is None else acc + term
        total += wt * an * wphi * float(rgam @ acc)
    return total * wcell


def _sigma_precompute(f: Callable, v: np.ndarray, params: KernelParams,
                      quad: SigmaQuadrature) -> dict:
    VS, wcell = _vstar_grid(quad)
    u = v[None, :] - VS
    r = np.linalg.norm(u, axis=1)
    r = np.maximum(r, 1e-300)
    uh = u / r[:, None]
    e1, e2 = _orthobasis(uh)
    return {
        "VS": VS,
        "wcell": wcell,
        "r": r,
        "uh": uh,
        "e1": e1,
        "e2": e2,
        "rgam": r**params.gamma,
        "mid": (v[None, :] + VS) / 2.0,
        "fVS": f(VS),
    }


def _sigma_integral(f: Callable, integrand_factory, v: np.ndarray,
                    params: KernelParams, quad: SigmaQuadrature,
                    context: str) -> float:
    """Cutoff-extrapolated sigma-form integral over theta in (0, pi/2]."""
    pre = _sigma_precompute(f, v, params, quad)
    integrand = integrand_factory(pre)
    c = quad.theta_min
    base = _sigma_segment(integrand, pre, params, quad, c, math.pi / 2, quad.n_theta)
    n_seg = max(4, quad.n_theta // 2)
    seg1 = _sigma_segment(integrand, pre, params, quad, c / 2, c, n_seg)
    seg2 = _sigma_segment(integrand, pre, params, quad, c / 4, c / 2, n_seg)
    order = 2.0 - 2.0 * params.s
    return _extrapolate_segments(base, seg1, seg2, order,
                                 quad.convergence_tol, context)


# ---------------------------------------------------------------------------
# operator evaluations


def q_sigma(f: Callable, g: Callable, v, params: KernelParams,
            quad: SigmaQuadrature) -> float:
    """Full collision operator Q(f, g)(v) in the sigma representation.

    f and g are callables on (..., 3) velocity arrays.  Raises
    NonConvergenceError when the cutoff extrapolants disagree beyond the
    declared tolerance.
    """
    v = np.asarray(v, dtype=float)

    def factory(pre):
        gv = float(g(v[None, :])[0])
        fVS = pre["fVS"]

        def integrand(vsp, vp):
            return f(vsp) * g(vp) - fVS * gv

        return integrand

    return _sigma_integral(f, factory, v, params, quad, "q_sigma")


def carleman_kernel(f: Callable, v, v_prime, params: KernelParams,
                    plane_quad: PlaneQuadrature,
                    plane_center=None,
                    decay_tol: float = 1e-6) -> CarlemanKernelEval:
    """Kernel K_f(v, v') by 2-D quadrature over the perpendicular plane.

    ``plane_center`` optionally recenters the polar nodes at a given point
    (projected onto the plane); useful when f is concentrated far from v.
    """
    v = np.asarray(v, dtype=float)
    v_prime = np.asarray(v_prime, dtype=float)
    a = v_prime - v
    t = float(np.linalg.norm(a))
    if t == 0.0:
        raise ValueError("carleman_kernel requires v != v_prime")
    ah = a / t
    e1, e2 = _orthobasis(ah[None, :])
    e1, e2 = e1[0], e2[0]

    if plane_center is None:
        c2d = np.zeros(2)
    else:
        pc = np.asarray(plane_center, dtype=float) - v
        c2d = np.array([pc @ e1, pc @ e2])

    nr, nb, ext = plane_quad.n_rho, plane_quad.n_beta, plane_quad.extent
    rho = (np.arange(nr) + 0.5) * ext / nr
    dr = ext / nr
    beta = (np.arange(nb) + 0.5) * 2.0 * math.pi / nb
    db = 2.0 * math.pi / nb
    P2 = (c2d[None, None, :]
          + rho[:, None, None] * np.stack([np.cos(beta), np.sin(beta)], axis=-1)[None, :, :])
    W = P2[..., 0:1] * e1 + P2[..., 1:2] * e2          # (nr, nb, 3) in-plane offsets
    wnorm = np.sqrt(np.sum(W**2, axis=-1))
    area = rho[:, None] * dr * db * np.ones(nb)[None, :]

    fvals = f(v[None, None, :] + W)
    # partial-cell weight for the |w| >= t edge (keeps the edge error O(h^2))
    frac = np.clip((wnorm - t) / dr + 0.5, 0.0, 1.0)
    r2 = t * t + wnorm**2
    theta = 2.0 * np.arctan2(t, np.maximum(wnorm, 1e-300))
    ang = frac * theta ** (-2.0 - 2.0 * params.s) \
        * params.b_tilde((wnorm**2 - t * t) / r2)
    val = 4.0 / t * float(np.sum(fvals * r2 ** ((params.gamma - 1.0) / 2.0) * ang * area))

    outer = fvals[-1]
    trunc = bool(outer.max() > decay_tol * max(fvals.max(), 1e-300))
    return CarlemanKernelEval(v=v, v_prime=v_prime, value=val,
                              plane_quadrature=plane_quad,
                              truncation_warning=trunc)


def _carleman_directions(quad: CarlemanQuadrature):
    mu, wmu = np.polynomial.legendre.leggauss(quad.n_dir_polar)
    phi = (np.arange(quad.n_dir_azimuth) + 0.5) * 2.0 * math.pi / quad.n_dir_azimuth
    wphi = 2.0 * math.pi / quad.n_dir_azimuth
    st = np.sqrt(1.0 - mu**2)
    omega = np.stack([
        np.outer(st, np.cos(phi)),
        np.outer(st, np.sin(phi)),
        np.outer(mu, np.ones_like(phi)),
    ], axis=-1).reshape(-1, 3)
    weights = np.outer(wmu, np.full_like(phi, wphi)).ravel()
    return omega, weights


def _plane_weight_matrix(rho: np.ndarray, dr: float, tnodes: np.ndarray,
                         params: KernelParams) -> np.ndarray:
    """W[k, m]: kernel weight at plane radius rho_k, offset t_m (Jacobian included).

    The admissibility edge |w| >= t is applied as a partial-cell fraction so
    the radial grid does not introduce a first-order edge error.
    """
    R = rho[:, None]
    T = tnodes[None, :]
    r2 = R**2 + T**2
    theta = 2.0 * np.arctan2(T, R)
    frac = np.clip((R - T) / dr + 0.5, 0.0, 1.0)
    return (frac * 4.0 * r2 ** ((params.gamma - 1.0) / 2.0)
            * theta ** (-2.0 - 2.0 * params.s)
            * params.b_tilde((R**2 - T**2) / r2))


def q_s_carleman(f: Callable, g: Callable, v, params: KernelParams,
                 quad: CarlemanQuadrature) -> float:
    """Singular part Q_s(f, g)(v) via the plane-integral kernel.

    Integrates in spherical shells around v with antipodally paired
    directions, so the odd part of g(v') - g(v) cancels near v' = v; the
    remaining radial cutoff is Richardson-extrapolated.
    """
    v = np.asarray(v, dtype=float)
    omega, wdir = _carleman_directions(quad)
    gv = float(g(v[None, :])[0])

    pl = quad.plane
    rho = (np.arange(pl.n_rho) + 0.5) * pl.extent / pl.n_rho
    dr = pl.extent / pl.n_rho
    beta = (np.arange(pl.n_beta) + 0.5) * 2.0 * math.pi / pl.n_beta
    db = 2.0 * math.pi / pl.n_beta

    # ring sums of f on each direction's perpendicular plane
    e1, e2 = _orthobasis(omega)
    ring = np.cos(beta)[None, :, None] * e1[:, None, :] + \
        np.sin(beta)[None, :, None] * e2[:, None, :]      # (ndir, nb, 3)
    F = np.empty((omega.shape[0], pl.n_rho))
    for k, rk in enumerate(rho):
        pts = v[None, None, :] + rk * ring
        F[:, k] = f(pts.reshape(-1, 3)).reshape(omega.shape[0], pl.n_beta).sum(axis=1)
    F *= rho[None, :] * dr * db

    def segment(t_lo: float, t_hi: float, n: int) -> float:
        tn, wt = _log_midpoint(t_lo, t_hi, n)
        W = _plane_weight_matrix(rho, dr, tn, params)    # (n_rho, nt)
        P = F @ W                                        # (ndir, nt)
        pts = v[None, None, :] + tn[None, :, None] * omega[:, None, :]
        G = g(pts.reshape(-1, 3)).reshape(omega.shape[0], tn.size) - gv
        contrib = (G * P) @ (wt * tn)
        return float(wdir @ contrib)

    t_max = pl.extent     # kernel vanishes for |v'-v| beyond the plane extent
    c = quad.t_min
    base = segment(c, t_max, quad.n_radial)
    n_seg = max(4, quad.n_radial // 3)
    seg1 = segment(c / 2, c, n_seg)
    seg2 = segment(c / 4, c / 2, n_seg)
    order = 2.0 - 2.0 * params.s
    return _extrapolate_segments(base, seg1, seg2, order,
                                 quad.convergence_tol, "q_s_carleman")


def gamma_convolution(f: Callable, v, exponent: float,
                      quad: ConvolutionQuadrature) -> float:
    """(|.|^exponent * f)(v) by midpoint quadrature with an exact central cell."""
    v = np.asarray(v, dtype=float)
    n, L = quad.n, quad.extent
    h = 2.0 * L / n
    c = (np.arange(n) - (n - 1) / 2.0) * h
    X, Y, Z = np.meshgrid(c, c, c, indexing="ij")
    Zpts = np.stack([X, Y, Z], axis=-1).reshape(-1, 3)
    zn = np.linalg.norm(Zpts, axis=1)
    central = zn < h / 2.0
    vals = f(v[None, :] - Zpts)
    out = float(np.sum(vals[~central] * zn[~central] ** exponent)) * h**3
    # central cell: |z|^e integrated exactly over the equal-volume ball
    rho_eq = h * (3.0 / (4.0 * math.pi)) ** (1.0 / 3.0)
    fv = float(f(v[None, :])[0])
    out += fv * 4.0 * math.pi * rho_eq ** (3.0 + exponent) / (3.0 + exponent)
    return out


def q_ns(f: Callable, g: Callable, v, params: KernelParams,
         registry: ConstantsRegistry,
         quad: ConvolutionQuadrature = ConvolutionQuadrature()) -> float:
    """Non-singular part: C_cancel * g(v) * (|.|^gamma * f)(v)."""
    v = np.asarray(v, dtype=float)
    gv = float(g(v[None, :])[0])
    if gv == 0.0:
        return 0.0
    C = registry.get("C_cancel")
    return C * gv * gamma_convolution(f, v, params.gamma, quad)


def cancellation_constant(params: KernelParams) -> float:
    """Closed-form cancellation constant by 1-D adaptive quadrature.

    Integrating out the angular variable in the gain-term substitution
    reduces the non-singular part to g(v) times a convolution with
    |z|^gamma, with prefactor

        2*pi * int_0^{pi/2} sin(t) t^{-2-2s} b~(cos t)
               * (cos(t/2)^{-3-gamma} - 1) dt.

    The integrand extends continuously to t = 0 (it is O(t^{1-2s})).
    """
    g, s = params.gamma, params.s

    def integrand(th):
        return (2.0 * math.pi * math.sin(th) * th ** (-2.0 - 2.0 * s)
                * float(params.b_tilde(np.cos(th)))
                * (math.cos(th / 2.0) ** (-3.0 - g) - 1.0))

    val, _ = scipy.integrate.quad(integrand, 0.0, math.pi / 2.0, limit=200)
    return val


def measure_cancellation_constant(f: Callable, v_samples: Sequence,
                                  params: KernelParams,
                                  quad: SigmaQuadrature,
                                  conv: ConvolutionQuadrature = ConvolutionQuadrature()):
    """Measure the cancellation-lemma constant from its defining integrals.

    Returns (ratios, mean, max_rel_spread): per-sample values of
    [sigma-side f(v*') - f(v*) integral] / [(|.|^gamma * f)(v)].
    """
    ratios = []
    for v in v_samples:
        v = np.asarray(v, dtype=float)

        def factory(pre):
            fVS = pre["fVS"]

            def integrand(vsp, vp):
                return f(vsp) - fVS

            return integrand

        num = _sigma_integral(f, factory, v, params, quad, "cancellation measurement")
        den = gamma_convolution(f, v, params.gamma, conv)
        if den == 0.0:
            raise ValueError("cancellation measurement needs nonzero convolution")
        ratios.append(num / den)
    ratios = np.array(ratios)
    mean = float(ratios.mean())
    spread = float(np.max(np.abs(ratios - mean)) / abs(mean)) if mean != 0 else math.inf
    return ratios, mean, spread


@dataclass(frozen=True)
class BatteryPair:
    """A smooth (f, g) test pair with declared sup norms of g and its Hessian."""

    f: Callable
    g: Callable
    g_sup: float
    g_hess_sup: float
    name: str = ""


def _bump(center, width: float, amp: float) -> Callable:
    """C^2 compactly supported bump amp * max(0, 1 - |v-c|^2/w^2)^3."""
    c = np.asarray(center, dtype=float)

    def fn(pts):
        pts = np.asarray(pts, dtype=float)
        u = np.sum((pts - c) ** 2, axis=-1) / width**2
        return amp * np.clip(1.0 - u, 0.0, None) ** 3

    return fn


def default_battery(count: int = 5) -> list:
    """Deterministic battery of smooth compactly supported (f, g) pairs.

    Sup norms are closed-form: the bump peaks at its centre with value
    ``amp`` and its Hessian norm peaks there with value ``6 amp / w^2``.
    """
    specs = [
        ((0.0, 0.0, 0.0), 1.6, 1.0, (0.3, 0.0, 0.0), 1.2, 1.0),
        ((0.5, -0.2, 0.1), 1.4, 0.8, (-0.4, 0.3, 0.0), 1.5, 1.3),
        ((-0.3, 0.4, -0.2), 1.8, 1.5, (0.2, 0.2, 0.4), 1.1, 0.7),
        ((0.1, 0.6, 0.3), 1.3, 0.6, (0.0, -0.5, 0.2), 1.7, 1.1),
        ((-0.6, -0.1, 0.5), 1.5, 1.2, (0.4, 0.1, -0.3), 1.4, 0.9),
        ((0.2, -0.4, -0.5), 1.7, 0.9, (-0.2, 0.0, 0.3), 1.3, 1.4),
        ((0.7, 0.2, 0.0), 1.2, 1.1, (0.1, 0.4, -0.1), 1.6, 0.8),
        ((-0.1, -0.6, 0.2), 1.6, 0.7, (0.3, -0.3, 0.5), 1.2, 1.2),
        ((0.4, 0.5, -0.4), 1.4, 1.3, (-0.5, 0.2, 0.1), 1.5, 1.0),
        ((0.0, 0.3, 0.6), 1.5, 1.0, (0.2, -0.1, -0.4), 1.4, 1.1),
    ]
    out = []
    for i, (cf, wf, af, cg, wg, ag) in enumerate(specs[:count]):
        out.append(BatteryPair(
            f=_bump(cf, wf, af), g=_bump(cg, wg, ag),
            g_sup=ag, g_hess_sup=6.0 * ag / wg**2, name=f"bumps-{i}"))
    return out


def measure_lambda(battery: Sequence[BatteryPair], v_samples: Sequence,
                   params: KernelParams, quad: CarlemanQuadrature,
                   conv: ConvolutionQuadrature = ConvolutionQuadrature(),
                   hydro: Optional[HydroBounds] = None,
                   registry: Optional[ConstantsRegistry] = None):
    """Empirical coefficient of the pointwise bound on the singular part.

    Ratio of |Q_s(f, g)| to the (convolution with |.|^{gamma+2s}) form of
    the bound, maximized over the battery and sample points; also reports
    the <v>^{(gamma+2s)_+} K0 form when hydro bounds are supplied.
    Stores the result under "Lambda" when a registry is given.
    """
    if len(battery) == 0:
        raise ValueError("measure_lambda needs a nonempty battery")
    lam_conv = 0.0
    lam_k0 = 0.0
    rows = []
    for pair in battery:
        gnorm = pair.g_sup ** (1.0 - params.s) * pair.g_hess_sup**params.s
        for v in v_samples:
            v = np.asarray(v, dtype=float)
            qs = q_s_carleman(pair.f, pair.g, v, params, quad)
            convval = gamma_convolution(pair.f, v, params.gamma_2s, conv)
            ratio = abs(qs) / (convval * gnorm)
            lam_conv = max(lam_conv, ratio)
            row = {"pair": pair.name, "v": v.tolist(), "q_s": qs,
                   "ratio_conv": ratio}
            if hydro is not None:
                wk = (1.0 + float(v @ v)) ** (params.gamma_2s_plus / 2.0)
                r2 = abs(qs) / (wk * hydro.K0 * gnorm)
                lam_k0 = max(lam_k0, r2)
                row["ratio_k0"] = r2
            rows.append(row)
    result = lam_k0 if hydro is not None else lam_conv
    if registry is not None:
        registry.set("Lambda", result, "empirically-measured")
        # bound coefficient for unit-sup cutoffs with Hessian <= 10 xi^-2
        registry.set("C1", result * 10.0**params.s, "empirically-measured")
    return {"lambda_conv": lam_conv, "lambda_k0": lam_k0 or None, "rows": rows}


def cone_of_nondegeneracy(v, v0, r: float, delta: float, params: KernelParams,
                          plane_quad: Optional[PlaneQuadrature] = None,
                          n_strip_polar: int = 6, n_strip_azimuth: int = 12,
                          n_offsets: int = 4, sphere_resolution: int = 200):
    """Direction strip with verified kernel lower bounds for a mass core.

    Assumes f >= delta on B_r(v0).  Returns (cone, mu, lam) where
    mu = measure * (1 + |v|) and lam is the fitted coefficient of
    (1 + |v|)^{1+gamma+2s} |v'-v|^{-3-2s} over sampled on-cone kernel
    evaluations of the indicator minorant.
    """
    v = np.asarray(v, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    d = float(np.linalg.norm(v0 - v))

    if d <= r / 2.0:
        axis = np.array([0.0, 0.0, 1.0])
        cosw = 1.0
    else:
        axis = (v0 - v) / d
        cosw = (r / 2.0) / d

    # strip measure by deterministic sphere quadrature (exact value 4*pi*cosw)
    mu_nodes, wmu = np.polynomial.legendre.leggauss(sphere_resolution)
    measure = float(2.0 * math.pi * wmu @ (np.abs(mu_nodes) <= cosw))
    cone = Cone(v=v, axis=axis, cos_width=cosw, measure=measure)

    def minorant(pts):
        pts = np.asarray(pts, dtype=float)
        return delta * (np.sum((pts - v0) ** 2, axis=-1) <= r * r)

    if plane_quad is None:
        plane_quad = PlaneQuadrature(n_rho=48, n_beta=32, extent=2.5 * r)

    e1, e2 = _orthobasis(axis[None, :])
    e1, e2 = e1[0], e2[0]
    mus = np.linspace(-0.9 * cosw, 0.9 * cosw, n_strip_polar)
    phis = (np.arange(n_strip_azimuth) + 0.5) * 2.0 * math.pi / n_strip_azimuth
    # offsets stay within the kernel's support: the plane section of the
    # core must contain points with |w| >= t, which bounds t by the
    # in-plane reach of B_r(v0) from v (strict for every strip direction)
    reach = max(math.sqrt(max(d * d - 0.25 * r * r, 0.0)), 0.5 * r)
    ts = np.geomspace(0.1 * r, reach, n_offsets)

    lam = math.inf
    weight = (1.0 + float(np.linalg.norm(v))) ** (1.0 + params.gamma_2s)
    for mu in mus:
        st = math.sqrt(max(0.0, 1.0 - mu * mu))
        for ph in phis:
            omega = mu * axis + st * (math.cos(ph) * e1 + math.sin(ph) * e2)
            for t in ts:
                vp = v - t * omega
                ev = carleman_kernel(minorant, v, vp, params, plane_quad,
                                     plane_center=v0)
                lam = min(lam, ev.value * t ** (3.0 + 2.0 * params.s) / weight)
    mu_coeff = measure * (1.0 + float(np.linalg.norm(v)))
    return cone, mu_coeff, lam
