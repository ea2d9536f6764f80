"""Grids, sampled distribution fields, kernel parameters and diagnostics.

All types are immutable after construction.  Operations are pure functions
of their arguments and are safe to call concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import ndimage

__all__ = [
    "KernelParams",
    "VelocityGrid",
    "SpatialGrid",
    "PhaseField",
    "HydroBounds",
    "ConstantsRegistry",
    "MomentReport",
    "moment_weighted",
    "lp_norm",
    "check_mass_core",
    "check_well_distributed",
    "maxwellian",
    "ball_indicator",
]


class InvariantError(ValueError):
    """A domain-type invariant was violated at construction or use."""


def _const_one(u):
    return np.ones_like(np.asarray(u, dtype=float))


@dataclass(frozen=True)
class KernelParams:
    """Collision-kernel exponents and angular factor.

    ``gamma`` is the relative-speed exponent, ``s`` the angular singularity
    order.  ``b_tilde`` maps cos(theta) in [-1, 1] to a positive bounded
    weight; the default is the constant-1 function.
    """

    gamma: float
    s: float
    b_tilde: Callable[[np.ndarray], np.ndarray] = _const_one
    b_min: float = 1.0
    b_max: float = 1.0

    def __post_init__(self):
        if not (-3.0 < self.gamma < 1.0):
            raise InvariantError(f"gamma must lie in (-3, 1), got {self.gamma}")
        if not (0.0 < self.s < 1.0):
            raise InvariantError(f"s must lie in (0, 1), got {self.s}")
        if not (0.0 < self.b_min <= self.b_max):
            raise InvariantError("need 0 < b_min <= b_max")

    @property
    def gamma_2s(self) -> float:
        return self.gamma + 2.0 * self.s

    @property
    def gamma_2s_plus(self) -> float:
        return max(0.0, self.gamma_2s)


@dataclass(frozen=True)
class VelocityGrid:
    """Uniform Cartesian midpoint grid on the cube [-extent, extent]^3."""

    extent: float
    n: int

    def __post_init__(self):
        if self.n < 8:
            raise InvariantError(f"velocity grid needs n >= 8, got {self.n}")
        if self.extent <= 0:
            raise InvariantError("velocity extent must be positive")

    @property
    def spacing(self) -> float:
        return 2.0 * self.extent / self.n

    @property
    def centers(self) -> np.ndarray:
        h = self.spacing
        return -self.extent + (np.arange(self.n) + 0.5) * h

    def points(self) -> np.ndarray:
        """All grid centers as an (n^3, 3) array."""
        c = self.centers
        X, Y, Z = np.meshgrid(c, c, c, indexing="ij")
        return np.stack([X, Y, Z], axis=-1).reshape(-1, 3)

    def mesh(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        c = self.centers
        return np.meshgrid(c, c, c, indexing="ij")

    def cell_volume(self) -> float:
        return self.spacing**3

    def refine(self) -> "VelocityGrid":
        return VelocityGrid(self.extent, 2 * self.n)


@dataclass(frozen=True)
class SpatialGrid:
    """Either the homogeneous marker or a 1-D periodic grid of length extent."""

    homogeneous: bool = True
    extent: float = 1.0
    n: int = 1

    def __post_init__(self):
        if self.homogeneous and self.n != 1:
            raise InvariantError("homogeneous marker must have n == 1")
        if not self.homogeneous and self.n < 2:
            raise InvariantError("periodic grid needs n >= 2")
        if self.extent <= 0:
            raise InvariantError("spatial extent must be positive")

    @property
    def spacing(self) -> float:
        return self.extent / self.n

    @property
    def centers(self) -> np.ndarray:
        if self.homogeneous:
            return np.zeros(1)
        return (np.arange(self.n) + 0.5) * self.spacing

    def periodic_distance(self, a, b) -> np.ndarray:
        """Minimal-image distance on the torus of length ``extent``."""
        d = np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))
        return np.minimum(d, self.extent - d)


DEFAULT_DECAY_TOL = 1e-8


@dataclass(frozen=True)
class PhaseField:
    """A sampled nonnegative distribution f(t, x, v) on truncated grids.

    ``values`` has shape (n_x, n, n, n) with the x axis first; homogeneous
    fields carry a singleton x axis.
    """

    values: np.ndarray
    x_grid: SpatialGrid
    v_grid: VelocityGrid
    time: float = 0.0

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        expected = (self.x_grid.n, self.v_grid.n, self.v_grid.n, self.v_grid.n)
        if vals.shape != expected:
            raise InvariantError(
                f"values shape {vals.shape} does not match grids {expected}"
            )
        if np.any(vals < 0):
            raise InvariantError("phase field values must be nonnegative")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def boundary_decay_ok(self, tol: float = DEFAULT_DECAY_TOL) -> bool:
        """True if values on the |v| = extent faces are below tol * max."""
        v = self.values
        peak = v.max()
        if peak == 0.0:
            return True
        faces = [v[:, 0], v[:, -1], v[:, :, 0], v[:, :, -1],
                 v[:, :, :, 0], v[:, :, :, -1]]
        return all(f.max() <= tol * peak for f in faces)

    def with_values(self, values: np.ndarray, time: Optional[float] = None) -> "PhaseField":
        return PhaseField(values, self.x_grid, self.v_grid,
                          self.time if time is None else time)

    def slice_function(self, ix: int = 0) -> Callable[[np.ndarray], np.ndarray]:
        """Trilinear interpolant of the velocity slice at x-index ``ix``.

        Returns a callable mapping (..., 3) velocity arrays to values,
        zero outside the truncated cube.
        """
        from scipy.interpolate import RegularGridInterpolator

        c = self.v_grid.centers
        interp = RegularGridInterpolator(
            (c, c, c), self.values[ix], bounds_error=False, fill_value=0.0
        )

        def fn(pts):
            pts = np.asarray(pts, dtype=float)
            return interp(pts)

        return fn


def maxwellian(x_grid: SpatialGrid, v_grid: VelocityGrid,
               density: float = 1.0, temperature: float = 1.0,
               mean_velocity=(0.0, 0.0, 0.0)) -> PhaseField:
    """Maxwellian equilibrium rho (2 pi T)^{-3/2} exp(-|v-u|^2 / 2T)."""
    VX, VY, VZ = v_grid.mesh()
    u = mean_velocity
    q = (VX - u[0]) ** 2 + (VY - u[1]) ** 2 + (VZ - u[2]) ** 2
    m = density * (2.0 * math.pi * temperature) ** -1.5 * np.exp(-q / (2.0 * temperature))
    vals = np.broadcast_to(m, (x_grid.n,) + m.shape).copy()
    return PhaseField(vals, x_grid, v_grid)


def ball_indicator(x_grid: SpatialGrid, v_grid: VelocityGrid,
                   delta: float, r: float, v0=(0.0, 0.0, 0.0),
                   x0: float = 0.0, x_r: Optional[float] = None) -> PhaseField:
    """delta on the ball B_r(v0) in v, optionally localized to B_{x_r}(x0) in x."""
    VX, VY, VZ = v_grid.mesh()
    inside_v = (VX - v0[0]) ** 2 + (VY - v0[1]) ** 2 + (VZ - v0[2]) ** 2 <= r * r
    vals = np.zeros((x_grid.n,) + inside_v.shape)
    if x_grid.homogeneous or x_r is None:
        vals[:] = delta * inside_v
    else:
        dx = x_grid.periodic_distance(x_grid.centers, x0)
        for i in range(x_grid.n):
            if dx[i] <= x_r:
                vals[i] = delta * inside_v
    return PhaseField(vals, x_grid, v_grid)


@dataclass(frozen=True)
class HydroBounds:
    """Uniform bounds on the weighted mass-energy moment and an L^p norm."""

    K0: float
    P0: float = math.inf
    p: float = 2.0

    def __post_init__(self):
        if self.K0 <= 0 or self.P0 <= 0:
            raise InvariantError("hydrodynamic bounds must be positive")

    def validate_for(self, params: KernelParams) -> None:
        if params.gamma_2s < 0:
            p_min = 3.0 / (3.0 + params.gamma_2s)
            if not self.p > p_min:
                raise InvariantError(
                    f"need p > 3/(3+gamma+2s) = {p_min:.4f} when gamma+2s < 0, got p = {self.p}"
                )


_REGISTRY_KEYS = ("Lambda", "C1", "C_push", "c_spread", "alpha", "C_cancel")


@dataclass
class ConstantsRegistry:
    """Named positive constants with a provenance tag per entry.

    The comparison-principle constants are never given numerically by the
    theory; they are either configured or measured empirically.
    """

    entries: dict = field(default_factory=dict)

    @classmethod
    def with_defaults(cls) -> "ConstantsRegistry":
        reg = cls()
        defaults = {
            "Lambda": 1.0,
            "C1": 1.0,
            "C_push": 1.0,
            "c_spread": 1e-2,
            "alpha": 1e-2,
            "C_cancel": 1.0,
        }
        for k, v in defaults.items():
            reg.set(k, v, "configured")
        return reg

    def set(self, name: str, value: float, provenance: str = "configured") -> None:
        if value <= 0 or not math.isfinite(value):
            raise InvariantError(f"registry entry {name} must be a positive real")
        if provenance not in ("configured", "empirically-measured"):
            raise InvariantError(f"unknown provenance tag {provenance!r}")
        self.entries[name] = (float(value), provenance)

    def get(self, name: str) -> float:
        if name not in self.entries:
            raise KeyError(f"registry constant {name!r} not set")
        return self.entries[name][0]

    def provenance(self, name: str) -> str:
        return self.entries[name][1]

    def copy(self) -> "ConstantsRegistry":
        return ConstantsRegistry(dict(self.entries))


@dataclass(frozen=True)
class MomentReport:
    """Per-x moments plus their suprema over x."""

    mass: np.ndarray
    energy: np.ndarray
    weighted: np.ndarray

    @property
    def sup_mass(self) -> float:
        return float(self.mass.max())

    @property
    def sup_energy(self) -> float:
        return float(self.energy.max())

    @property
    def sup_weighted(self) -> float:
        return float(self.weighted.max())


def moment_weighted(f: PhaseField, params: KernelParams) -> MomentReport:
    """Mass, energy and (1 + |v|^max(2, gamma+2s))-weighted moment per x point."""
    VX, VY, VZ = f.v_grid.mesh()
    vv = np.sqrt(VX**2 + VY**2 + VZ**2)
    w = 1.0 + vv ** max(2.0, params.gamma_2s)
    dv = f.v_grid.cell_volume()
    flat = f.values.reshape(f.x_grid.n, -1)
    mass = flat.sum(axis=1) * dv
    energy = flat @ (vv**2).ravel() * dv
    weighted = flat @ w.ravel() * dv
    return MomentReport(mass=mass, energy=energy, weighted=weighted)


def lp_norm(f: PhaseField, p: float) -> np.ndarray:
    """Per-x L^p norm of f(x, .) by midpoint quadrature; requires finite p >= 1."""
    if not (p >= 1.0) or not math.isfinite(p):
        raise ValueError(f"lp_norm requires a finite exponent p >= 1, got {p}")
    dv = f.v_grid.cell_volume()
    flat = f.values.reshape(f.x_grid.n, -1)
    return (np.sum(flat**p, axis=1) * dv) ** (1.0 / p)


def _ball_min_filter(f: PhaseField, r: float) -> np.ndarray:
    """Min of f over the discrete velocity ball B_r centered at each grid point."""
    h = f.v_grid.spacing
    k = int(math.floor(r / h))
    size = 2 * k + 1
    offs = (np.arange(size) - k) * h
    OX, OY, OZ = np.meshgrid(offs, offs, offs, indexing="ij")
    footprint = OX**2 + OY**2 + OZ**2 <= r * r
    out = np.empty_like(f.values)
    for ix in range(f.x_grid.n):
        out[ix] = ndimage.minimum_filter(
            f.values[ix], footprint=footprint, mode="constant", cval=0.0
        )
    return out


def _x_window_min(core_min: np.ndarray, f: PhaseField, r: float) -> np.ndarray:
    """Min over the periodic x window of radius r, applied to the v-filtered field."""
    if f.x_grid.homogeneous:
        return core_min
    kx = int(math.floor(r / f.x_grid.spacing))
    if kx == 0:
        return core_min
    return ndimage.minimum_filter(core_min, size=(2 * kx + 1, 1, 1, 1), mode="wrap")


def check_mass_core(f: PhaseField, delta: float, r: float):
    """Find a grid-centered (x0, v0) with f >= delta on B_r(x0) x B_r(v0).

    Returns (x0, v0) with v0 a 3-vector, or None.  For homogeneous fields
    the x ball is trivially the whole (singleton) domain.
    """
    if delta <= 0 or r <= 0:
        raise ValueError("delta and r must be positive")
    filt = _x_window_min(_ball_min_filter(f, r), f, r)
    ok = filt >= delta
    if not ok.any():
        return None
    # prefer the admissible center closest to the origin in v
    idx = np.argwhere(ok)
    c = f.v_grid.centers
    vpts = np.stack([c[idx[:, 1]], c[idx[:, 2]], c[idx[:, 3]]], axis=1)
    best = np.argmin(np.sum(vpts**2, axis=1))
    ix = idx[best, 0]
    x0 = float(f.x_grid.centers[ix])
    return x0, vpts[best]


def check_well_distributed(f: PhaseField, R: float, delta: float, r: float):
    """Check Definition-style well-distribution with parameters (R, delta, r).

    For every x grid point, look for a core center x_m within distance R
    (periodic) and v_m in B_R(0) such that f >= delta on B_r(x_m) x B_r(v_m).
    Returns (ok, witness) where witness maps x-index -> (x_m, v_m) for
    satisfied points and ok is False if any point has no witness.
    """
    if not (R >= r > 0) or delta <= 0:
        raise ValueError("need R >= r > 0 and delta > 0")
    filt = _x_window_min(_ball_min_filter(f, r), f, r)
    c = f.v_grid.centers
    VX, VY, VZ = f.v_grid.mesh()
    in_R = VX**2 + VY**2 + VZ**2 <= R * R
    ok_map = (filt >= delta) & in_R[None]
    has_core = ok_map.reshape(f.x_grid.n, -1).any(axis=1)

    witness = {}
    all_ok = True
    xs = f.x_grid.centers
    for ix in range(f.x_grid.n):
        if f.x_grid.homogeneous:
            near = has_core
        else:
            near = has_core & (f.x_grid.periodic_distance(xs, xs[ix]) <= R)
        cand = np.flatnonzero(near)
        if cand.size == 0:
            all_ok = False
            continue
        jx = int(cand[0])
        vi = np.argwhere(ok_map[jx])[0]
        witness[ix] = (float(xs[jx]), np.array([c[vi[0]], c[vi[1]], c[vi[2]]]))
    return all_ok, witness
