"""Compiled inner loops of the kinetic solver.

Single-threaded by design: fixed loop order makes every run bit-exact
for a given build, which the reporting layer relies on.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def _trilinear(f, n, c0, h, x, y, z):
    """Trilinear interpolation on the cell-centred grid; 0 outside."""
    u = (x - c0) / h
    v = (y - c0) / h
    w = (z - c0) / h
    i0 = int(np.floor(u))
    j0 = int(np.floor(v))
    k0 = int(np.floor(w))
    if i0 < 0 or j0 < 0 or k0 < 0 or i0 >= n - 1 or j0 >= n - 1 or k0 >= n - 1:
        return 0.0
    du = u - i0
    dv = v - j0
    dw = w - k0
    c00 = f[i0, j0, k0] * (1 - du) + f[i0 + 1, j0, k0] * du
    c10 = f[i0, j0 + 1, k0] * (1 - du) + f[i0 + 1, j0 + 1, k0] * du
    c01 = f[i0, j0, k0 + 1] * (1 - du) + f[i0 + 1, j0, k0 + 1] * du
    c11 = f[i0, j0 + 1, k0 + 1] * (1 - du) + f[i0 + 1, j0 + 1, k0 + 1] * du
    c0_ = c00 * (1 - dv) + c10 * dv
    c1_ = c01 * (1 - dv) + c11 * dv
    return c0_ * (1 - dw) + c1_ * dw


@njit(cache=True)
def collision_rhs(f, c0, h, gamma, cos_t, sin_t, wt, n_phi, stride):
    """Sigma-form collision operator Q(f, f) on the full velocity grid.

    ``cos_t/sin_t/wt`` carry the deviation-angle quadrature (weights
    include the angular kernel and sin(theta) d theta); azimuth is a
    uniform midpoint rule; the companion velocity runs over a subgrid
    with the given stride.
    """
    n = f.shape[0]
    out = np.zeros((n, n, n))
    n_t = cos_t.shape[0]
    dphi = 2.0 * np.pi / n_phi
    wstar = (h * stride) ** 3
    cphi = np.cos((np.arange(n_phi) + 0.5) * dphi)
    sphi = np.sin((np.arange(n_phi) + 0.5) * dphi)
    off = stride // 2

    for i in range(n):
        vx = c0 + i * h
        for j in range(n):
            vy = c0 + j * h
            for k in range(n):
                vz = c0 + k * h
                fv = f[i, j, k]
                acc = 0.0
                for a in range(off, n, stride):
                    sx = c0 + a * h
                    for b in range(off, n, stride):
                        sy = c0 + b * h
                        for c in range(off, n, stride):
                            fstar = f[a, b, c]
                            sz = c0 + c * h
                            kx = vx - sx
                            ky = vy - sy
                            kz = vz - sz
                            d = np.sqrt(kx * kx + ky * ky + kz * kz)
                            if d < 1e-12:
                                continue
                            ux, uy, uz = kx / d, ky / d, kz / d
                            # orthonormal frame around the relative velocity
                            if abs(ux) < 0.9:
                                e1x, e1y, e1z = 0.0, -uz, uy
                            else:
                                e1x, e1y, e1z = -uz, 0.0, ux
                            en = np.sqrt(e1x * e1x + e1y * e1y + e1z * e1z)
                            e1x, e1y, e1z = e1x / en, e1y / en, e1z / en
                            e2x = uy * e1z - uz * e1y
                            e2y = uz * e1x - ux * e1z
                            e2z = ux * e1y - uy * e1x
                            mx = 0.5 * (vx + sx)
                            my = 0.5 * (vy + sy)
                            mz = 0.5 * (vz + sz)
                            pref = d ** gamma * wstar
                            pair = 0.0
                            for it in range(n_t):
                                ct = cos_t[it]
                                st = sin_t[it]
                                wa = wt[it]
                                ang = 0.0
                                for ip in range(n_phi):
                                    px = st * (cphi[ip] * e1x + sphi[ip] * e2x)
                                    py = st * (cphi[ip] * e1y + sphi[ip] * e2y)
                                    pz = st * (cphi[ip] * e1z + sphi[ip] * e2z)
                                    ox = ct * ux + px
                                    oy = ct * uy + py
                                    oz = ct * uz + pz
                                    hd = 0.5 * d
                                    fp = _trilinear(f, n, c0, h,
                                                    mx + hd * ox,
                                                    my + hd * oy,
                                                    mz + hd * oz)
                                    fsp = _trilinear(f, n, c0, h,
                                                     mx - hd * ox,
                                                     my - hd * oy,
                                                     mz - hd * oz)
                                    ang += fp * fsp - fv * fstar
                                pair += wa * ang
                            acc += pref * pair * dphi
                out[i, j, k] = acc
    return out


@njit(cache=True)
def transport_shift(f, courant):
    """Periodic semi-Lagrangian shift in the first axis by ``courant`` cells.

    Linear interpolation between the two neighbouring departure cells;
    exact (pure index roll) when ``courant`` is an integer.
    """
    n_x = f.shape[0]
    out = np.empty_like(f)
    sh = int(np.floor(courant))
    frac = courant - sh
    for i in range(n_x):
        j0 = (i - sh) % n_x
        j1 = (j0 - 1) % n_x
        out[i] = (1.0 - frac) * f[j0] + frac * f[j1]
    return out
