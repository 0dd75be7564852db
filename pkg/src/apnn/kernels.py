"""Hot numeric kernels with numba and pure-numpy implementations.

Every kernel exists twice: ``*_numba`` (loop form, compiled with numba when
available) and ``*_numpy`` (vectorized). The public name dispatches on
:data:`apnn._accel.USE_NUMBA`; both variants are importable for testing and
benchmarking.
"""
from __future__ import annotations

import numpy as np

from ._accel import USE_NUMBA, njit

# ---------------------------------------------------------------------------
# tanh layer carrying tangents
#
# Z has shape (1 + k, N, m): pre-activations followed by k tangent rows.
# Forward: Y0 = tanh(Z0), S = 1 - Y0^2, Yi = S * Zi.
# Backward: gS = sum_i gYi * Zi, gZi = gYi * S, gZ0 = S * (gY0 - 2 Y0 gS).
# ---------------------------------------------------------------------------


def tanh_dual_forward_numpy(Z):
    Y = np.empty_like(Z)
    y0 = np.tanh(Z[0])
    s = 1.0 - y0 * y0
    Y[0] = y0
    if Z.shape[0] > 1:
        np.multiply(s, Z[1:], out=Y[1:])
    return Y, s


@njit
def _tanh_dual_fill(Z, Y, S):
    k1, n, m = Z.shape
    for r in range(n):
        for c in range(m):
            y = Y[0, r, c]
            s = 1.0 - y * y
            S[r, c] = s
            for i in range(1, k1):
                Y[i, r, c] = s * Z[i, r, c]


def tanh_dual_forward_numba(Z):
    # numpy's tanh is SIMD-vectorized; numba fuses the tangent products
    Y = np.empty_like(Z)
    np.tanh(Z[0], out=Y[0])
    S = np.empty(Z.shape[1:])
    _tanh_dual_fill(Z, Y, S)
    return Y, S


def tanh_dual_backward_numpy(gY, y0, s, Z):
    gZ = np.empty_like(gY)
    if gY.shape[0] > 1:
        gs = np.einsum("inm,inm->nm", gY[1:], Z[1:])
        np.multiply(gY[1:], s, out=gZ[1:])
        gZ[0] = s * (gY[0] - 2.0 * y0 * gs)
    else:
        gZ[0] = s * gY[0]
    return gZ


@njit
def tanh_dual_backward_numba(gY, y0, s, Z):
    k1, n, m = gY.shape
    gZ = np.empty_like(gY)
    for r in range(n):
        for c in range(m):
            sv = s[r, c]
            gs = 0.0
            for i in range(1, k1):
                gs += gY[i, r, c] * Z[i, r, c]
                gZ[i, r, c] = gY[i, r, c] * sv
            gZ[0, r, c] = sv * (gY[0, r, c] - 2.0 * y0[r, c] * gs)
    return gZ




# ---------------------------------------------------------------------------
# staggered micro-macro scheme
#
# rho lives on nodes, eps*g on half nodes. One step:
#   (eps^2 + dt (sigma + eps^2 sigma_A)) g' = eps^2 g - dt [(I - Pi) v D(eps g) + v D rho]
#   rho' = rho - dt D <v g'> + dt (Q - sigma_A rho)
# with upwind D(eps g) and centered D rho. Inflow boundary nodes are half
# cells whose outer flux (1/eps)<v f> takes f = F on incoming velocities and
# rho_b + eps g on outgoing ones; the stiff rho_b part is implicit.
# Periodic grids wrap (nx nodes, nx half nodes).
#
# The advance functions update rho and g in place and return -1, or the
# (0-based) step at which |rho| first exceeded ``blowup``.
# ---------------------------------------------------------------------------


def _mm_upwind_numpy(eg, v, rho, FL, FR, dx, periodic):
    pos = v > 0
    if periodic:
        left = np.roll(eg, 1, axis=0)
        right = np.roll(eg, -1, axis=0)
    else:
        left = np.empty_like(eg)
        left[1:] = eg[:-1]
        left[0] = FL - rho[0]
        right = np.empty_like(eg)
        right[:-1] = eg[1:]
        right[-1] = FR - rho[-1]
    return v * np.where(pos, eg - left, right - eg) / dx


def micro_macro_advance_numpy(rho, g, nsteps, dt, dx, eps, v, wa, sig_h, siga_h, siga_n, q_n, FL, FR, periodic,
                              blowup=1e6):
    e2 = eps * eps
    wv = wa * v
    neg, pos = v < 0, v > 0
    a_minus = float(np.sum(wv[neg]))
    a_plus = float(np.sum(wv[pos]))
    p_left = float(np.sum((wv * FL)[pos]))
    p_right = float(np.sum((wv * FR)[neg]))
    denom = (e2 + dt * (sig_h + e2 * siga_h))[:, None]
    half = 0.5 * dx
    for step in range(nsteps):
        T = _mm_upwind_numpy(eps * g, v, rho, FL, FR, dx, periodic)
        T -= (T @ wa)[:, None]
        if periodic:
            drho = (np.roll(rho, -1) - rho) / dx
        else:
            drho = (rho[1:] - rho[:-1]) / dx
        g[:] = (e2 * g - dt * (T + v * drho[:, None])) / denom
        J = g @ wv
        src = q_n - siga_n * rho
        if periodic:
            rho += -dt * (J - np.roll(J, 1)) / dx + dt * src
        else:
            new = rho.copy()
            new[1:-1] += -dt * (J[1:] - J[:-1]) / dx + dt * src[1:-1]
            b_left = float(g[0, neg] @ wv[neg])
            b_right = float(g[-1, pos] @ wv[pos])
            new[0] = (rho[0] * half / dt + p_left / eps + b_left - J[0] + half * src[0]) / (half / dt - a_minus / eps)
            new[-1] = (rho[-1] * half / dt + J[-1] - p_right / eps - b_right + half * src[-1]) / (half / dt + a_plus / eps)
            rho[:] = new
        if not np.all(np.abs(rho) <= blowup):
            return step
    return -1


@njit
def micro_macro_advance_numba(rho, g, nsteps, dt, dx, eps, v, wa, sig_h, siga_h, siga_n, q_n, FL, FR, periodic,
                              blowup=1e6):
    nh, nv = g.shape
    nr = rho.shape[0]
    e2 = eps * eps
    half = 0.5 * dx
    a_minus = 0.0
    a_plus = 0.0
    p_left = 0.0
    p_right = 0.0
    for k in range(nv):
        wv = wa[k] * v[k]
        if v[k] < 0:
            a_minus += wv
            p_right += wv * FR[k]
        elif v[k] > 0:
            a_plus += wv
            p_left += wv * FL[k]
    gn = np.empty_like(g)
    T = np.empty(nv)
    J = np.empty(nh)
    new = np.empty(nr)
    for step in range(nsteps):
        for i in range(nh):
            ip = i + 1
            if ip == nr:
                ip = 0
            tavg = 0.0
            for k in range(nv):
                vk = v[k]
                ec = eps * g[i, k]
                if vk > 0:
                    if i > 0:
                        nb = eps * g[i - 1, k]
                    elif periodic:
                        nb = eps * g[nh - 1, k]
                    else:
                        nb = FL[k] - rho[0]
                    T[k] = vk * (ec - nb) / dx
                else:
                    if i < nh - 1:
                        nb = eps * g[i + 1, k]
                    elif periodic:
                        nb = eps * g[0, k]
                    else:
                        nb = FR[k] - rho[nr - 1]
                    T[k] = vk * (nb - ec) / dx
                tavg += wa[k] * T[k]
            drho = (rho[ip] - rho[i]) / dx
            den = e2 + dt * (sig_h[i] + e2 * siga_h[i])
            flux = 0.0
            for k in range(nv):
                val = (e2 * g[i, k] - dt * (T[k] - tavg + v[k] * drho)) / den
                gn[i, k] = val
                flux += wa[k] * v[k] * val
            J[i] = flux
        for i in range(nh):
            for k in range(nv):
                g[i, k] = gn[i, k]
        bad = False
        if periodic:
            for j in range(nr):
                jm = j - 1 if j > 0 else nr - 1
                new[j] = rho[j] - dt * (J[j] - J[jm]) / dx + dt * (q_n[j] - siga_n[j] * rho[j])
        else:
            for j in range(1, nr - 1):
                new[j] = rho[j] - dt * (J[j] - J[j - 1]) / dx + dt * (q_n[j] - siga_n[j] * rho[j])
            b_left = 0.0
            b_right = 0.0
            for k in range(nv):
                if v[k] < 0:
                    b_left += wa[k] * v[k] * g[0, k]
                elif v[k] > 0:
                    b_right += wa[k] * v[k] * g[nh - 1, k]
            s0 = q_n[0] - siga_n[0] * rho[0]
            s1 = q_n[nr - 1] - siga_n[nr - 1] * rho[nr - 1]
            new[0] = (rho[0] * half / dt + p_left / eps + b_left - J[0] + half * s0) / (half / dt - a_minus / eps)
            new[nr - 1] = (rho[nr - 1] * half / dt + J[nh - 1] - p_right / eps - b_right + half * s1) / (
                half / dt + a_plus / eps
            )
        for j in range(nr):
            rho[j] = new[j]
            if not abs(new[j]) <= blowup:
                bad = True
        if bad:
            return step
    return -1


# ---------------------------------------------------------------------------
# discrete ordinates, explicit first-order upwind on nodes
#   f' = f - (dt/eps) v D f + (dt/eps^2)(sigma (<f> - f) - eps^2 sigma_A f) + dt Q
# Inflow nodes hold F on incoming velocities.
# ---------------------------------------------------------------------------


def transport_advance_numpy(f, nsteps, dt, dx, eps, v, wa, sig_n, siga_n, q_n, FL, FR, periodic, blowup=1e6):
    pos = v > 0
    neg = ~pos
    c = dt / (eps * dx)
    k = dt / (eps * eps)
    for step in range(nsteps):
        rho = f @ wa
        if periodic:
            left = np.roll(f, 1, axis=0)
            right = np.roll(f, -1, axis=0)
        else:
            left = np.empty_like(f)
            left[1:] = f[:-1]
            left[0] = FL
            right = np.empty_like(f)
            right[:-1] = f[1:]
            right[-1] = FR
        adv = v * np.where(pos, f - left, right - f)
        coll = sig_n[:, None] * (rho[:, None] - f) - (eps * eps) * siga_n[:, None] * f
        f += -c * adv + k * coll + dt * q_n[:, None]
        if not periodic:
            f[0, pos] = FL[pos]
            f[-1, neg] = FR[neg]
        if not np.all(np.abs(f @ wa) <= blowup):
            return step
    return -1


@njit
def transport_advance_numba(f, nsteps, dt, dx, eps, v, wa, sig_n, siga_n, q_n, FL, FR, periodic, blowup=1e6):
    nr, nv = f.shape
    c = dt / (eps * dx)
    kk = dt / (eps * eps)
    e2 = eps * eps
    fn = np.empty_like(f)
    for step in range(nsteps):
        for j in range(nr):
            rho = 0.0
            for q in range(nv):
                rho += wa[q] * f[j, q]
            for q in range(nv):
                vq = v[q]
                fc = f[j, q]
                if vq > 0:
                    if j > 0:
                        nb = f[j - 1, q]
                    elif periodic:
                        nb = f[nr - 1, q]
                    else:
                        nb = FL[q]
                    adv = vq * (fc - nb)
                else:
                    if j < nr - 1:
                        nb = f[j + 1, q]
                    elif periodic:
                        nb = f[0, q]
                    else:
                        nb = FR[q]
                    adv = vq * (nb - fc)
                coll = sig_n[j] * (rho - fc) - e2 * siga_n[j] * fc
                fn[j, q] = fc - c * adv + kk * coll + dt * q_n[j]
        if not periodic:
            for q in range(nv):
                if v[q] > 0:
                    fn[0, q] = FL[q]
                else:
                    fn[nr - 1, q] = FR[q]
        bad = False
        for j in range(nr):
            rho = 0.0
            for q in range(nv):
                f[j, q] = fn[j, q]
                rho += wa[q] * fn[j, q]
            if not abs(rho) <= blowup:
                bad = True
        if bad:
            return step
    return -1


if USE_NUMBA:
    tanh_dual_forward = tanh_dual_forward_numba
    tanh_dual_backward = tanh_dual_backward_numba
    micro_macro_advance = micro_macro_advance_numba
    transport_advance = transport_advance_numba
else:
    tanh_dual_forward = tanh_dual_forward_numpy
    tanh_dual_backward = tanh_dual_backward_numpy
    micro_macro_advance = micro_macro_advance_numpy
    transport_advance = transport_advance_numpy
