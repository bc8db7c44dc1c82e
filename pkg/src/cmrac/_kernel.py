"""Compiled inner loop of the closed-loop simulation.

State layout (length ``3n + 2q``): ``[x, x_r, x_f, varphi_f, k_x, k_r, theta]``.
The loop hands control back to Python whenever a filtered sample passes the
norm gate while the memory is still filling, so Gram-Schmidt bookkeeping
stays in :mod:`cmrac.excitation`.

``prm`` is the tuple built by :func:`cmrac.sim._kernel_params`.
"""

import math

import numpy as np
from numba import njit

DONE = 0
SAMPLE = 1
DIVERGED = 2

CONSTANT, STEP, SINE = 0, 1, 2

# recorded metric columns
U, E_NORM, KX_ERR, KR_ERR, TH_ERR, CHI, V = range(7)
N_METRICS = 7


@njit(cache=True)
def command(t, level, kind, t_step, freq):
    if kind == CONSTANT:
        return level
    if kind == STEP:
        return level if t >= t_step else 0.0
    return level * math.sin(2.0 * math.pi * freq * t)


@njit(cache=True)
def phi_eval(x, exps, codes, out):
    for j in range(out.size):
        c = codes[j]
        if c < 0:
            v = 1.0
            for i in range(x.size):
                if exps[j, i] != 0.0:
                    v *= x[i] ** exps[j, i]
            out[j] = v
        elif c == 0:
            out[j] = math.sin(x[0])
        elif c == 1:
            out[j] = math.cos(x[0])
        elif c == 2:
            out[j] = abs(x[0]) * x[1]
        elif c == 3:
            out[j] = abs(x[1]) * x[1]
        else:
            out[j] = math.exp(-x[0] * x[0])


@njit(cache=True)
def control(t, z, n, p, prm, phi):
    A, bkp, theta, exps, codes, A_r, b_r, Pb, b, sk, f, level, kind, t_step, freq, combined = prm
    phi_eval(z[:n], exps, codes, phi)
    r = command(t, level, kind, t_step, freq)
    g0 = 3 * n + n + 1 + p
    u = z[g0 + n] * r
    for i in range(n):
        u += z[g0 + i] * z[i]
    for j in range(p):
        u -= z[g0 + n + 1 + j] * phi[j]
    return r, u


@njit(cache=True)
def rhs(t, z, dz, n, p, prm, eta, Y_m, phi):
    A, bkp, theta, exps, codes, A_r, b_r, Pb, b, sk, f, level, kind, t_step, freq, combined = prm
    q = n + 1 + p
    r, u = control(t, z, n, p, prm, phi)
    xr0, xf0, pf0, g0 = n, 2 * n, 3 * n, 3 * n + q
    delta = 0.0
    for j in range(p):
        delta += theta[j] * phi[j]
    w = 0.0
    for i in range(n):
        ax = 0.0
        ar = 0.0
        for j in range(n):
            ax += A[i, j] * z[j]
            ar += A_r[i, j] * z[xr0 + j]
        dz[i] = ax + bkp[i] * (u + delta)
        dz[xr0 + i] = ar + b_r[i] * r
        dz[xf0 + i] = f * (z[i] - z[xf0 + i])
        dz[pf0 + i] = f * (z[i] - z[pf0 + i])
        w += (z[i] - z[xr0 + i]) * Pb[i]
    dz[pf0 + n] = f * (u - z[pf0 + n])
    for j in range(p):
        dz[pf0 + n + 1 + j] = f * (phi[j] - z[pf0 + n + 1 + j])
    w *= sk
    for i in range(n):
        dz[g0 + i] = -z[i] * w
    dz[g0 + n] = -r * w
    for j in range(p):
        dz[g0 + n + 1 + j] = phi[j] * w
    if combined and eta != 0.0:
        # eta * E^T b k_p' with E1, E2, E3 assembled from Y_m column blocks
        k_r = z[g0 + n]
        m2 = 0.0
        for i in range(n):
            m2 += (b_r[i] - Y_m[i, n] * k_r) * b[i]
        dz[g0 + n] += eta * m2 * sk
        for j in range(n):
            m1 = 0.0
            for i in range(n):
                m1 += (A_r[i, j] - Y_m[i, j] - Y_m[i, n] * z[g0 + j]) * b[i]
            dz[g0 + j] += eta * m1 * sk
        for j in range(p):
            m3 = 0.0
            for i in range(n):
                m3 += (Y_m[i, n + 1 + j] - Y_m[i, n] * z[g0 + n + 1 + j]) * b[i]
            dz[g0 + n + 1 + j] += eta * m3 * sk


@njit(cache=True)
def metrics(t, z, n, p, prm, ideal, P, abs_kp, phi, out):
    q = n + 1 + p
    g0 = 3 * n + q
    r, u = control(t, z, n, p, prm, phi)
    e2 = 0.0
    ePe = 0.0
    for i in range(n):
        ei = z[i] - z[n + i]
        e2 += ei * ei
        for j in range(n):
            ePe += ei * P[i, j] * (z[j] - z[n + j])
    kx2 = 0.0
    for i in range(n):
        d = z[g0 + i] - ideal[i]
        kx2 += d * d
    kr = z[g0 + n] - ideal[n]
    th2 = 0.0
    for j in range(p):
        d = z[g0 + n + 1 + j] - ideal[n + 1 + j]
        th2 += d * d
    par2 = kx2 + kr * kr + th2
    out[U] = u
    out[E_NORM] = math.sqrt(e2)
    out[KX_ERR] = math.sqrt(kx2)
    out[KR_ERR] = kr
    out[TH_ERR] = math.sqrt(th2)
    out[CHI] = math.sqrt(e2 + par2)
    out[V] = ePe + abs_kp * par2


@njit(cache=True)
def advance(z, k, k_stop, dt, every, n, p, prm, eta, Y_m, ideal, P, abs_kp,
            filling, eps1, guard, record_now, rec_z, rec_m, rec_eta):
    """Integrate from step ``k`` towards ``k_stop``; returns ``(status, k)``.

    ``z`` is updated in place. Samples with ``k % every == 0`` are written to
    the ``rec_*`` buffers at row ``k // every``.
    """
    m = z.size
    q = n + 1 + p
    k1 = np.empty(m)
    k2 = np.empty(m)
    k3 = np.empty(m)
    k4 = np.empty(m)
    tmp = np.empty(m)
    phi = np.empty(p)
    if record_now and k % every == 0:
        j = k // every
        rec_z[j] = z
        metrics(k * dt, z, n, p, prm, ideal, P, abs_kp, phi, rec_m[j])
        rec_eta[j] = eta
    while k < k_stop:
        t = k * dt
        h = 0.5 * dt
        rhs(t, z, k1, n, p, prm, eta, Y_m, phi)
        for i in range(m):
            tmp[i] = z[i] + h * k1[i]
        rhs(t + h, tmp, k2, n, p, prm, eta, Y_m, phi)
        for i in range(m):
            tmp[i] = z[i] + h * k2[i]
        rhs(t + h, tmp, k3, n, p, prm, eta, Y_m, phi)
        for i in range(m):
            tmp[i] = z[i] + dt * k3[i]
        rhs(t + dt, tmp, k4, n, p, prm, eta, Y_m, phi)
        ok = True
        for i in range(m):
            tmp[i] = z[i] + (dt / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
            if not math.isfinite(tmp[i]):
                ok = False
        xn = 0.0
        for i in range(n):
            xn += tmp[i] * tmp[i]
        if not ok or math.sqrt(xn) > guard:
            return DIVERGED, k
        z[:] = tmp
        k += 1
        if filling:
            pn = 0.0
            for i in range(q):
                pn += z[3 * n + i] * z[3 * n + i]
            if math.sqrt(pn) > eps1:
                return SAMPLE, k
        if k % every == 0:
            j = k // every
            rec_z[j] = z
            metrics(k * dt, z, n, p, prm, ideal, P, abs_kp, phi, rec_m[j])
            rec_eta[j] = eta
    return DONE, k
