"""Numba kernels for the positive-P trajectory integrator.

Randomness is counter based: each draw is Philox4x32-10 applied to the
counter (step, call, trajectory, 0) under the key (seed_lo, seed_hi), so a
trajectory's path depends only on (seed, trajectory index) and is untouched
by scheduling, thread count or the total number of trajectories.  Uniforms
are mapped to normals with the Acklam rational approximation of the inverse
normal CDF (|relative error| < 1.2e-9, far below Monte Carlo resolution).

Kernels accumulate per-trajectory time averages into preallocated slots and
never share mutable state, which keeps results bitwise reproducible under
parallel execution.
"""

import numpy as np
from numba import njit, prange, uint32, uint64, float64

_PHILOX_M0 = uint32(0xD2511F53)
_PHILOX_M1 = uint32(0xCD9E8D57)
_PHILOX_W0 = uint32(0x9E3779B9)
_PHILOX_W1 = uint32(0xBB67AE85)
_INV53 = 1.0 / 9007199254740992.0  # 2**-53

# Acklam inverse normal CDF coefficients
_A0, _A1, _A2 = -3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02
_A3, _A4, _A5 = 1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00
_B0, _B1, _B2 = -5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02
_B3, _B4 = 6.680131188771972e+01, -1.328068155288572e+01
_C0, _C1, _C2 = -7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00
_C3, _C4, _C5 = -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00
_D0, _D1, _D2 = 7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00
_D3 = 3.754408661907416e+00
_P_LOW = 0.02425


@njit(inline="always", cache=True)
def _inv_norm_cdf(p):
    if p < _P_LOW:
        q = np.sqrt(-2.0 * np.log(p))
        return (((((_C0 * q + _C1) * q + _C2) * q + _C3) * q + _C4) * q + _C5) / \
               ((((_D0 * q + _D1) * q + _D2) * q + _D3) * q + 1.0)
    if p > 1.0 - _P_LOW:
        q = np.sqrt(-2.0 * np.log(1.0 - p))
        return -(((((_C0 * q + _C1) * q + _C2) * q + _C3) * q + _C4) * q + _C5) / \
               ((((_D0 * q + _D1) * q + _D2) * q + _D3) * q + 1.0)
    q = p - 0.5
    r = q * q
    return (((((_A0 * r + _A1) * r + _A2) * r + _A3) * r + _A4) * r + _A5) * q / \
           (((((_B0 * r + _B1) * r + _B2) * r + _B3) * r + _B4) * r + 1.0)


@njit(inline="always", cache=True)
def _philox4x32(c0, c1, c2, c3, k0, k1):
    for _ in range(10):
        p0 = uint64(_PHILOX_M0) * uint64(c0)
        p1 = uint64(_PHILOX_M1) * uint64(c2)
        hi0 = uint32(p0 >> uint64(32))
        lo0 = uint32(p0 & uint64(0xFFFFFFFF))
        hi1 = uint32(p1 >> uint64(32))
        lo1 = uint32(p1 & uint64(0xFFFFFFFF))
        c0 = uint32(hi1 ^ c1 ^ k0)
        c1 = lo1
        c2 = uint32(hi0 ^ c3 ^ k1)
        c3 = lo0
        k0 = uint32(k0 + _PHILOX_W0)
        k1 = uint32(k1 + _PHILOX_W1)
    return c0, c1, c2, c3


@njit(inline="always", cache=True)
def _normal_pair_ch(step, call, traj, channel, seed_lo, seed_hi):
    """Two standard normals at counter (step, call, traj, channel)."""
    c0, c1, c2, c3 = _philox4x32(uint32(step), uint32(call), uint32(traj),
                                 uint32(channel), uint32(seed_lo), uint32(seed_hi))
    u1 = (float64((uint64(c0) << uint64(32) | uint64(c1)) >> uint64(11)) + 0.5) * _INV53
    u2 = (float64((uint64(c2) << uint64(32) | uint64(c3)) >> uint64(11)) + 0.5) * _INV53
    return _inv_norm_cdf(u1), _inv_norm_cdf(u2)


@njit(inline="always", cache=True)
def _normal_pair(step, call, traj, seed_lo, seed_hi):
    """Two standard normals for (step, call) on trajectory traj (path channel 0)."""
    return _normal_pair_ch(step, call, traj, 0, seed_lo, seed_hi)


@njit(cache=True)
def normals_for_trajectory(traj, seed_lo, seed_hi, n_steps, n_calls):
    """All normals one trajectory will consume, in consumption order (for tests)."""
    out = np.empty((n_steps, n_calls, 2))
    for k in range(n_steps):
        for c in range(n_calls):
            z1, z2 = _normal_pair(k, c, traj, seed_lo, seed_hi)
            out[k, c, 0] = z1
            out[k, c, 1] = z2
    return out


@njit(parallel=True, cache=True)
def init_normals_kernel(n_traj, seed_lo, seed_hi, out):
    """Per-trajectory standard normals for initial-state sampling.

    Uses counter channel 1, disjoint from every path-noise counter, so the
    draw for trajectory j is independent of the ensemble size and of the
    path noise."""
    for j in prange(n_traj):
        z1, z2 = _normal_pair_ch(0, 0, j, 1, seed_lo, seed_hi)
        z3, z4 = _normal_pair_ch(0, 1, j, 1, seed_lo, seed_hi)
        out[j, 0] = z1
        out[j, 1] = z2
        out[j, 2] = z3
        out[j, 3] = z4


@njit(inline="always", cache=True)
def _reduced_factor(a, ap, G, M, Mc, Npn):
    """Symmetric square root of the reduced noise matrix.

    D = [[M a^2, Npn ap a], [Npn ap a, conj(M) ap^2]] has det = (G ap a)^2
    exactly, so B = (D + s I)/sqrt(tr D + 2 s) with s = +/- G ap a; the sign
    maximizing |tr D + 2 s| is used.  Returns the entries of the symmetric B.
    """
    nn = ap * a
    d11 = M * a * a
    d22 = Mc * ap * ap
    d12 = Npn * nn
    s = G * nn
    tr = d11 + d22
    tp = tr + 2.0 * s
    tm = tr - 2.0 * s
    if (tm.real * tm.real + tm.imag * tm.imag) > (tp.real * tp.real + tp.imag * tp.imag):
        s = -s
        tp = tm
    if tp.real == 0.0 and tp.imag == 0.0:
        return 0j, 0j, 0j, d11, d12, d22
    tinv = 1.0 / np.sqrt(tp)
    return (d11 + s) * tinv, d12 * tinv, (d22 + s) * tinv, d11, d12, d22


@njit(parallel=True, cache=True)
def reduced_moment_kernel(init_a, init_ap, n_steps, burn, dt, seed_lo, seed_hi,
                          omega_c, gamma1, drive, G, M, Npn, cutoff, enable_noise,
                          debug, out_m, out_kept, out_tdiv, out_resid):
    n_traj = init_a.shape[0]
    sqdt = np.sqrt(dt)
    K1 = -(gamma1 + 1j * omega_c)
    K2 = -(gamma1 - 1j * omega_c)
    Ec = np.conj(drive)
    Mc = np.conj(M)
    for j in prange(n_traj):
        a = init_a[j]
        ap = init_ap[j]
        s_a = 0j
        s_m1 = 0j
        s_m2 = 0j
        cnt = 0
        kept = True
        tdiv = np.nan
        resid = 0.0
        for k in range(n_steps):
            nn = ap * a
            if k >= burn:
                s_a += a
                s_m1 += nn
                s_m2 += nn * nn
                cnt += 1
            d1 = K1 * a + 1j * G * nn * a + drive
            d2 = K2 * ap - 1j * G * nn * ap + Ec
            if enable_noise:
                b11, b12, b22, d11, d12, d22 = _reduced_factor(a, ap, G, M, Mc, Npn)
                if debug:
                    r11 = b11 * b11 + b12 * b12 - d11
                    r12 = b12 * (b11 + b22) - d12
                    r22 = b12 * b12 + b22 * b22 - d22
                    scale = 1.0 + max(abs(d11), abs(d12), abs(d22))
                    rr = max(abs(r11), abs(r12), abs(r22)) / scale
                    if rr > resid:
                        resid = rr
                x1, x2 = _normal_pair(k, 0, j, seed_lo, seed_hi)
                a = a + d1 * dt + (b11 * x1 + b12 * x2) * sqdt
                ap = ap + d2 * dt + (b12 * x1 + b22 * x2) * sqdt
            else:
                a = a + d1 * dt
                ap = ap + d2 * dt
            if (abs(a.real) > cutoff or abs(a.imag) > cutoff
                    or abs(ap.real) > cutoff or abs(ap.imag) > cutoff):
                kept = False
                tdiv = (k + 1) * dt
                break
        if kept and cnt > 0:
            out_m[j, 0] = s_a / cnt
            out_m[j, 1] = s_m1 / cnt
            out_m[j, 2] = s_m2 / cnt
        else:
            out_m[j, 0] = 0j
            out_m[j, 1] = 0j
            out_m[j, 2] = 0j
        out_kept[j] = 1 if kept else 0
        out_tdiv[j] = tdiv
        out_resid[j] = resid


@njit(parallel=True, cache=True)
def full_moment_kernel(init_a1, init_a1p, init_a2, init_a2p, n_steps, burn, dt,
                       seed_lo, seed_hi, omega_c, omega_m, gamma1, gamma2, g, drive,
                       cutoff, enable_noise, debug, out_m, out_kept, out_tdiv, out_resid):
    n_traj = init_a1.shape[0]
    sqdt = np.sqrt(dt)
    K1 = -(gamma1 + 1j * omega_c)
    K2 = -(gamma1 - 1j * omega_c)
    K3 = -(gamma2 + 1j * omega_m)
    K4 = -(gamma2 - 1j * omega_m)
    Ec = np.conj(drive)
    for j in prange(n_traj):
        a1 = init_a1[j]
        a1p = init_a1p[j]
        a2 = init_a2[j]
        a2p = init_a2p[j]
        s_a = 0j
        s_m1 = 0j
        s_m2 = 0j
        cnt = 0
        kept = True
        tdiv = np.nan
        resid = 0.0
        for k in range(n_steps):
            nn = a1p * a1
            if k >= burn:
                s_a += a1
                s_m1 += nn
                s_m2 += nn * nn
                cnt += 1
            mir = a2 + a2p
            d1 = K1 * a1 + 1j * g * a1 * mir + drive
            d2 = K2 * a1p - 1j * g * a1p * mir + Ec
            d3 = K3 * a2 + 1j * g * nn
            d4 = K4 * a2p - 1j * g * nn
            if enable_noise:
                # cross-correlated pairs (a1,a2) and (a1p,a2p):
                # block factor sqrt(d/2) [[1, i], [1, -i]] reproduces [[0,d],[d,0]]
                c1 = np.sqrt(0.5j * g * a1)
                c2 = np.sqrt(-0.5j * g * a1p)
                if debug:
                    e1 = 2.0 * c1 * c1 - 1j * g * a1
                    e2 = 2.0 * c2 * c2 + 1j * g * a1p
                    scale = 1.0 + max(abs(g * a1), abs(g * a1p))
                    rr = max(abs(e1), abs(e2)) / scale
                    if rr > resid:
                        resid = rr
                x1, x2 = _normal_pair(k, 0, j, seed_lo, seed_hi)
                x3, x4 = _normal_pair(k, 1, j, seed_lo, seed_hi)
                w1 = c1 * sqdt
                w2 = c2 * sqdt
                a1 = a1 + d1 * dt + w1 * complex(x1, x2)
                a2n = a2 + d3 * dt + w1 * complex(x1, -x2)
                a1p = a1p + d2 * dt + w2 * complex(x3, x4)
                a2p = a2p + d4 * dt + w2 * complex(x3, -x4)
                a2 = a2n
            else:
                a1 = a1 + d1 * dt
                a1p = a1p + d2 * dt
                a2 = a2 + d3 * dt
                a2p = a2p + d4 * dt
            if (abs(a1.real) > cutoff or abs(a1.imag) > cutoff
                    or abs(a1p.real) > cutoff or abs(a1p.imag) > cutoff
                    or abs(a2.real) > cutoff or abs(a2.imag) > cutoff
                    or abs(a2p.real) > cutoff or abs(a2p.imag) > cutoff):
                kept = False
                tdiv = (k + 1) * dt
                break
        if kept and cnt > 0:
            out_m[j, 0] = s_a / cnt
            out_m[j, 1] = s_m1 / cnt
            out_m[j, 2] = s_m2 / cnt
        else:
            out_m[j, 0] = 0j
            out_m[j, 1] = 0j
            out_m[j, 2] = 0j
        out_kept[j] = 1 if kept else 0
        out_tdiv[j] = tdiv
        out_resid[j] = resid


@njit(parallel=True, cache=True)
def reduced_path_kernel(init_a, init_ap, n_steps, stride, dt, seed_lo, seed_hi,
                        omega_c, gamma1, drive, G, M, Npn, cutoff, enable_noise,
                        out_path, out_kept):
    """Same dynamics and noise stream as reduced_moment_kernel, recording states.

    out_path has shape (n_traj, n_rec, 2); the state at step k is stored
    when k % stride == 0 (the initial state lands in slot 0).  Diverged
    trajectories keep their recorded prefix, the rest is NaN.
    """
    n_traj = init_a.shape[0]
    sqdt = np.sqrt(dt)
    K1 = -(gamma1 + 1j * omega_c)
    K2 = -(gamma1 - 1j * omega_c)
    Ec = np.conj(drive)
    Mc = np.conj(M)
    for j in prange(n_traj):
        a = init_a[j]
        ap = init_ap[j]
        kept = True
        for r in range(out_path.shape[1]):
            out_path[j, r, 0] = complex(np.nan, np.nan)
            out_path[j, r, 1] = complex(np.nan, np.nan)
        for k in range(n_steps):
            if k % stride == 0:
                out_path[j, k // stride, 0] = a
                out_path[j, k // stride, 1] = ap
            nn = ap * a
            d1 = K1 * a + 1j * G * nn * a + drive
            d2 = K2 * ap - 1j * G * nn * ap + Ec
            if enable_noise:
                b11, b12, b22, d11, d12, d22 = _reduced_factor(a, ap, G, M, Mc, Npn)
                x1, x2 = _normal_pair(k, 0, j, seed_lo, seed_hi)
                a = a + d1 * dt + (b11 * x1 + b12 * x2) * sqdt
                ap = ap + d2 * dt + (b12 * x1 + b22 * x2) * sqdt
            else:
                a = a + d1 * dt
                ap = ap + d2 * dt
            if (abs(a.real) > cutoff or abs(a.imag) > cutoff
                    or abs(ap.real) > cutoff or abs(ap.imag) > cutoff):
                kept = False
                break
        if kept and n_steps % stride == 0:
            out_path[j, n_steps // stride, 0] = a
            out_path[j, n_steps // stride, 1] = ap
        out_kept[j] = 1 if kept else 0


@njit(parallel=True, cache=True)
def full_path_kernel(init_a1, init_a1p, init_a2, init_a2p, n_steps, stride, dt,
                     seed_lo, seed_hi, omega_c, omega_m, gamma1, gamma2, g, drive,
                     cutoff, enable_noise, out_path, out_kept):
    n_traj = init_a1.shape[0]
    sqdt = np.sqrt(dt)
    K1 = -(gamma1 + 1j * omega_c)
    K2 = -(gamma1 - 1j * omega_c)
    K3 = -(gamma2 + 1j * omega_m)
    K4 = -(gamma2 - 1j * omega_m)
    Ec = np.conj(drive)
    for j in prange(n_traj):
        a1 = init_a1[j]
        a1p = init_a1p[j]
        a2 = init_a2[j]
        a2p = init_a2p[j]
        kept = True
        for r in range(out_path.shape[1]):
            for v in range(4):
                out_path[j, r, v] = complex(np.nan, np.nan)
        for k in range(n_steps):
            if k % stride == 0:
                out_path[j, k // stride, 0] = a1
                out_path[j, k // stride, 1] = a1p
                out_path[j, k // stride, 2] = a2
                out_path[j, k // stride, 3] = a2p
            nn = a1p * a1
            mir = a2 + a2p
            d1 = K1 * a1 + 1j * g * a1 * mir + drive
            d2 = K2 * a1p - 1j * g * a1p * mir + Ec
            d3 = K3 * a2 + 1j * g * nn
            d4 = K4 * a2p - 1j * g * nn
            if enable_noise:
                c1 = np.sqrt(0.5j * g * a1)
                c2 = np.sqrt(-0.5j * g * a1p)
                x1, x2 = _normal_pair(k, 0, j, seed_lo, seed_hi)
                x3, x4 = _normal_pair(k, 1, j, seed_lo, seed_hi)
                w1 = c1 * sqdt
                w2 = c2 * sqdt
                a1 = a1 + d1 * dt + w1 * complex(x1, x2)
                a2n = a2 + d3 * dt + w1 * complex(x1, -x2)
                a1p = a1p + d2 * dt + w2 * complex(x3, x4)
                a2p = a2p + d4 * dt + w2 * complex(x3, -x4)
                a2 = a2n
            else:
                a1 = a1 + d1 * dt
                a1p = a1p + d2 * dt
                a2 = a2 + d3 * dt
                a2p = a2p + d4 * dt
            if (abs(a1.real) > cutoff or abs(a1.imag) > cutoff
                    or abs(a1p.real) > cutoff or abs(a1p.imag) > cutoff
                    or abs(a2.real) > cutoff or abs(a2.imag) > cutoff
                    or abs(a2p.real) > cutoff or abs(a2p.imag) > cutoff):
                kept = False
                break
        if kept and n_steps % stride == 0:
            out_path[j, n_steps // stride, 0] = a1
            out_path[j, n_steps // stride, 1] = a1p
            out_path[j, n_steps // stride, 2] = a2
            out_path[j, n_steps // stride, 3] = a2p
        out_kept[j] = 1 if kept else 0
