"""Compiled inner loops for the 1D semi-implicit step."""

import numpy as np
from numba import njit


@njit(cache=True)
def _potentials(u, v, g11, g22, g12):
    n = u.shape[0]
    Vu = np.empty(n)
    Vv = np.empty(n)
    for j in range(n):
        au = u[j].real * u[j].real + u[j].imag * u[j].imag
        av = v[j].real * v[j].real + v[j].imag * v[j].imag
        Vu[j] = g11 * au + g12 * av
        Vv[j] = g12 * au + g22 * av
    return Vu, Vv


@njit(cache=True)
def _cn_solve(u, v, ru_ref, rv_ref, Vu, Vv, h, dt, kappa, gamma_imp, gamma_exp):
    """One trapezoidal solve  (I + a H) psi_new = (I - a H) psi + dt*gamma_exp*sz*psi_ref.

    H = -Lap_h + kappa*sx + diag(i*gamma_imp - Vu, -i*gamma_imp - Vv), a = i*dt/2.
    The 2x2 block-tridiagonal system over the interior nodes is solved by
    block Thomas elimination; the off-diagonal blocks are scalar multiples
    of the identity.
    """
    n = u.shape[0]
    m = n - 2
    a = 0.5j * dt
    ih2 = 1.0 / (h * h)
    lo = -a * ih2
    ak = a * kappa
    c11 = np.empty(m, np.complex128)
    c12 = np.empty(m, np.complex128)
    c21 = np.empty(m, np.complex128)
    c22 = np.empty(m, np.complex128)
    yu = np.empty(m, np.complex128)
    yv = np.empty(m, np.complex128)
    p11 = 0j
    p12 = 0j
    p21 = 0j
    p22 = 0j
    pu = 0j
    pv = 0j
    for k in range(m):
        j = k + 1
        du = 1j * gamma_imp - Vu[j]
        dv = -1j * gamma_imp - Vv[j]
        hu = -(u[j - 1] - 2.0 * u[j] + u[j + 1]) * ih2 + kappa * v[j] + du * u[j]
        hv = -(v[j - 1] - 2.0 * v[j] + v[j + 1]) * ih2 + kappa * u[j] + dv * v[j]
        bu = u[j] - a * hu + dt * gamma_exp * ru_ref[j]
        bv = v[j] - a * hv - dt * gamma_exp * rv_ref[j]
        a11 = 1.0 + a * (2.0 * ih2 + du) - lo * p11
        a12 = ak - lo * p12
        a21 = ak - lo * p21
        a22 = 1.0 + a * (2.0 * ih2 + dv) - lo * p22
        bu -= lo * pu
        bv -= lo * pv
        det = a11 * a22 - a12 * a21
        rdet = det.conjugate() / (det.real * det.real + det.imag * det.imag)
        i11 = a22 * rdet
        i12 = -a12 * rdet
        i21 = -a21 * rdet
        i22 = a11 * rdet
        p11 = i11 * lo
        p12 = i12 * lo
        p21 = i21 * lo
        p22 = i22 * lo
        pu = i11 * bu + i12 * bv
        pv = i21 * bu + i22 * bv
        c11[k] = p11
        c12[k] = p12
        c21[k] = p21
        c22[k] = p22
        yu[k] = pu
        yv[k] = pv
    for k in range(m - 2, -1, -1):
        xu = yu[k + 1]
        xv = yv[k + 1]
        yu[k] -= c11[k] * xu + c12[k] * xv
        yv[k] -= c21[k] * xu + c22[k] * xv
    un = np.zeros(n, np.complex128)
    vn = np.zeros(n, np.complex128)
    un[1:-1] = yu
    vn[1:-1] = yv
    return un, vn


@njit(cache=True)
def step_1d(u, v, h, dt, kappa, gamma, g11, g22, g12, implicit_gain):
    """Predictor-corrector linearly implicit Crank-Nicolson step (1D)."""
    g_imp = gamma if implicit_gain else 0.0
    g_exp = 0.0 if implicit_gain else gamma
    Vu, Vv = _potentials(u, v, g11, g22, g12)
    us, vs = _cn_solve(u, v, u, v, Vu, Vv, h, dt, kappa, g_imp, g_exp)
    Wu, Wv = _potentials(us, vs, g11, g22, g12)
    mu = 0.5 * (u + us)
    mv = 0.5 * (v + vs)
    return _cn_solve(u, v, mu, mv, 0.5 * (Vu + Wu), 0.5 * (Vv + Wv), h, dt,
                     kappa, g_imp, g_exp)


@njit(cache=True)
def _abs2(z):
    return z.real * z.real + z.imag * z.imag


@njit(cache=True)
def _max_amp(u, v):
    m = 0.0
    for j in range(u.shape[0]):
        a = max(_abs2(u[j]), _abs2(v[j]))
        if not (a == a):
            return np.nan
        if a > m:
            m = a
    return np.sqrt(m)


@njit(cache=True)
def _grad_sq(u, v, h):
    s = 0.0
    for j in range(u.shape[0] - 1):
        s += _abs2(u[j + 1] - u[j]) + _abs2(v[j + 1] - v[j])
    return s / h


@njit(cache=True)
def advance_1d(u, v, nsub, h, dt, kappa, gamma, g11, g22, g12, implicit_gain,
               amp_thr, grad_thr):
    """Take ``nsub`` steps, checking the blow-up thresholds after each.

    Returns (u, v, code, steps_taken, value) with code 0 = ok,
    1 = amplitude trigger, 2 = gradient trigger, 3 = non-finite values.
    """
    for j in range(nsub):
        u, v = step_1d(u, v, h, dt, kappa, gamma, g11, g22, g12, implicit_gain)
        amp = _max_amp(u, v)
        if not (amp == amp) or amp == np.inf:
            return u, v, 3, j + 1, amp
        if amp > amp_thr:
            return u, v, 1, j + 1, amp
        d = _grad_sq(u, v, h)
        if d > grad_thr:
            return u, v, 2, j + 1, d
    return u, v, 0, nsub, 0.0
