"""Radial ground state of Lap R - R + R^3 = 0 in the plane and its constants."""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.integrate import ode, simpson, solve_ivp
from scipy.special import k0, k1

from .exceptions import InvalidParameterError, SolverFailure

_R_START = 1e-4
# Tail hand-off: the bracketing shots must agree to this relative level.
_SPLIT_RTOL = 1e-6


@dataclass(frozen=True)
class RadialProfile:
    r: np.ndarray = field(repr=False)
    R: np.ndarray = field(repr=False)
    dR: np.ndarray = field(repr=False)
    R0: float
    mass: float
    r_cut: float
    residual: float
    r_max: float


def _rhs(r, y):
    R, P = y
    return [P, R - R**3 - P / r]


def _series_start(R0):
    # R(r) ~ R0 + c r^2 near the origin, with 4c = R0 - R0^3
    c = 0.25 * R0 * (1.0 - R0 * R0)
    return [R0 + c * _R_START**2, 2 * c * _R_START]


def _crosses_zero(r, y):
    return y[0]


_crosses_zero.terminal = True
_crosses_zero.direction = -1


def _turns_up(r, y):
    return y[1]


_turns_up.terminal = True
_turns_up.direction = 1


def _shoot(R0, r_max, rtol, dense=False):
    return solve_ivp(_rhs, (_R_START, r_max), _series_start(R0), method="DOP853",
                     rtol=rtol, atol=rtol * 1e-2, events=[_crosses_zero, _turns_up],
                     dense_output=dense)


def _overshoots(R0, r_max, rtol) -> bool:
    """True when the trial profile changes sign, i.e. R(0) is too large.

    Uses the Fortran DOP853 driver with a stop callback, which is much cheaper
    per step than ``solve_ivp`` for the many bisection shots.  A trial that
    neither crosses zero nor turns up before ``r_max`` counts as too small.
    """
    hit = [False]

    def solout(r, y):
        if y[0] < 0:
            hit[0] = True
            return -1
        return -1 if y[1] > 0 else 0

    o = ode(_rhs).set_integrator("dop853", rtol=rtol, atol=rtol * 1e-2, nsteps=1_000_000)
    o.set_solout(solout)
    o.set_initial_value(_series_start(R0), _R_START)
    o.integrate(r_max)
    return hit[0]


def _bisect(r_max, rtol, lo=1.5, hi=3.0, maxiter=200):
    if _overshoots(lo, r_max, rtol) or not _overshoots(hi, r_max, rtol):
        raise SolverFailure("shooting bracket does not enclose the ground state")
    for _ in range(maxiter):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if _overshoots(mid, r_max, rtol):
            hi = mid
        else:
            lo = mid
    return lo, hi


def _fd_derivative(f, r, eps):
    # sixth-order centred difference
    c = (1 / 60, -3 / 20, 3 / 4)
    return sum(ck * (f(r + k * eps) - f(r - k * eps))
               for k, ck in zip((3, 2, 1), c)) / eps


def townes_profile(r_max: float = 20.0, tol: float = 1e-10, dr: float = 0.01) -> RadialProfile:
    """Positive decaying radial solution by shooting on R(0) with bisection.

    The shot is integrated while the two bracketing trials agree to a
    relative level of 1e-6; beyond that radius the profile is continued by
    the decaying solution of the linearised equation, ``c*K0(r)``, whose
    neglected cubic term is below 1e-14.
    """
    if r_max < 10:
        raise InvalidParameterError("r_max must be at least 10")
    if not tol > 0:
        raise InvalidParameterError("tol must be positive")
    rtol = max(3e-14, min(1e-13, 3e-4 * tol))
    lo, hi = _bisect(r_max, rtol)
    s_lo = _shoot(lo, r_max, rtol, dense=True)
    s_hi = _shoot(hi, r_max, rtol, dense=True)
    r_end = min(s_lo.t[-1], s_hi.t[-1])

    npts = int(round(r_max / dr))
    npts += npts % 2
    r = np.linspace(0.0, r_max, npts + 1)
    inside = (r >= _R_START) & (r <= r_end)
    y_lo = s_lo.sol(r[inside])
    y_hi = s_hi.sol(r[inside])
    split = np.abs(y_lo[0] - y_hi[0]) > _SPLIT_RTOL * np.abs(y_lo[0])
    idx_inside = np.flatnonzero(inside)
    cut = idx_inside[np.argmax(split)] if split.any() else idx_inside[-1]
    r_cut = r[cut - 1]

    R = np.empty_like(r)
    dR = np.empty_like(r)
    R[0], dR[0] = lo, 0.0
    body = slice(1, cut)
    yb = s_lo.sol(r[body])
    R[body], dR[body] = yb
    # matched decaying tail
    amp = R[cut - 1] / k0(r_cut)
    R[cut:] = amp * k0(r[cut:])
    dR[cut:] = -amp * k1(r[cut:])

    # residual of the radial ODE on interior nodes
    eps = 0.005
    rb = r[body]
    ok = rb - 3 * eps >= _R_START
    ok &= rb + 3 * eps <= r_end
    rr = rb[ok]
    d2 = _fd_derivative(lambda x: s_lo.sol(x)[1], rr, eps)
    res_body = d2 + dR[body][ok] / rr - R[body][ok] + R[body][ok] ** 3
    res_tail = R[cut:] ** 3  # K0 solves the linear part exactly
    residual = float(max(np.abs(res_body).max(), np.abs(res_tail).max(initial=0.0)))

    m = 2 * math.pi * simpson(R**2 * r, x=r)
    return RadialProfile(r=r, R=R, dR=dR, R0=lo, mass=float(m), r_cut=float(r_cut),
                         residual=residual, r_max=float(r_max))


def profile_integrals(profile: RadialProfile) -> tuple[float, float, float]:
    """Return (||R||_2^2, ||grad R||_2^2, ||R||_4^4) by Simpson quadrature."""
    r, R, dR = profile.r, profile.R, profile.dR
    two_pi = 2 * math.pi
    return (two_pi * simpson(R**2 * r, x=r), two_pi * simpson(dR**2 * r, x=r),
            two_pi * simpson(R**4 * r, x=r))


def townes_constants(profile: RadialProfile) -> tuple[float, float]:
    """Return (mass, sharp 2D Gagliardo-Nirenberg constant 2 / mass)."""
    m = profile_integrals(profile)[0]
    return m, 2.0 / m


@functools.lru_cache(maxsize=None)
def _cached(r_max: float, tol: float):
    return townes_profile(r_max, tol)


def default_profile() -> RadialProfile:
    return _cached(20.0, 1e-10)


def default_constants() -> tuple[float, float]:
    return townes_constants(default_profile())


def write_profile(profile: RadialProfile, path) -> Path:
    path = Path(path)
    np.savetxt(path, np.column_stack([profile.r, profile.R]), delimiter=",",
               fmt="%.17g", header="r,R", comments="")
    return path
