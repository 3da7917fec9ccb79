"""Spatially uniform solutions: the two-mode dimer, its gauge and the linear oracle.

The dimer drops the Laplacian from the field equations,

    i u' = kappa v + i gamma u - N_u,    i v' = kappa u - i gamma v - N_v,

where the cubic terms are ``N_u = |u|^2 u`` and ``N_v = |v|^2 v`` for the
non-Manakov dimer and ``N = (|u|^2 + |v|^2) (u, v)`` for the Manakov one.
Cubic coefficients are unity; only kappa and gamma are read from ``Params``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import InvalidInputError, InvalidParameterError, UnsupportedModelError
from .fields import Params

MANAKOV = "manakov"
NON_MANAKOV = "non-manakov"
MODELS = (MANAKOV, NON_MANAKOV)

COMPLETED = "completed"
DIVERGED = "divergence-detected"


@dataclass(frozen=True)
class DimerState:
    u: complex
    v: complex
    t: float = 0.0

    def __post_init__(self):
        u, v = complex(self.u), complex(self.v)
        if not (np.isfinite(u) and np.isfinite(v)):
            raise InvalidInputError("dimer components must be finite")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "t", float(self.t))

    @property
    def norm2(self) -> float:
        return abs(self.u) ** 2 + abs(self.v) ** 2


@dataclass
class DimerTrajectory:
    t: np.ndarray = field(repr=False)
    u: np.ndarray = field(repr=False)
    v: np.ndarray = field(repr=False)
    model: str
    params: Params
    dt: float
    status: str = COMPLETED
    divergence_time: float | None = None

    @property
    def norm2(self) -> np.ndarray:
        return np.abs(self.u) ** 2 + np.abs(self.v) ** 2

    def state(self, i: int) -> DimerState:
        return DimerState(self.u[i], self.v[i], self.t[i])

    def stokes(self):
        """Per-sample (Q, S1, S2, S3) of the scalar modes."""
        cross = np.conj(self.u) * self.v
        return self.norm2, 2 * cross.real, -2 * cross.imag, np.abs(self.u) ** 2 - np.abs(self.v) ** 2


@dataclass
class GaugedTrajectory:
    t: np.ndarray = field(repr=False)
    u: np.ndarray = field(repr=False)
    v: np.ndarray = field(repr=False)
    phi: np.ndarray = field(repr=False)
    params: Params


def _check_model(model: str) -> str:
    if model not in MODELS:
        raise InvalidParameterError(f"model must be one of {MODELS}, got {model!r}")
    return model


def _rhs(u, v, kappa, gamma, manakov):
    au, av = u.real * u.real + u.imag * u.imag, v.real * v.real + v.imag * v.imag
    if manakov:
        nu = nv = au + av
    else:
        nu, nv = au, av
    # u' = -i (kappa v + i gamma u - nu u)
    du = -1j * (kappa * v - nu * u) + gamma * u
    dv = -1j * (kappa * u - nv * v) - gamma * v
    return du, dv


def integrate_dimer(ic: DimerState, params: Params, model: str = MANAKOV,
                    dt: float = 1e-3, T: float = 10.0) -> DimerTrajectory:
    """Classical RK4 with a fixed step, storing every step.

    The last step is shortened so the run ends exactly at ``ic.t + T``.
    A non-finite value stops the run with status ``divergence-detected``.
    """
    _check_model(model)
    if not (dt > 0 and math.isfinite(dt)):
        raise InvalidParameterError("dt must be positive")
    if not T >= 0:
        raise InvalidParameterError("T must be non-negative")
    n = int(math.ceil(T / dt - 1e-9))
    ts = ic.t + np.minimum(dt * np.arange(n + 1), T)
    us = np.empty(n + 1, dtype=complex)
    vs = np.empty(n + 1, dtype=complex)
    u, v = ic.u, ic.v
    us[0], vs[0] = u, v
    k, g, man = params.kappa, params.gamma, model == MANAKOV
    f = _rhs
    status, t_div = COMPLETED, None
    # overflow is expected on escaping trajectories and is handled below
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(n):
            h = ts[i + 1] - ts[i]
            k1u, k1v = f(u, v, k, g, man)
            k2u, k2v = f(u + 0.5 * h * k1u, v + 0.5 * h * k1v, k, g, man)
            k3u, k3v = f(u + 0.5 * h * k2u, v + 0.5 * h * k2v, k, g, man)
            k4u, k4v = f(u + h * k3u, v + h * k3v, k, g, man)
            u = u + h / 6 * (k1u + 2 * k2u + 2 * k3u + k4u)
            v = v + h / 6 * (k1v + 2 * k2v + 2 * k3v + k4v)
            if not (math.isfinite(abs(u)) and math.isfinite(abs(v))):
                status, t_div = DIVERGED, float(ts[i + 1])
                n = i
                break
            us[i + 1], vs[i + 1] = u, v
    m = n + 1
    return DimerTrajectory(ts[:m].copy(), us[:m].copy(), vs[:m].copy(), model, params,
                           float(dt), status, t_div)


def step_halving_error(ic: DimerState, params: Params, model: str = MANAKOV,
                       dt: float = 1e-3, T: float = 10.0) -> float:
    """Max over the common samples of |(u,v)_dt - (u,v)_{dt/2}|."""
    a = integrate_dimer(ic, params, model, dt, T)
    b = integrate_dimer(ic, params, model, dt / 2, T)
    m = min(a.t.size, (b.t.size + 1) // 2)
    du = np.abs(a.u[:m] - b.u[: 2 * m - 1 : 2])
    dv = np.abs(a.v[:m] - b.v[: 2 * m - 1 : 2])
    return float(np.max(np.hypot(du, dv)))


def _cumtrapz(y, t):
    out = np.zeros_like(y, dtype=float)
    if y.size > 1:
        out[1:] = np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(t))
    return out


def gauge_reduce(traj: DimerTrajectory) -> GaugedTrajectory:
    """Remove the intensity-dependent phase of a Manakov dimer run.

    ``phi`` is the trapezoid integral of ``|u|^2 + |v|^2`` over the stored
    samples, and the gauged modes solve the linear coupler.
    """
    if traj.model != MANAKOV:
        raise UnsupportedModelError("the gauge transform linearises only the Manakov dimer")
    phi = _cumtrapz(traj.norm2, traj.t)
    rot = np.exp(-1j * phi)
    return GaugedTrajectory(traj.t.copy(), traj.u * rot, traj.v * rot, phi, traj.params)


def inverse_gauge(gauged: GaugedTrajectory) -> tuple[np.ndarray, np.ndarray]:
    rot = np.exp(1j * gauged.phi)
    return gauged.u * rot, gauged.v * rot


def linear_propagator(params: Params, t: float) -> np.ndarray:
    """exp(-i K t) for K = [[i gamma, kappa], [kappa, -i gamma]].

    K squared is (kappa^2 - gamma^2) I, which gives closed forms in the three
    regimes; at gamma == kappa the series terminates after the linear term.
    """
    k, g = params.kappa, params.gamma
    K = np.array([[1j * g, k], [k, -1j * g]])
    eye = np.eye(2, dtype=complex)
    w2 = params.omega2
    if w2 > 0:
        w = math.sqrt(w2)
        return math.cos(w * t) * eye - 1j * (math.sin(w * t) / w) * K
    if w2 < 0:
        mu = math.sqrt(-w2)
        return math.cosh(mu * t) * eye - 1j * (math.sinh(mu * t) / mu) * K
    return eye - 1j * t * K


def linear_dimer_exact(ic: DimerState, params: Params, t: float) -> DimerState:
    P = linear_propagator(params, t - ic.t)
    u, v = P @ np.array([ic.u, ic.v])
    return DimerState(u, v, t)


def write_dimer(traj: DimerTrajectory, path) -> Path:
    path = Path(path)
    cols = np.column_stack([traj.t, traj.u.real, traj.u.imag, traj.v.real, traj.v.imag])
    np.savetxt(path, cols, delimiter=",", fmt="%.17g", header="t,Re_u,Im_u,Re_v,Im_v",
               comments="")
    return path


def read_dimer(path, params: Params, model: str = MANAKOV) -> DimerTrajectory:
    path = Path(path)
    with path.open() as fh:
        header = fh.readline().strip()
    if header != "t,Re_u,Im_u,Re_v,Im_v":
        raise InvalidInputError(f"unexpected dimer header {header!r}")
    d = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    t = d[:, 0]
    if t.size > 1 and not np.all(np.diff(t) > 0):
        raise InvalidInputError("dimer sample times must be strictly increasing")
    dt = float(t[1] - t[0]) if t.size > 1 else math.nan
    return DimerTrajectory(t, d[:, 1] + 1j * d[:, 2], d[:, 3] + 1j * d[:, 4],
                           _check_model(model), params, dt)
