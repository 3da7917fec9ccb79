"""Integral quantities, balance laws, the mass oscillator and a priori envelopes.

All integrals use the composite trapezoid rule on the uniform grid. The
gradient term uses forward differences on the grid edges, which equals
``<u, -Lap_h u>`` for the three-point (five-point in 2D) Laplacian used by
the time-stepper. That keeps the discrete energy consistent with the
discrete dynamics, so balance laws close up to time-discretisation error.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from .exceptions import InvalidInputError, NoFiniteBoundError, UnsupportedModelError
from .fields import Params, State


# -- integrals --------------------------------------------------------------

def _integrate(state: State, density: np.ndarray) -> float:
    return float(np.sum(state.grid.trapezoid_weights() * density))


def component_masses(state: State) -> tuple[float, float]:
    return (_integrate(state, np.abs(state.u) ** 2),
            _integrate(state, np.abs(state.v) ** 2))


def mass(state: State) -> float:
    mu, mv = component_masses(state)
    return mu + mv


def _edge_gradient_sq(f: np.ndarray, h: float) -> float:
    total = 0.0
    for ax in range(f.ndim):
        total += float(np.sum(np.abs(np.diff(f, axis=ax)) ** 2))
    # sum of |df/h|^2 times cell volume h^d
    return total * h ** (f.ndim - 2)


def component_gradient_norms(state: State) -> tuple[float, float]:
    h = state.grid.h
    return _edge_gradient_sq(state.u, h), _edge_gradient_sq(state.v, h)


def gradient_norm(state: State) -> float:
    du, dv = component_gradient_norms(state)
    return du + dv


def quartic_integrals(state: State) -> tuple[float, float, float]:
    """Return (int |u|^4, int |v|^4, int |u|^2 |v|^2)."""
    au, av = np.abs(state.u) ** 2, np.abs(state.v) ** 2
    return (_integrate(state, au * au), _integrate(state, av * av), _integrate(state, au * av))


def stokes(state: State) -> tuple[float, float, float]:
    cross = np.conj(state.u) * state.v
    s1 = _integrate(state, 2.0 * cross.real)
    # i * (conj(u) v - u conj(v)) = -2 Im(conj(u) v)
    s2 = _integrate(state, -2.0 * cross.imag)
    mu, mv = component_masses(state)
    return s1, s2, mu - mv


def energy(state: State, params: Params) -> float:
    s1 = stokes(state)[0]
    uu, vv, uv = quartic_integrals(state)
    return (gradient_norm(state) + params.kappa * s1
            - 0.5 * params.g11 * uu - 0.5 * params.g22 * vv - params.g12 * uv)


def motion_constant(state: State, params: Params) -> float:
    return params.kappa * mass(state) - params.gamma * stokes(state)[1]


def balance_rates(state: State, params: Params) -> tuple[float, float]:
    """Instantaneous (dQ/dt, dE/dt) implied by the gain/loss terms."""
    g = params.gamma
    mu, mv = component_masses(state)
    du, dv = component_gradient_norms(state)
    uu, vv, _ = quartic_integrals(state)
    return 2.0 * g * (mu - mv), 2.0 * g * (du - dv - params.g11 * uu + params.g22 * vv)


# -- samples ----------------------------------------------------------------

@dataclass(frozen=True)
class DiagnosticsSample:
    t: float
    Q: float
    D: float
    E: float
    S1: float
    S2: float
    S3: float
    C: float
    Q_pred: float = math.nan
    env_Q: float = math.nan
    env_E: float = math.nan
    flags: str = ""

    def with_envelopes(self, **kw) -> "DiagnosticsSample":
        return DiagnosticsSample(**{**asdict(self), **kw})


def sample(state: State, params: Params) -> DiagnosticsSample:
    # single pass over the fields; equivalent to calling the functions above
    w = state.grid.trapezoid_weights()
    au, av = np.abs(state.u) ** 2, np.abs(state.v) ** 2
    cross = np.conj(state.u) * state.v
    mu, mv = float(np.sum(w * au)), float(np.sum(w * av))
    s1 = float(np.sum(w * cross.real)) * 2.0
    s2 = -2.0 * float(np.sum(w * cross.imag))
    d = gradient_norm(state)
    quart = float(np.sum(w * (0.5 * params.g11 * au * au + 0.5 * params.g22 * av * av
                              + params.g12 * au * av)))
    q = mu + mv
    return DiagnosticsSample(
        t=state.t, Q=q, D=d, E=d + params.kappa * s1 - quart,
        S1=s1, S2=s2, S3=mu - mv, C=params.kappa * q - params.gamma * s2,
    )


# -- closed-form mass oscillator -------------------------------------------

def _require_manakov(params: Params):
    if not params.manakov:
        raise UnsupportedModelError(
            "the closed mass oscillator needs g11 == g22 == g12")


def oscillator_constants(params: Params, Q0: float, S2_0: float, S3_0: float):
    """Return (C, P0) for Q'' + 4 omega^2 Q = 4 kappa C with Q'(0) = P0."""
    C = params.kappa * Q0 - params.gamma * S2_0
    P0 = 2.0 * params.gamma * S3_0
    return C, P0


def predicted_mass(params: Params, Q0: float, S2_0: float, S3_0: float, t,
                   derivative: int = 0):
    """Mass predicted by the linear oscillator, or its first/second derivative.

    Works for all signs of ``omega^2``: trigonometric, secular polynomial at
    ``gamma == kappa`` and hyperbolic in the broken phase. ``t`` may be an
    array.
    """
    _require_manakov(params)
    if derivative not in (0, 1, 2):
        raise ValueError("derivative must be 0, 1 or 2")
    t = np.asarray(t, dtype=float)
    k = params.kappa
    C, P0 = oscillator_constants(params, Q0, S2_0, S3_0)
    w2 = params.omega2
    if w2 == 0.0:
        out = [Q0 + P0 * t + 2 * k * C * t**2, P0 + 4 * k * C * t, 4 * k * C + 0 * t][derivative]
        return out if out.ndim else float(out)
    base = k * C / w2
    A1 = Q0 - base
    if w2 > 0:
        w = math.sqrt(w2)
        A2 = P0 / (2 * w)
        c, s = np.cos(2 * w * t), np.sin(2 * w * t)
        if derivative == 0:
            out = base + A1 * c + A2 * s
        elif derivative == 1:
            out = 2 * w * (-A1 * s + A2 * c)
        else:
            out = -4 * w2 * (A1 * c + A2 * s)
    else:
        mu = math.sqrt(-w2)
        A2 = P0 / (2 * mu)
        c, s = np.cosh(2 * mu * t), np.sinh(2 * mu * t)
        if derivative == 0:
            out = base + A1 * c + A2 * s
        elif derivative == 1:
            out = 2 * mu * (A1 * s + A2 * c)
        else:
            out = 4 * mu**2 * (A1 * c + A2 * s)
    return out if out.ndim else float(out)


def q_max(params: Params, Q0: float, S2_0: float, S3_0: float) -> float:
    """Sharp upper bound of the predicted mass in the unbroken phase."""
    _require_manakov(params)
    if not params.unbroken:
        raise NoFiniteBoundError("gamma >= kappa: the mass is not bounded")
    C, P0 = oscillator_constants(params, Q0, S2_0, S3_0)
    w2 = params.omega2
    base = params.kappa * C / w2
    return base + math.hypot(Q0 - base, P0 / (2 * math.sqrt(w2)))


def q_max_of(sample_or_state, params: Params) -> float:
    s = sample_or_state
    if isinstance(s, State):
        s = sample(s, params)
    return q_max(params, s.Q, s.S2, s.S3)


# -- a priori envelopes -----------------------------------------------------

C_GN_1D = 2.0


@dataclass
class EnvelopeReport:
    t: np.ndarray
    mass_within_gronwall: np.ndarray
    energy_within_envelope: np.ndarray
    gradient_within_bound: np.ndarray
    env_Q: np.ndarray
    env_E: np.ndarray
    grad_bound: np.ndarray
    # min over samples of (bound - value) / bound; negative means a violation
    worst_mass_margin: float
    worst_energy_margin: float
    worst_gradient_margin: float

    @property
    def all_passed(self) -> bool:
        return bool(self.mass_within_gronwall.all() and self.energy_within_envelope.all()
                    and self.gradient_within_bound.all())

    def flags(self, i: int) -> str:
        bad = [name for name, arr in (("mass", self.mass_within_gronwall),
                                      ("energy", self.energy_within_envelope),
                                      ("gradient", self.gradient_within_bound)) if not arr[i]]
        return ";".join(bad) if bad else "ok"


def _margin(bound, value) -> float:
    with np.errstate(invalid="ignore", divide="ignore"):
        m = (bound - value) / np.maximum(np.abs(bound), 1e-300)
    m = m[np.isfinite(m)]
    return float(m.min()) if m.size else math.nan


def apriori_envelopes(samples: Sequence[DiagnosticsSample], params: Params, dims: int = 1,
                      c_gn: float | None = None, rtol: float = 1e-7) -> EnvelopeReport:
    """Check the Gronwall mass bound and the energy/gradient bounds per sample.

    Elapsed time is measured from the first sample. ``rtol`` is a relative
    allowance for quadrature and time-stepping round-off.

    In 2D the energy chain uses the sharp constant ``2 / ||R||^2`` and the
    global mass bound ``q_max``; it is only informative for Manakov params
    with ``c_gn * q_max < 1``. Outside that regime the energy and gradient
    checks are vacuous (reported as passed, bounds NaN).
    """
    if not samples:
        raise InvalidInputError("no samples")
    t = np.array([s.t for s in samples])
    if np.any(np.diff(t) <= 0):
        raise InvalidInputError("samples must be strictly increasing in t")
    Q = np.array([s.Q for s in samples])
    D = np.array([s.D for s in samples])
    E = np.array([s.E for s in samples])
    tau = t - t[0]
    gam, kap = params.gamma, params.kappa
    slack = 1.0 + rtol

    env_Q = Q[0] * np.exp(2 * gam * tau)
    mass_ok = Q <= env_Q * slack

    if dims == 1:
        c = C_GN_1D if c_gn is None else c_gn
        g = params.g_max
        Z = kap * Q + (9.0 / 8.0) * g**2 * c**2 * Q**3
        intZ = np.concatenate([[0.0], np.cumsum(0.5 * (Z[1:] + Z[:-1]) * np.diff(tau))])
        env_E = (abs(E[0]) + 4 * gam * intZ) * np.exp(4 * gam * tau)
        grad_bound = (0.5 * g * c * Q**1.5
                      + np.sqrt(np.abs(E) + 0.25 * g**2 * c**2 * Q**3 + kap * Q)) ** 2
    else:
        env_E, grad_bound = _envelopes_2d(samples, params, c_gn, tau)
    with np.errstate(invalid="ignore"):
        energy_ok = np.where(np.isnan(env_E), True, np.abs(E) <= env_E * slack + 1e-12)
        grad_ok = np.where(np.isnan(grad_bound), True, D <= grad_bound * slack + 1e-12)

    return EnvelopeReport(
        t=t, mass_within_gronwall=mass_ok, energy_within_envelope=energy_ok,
        gradient_within_bound=grad_ok, env_Q=env_Q, env_E=env_E, grad_bound=grad_bound,
        worst_mass_margin=_margin(env_Q, Q), worst_energy_margin=_margin(env_E, np.abs(E)),
        worst_gradient_margin=_margin(grad_bound, D),
    )


def _envelopes_2d(samples, params, c_gn, tau):
    nan = np.full(tau.shape, math.nan)
    if not (params.manakov and params.unbroken):
        return nan, nan
    if c_gn is None:
        from .townes import default_constants
        c_gn = default_constants()[1]
    s0 = samples[0]
    qm = q_max(params, s0.Q, s0.S2, s0.S3)
    if c_gn * qm >= 1.0:
        return nan, nan
    kq = params.kappa * qm
    rate = 2 * params.gamma * (1 + c_gn * qm) / (1 - c_gn * qm)
    env_E = (abs(s0.E) + kq) * np.exp(rate * tau) - kq
    E = np.abs(np.array([s.E for s in samples]))
    grad_bound = (E + kq) / (1 - c_gn * qm)
    return env_E, grad_bound


def annotate(samples: Sequence[DiagnosticsSample], params: Params, dims: int = 1,
             report: EnvelopeReport | None = None) -> list[DiagnosticsSample]:
    """Fill Q_pred, env_Q, env_E and flags on every sample."""
    if report is None:
        report = apriori_envelopes(samples, params, dims)
    s0 = samples[0]
    if params.manakov:
        qp = predicted_mass(params, s0.Q, s0.S2, s0.S3, report.t - report.t[0])
        qp = np.atleast_1d(qp)
    else:
        qp = np.full(len(samples), math.nan)
    return [s.with_envelopes(Q_pred=float(qp[i]), env_Q=float(report.env_Q[i]),
                             env_E=float(report.env_E[i]), flags=report.flags(i))
            for i, s in enumerate(samples)]


# -- time-series files ------------------------------------------------------

TIMESERIES_COLUMNS = [f.name for f in fields(DiagnosticsSample)]


def write_timeseries(samples: Sequence[DiagnosticsSample], path) -> Path:
    path = Path(path)
    with path.open("w") as fh:
        fh.write(",".join(TIMESERIES_COLUMNS) + "\n")
        for s in samples:
            vals = [format(float(getattr(s, c)), ".17g") if c != "flags" else (s.flags or "ok")
                    for c in TIMESERIES_COLUMNS]
            fh.write(",".join(vals) + "\n")
    return path


def read_timeseries(path) -> list[DiagnosticsSample]:
    path = Path(path)
    out = []
    with path.open() as fh:
        header = fh.readline().strip().split(",")
        if header != TIMESERIES_COLUMNS:
            raise InvalidInputError(f"unexpected time-series header in {path}")
        for line in fh:
            parts = line.strip().split(",")
            kw = {c: float(p) for c, p in zip(header[:-1], parts[:-1])}
            out.append(DiagnosticsSample(**kw, flags=parts[-1]))
    return out
