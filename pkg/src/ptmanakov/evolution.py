"""Semi-implicit time stepping, trajectories, reduction checks and blow-up monitoring.

The linear part of the system (Laplacian, kappa cross-coupling and the
+/- i*gamma gain/loss) is advanced with the trapezoidal rule. The cubic
terms enter as a real potential multiplying the trapezoidal average of the
fields; the potential is taken explicitly from the pre-step fields for a
predictor solve and then re-evaluated once (average of pre-step and
predicted fields) for the corrector solve. Each step therefore costs two
linear solves with no nonlinear iteration, and is second order in dt.

Because the potential is real and, for Manakov coefficients, common to both
components, ``S1`` and ``C = kappa*Q - gamma*S2`` are quadratic invariants
of every solve and are conserved to round-off.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.fft
from scipy.sparse.linalg import LinearOperator, gmres

from . import diagnostics as dg
from ._kernels import advance_1d, step_1d
from .exceptions import (InvalidInputError, InvalidParameterError, OutOfScopeError,
                         ReductionUndefinedError, SolverFailure, UnsupportedModelError)
from .fields import Grid, Params, State

COMPLETED = "completed"
BLOW_UP = "blow-up-suspected"
SOLVER_FAILURE = "solver-failure"


@dataclass(frozen=True)
class StepScheme:
    """Time-step settings.

    ``adaptive`` enables step-doubling control: at every sample the relative
    mass discrepancy between one step and two half steps, per unit time, is
    compared to ``q_rate_tol`` and dt is halved while it is exceeded.
    ``solver_tol`` is the relative residual for the 2D iterative solve.
    ``gain_loss`` selects trapezoidal ("implicit") or predictor-based
    ("explicit") treatment of the +/- i*gamma terms.
    """

    dt: float = 1e-3
    adaptive: bool = True
    q_rate_tol: float = 1e-6
    max_halvings: int = 6
    solver_tol: float = 1e-10
    solver_maxiter: int = 200
    gain_loss: str = "implicit"

    def __post_init__(self):
        if not self.dt > 0:
            raise InvalidParameterError("dt must be positive")
        if self.gain_loss not in ("implicit", "explicit"):
            raise InvalidParameterError("gain_loss must be 'implicit' or 'explicit'")

    def halved(self) -> "StepScheme":
        return StepScheme(self.dt / 2, self.adaptive, self.q_rate_tol, self.max_halvings,
                          self.solver_tol, self.solver_maxiter, self.gain_loss)


# -- 2D solver --------------------------------------------------------------

def _lap_2d(f: np.ndarray, ih2: float) -> np.ndarray:
    """Five-point Laplacian of interior values with zero Dirichlet padding."""
    out = -4.0 * f
    out[1:, :] += f[:-1, :]
    out[:-1, :] += f[1:, :]
    out[:, 1:] += f[:, :-1]
    out[:, :-1] += f[:, 1:]
    return out * ih2


class _Stepper2D:
    """Trapezoidal solves on the interior of a square grid.

    GMRES on the variable-potential system, left-preconditioned by the exact
    inverse of the constant-coefficient part, which is diagonal in the
    discrete sine basis up to a 2x2 block per mode.
    """

    def __init__(self, grid: Grid, params: Params, scheme: StepScheme, dt: float):
        self.m = m = grid.n - 2
        self.ih2 = 1.0 / grid.h**2
        self.dt = dt
        self.kappa = params.kappa
        implicit = scheme.gain_loss == "implicit"
        self.g_imp = params.gamma if implicit else 0.0
        self.g_exp = 0.0 if implicit else params.gamma
        self.params = params
        self.tol = scheme.solver_tol
        self.maxiter = scheme.solver_maxiter
        self.a = 0.5j * dt
        p = np.arange(1, m + 1)
        lam = 4.0 * self.ih2 * np.sin(p * np.pi / (2 * (m + 1))) ** 2
        Lam = lam[:, None] + lam[None, :]
        a = self.a
        a11 = 1 + a * (Lam + 1j * self.g_imp)
        a22 = 1 + a * (Lam - 1j * self.g_imp)
        a12 = a * self.kappa
        det = a11 * a22 - a12 * a12
        self.i11, self.i12, self.i22 = a22 / det, -a12 / det, a11 / det

    def _apply_H(self, u, v, Vu, Vv):
        hu = -_lap_2d(u, self.ih2) + self.kappa * v + (1j * self.g_imp - Vu) * u
        hv = -_lap_2d(v, self.ih2) + self.kappa * u + (-1j * self.g_imp - Vv) * v
        return hu, hv

    def _precond(self, ru, rv):
        f = scipy.fft.dstn(np.stack([ru, rv]), type=1, axes=(1, 2), norm="ortho")
        fu, fv = f
        x = np.stack([self.i11 * fu + self.i12 * fv, self.i12 * fu + self.i22 * fv])
        x = scipy.fft.idstn(x, type=1, axes=(1, 2), norm="ortho", overwrite_x=True)
        return x[0], x[1]

    def _solve(self, u, v, ref_u, ref_v, Vu, Vv, guess):
        a, m = self.a, self.m
        hu, hv = self._apply_H(u, v, Vu, Vv)
        bu = u - a * hu + self.dt * self.g_exp * ref_u
        bv = v - a * hv - self.dt * self.g_exp * ref_v
        pbu, pbv = self._precond(bu, bv)
        rhs = np.concatenate([pbu.ravel(), pbv.ravel()])

        def matvec(x):
            xu = x[: m * m].reshape(m, m)
            xv = x[m * m:].reshape(m, m)
            cu, cv = self._precond(a * Vu * xu, a * Vv * xv)
            return x - np.concatenate([cu.ravel(), cv.ravel()])

        op = LinearOperator((2 * m * m, 2 * m * m), matvec=matvec, dtype=np.complex128)
        x, info = gmres(op, rhs, x0=guess, rtol=self.tol, atol=0.0, restart=40,
                        maxiter=self.maxiter)
        if info != 0:
            raise SolverFailure(f"GMRES did not converge (info={info})")
        resid = np.linalg.norm(matvec(x) - rhs) / max(np.linalg.norm(rhs), 1e-300)
        if not resid <= 10 * self.tol:
            raise SolverFailure(f"linear residual {resid:.3e} above tolerance")
        return x[: m * m].reshape(m, m), x[m * m:].reshape(m, m), x

    def _potentials(self, u, v):
        p = self.params
        au, av = np.abs(u) ** 2, np.abs(v) ** 2
        return p.g11 * au + p.g12 * av, p.g12 * au + p.g22 * av

    def __call__(self, U: np.ndarray, V: np.ndarray):
        u, v = U[1:-1, 1:-1], V[1:-1, 1:-1]
        Vu, Vv = self._potentials(u, v)
        guess = np.concatenate([u.ravel(), v.ravel()])
        us, vs, x = self._solve(u, v, u, v, Vu, Vv, guess)
        Wu, Wv = self._potentials(us, vs)
        un, vn, _ = self._solve(u, v, 0.5 * (u + us), 0.5 * (v + vs),
                                0.5 * (Vu + Wu), 0.5 * (Vv + Wv), x)
        Un = np.zeros_like(U)
        Vn = np.zeros_like(V)
        Un[1:-1, 1:-1] = un
        Vn[1:-1, 1:-1] = vn
        return Un, Vn

    def advance(self, u, v, nsub, amp_thr, grad_thr, h):
        for j in range(nsub):
            u, v = self(u, v)
            if not (np.isfinite(u).all() and np.isfinite(v).all()):
                return u, v, 3, j + 1, math.nan
            amp = float(max(np.abs(u).max(), np.abs(v).max()))
            if amp > amp_thr:
                return u, v, 1, j + 1, amp
            d = dg._edge_gradient_sq(u, h) + dg._edge_gradient_sq(v, h)
            if d > grad_thr:
                return u, v, 2, j + 1, d
        return u, v, 0, nsub, 0.0


class _Stepper1D:
    def __init__(self, grid: Grid, params: Params, scheme: StepScheme, dt: float):
        self.args = (grid.h, dt, params.kappa, params.gamma, params.g11, params.g22,
                     params.g12, scheme.gain_loss == "implicit")

    def __call__(self, u, v):
        return step_1d(u, v, *self.args)

    def advance(self, u, v, nsub, amp_thr, grad_thr, h):
        return advance_1d(u, v, nsub, *self.args, amp_thr, grad_thr)


def _make_stepper(grid: Grid, params: Params, scheme: StepScheme, dt: float):
    if grid.dims == 1:
        return _Stepper1D(grid, params, scheme, dt)
    if not params.manakov:
        raise UnsupportedModelError("2D evolution is restricted to g11 == g22 == g12")
    return _Stepper2D(grid, params, scheme, dt)


def _check_finite(u, v):
    if not (np.isfinite(u).all() and np.isfinite(v).all()):
        raise SolverFailure("non-finite field values")


def step(state: State, params: Params, scheme: StepScheme | None = None) -> State:
    """Advance ``state`` by one step of size ``scheme.dt``."""
    scheme = scheme or StepScheme()
    stepper = _make_stepper(state.grid, params, scheme, scheme.dt)
    u, v = stepper(np.array(state.u), np.array(state.v))
    _check_finite(u, v)
    return State(state.grid, u, v, state.t + scheme.dt)


# -- blow-up monitoring -----------------------------------------------------

@dataclass(frozen=True)
class BlowUpThresholds:
    amp_factor: float = 1e3
    grad_factor: float = 1e6
    amp_ref: float = math.inf
    grad_ref: float = math.inf

    def __post_init__(self):
        if not (self.amp_factor > 0 and self.grad_factor > 0):
            raise InvalidParameterError("blow-up factors must be positive")

    @classmethod
    def from_state(cls, state: State, amp_factor: float = 1e3, grad_factor: float = 1e6):
        return cls(amp_factor, grad_factor, state.max_amplitude(), dg.gradient_norm(state))

    @property
    def amp_threshold(self) -> float:
        return self.amp_factor * self.amp_ref

    @property
    def grad_threshold(self) -> float:
        return self.grad_factor * self.grad_ref


@dataclass(frozen=True)
class BlowUpVerdict:
    status: str = "ok"          # "ok" | "blow-up-suspected"
    trigger: str | None = None  # "max-amplitude" | "gradient-norm"
    time: float | None = None
    value: float | None = None
    threshold: float | None = None


def blow_up_monitor(state: State, thresholds: BlowUpThresholds) -> BlowUpVerdict:
    amp = state.max_amplitude()
    if amp > thresholds.amp_threshold:
        return BlowUpVerdict("blow-up-suspected", "max-amplitude", state.t, amp,
                             thresholds.amp_threshold)
    d = dg.gradient_norm(state)
    if d > thresholds.grad_threshold:
        return BlowUpVerdict("blow-up-suspected", "gradient-norm", state.t, d,
                             thresholds.grad_threshold)
    return BlowUpVerdict()


# -- trajectories -----------------------------------------------------------

@dataclass
class Trajectory:
    params: Params
    grid: Grid
    scheme: StepScheme
    cadence: int
    sample_interval: float
    samples: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    status: str = COMPLETED
    verdict: BlowUpVerdict = field(default_factory=BlowUpVerdict)
    message: str = ""
    dt_final: float = math.nan
    thresholds: BlowUpThresholds | None = None
    envelopes: dg.EnvelopeReport | None = None
    final_state: State | None = None

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.samples])

    def series(self, name: str) -> np.ndarray:
        return np.array([getattr(s, name) for s in self.samples])


def _doubling_rate_error(stepper_full, stepper_half, u, v, dt, params, grid):
    u1, v1 = stepper_full(u, v)
    u2, v2 = stepper_half(*stepper_half(u, v))
    w = grid.trapezoid_weights()
    q1 = float(np.sum(w * (np.abs(u1) ** 2 + np.abs(v1) ** 2)))
    q2 = float(np.sum(w * (np.abs(u2) ** 2 + np.abs(v2) ** 2)))
    qref = max(abs(q2), 1e-300)
    return abs(q1 - q2) / (qref * dt)


def evolve(state: State, params: Params, scheme: StepScheme | None = None, T: float = 1.0,
           cadence: int = 10, snapshot_times: Sequence[float] = (),
           thresholds: BlowUpThresholds | None = None) -> Trajectory:
    """Integrate from ``state`` over a duration ``T``.

    A diagnostics sample is stored every ``cadence`` steps of the initial dt
    (the sample interval stays fixed in time if dt is halved) and at the end.
    Snapshots are stored at the step nearest each requested elapsed time.
    The blow-up monitor is consulted after every step.
    """
    scheme = scheme or StepScheme()
    if T < 0:
        raise InvalidParameterError("T must be non-negative")
    if cadence < 1:
        raise InvalidParameterError("cadence must be >= 1")
    grid = state.grid
    if grid.dims == 2 and not params.manakov:
        raise UnsupportedModelError("2D evolution is restricted to g11 == g22 == g12")
    if thresholds is None:
        thresholds = BlowUpThresholds.from_state(state)
    elif math.isinf(thresholds.amp_ref):
        thresholds = BlowUpThresholds.from_state(state, thresholds.amp_factor,
                                                 thresholds.grad_factor)

    nsteps = max(1, math.ceil(T / scheme.dt - 1e-9)) if T > 0 else 0
    dt = T / nsteps if nsteps else scheme.dt
    traj = Trajectory(params, grid, scheme, cadence, cadence * dt, thresholds=thresholds)
    t0 = state.t
    snap_idx = {}
    for ts in snapshot_times:
        if ts < 0 or ts > T + 1e-12:
            raise InvalidParameterError(f"snapshot time {ts} outside [0, T]")
        snap_idx.setdefault(int(round(ts / dt)) if nsteps else 0, []).append(ts)

    u, v = np.array(state.u), np.array(state.v)
    level = 0
    steppers = {}

    def stepper(lv):
        if lv not in steppers:
            steppers[lv] = _make_stepper(grid, params, scheme, dt / 2**lv)
        return steppers[lv]

    samples = [dg.sample(state, params)]
    if 0 in snap_idx:
        traj.snapshots.append(state)
    last_state = state
    stops = sorted({k for k in snap_idx if 0 < k <= nsteps}
                   | set(range(cadence, nsteps + 1, cadence)) | {nsteps})
    i = 0
    try:
        for stop in stops:
            if stop <= i:
                continue
            if scheme.adaptive and i % cadence == 0:
                while level < scheme.max_halvings:
                    err = _doubling_rate_error(stepper(level), stepper(level + 1), u, v,
                                               dt / 2**level, params, grid)
                    if err <= scheme.q_rate_tol:
                        break
                    level += 1
            sub = 2**level
            u, v, code, k, value = stepper(level).advance(
                u, v, (stop - i) * sub, thresholds.amp_threshold, thresholds.grad_threshold,
                grid.h)
            if code == 3:
                raise SolverFailure("non-finite field values")
            if code:
                t_hit = t0 + (i + k / sub) * dt
                last_state = State(grid, u, v, t_hit)
                thr = thresholds.amp_threshold if code == 1 else thresholds.grad_threshold
                traj.verdict = BlowUpVerdict("blow-up-suspected",
                                             "max-amplitude" if code == 1 else "gradient-norm",
                                             t_hit, float(value), thr)
                traj.status = BLOW_UP
                raise StopIteration
            i = stop
            last_state = State(grid, u, v, t0 + i * dt)
            if i % cadence == 0 or i == nsteps:
                samples.append(dg.sample(last_state, params))
            if i in snap_idx:
                traj.snapshots.append(last_state)
    except StopIteration:
        if last_state.t > samples[-1].t:
            samples.append(dg.sample(last_state, params))
    except SolverFailure as exc:
        traj.status = SOLVER_FAILURE
        traj.message = str(exc)

    traj.dt_final = dt / 2**level
    traj.final_state = last_state
    report = dg.apriori_envelopes(samples, params, grid.dims)
    traj.envelopes = report
    traj.samples = dg.annotate(samples, params, grid.dims, report)
    return traj


# -- scalar reduction -------------------------------------------------------

def _require_reducible(params: Params):
    if not params.pt_nonlinearity:
        raise UnsupportedModelError("the reduction v = exp(i delta) u needs g11 == g22")
    if not params.unbroken:
        raise ReductionUndefinedError("the reduction needs gamma < kappa")


def reduced_initial_data(u0, params: Params, grid: Grid | None = None,
                         phase_offset: float = 0.0) -> State:
    """Initial data on the reduced manifold v = exp(i delta) u.

    ``u0`` is a State (its u component and grid are used) or an array on
    ``grid``. ``phase_offset`` detunes the phase, for negative controls.
    """
    _require_reducible(params)
    if isinstance(u0, State):
        grid, u0 = u0.grid, u0.u
    if grid is None:
        raise InvalidInputError("a grid is required when u0 is an array")
    u0 = np.asarray(u0, dtype=np.complex128)
    return State(grid, u0, np.exp(1j * (params.delta + phase_offset)) * u0, 0.0)


def _l2(grid: Grid, f: np.ndarray) -> float:
    return math.sqrt(float(np.sum(grid.trapezoid_weights() * np.abs(f) ** 2)))


def reduction_persistence(states: Sequence[State], params: Params) -> float:
    """max over states of ||v - exp(i delta) u|| / ||u||."""
    _require_reducible(params)
    if not states:
        raise InvalidInputError("no snapshots")
    ph = np.exp(1j * params.delta)
    worst = 0.0
    for s in states:
        nu = _l2(s.grid, s.u)
        if nu == 0:
            continue
        worst = max(worst, _l2(s.grid, s.v - ph * s.u) / nu)
    return worst


def _laplacian(f: np.ndarray, h: float) -> np.ndarray:
    out = np.zeros_like(f)
    if f.ndim == 1:
        out[1:-1] = (f[:-2] - 2 * f[1:-1] + f[2:]) / h**2
    else:
        out[1:-1, 1:-1] = _lap_2d(f[1:-1, 1:-1], 1 / h**2)
        # _lap_2d pads with zeros, which matches the Dirichlet boundary
    return out


def scalar_equation_residual(states: Sequence[State], params: Params) -> float:
    """Residual of u against the reduced scalar NLS between consecutive snapshots.

    The scalar equation is  i u_t = -Lap u + kappa cos(delta) u - (g11 + g12)|u|^2 u.
    For each pair the time derivative is a difference quotient and the right
    side is evaluated at the pair average, so the residual is second order
    in the snapshot spacing. Returned as max ||res|| / ||u||.
    """
    _require_reducible(params)
    if len(states) < 2:
        raise InvalidInputError("need at least two snapshots")
    lin = params.kappa * math.cos(params.delta)
    g = params.g11 + params.g12
    worst = 0.0
    for a, b in zip(states[:-1], states[1:]):
        tau = b.t - a.t
        if tau <= 0:
            raise InvalidInputError("snapshots must be increasing in t")
        mid = 0.5 * (a.u + b.u)
        nl = 0.5 * (np.abs(a.u) ** 2 + np.abs(b.u) ** 2) * mid
        res = 1j * (b.u - a.u) / tau - (-_laplacian(mid, a.grid.h) + lin * mid - g * nl)
        if a.grid.dims == 1:
            res[[0, -1]] = 0
        else:
            res[[0, -1], :] = 0
            res[:, [0, -1]] = 0
        nu = _l2(a.grid, mid)
        if nu > 0:
            worst = max(worst, _l2(a.grid, res) / nu)
    return worst


def scalar_reduction_residual(traj: Trajectory | Sequence[State], params: Params) -> float:
    """Reduction persistence plus the scalar-equation residual over snapshots."""
    states = traj.snapshots if isinstance(traj, Trajectory) else list(traj)
    if len(states) < 2:
        raise InvalidInputError("trajectory has fewer than two snapshots")
    return reduction_persistence(states, params) + scalar_equation_residual(states, params)


def scalar_energy(u: np.ndarray, grid: Grid, g: float = 2.0) -> float:
    """Energy ||grad u||^2 - (g/2)||u||_4^4 of the focusing scalar equation."""
    s = State(grid, u, np.zeros_like(u))
    return dg.gradient_norm(s) - 0.5 * g * dg.quartic_integrals(s)[0]


# -- 2D global existence classification ------------------------------------

GLOBAL = "global"
INDETERMINATE = "indeterminate"
BLOW_UP_POSSIBLE = "blow-up-possible"


def global_existence_classifier(params: Params, initial, townes_mass: float) -> str:
    """Classify 2D Manakov initial data by q_max against the Townes mass.

    ``initial`` is a DiagnosticsSample or a State.
    """
    if not params.manakov:
        raise UnsupportedModelError("classification applies to Manakov coefficients only")
    if not params.unbroken:
        raise OutOfScopeError("classification requires gamma < kappa")
    qm = dg.q_max_of(initial, params)
    if qm < 0.5 * townes_mass:
        return GLOBAL
    if qm >= townes_mass:
        return BLOW_UP_POSSIBLE
    return INDETERMINATE
