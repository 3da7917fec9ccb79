"""Experiment runner: config files, single runs, the six-panel mass/gradient study.

Config files are plain ``key = value`` lines; ``#`` starts a comment. The
accepted keys and their defaults are the fields of ``RunConfig``.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import diagnostics as dg
from . import dimer as dm
from . import evolution as ev
from . import townes
from .exceptions import (ConfigError, NoFiniteBoundError, OutOfScopeError, PTManakovError,
                         SolverFailure, UnsupportedModelError)
from .fields import Params, gaussian_profile, gaussian_state, read_snapshot, uniform_grid, write_snapshot

log = logging.getLogger("ptmanakov")

OUTDIR_ENV = "PTMANAKOV_OUTDIR"

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_BLOWUP = 0, 2, 3, 4

MODELS = ("pde-1d", "pde-2d", "dimer")
IC_KINDS = ("gaussian", "reduced", "snapshot")
GRID_DEFAULTS = {"pde-1d": (30.0, 2049), "pde-2d": (12.0, 513)}
NA = "n/a"


# -- configuration ----------------------------------------------------------

@dataclass(frozen=True)
class RunConfig:
    model: str = "pde-1d"
    kappa: float = 1.0
    gamma: float = 0.5
    g11: float = 1.0
    g22: float = 1.0
    g12: float = 1.0
    l: float | None = None
    n: int | None = None
    dt: float = 1e-3
    cadence: int = 10
    T: float = 20.0
    adaptive: bool = True
    gain_loss: str = "implicit"
    ic: str = "gaussian"
    A: float = 3.0
    a: float = 1.0
    B: float = 1.0
    b: float = 0.5
    phase_offset: float = 0.0
    snapshot: str | None = None
    u0: complex = 1.0
    v0: complex = 0.0
    dimer_model: str = "manakov"
    snapshot_times: tuple = ()
    amp_factor: float = 1e3
    grad_factor: float = 1e6
    outdir: str = "out"

    @property
    def params(self) -> Params:
        return Params(self.kappa, self.gamma, self.g11, self.g22, self.g12)

    @property
    def grid_size(self) -> tuple[float, int]:
        l0, n0 = GRID_DEFAULTS.get(self.model, (math.nan, 0))
        return (l0 if self.l is None else self.l, n0 if self.n is None else self.n)

    @property
    def scheme(self) -> ev.StepScheme:
        return ev.StepScheme(self.dt, self.adaptive, gain_loss=self.gain_loss)

    def resolved(self) -> "RunConfig":
        """Copy with grid defaults filled in, so the echo is self-contained."""
        if self.model == "dimer":
            return self
        l, n = self.grid_size
        return replace(self, l=l, n=n)

    def validate(self) -> "RunConfig":
        if self.model not in MODELS:
            raise ConfigError(f"model must be one of {', '.join(MODELS)}")
        if self.ic not in IC_KINDS:
            raise ConfigError(f"ic must be one of {', '.join(IC_KINDS)}")
        if self.dimer_model not in dm.MODELS:
            raise ConfigError(f"dimer_model must be one of {', '.join(dm.MODELS)}")
        if self.gain_loss not in ("implicit", "explicit"):
            raise ConfigError("gain_loss must be implicit or explicit")
        if self.kappa < 0 or self.gamma < 0:
            raise ConfigError("kappa and gamma must be non-negative")
        if not (self.dt > 0 and self.T >= 0 and self.cadence >= 1):
            raise ConfigError("need dt > 0, T >= 0 and cadence >= 1")
        if not (self.amp_factor > 0 and self.grad_factor > 0):
            raise ConfigError("blow-up factors must be positive")
        if any(not 0 <= s <= self.T for s in self.snapshot_times):
            raise ConfigError("snapshot_times must lie in [0, T]")
        if self.model != "dimer":
            l, n = self.grid_size
            if not (l > 0 and n >= 3):
                raise ConfigError("need l > 0 and n >= 3")
            if self.ic == "snapshot":
                if not self.snapshot:
                    raise ConfigError("ic = snapshot needs a snapshot path")
                if not Path(self.snapshot).is_file():
                    raise ConfigError(f"snapshot file not found: {self.snapshot}")
            elif not (self.a > 0 and (self.ic == "reduced" or self.b > 0)):
                raise ConfigError("Gaussian widths must be positive")
        return self

    def to_text(self) -> str:
        lines = ["# ptmanakov run configuration"]
        for f in fields(self):
            lines.append(f"{f.name} = {_format_value(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        kinds = {f.name: f.type for f in fields(cls)}
        values = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected 'key = value'")
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in kinds:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            if key in values:
                raise ConfigError(f"line {lineno}: duplicate key {key!r}")
            try:
                values[key] = _parse_value(key, val, kinds[key])
            except ValueError as exc:
                raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from None
        return cls(**values).validate()

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        return cls.from_text(text)

    def with_overrides(self, overrides: dict | None) -> "RunConfig":
        """Copy with some keys replaced; string values are parsed as in a file."""
        if not overrides:
            return self
        kinds = {f.name: f.type for f in fields(self)}
        changes = {}
        for k, v in overrides.items():
            if k not in kinds:
                raise ConfigError(f"unknown key {k!r}")
            try:
                changes[k] = _parse_value(k, v, kinds[k]) if isinstance(v, str) else v
            except ValueError as exc:
                raise ConfigError(f"bad value for {k}: {exc}") from None
        return replace(self, **changes).validate()


def _format_value(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, complex):
        return repr(v).strip("()")
    if isinstance(v, (tuple, list)):
        return ", ".join(repr(float(x)) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse_value(key, val: str, kind: str):
    if val.lower() == "none" and "None" in kind:
        return None
    if key == "snapshot_times":
        return tuple(float(x) for x in val.split(",") if x.strip())
    if kind.startswith("bool"):
        low = val.lower()
        if low not in ("true", "false", "1", "0", "yes", "no"):
            raise ValueError(f"not a boolean: {val!r}")
        return low in ("true", "1", "yes")
    if kind.startswith("int"):
        x = float(val)
        if x != int(x):
            raise ValueError(f"not an integer: {val!r}")
        return int(x)
    if kind.startswith("float"):
        x = float(val)
        if not math.isfinite(x):
            raise ValueError("must be finite")
        return x
    if kind.startswith("complex"):
        return complex(val.replace(" ", ""))
    return val


# -- period estimation ------------------------------------------------------

def _peaks(y: np.ndarray, sign: float) -> np.ndarray:
    z = sign * y
    mean = z.mean()
    idx = np.flatnonzero((z[1:-1] > z[:-2]) & (z[1:-1] >= z[2:]) & (z[1:-1] > mean)) + 1
    return idx


def estimate_period(t, Q) -> float | None:
    """Mean spacing of successive maxima of the linearly detrended series.

    Each maximum is refined by a parabola through the three samples around
    it. Returns None when fewer than three extrema (maxima plus minima) or
    fewer than two maxima are found.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(Q, dtype=float)
    if t.size < 5 or t.size != y.size or not np.all(np.isfinite(y)):
        return None
    y = y - np.polyval(np.polyfit(t - t[0], y, 1), t - t[0])
    scale = max(np.abs(np.asarray(Q, dtype=float)).max(), 1e-300)
    if np.ptp(y) <= 1e-9 * scale:
        return None
    imax, imin = _peaks(y, 1.0), _peaks(y, -1.0)
    if imax.size + imin.size < 3 or imax.size < 2:
        return None
    ym, y0, yp = y[imax - 1], y[imax], y[imax + 1]
    denom = ym - 2 * y0 + yp
    with np.errstate(divide="ignore", invalid="ignore"):
        shift = np.where(denom != 0, 0.5 * (ym - yp) / denom, 0.0)
    # samples may be non-uniform at the last step; interpolate t on index
    tp = np.interp(imax + shift, np.arange(t.size), t)
    return float((tp[-1] - tp[0]) / (tp.size - 1))


# -- single runs ------------------------------------------------------------

@dataclass
class RunSummary:
    config: str
    model: str
    status: str
    exit_code: int
    message: str = ""
    q_max_predicted: float | str = NA
    q_max_observed: float | str = NA
    period: float | str = NA
    envelope_mass: str = NA
    envelope_energy: str = NA
    envelope_gradient: str = NA
    classifier: str = NA
    blow_up_trigger: str = NA
    blow_up_time: float | str = NA
    blow_up_value: float | str = NA
    amp_threshold: float | str = NA
    grad_threshold: float | str = NA
    dt_final: float | str = NA
    n_samples: int = 0
    wall_time: float = 0.0
    outputs: list = field(default_factory=list)

    def to_text(self) -> str:
        lines = []
        for k, v in asdict(self).items():
            if k == "config":
                continue
            if isinstance(v, list):
                v = ", ".join(v) if v else NA
            elif isinstance(v, float):
                v = repr(float(v))
            lines.append(f"{k} = {v if v != '' else NA}")
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def _resolve_outdir(config: RunConfig, outdir=None) -> Path:
    if outdir is None:
        outdir = os.environ.get(OUTDIR_ENV) or config.outdir
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def initial_state(config: RunConfig):
    """Build the PDE initial State described by a config."""
    l, n = config.grid_size
    grid = uniform_grid(1 if config.model == "pde-1d" else 2, l, n)
    if config.ic == "gaussian":
        return gaussian_state(grid, config.A, config.a, config.B, config.b)
    if config.ic == "reduced":
        u0 = gaussian_profile(grid, config.A, config.a)
        return ev.reduced_initial_data(u0, config.params, grid, config.phase_offset)
    state = read_snapshot(config.snapshot)
    if state.grid.dims != grid.dims:
        raise ConfigError("snapshot dimension does not match the model")
    return state


def _pass(ok) -> str:
    return "pass" if ok else "fail"


def _q_max_predicted(params, s0):
    try:
        return dg.q_max(params, s0.Q, s0.S2, s0.S3)
    except (UnsupportedModelError, NoFiniteBoundError):
        return NA


def _run_pde(config: RunConfig, out: Path, summary: RunSummary):
    params = config.params
    state = initial_state(config)
    thr = ev.BlowUpThresholds.from_state(state, config.amp_factor, config.grad_factor)
    traj = ev.evolve(state, params, config.scheme, config.T, config.cadence,
                     config.snapshot_times, thr)
    summary.outputs.append(str(dg.write_timeseries(traj.samples, out / "timeseries.csv")))
    for i, s in enumerate(traj.snapshots):
        summary.outputs.append(str(write_snapshot(s, out / f"snapshot_{i:03d}.csv")))
    s0 = traj.samples[0]
    summary.q_max_predicted = _q_max_predicted(params, s0)
    Q = traj.series("Q")
    summary.q_max_observed = float(Q.max())
    period = estimate_period(traj.times, Q)
    summary.period = NA if period is None else period
    rep = traj.envelopes
    if rep is not None and rep.mass_within_gronwall.size:
        summary.envelope_mass = _pass(rep.mass_within_gronwall.all())
        summary.envelope_energy = _pass(rep.energy_within_envelope.all())
        summary.envelope_gradient = _pass(rep.gradient_within_bound.all())
    if state.grid.dims == 2:
        try:
            summary.classifier = ev.global_existence_classifier(
                params, s0, townes.default_constants()[0])
        except (UnsupportedModelError, OutOfScopeError) as exc:
            summary.classifier = f"{NA} ({exc})"
    summary.amp_threshold = thr.amp_threshold
    summary.grad_threshold = thr.grad_threshold
    summary.dt_final = traj.dt_final
    summary.n_samples = len(traj.samples)
    summary.status = traj.status
    summary.message = traj.message
    if traj.status == ev.BLOW_UP:
        v = traj.verdict
        summary.blow_up_trigger, summary.blow_up_time, summary.blow_up_value = (
            v.trigger, v.time, v.value)
        summary.exit_code = EXIT_BLOWUP
    elif traj.status == ev.SOLVER_FAILURE:
        summary.exit_code = EXIT_SOLVER
    return traj


def _run_dimer(config: RunConfig, out: Path, summary: RunSummary):
    params = config.params
    ic = dm.DimerState(config.u0, config.v0)
    traj = dm.integrate_dimer(ic, params, config.dimer_model, config.dt, config.T)
    summary.outputs.append(str(dm.write_dimer(traj, out / "dimer.csv")))
    Q, S1, S2, S3 = traj.stokes()
    if config.dimer_model == dm.MANAKOV:
        try:
            summary.q_max_predicted = dg.q_max(params, Q[0], S2[0], S3[0])
        except NoFiniteBoundError:
            pass
    summary.q_max_observed = float(Q.max())
    period = estimate_period(traj.t, Q)
    summary.period = NA if period is None else period
    summary.dt_final = config.dt
    summary.n_samples = traj.t.size
    summary.status = traj.status
    if traj.status == dm.DIVERGED:
        summary.blow_up_trigger = "non-finite"
        summary.blow_up_time = traj.divergence_time
        summary.exit_code = EXIT_BLOWUP
    return traj


def run(config: RunConfig, outdir=None) -> RunSummary:
    """Execute one configuration and write its outputs.

    Outputs: ``timeseries.csv`` (or ``dimer.csv``), optional snapshots,
    ``summary.txt``/``summary.json`` and ``config.txt``, an echo that can be
    fed back to reproduce the run.
    """
    config = config.validate().resolved()
    out = _resolve_outdir(config, outdir)
    echo = config.to_text()
    (out / "config.txt").write_text(echo)
    summary = RunSummary(config=echo, model=config.model, status=ev.COMPLETED, exit_code=EXIT_OK)
    summary.outputs.append(str(out / "config.txt"))
    t0 = time.perf_counter()
    try:
        if config.model == "dimer":
            _run_dimer(config, out, summary)
        else:
            _run_pde(config, out, summary)
    except SolverFailure as exc:
        summary.status, summary.message, summary.exit_code = ev.SOLVER_FAILURE, str(exc), EXIT_SOLVER
    summary.wall_time = time.perf_counter() - t0
    summary.outputs += [str(out / "summary.txt"), str(out / "summary.json")]
    (out / "summary.txt").write_text(summary.to_text())
    (out / "summary.json").write_text(summary.to_json())
    return summary


# -- the six-panel study ----------------------------------------------------

FIGURE1_ICS = ((3.0, 1.0, 1.0, 0.5), (3.0, 5.0, 1.0, 2.0), (3.0, 0.2, 1.0, 0.2))
FIGURE1_COUPLINGS = {"manakov": 1.0, "non-manakov": 0.5}
GROWTH_FACTOR = 5.0


@dataclass
class PanelResult:
    name: str
    row: int
    model: str
    ic: tuple
    status: str
    exit_code: int
    q_max: float | str = NA
    Q_max: float = math.nan
    D0: float = math.nan
    D_max: float = math.nan
    D_late_min: float = math.nan
    period: float | str = NA
    bounded: bool | str = NA
    growth: bool = False
    message: str = ""
    outdir: str = ""


@dataclass
class Figure1Bundle:
    outdir: Path
    panels: list

    def panel(self, row: int, model: str) -> PanelResult:
        for p in self.panels:
            if p.row == row and p.model == model:
                return p
        raise KeyError((row, model))


def _panel(args):
    row, model, ic, base, out = args
    name = f"row{row}_{model}"
    pdir = out / name
    A, a, B, b = ic
    cfg = base.with_overrides({"A": A, "a": a, "B": B, "b": b,
                               "g12": FIGURE1_COUPLINGS[model], "g11": 1.0, "g22": 1.0})
    res = PanelResult(name, row, model, ic, "not-run", EXIT_CONFIG, outdir=str(pdir))
    try:
        summary = run(cfg, pdir)
        samples = dg.read_timeseries(pdir / "timeseries.csv")
    except PTManakovError as exc:
        res.message = f"{type(exc).__name__}: {exc}"
        return res
    t = np.array([s.t for s in samples])
    Q = np.array([s.Q for s in samples])
    D = np.array([s.D for s in samples])
    np.savetxt(out / f"panel_{name}.csv", np.column_stack([t, Q, D]), delimiter=",",
               fmt="%.17g", header="t,Q,D", comments="")
    late = D[int(0.75 * D.size):] if D.size > 3 else D
    res.status, res.exit_code, res.message = summary.status, summary.exit_code, summary.message
    res.q_max, res.Q_max, res.D0 = summary.q_max_predicted, float(Q.max()), float(D[0])
    res.D_max, res.D_late_min = float(D.max()), float(late.min())
    res.period = summary.period
    # sustained growth: D stays above 5x its initial value over the last quarter
    res.growth = bool(res.D_late_min >= GROWTH_FACTOR * res.D0)
    if isinstance(res.q_max, float):
        res.bounded = bool(res.Q_max <= res.q_max * (1 + 1e-3)
                           and summary.envelope_gradient == "pass")
    return res


def reproduce_figure1(outdir=None, overrides: dict | None = None, jobs: int = 1) -> Figure1Bundle:
    """Run the three initial conditions under Manakov and non-Manakov coupling.

    Writes one run directory per panel, ``panel_<name>.csv`` with t,Q,D,
    ``ic_row<k>.csv`` initial profiles and ``figure1_summary.json``. A
    failing panel is recorded and does not abort the others.
    """
    out = Path(outdir or os.environ.get(OUTDIR_ENV) or "figure1")
    out.mkdir(parents=True, exist_ok=True)
    base = RunConfig(model="pde-1d", kappa=1.0, gamma=0.5).with_overrides(overrides)
    tasks = []
    for row, ic in enumerate(FIGURE1_ICS, 1):
        l, n = base.resolved().grid_size
        write_snapshot(gaussian_state(uniform_grid(1, l, n), *ic), out / f"ic_row{row}.csv")
        for model in FIGURE1_COUPLINGS:
            tasks.append((row, model, ic, base, out))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            panels = list(pool.map(_panel, tasks))
    else:
        panels = [_panel(t) for t in tasks]
    (out / "figure1_summary.json").write_text(
        json.dumps([asdict(p) for p in panels], indent=2, default=str))
    return Figure1Bundle(out, panels)


# -- command line -----------------------------------------------------------

def _parse_sets(items) -> dict:
    out = {}
    for item in items or ():
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _print_summary(summary: RunSummary):
    sys.stdout.write(summary.to_text())


def _cmd_run(args, force_model=None) -> int:
    cfg = RunConfig.from_file(args.config)
    if force_model and cfg.model != force_model:
        cfg = cfg.with_overrides({"model": force_model})
    summary = run(cfg, args.outdir)
    _print_summary(summary)
    return summary.exit_code


def _cmd_figure1(args) -> int:
    bundle = reproduce_figure1(args.outdir, _parse_sets(args.set), args.jobs)
    worst = EXIT_OK
    for p in bundle.panels:
        print(f"{p.name}: status={p.status} Q_max={p.Q_max:.6g} q_max={p.q_max} "
              f"D_max/D0={p.D_max / p.D0:.4g} period={p.period} bounded={p.bounded} "
              f"growth={p.growth} {p.message}".rstrip())
        if p.exit_code in (EXIT_CONFIG, EXIT_SOLVER):
            worst = max(worst, p.exit_code)
    return worst


def _cmd_townes(args) -> int:
    t0 = time.perf_counter()
    prof = townes.townes_profile(args.rmax, args.tol)
    mass, c = townes.townes_constants(prof)
    elapsed = time.perf_counter() - t0
    out = Path(args.outdir or os.environ.get(OUTDIR_ENV) or ".")
    out.mkdir(parents=True, exist_ok=True)
    path = townes.write_profile(prof, out / "townes_profile.csv")
    print(f"R0 = {float(prof.R0)!r}\nmass = {float(mass)!r}\nc_gn_2d = {float(c)!r}\n"
          f"residual = {prof.residual:.3e}\nwall_time = {elapsed:.3f}\nprofile = {path}")
    return EXIT_OK


def _cmd_classify(args) -> int:
    cfg = RunConfig.from_file(args.config)
    if cfg.model != "pde-2d":
        cfg = cfg.with_overrides({"model": "pde-2d"})
    s0 = dg.sample(initial_state(cfg.resolved()), cfg.params)
    mass = townes.default_constants()[0]
    verdict = ev.global_existence_classifier(cfg.params, s0, mass)
    qm = float(dg.q_max_of(s0, cfg.params))
    print(f"q_max = {qm!r}\ntownes_mass = {float(mass)!r}\nverdict = {verdict}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ptmanakov", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="cmd", required=True)
    r = sub.add_parser("run", help="run one configuration")
    r.add_argument("config")
    r.add_argument("--outdir")
    f = sub.add_parser("figure1", help="six-panel Manakov / non-Manakov study")
    f.add_argument("--outdir")
    f.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config key for every panel")
    f.add_argument("--jobs", type=int, default=1)
    t = sub.add_parser("townes", help="ground-state profile and constants")
    t.add_argument("--rmax", type=float, default=20.0)
    t.add_argument("--tol", type=float, default=1e-10)
    t.add_argument("--outdir")
    c = sub.add_parser("classify2d", help="classify 2D initial data against the Townes mass")
    c.add_argument("config")
    d = sub.add_parser("dimer", help="run the spatially uniform dimer")
    d.add_argument("config")
    d.add_argument("--outdir")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.cmd == "run":
            return _cmd_run(args)
        if args.cmd == "dimer":
            return _cmd_run(args, force_model="dimer")
        if args.cmd == "figure1":
            return _cmd_figure1(args)
        if args.cmd == "townes":
            return _cmd_townes(args)
        return _cmd_classify(args)
    except SolverFailure as exc:
        print(f"error: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except PTManakovError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: I/O: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
