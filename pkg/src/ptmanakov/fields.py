"""Grids, field pairs, coefficient sets and initial-condition constructors."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import InvalidGridError, InvalidInputError, InvalidParameterError


@dataclass(frozen=True)
class Grid:
    """Uniform node grid on [-l, l] (1D) or the square [-l, l]^2 (2D).

    Both boundary nodes are part of the grid; the unknowns of the
    time-stepper are the interior nodes ``1 .. n-2`` on each axis.
    """

    dims: int
    l: float
    n: int

    def __post_init__(self):
        if self.dims not in (1, 2):
            raise InvalidGridError(f"dims must be 1 or 2, got {self.dims}")
        if int(self.n) != self.n or self.n < 3:
            raise InvalidGridError(f"need at least 3 points per axis, got n={self.n}")
        if not (self.l > 0 and math.isfinite(self.l)):
            raise InvalidGridError(f"half extent must be positive, got l={self.l}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "l", float(self.l))

    @property
    def h(self) -> float:
        return 2.0 * self.l / (self.n - 1)

    @property
    def x(self) -> np.ndarray:
        """Per-axis node coordinates."""
        x = -self.l + self.h * np.arange(self.n)
        x[-1] = self.l
        return x

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dims

    @property
    def cell_volume(self) -> float:
        return self.h**self.dims

    def mesh(self) -> tuple[np.ndarray, ...]:
        if self.dims == 1:
            return (self.x,)
        return tuple(np.meshgrid(self.x, self.x, indexing="ij"))

    def radius_squared(self) -> np.ndarray:
        return sum(c**2 for c in self.mesh())

    def trapezoid_weights(self) -> np.ndarray:
        w1 = np.full(self.n, self.h)
        w1[[0, -1]] *= 0.5
        if self.dims == 1:
            return w1
        return np.outer(w1, w1)


def uniform_grid(dims: int, l: float, n: int) -> Grid:
    return Grid(dims, l, n)


def _frozen_complex(a, shape) -> np.ndarray:
    arr = np.array(a, dtype=np.complex128)
    if arr.shape != shape:
        raise InvalidInputError(f"field shape {arr.shape} does not match grid {shape}")
    if arr.ndim == 1:
        arr[[0, -1]] = 0
    else:
        arr[[0, -1], :] = 0
        arr[:, [0, -1]] = 0
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class State:
    """Two complex fields on a grid at time ``t``.

    Boundary nodes are zeroed on construction, so every State satisfies
    the Dirichlet condition. The arrays are read-only copies.
    """

    grid: Grid
    u: np.ndarray = field(repr=False)
    v: np.ndarray = field(repr=False)
    t: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "u", _frozen_complex(self.u, self.grid.shape))
        object.__setattr__(self, "v", _frozen_complex(self.v, self.grid.shape))
        object.__setattr__(self, "t", float(self.t))

    def replace(self, u=None, v=None, t=None) -> "State":
        return State(
            self.grid,
            self.u if u is None else u,
            self.v if v is None else v,
            self.t if t is None else t,
        )

    def scaled(self, factor: complex) -> "State":
        return State(self.grid, factor * self.u, factor * self.v, self.t)

    def max_amplitude(self) -> float:
        return float(max(np.abs(self.u).max(), np.abs(self.v).max()))


@dataclass(frozen=True)
class Params:
    """Coefficients of the coupled system.

    ``kappa`` is the linear coupling, ``gamma`` the gain (on u) and loss
    (on v) rate, ``g11``, ``g22``, ``g12`` the cubic coefficients.
    """

    kappa: float = 1.0
    gamma: float = 0.5
    g11: float = 1.0
    g22: float = 1.0
    g12: float = 1.0

    def __post_init__(self):
        for name in ("kappa", "gamma", "g11", "g22", "g12"):
            val = float(getattr(self, name))
            if not math.isfinite(val):
                raise InvalidParameterError(f"{name} must be finite")
            object.__setattr__(self, name, val)
        if self.kappa < 0 or self.gamma < 0:
            raise InvalidParameterError("kappa and gamma must be non-negative")

    @property
    def manakov(self) -> bool:
        return self.g11 == self.g22 == self.g12

    @property
    def pt_nonlinearity(self) -> bool:
        return self.g11 == self.g22

    @property
    def unbroken(self) -> bool:
        return self.gamma < self.kappa

    @property
    def omega2(self) -> float:
        # sign-carrying: negative in the broken phase
        return self.kappa**2 - self.gamma**2

    @property
    def omega(self) -> float:
        if self.omega2 <= 0:
            raise InvalidParameterError("omega is real and positive only for gamma < kappa")
        return math.sqrt(self.omega2)

    @property
    def delta(self) -> float:
        if not self.unbroken:
            raise InvalidParameterError("delta is defined only for gamma < kappa")
        return math.asin(-self.gamma / self.kappa)

    @property
    def g_max(self) -> float:
        return max(abs(self.g11), abs(self.g22), abs(self.g12))


def gaussian_profile(grid: Grid, amplitude: float, width: float) -> np.ndarray:
    """Gaussian beam whose squared L2 norm on the whole space is ``amplitude**2``."""
    if not width > 0:
        raise InvalidParameterError(f"Gaussian width must be positive, got {width}")
    d = grid.dims
    norm = amplitude / (math.pi ** (d / 4) * width ** (d / 2))
    return norm * np.exp(-grid.radius_squared() / (2.0 * width**2))


def gaussian_state(grid: Grid, A: float, a: float, B: float, b: float) -> State:
    """Gaussian initial data, truncated to the grid without renormalisation."""
    if not (a > 0 and b > 0):
        raise InvalidParameterError("Gaussian widths a and b must be positive")
    return State(grid, gaussian_profile(grid, A, a), gaussian_profile(grid, B, b), 0.0)


def pt_map(state: State) -> State:
    """(u, v, t) -> (conj v, conj u, -t)."""
    return State(state.grid, np.conj(state.v), np.conj(state.u), -state.t)


# -- snapshot files ---------------------------------------------------------

_FMT = "%.17g"


def write_snapshot(state: State, path) -> Path:
    path = Path(path)
    g = state.grid
    coords = [c.ravel() for c in g.mesh()]
    u, v = state.u.ravel(), state.v.ravel()
    cols = coords + [u.real, u.imag, v.real, v.imag]
    header = (["x"] if g.dims == 1 else ["x", "y"]) + ["Re_u", "Im_u", "Re_v", "Im_v"]
    np.savetxt(path, np.column_stack(cols), delimiter=",", fmt=_FMT,
               header=",".join(header), comments="")
    return path


def _grid_from_axis(x: np.ndarray, dims: int) -> Grid:
    n = x.size
    if n < 3:
        raise InvalidInputError("snapshot has fewer than 3 nodes per axis")
    l = float(x[-1])
    if not np.isclose(x[0], -l, rtol=0, atol=1e-12 * max(1.0, l)):
        raise InvalidInputError("snapshot axis is not symmetric about 0")
    grid = Grid(dims, l, n)
    if np.max(np.abs(grid.x - x)) > 1e-9 * max(1.0, l):
        raise InvalidInputError("snapshot axis is not uniform")
    return grid


def read_snapshot(path, t: float = 0.0) -> State:
    path = Path(path)
    with path.open() as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if header[:1] == ["x"] and header[1:2] == ["y"]:
        dims = 2
    elif header[:1] == ["x"]:
        dims = 1
    else:
        raise InvalidInputError(f"unrecognised snapshot header in {path}")
    expected = (["x", "y"] if dims == 2 else ["x"]) + ["Re_u", "Im_u", "Re_v", "Im_v"]
    if header != expected or data.shape[1] != len(expected):
        raise InvalidInputError(f"snapshot columns must be {','.join(expected)}")
    if dims == 1:
        grid = _grid_from_axis(data[:, 0], 1)
        shape = grid.shape
    else:
        n = int(round(math.sqrt(data.shape[0])))
        if n * n != data.shape[0]:
            raise InvalidInputError("2D snapshot row count is not a perfect square")
        grid = _grid_from_axis(data[::n, 0], 2)
        shape = grid.shape
        if np.max(np.abs(data[:, 1].reshape(shape) - grid.mesh()[1])) > 1e-9 * grid.l:
            raise InvalidInputError("2D snapshot is not row-major over (x, y)")
    off = dims
    u = (data[:, off] + 1j * data[:, off + 1]).reshape(shape)
    v = (data[:, off + 2] + 1j * data[:, off + 3]).reshape(shape)
    return State(grid, u, v, t)
