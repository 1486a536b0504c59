"""Spatial grids, discrete wave fields and canonical initial data.

The grid always has an odd number of nodes so that ``x = 0`` is a node: the
point nonlinearity only ever sees the value stored there.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .exceptions import InvalidArgumentError, UnsupportedRegimeError

BOUNDARY_TOL = 1e-8


@dataclass(frozen=True)
class Grid:
    """Uniform symmetric grid ``x_j = -L + j*dx`` with ``n`` odd."""

    L: float
    n: int

    def __post_init__(self):
        if not (np.isfinite(self.L) and self.L > 0):
            raise InvalidArgumentError(f"half width must be positive, got L={self.L}")
        if int(self.n) != self.n or self.n < 3 or self.n % 2 == 0:
            raise InvalidArgumentError(f"point count must be an odd integer >= 3, got n={self.n}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "L", float(self.L))

    @property
    def dx(self) -> float:
        return 2.0 * self.L / (self.n - 1)

    @property
    def center(self) -> int:
        return (self.n - 1) // 2

    @cached_property
    def x(self) -> np.ndarray:
        # integer offsets keep the center node exactly zero and the grid exactly symmetric
        x = (np.arange(self.n) - self.center) * self.dx
        x.setflags(write=False)
        return x

    @cached_property
    def k(self) -> np.ndarray:
        """Angular wavenumbers of the periodic extension (FFT ordering)."""
        k = 2.0 * np.pi * np.fft.fftfreq(self.n, d=self.dx)
        k.setflags(write=False)
        return k


def make_grid(L: float, n: int) -> Grid:
    """Build a symmetric grid of ``n`` (odd) nodes on ``[-L, L]``."""
    return Grid(L, n)


@dataclass(frozen=True, eq=False)
class WaveField:
    """Complex samples of a wave function on a :class:`Grid`."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=complex)
        if v.shape != (self.grid.n,):
            raise InvalidArgumentError(
                f"values must have shape ({self.grid.n},), got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise InvalidArgumentError("wave field contains non-finite entries")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def x(self) -> np.ndarray:
        return self.grid.x

    @property
    def center_value(self) -> complex:
        return complex(self.values[self.grid.center])

    def with_values(self, values) -> "WaveField":
        return WaveField(self.grid, values)

    def conj(self) -> "WaveField":
        return WaveField(self.grid, np.conj(self.values))

    def reflect(self) -> "WaveField":
        """Return ``f(-x)``."""
        return WaveField(self.grid, self.values[::-1])

    def boundary_ratio(self) -> float:
        """Largest modulus at the two outermost nodes relative to the peak."""
        peak = np.max(np.abs(self.values))
        if peak == 0.0:
            return 0.0
        return float(max(abs(self.values[0]), abs(self.values[-1])) / peak)

    def is_boundary_small(self, tol: float = BOUNDARY_TOL) -> bool:
        return self.boundary_ratio() <= tol

    def __mul__(self, other):
        if np.isscalar(other):
            return WaveField(self.grid, self.values * other)
        return NotImplemented

    __rmul__ = __mul__

    # keep numpy scalars from broadcasting over the field; they defer to __rmul__
    __array_ufunc__ = None

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)


class Scheme(str, enum.Enum):
    CRANK_NICOLSON = "cn"
    STRANG_SPLIT = "split"


@dataclass(frozen=True)
class PhysParams:
    """Physical and numerical parameters of one evolution.

    ``coupling`` multiplies the point term; it exists so tests can switch the
    nonlinearity off and compare against free propagation.
    """

    p: float = 5.0
    dt: float = 1e-3
    scheme: Scheme = Scheme.CRANK_NICOLSON
    fixed_point_tol: float = 1e-12
    max_inner_iters: int = 50
    coupling: float = 1.0

    def __post_init__(self):
        check_power(self.p)
        if not self.dt > 0:
            raise InvalidArgumentError(f"dt must be positive, got {self.dt}")
        if not self.fixed_point_tol > 0:
            raise InvalidArgumentError("fixed_point_tol must be positive")
        if int(self.max_inner_iters) < 1:
            raise InvalidArgumentError("max_inner_iters must be >= 1")
        object.__setattr__(self, "scheme", Scheme(self.scheme))


def check_power(p: float) -> float:
    """Validate the supercritical regime ``p > 3``."""
    if not (np.isfinite(p) and p > 3):
        raise UnsupportedRegimeError(f"only the L2-supercritical range p > 3 is supported, got p={p}")
    return float(p)


def check_same_grid(a: WaveField, b: WaveField) -> None:
    if a.grid != b.grid:
        raise InvalidArgumentError("wave fields live on different grids")


def ground_state_amplitude(p: float) -> float:
    return 2.0 ** (1.0 / (p - 1.0))


def sample_ground_state(grid: Grid, p: float) -> WaveField:
    """Sample ``Q(x) = 2^{1/(p-1)} exp(-|x|)``."""
    if not p > 1:
        raise InvalidArgumentError(f"ground state needs p > 1, got p={p}")
    return WaveField(grid, ground_state_amplitude(p) * np.exp(-np.abs(grid.x)))


def sample_phase_modulated(grid: Grid, base: WaveField, gamma: float) -> WaveField:
    """Multiply ``base`` by the quadratic phase ``exp(i*gamma*x^2)``."""
    if base.grid != grid:
        raise InvalidArgumentError("base field does not live on the requested grid")
    return WaveField(grid, base.values * np.exp(1j * gamma * grid.x ** 2))


def sample_gaussian(grid: Grid, width: float = 1.0, amplitude: complex = 1.0) -> WaveField:
    """Sample ``amplitude * exp(-(x/width)^2)``."""
    if not width > 0:
        raise InvalidArgumentError("gaussian width must be positive")
    return WaveField(grid, amplitude * np.exp(-(grid.x / width) ** 2))
