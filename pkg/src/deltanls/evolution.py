"""Grid time stepping for the point-nonlinearity NLS.

The model ``i u_t + u_xx + delta(x) |u|^{p-1} u = 0`` is discretized with the
delta replaced by weight ``1/dx`` at the center node.  Two steppers share this
discretization:

* Crank-Nicolson with the three-point Laplacian and Dirichlet ends.  The point
  term uses the energy-conserving average of Delfour, Fortin and Payre, so the
  discrete mass and energy are invariants up to the inner-solver tolerance.
* Strang splitting: exact free flow by FFT (periodic) around an exact phase
  rotation of the center value.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .exceptions import InvalidArgumentError, PropagationError, StepFailure
from .functionals import FunctionalSnapshot, snapshot
from .grid import Grid, PhysParams, Scheme, WaveField


def free_propagate(f: WaveField, t: float) -> WaveField:
    """Apply the periodic free group ``exp(i t d_xx)`` via the FFT."""
    if t == 0:
        return f
    mult = np.exp(-1j * f.grid.k ** 2 * t)
    return f.with_values(np.fft.ifft(mult * np.fft.fft(f.values)))


def _point_rate(new_sq: float, old_sq: float, p: float) -> float:
    """Divided difference ``2/(p+1) (a^q - b^q)/(a - b)`` with ``q=(p+1)/2``.

    Equals ``|u|^{p-1}`` when both squared moduli agree.
    """
    q = 0.5 * (p + 1.0)
    m = 0.5 * (new_sq + old_sq)
    if m == 0.0:
        return 0.0
    h = 0.5 * (new_sq - old_sq)
    if abs(h) < 1e-4 * m:
        return m ** (q - 1.0) * (1.0 + (q - 1.0) * (q - 2.0) * h * h / (6.0 * m * m))
    return (new_sq ** q - old_sq ** q) / (q * (new_sq - old_sq))


class CrankNicolsonStepper:
    """One Crank-Nicolson step; the LU factors are built once per instance."""

    def __init__(self, grid: Grid, params: PhysParams, direction: int = 1):
        self.grid = grid
        self.params = params
        n, dx = grid.n, grid.dx
        dts = direction * params.dt
        lap = sp.diags([np.ones(n - 1), -2.0 * np.ones(n), np.ones(n - 1)], [-1, 0, 1]) / dx ** 2
        eye = sp.identity(n)
        self._lu = spla.splu((eye - 0.5j * dts * lap).tocsc())
        self._rhs = (eye + 0.5j * dts * lap).tocsr()
        e = np.zeros(n, dtype=complex)
        e[grid.center] = 1.0
        self._w = self._lu.solve(e)
        self._beta = 0.5j * dts * params.coupling / dx
        self._alpha = self._beta * self._w[grid.center]

    def _center_residual(self, z, b, old):
        g = _point_rate(abs(z) ** 2, abs(old) ** 2, self.params.p)
        return z * (1.0 - self._alpha * g) - b - self._alpha * g * old

    def _newton(self, z, b, old):
        tol = self.params.fixed_point_tol
        for _ in range(self.params.max_inner_iters):
            r = self._center_residual(z, b, old)
            if abs(r) <= tol * max(1.0, abs(z)):
                return z
            h = 1e-7 * max(1.0, abs(z))
            jr = (self._center_residual(z + h, b, old) - r) / h
            ji = (self._center_residual(z + 1j * h, b, old) - r) / h
            jac = np.array([[jr.real, ji.real], [jr.imag, ji.imag]])
            try:
                dz = np.linalg.solve(jac, [-r.real, -r.imag])
            except np.linalg.LinAlgError:
                return None
            z = z + complex(dz[0], dz[1])
            if not np.isfinite(z):
                return None
        return None

    def solve_center(self, b: complex, old: complex) -> complex:
        """Solve the scalar implicit equation for the new center value."""
        params = self.params
        if self._alpha == 0:
            return b
        z = b
        for _ in range(params.max_inner_iters):
            g = _point_rate(abs(z) ** 2, abs(old) ** 2, params.p)
            z_new = (b + self._alpha * g * old) / (1.0 - self._alpha * g)
            if not np.isfinite(z_new):
                break
            if abs(z_new - z) <= params.fixed_point_tol * max(1.0, abs(z_new)):
                return z_new
            z = z_new
        # plain iteration stalls once |u(0)| grows; polish with Newton before giving up
        z = self._newton(b, b, old)
        if z is None:
            raise StepFailure("center fixed-point iteration did not converge")
        return z

    def step(self, u: np.ndarray) -> np.ndarray:
        c = self.grid.center
        r = self._lu.solve(self._rhs @ u)
        old = u[c]
        z = self.solve_center(r[c], old)
        g = _point_rate(abs(z) ** 2, abs(old) ** 2, self.params.p)
        out = r + (self._beta * g * (z + old)) * self._w
        out[c] = z
        return out


class SplitStepper:
    """Strang splitting: half free step, exact point rotation, half free step."""

    def __init__(self, grid: Grid, params: PhysParams, direction: int = 1):
        self.grid = grid
        self.params = params
        dts = direction * params.dt
        self._half = np.exp(-0.5j * grid.k ** 2 * dts)
        self._kick = dts * params.coupling / grid.dx

    def step(self, u: np.ndarray) -> np.ndarray:
        c, p = self.grid.center, self.params.p
        v = np.fft.ifft(self._half * np.fft.fft(u))
        v[c] *= np.exp(1j * self._kick * abs(v[c]) ** (p - 1.0))
        return np.fft.ifft(self._half * np.fft.fft(v))


def make_stepper(grid: Grid, params: PhysParams, direction: int = 1):
    if params.scheme is Scheme.CRANK_NICOLSON:
        return CrankNicolsonStepper(grid, params, direction)
    return SplitStepper(grid, params, direction)


@dataclass
class EvolutionState:
    field: WaveField
    t: float
    params: PhysParams
    step_count: int = 0


def _advance(state: EvolutionState, stepper) -> EvolutionState:
    try:
        values = stepper.step(np.array(state.field.values))
    except StepFailure as exc:
        exc.t = state.t
        raise
    if not np.all(np.isfinite(values)):
        raise StepFailure("non-finite values produced", t=state.t)
    k = state.step_count + 1
    return EvolutionState(state.field.with_values(values), k * state.params.dt, state.params, k)


def step_cn(state: EvolutionState) -> EvolutionState:
    """One Crank-Nicolson step (builds a fresh factorization; use ``evolve`` for runs)."""
    params = replace(state.params, scheme=Scheme.CRANK_NICOLSON)
    return _advance(replace(state, params=params), CrankNicolsonStepper(state.field.grid, params))


def step_split(state: EvolutionState) -> EvolutionState:
    """One Strang split step."""
    params = replace(state.params, scheme=Scheme.STRANG_SPLIT)
    return _advance(replace(state, params=params), SplitStepper(state.field.grid, params))


@dataclass
class TimeSeries:
    """Recorded output of :func:`evolve`."""

    snapshots: list = field(default_factory=list)
    trace_t: np.ndarray = None
    trace_w: np.ndarray = None
    halt_reason: str = "horizon"
    event: object = None
    final_state: EvolutionState = None
    fields: list = field(default_factory=list)
    record_stride: int = 1
    dt: float = 0.0

    HEADER = FunctionalSnapshot.FIELDS

    @property
    def t(self) -> np.ndarray:
        return np.array([s.t for s in self.snapshots])

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(s, name) for s in self.snapshots])

    def as_array(self) -> np.ndarray:
        return np.array([s.as_tuple() for s in self.snapshots], dtype=float).reshape(-1, 8)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(self.HEADER)
            for s in self.snapshots:
                writer.writerow([format(v, ".17g") for v in s.as_tuple()])


Observer = Callable[[EvolutionState], object]


def evolve(u0: WaveField, params: PhysParams, T: float, observers: Iterable[Observer] = (),
           record_stride: int = 10, method: str = "accurate", keep_fields: bool = False,
           direction: int = 1) -> TimeSeries:
    """Step ``u0`` up to time ``T`` and record functionals.

    Each observer is called after every step with the new state; a non-None
    return value halts the run and is stored as ``series.event``.  Observers
    may define ``on_step_failure(state, exc)`` to turn a stepper failure into
    an event; otherwise the failure is raised as :class:`PropagationError`
    carrying the partial series.

    ``direction=-1`` integrates backwards in time (recorded times stay
    nonnegative and count elapsed time).
    """
    if T < 0:
        raise InvalidArgumentError("horizon must be nonnegative")
    if record_stride < 1:
        raise InvalidArgumentError("record_stride must be >= 1")
    observers = list(observers)
    stepper = make_stepper(u0.grid, params, direction)
    nsteps = int(math.ceil(T / params.dt - 1e-9)) if T > 0 else 0
    state = EvolutionState(u0, 0.0, params, 0)
    series = TimeSeries(record_stride=record_stride, dt=params.dt)
    trace_t = np.empty(nsteps + 1)
    trace_w = np.empty(nsteps + 1, dtype=complex)
    trace_t[0], trace_w[0] = 0.0, u0.center_value
    series.snapshots.append(snapshot(u0, params.p, 0.0, method))
    if keep_fields:
        series.fields.append(u0)
    done = 0
    for _ in range(nsteps):
        try:
            state = _advance(state, stepper)
        except StepFailure as exc:
            event = None
            for obs in observers:
                handler = getattr(obs, "on_step_failure", None)
                if handler is not None:
                    event = handler(state, exc)
                    if event is not None:
                        break
            series.final_state = state
            series.trace_t, series.trace_w = trace_t[:done + 1], trace_w[:done + 1]
            if event is None:
                series.halt_reason = "step-failure"
                raise PropagationError(str(exc), partial=series) from exc
            series.event = event
            series.halt_reason = getattr(event, "reason", str(event))
            return series
        done = state.step_count
        trace_t[done], trace_w[done] = state.t, state.field.center_value
        if done % record_stride == 0:
            series.snapshots.append(snapshot(state.field, params.p, state.t, method))
            if keep_fields:
                series.fields.append(state.field)
        for obs in observers:
            event = obs(state)
            if event is not None:
                series.event = event
                series.halt_reason = getattr(event, "reason", str(event))
                break
        if series.event is not None:
            break
    series.final_state = state
    series.trace_t, series.trace_w = trace_t[:done + 1], trace_w[:done + 1]
    return series


def evolve_reversed(u0: WaveField, params: PhysParams, T: float, **kwargs) -> TimeSeries:
    """Integrate backwards: the field after elapsed time ``T`` is ``u(-T)``."""
    return evolve(u0, params, T, direction=-1, **kwargs)


def evolve_field(u0: WaveField, params: PhysParams, T: float, direction: int = 1) -> WaveField:
    """Return only the field at elapsed time ``T`` (no recording)."""
    stepper = make_stepper(u0.grid, params, direction)
    nsteps = int(math.ceil(T / params.dt - 1e-9)) if T > 0 else 0
    state = EvolutionState(u0, 0.0, params, 0)
    for _ in range(nsteps):
        state = _advance(state, stepper)
    return state.field


class BoundaryMonitor:
    """Halts a run once the outermost nodes exceed ``tol`` times the initial peak."""

    reason = "boundary"

    def __init__(self, u0: WaveField, tol: float = 1e-4):
        self.scale = float(np.max(np.abs(u0.values)))
        self.tol = tol
        self.tripped_at = None

    def __call__(self, state: EvolutionState):
        v = state.field.values
        if max(abs(v[0]), abs(v[-1])) > self.tol * self.scale:
            self.tripped_at = state.t
            return self
        return None
