"""Run-time evidence: blow-up events, scattering indicators and virial checks.

None of these certify anything.  Blow-up is an event with an explicit trigger,
scattering is the conjunction of three finite-horizon indicators, and the
virial checks compare finite differences of recorded data against the
identities they should satisfy.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import Polynomial
from scipy.integrate import cumulative_trapezoid

from .evolution import EvolutionState, TimeSeries, evolve, evolve_reversed, free_propagate
from .exceptions import InternalError, InvalidArgumentError
from .functionals import (ground_state_ref, integrate, kinetic_energy, mass, point_action,
                          snapshot, variance)
from .grid import PhysParams, WaveField, ground_state_amplitude


# -- blow-up ---------------------------------------------------------------

class BlowupTrigger(str, enum.Enum):
    KINETIC_ESCAPE = "KineticEscape"
    CENTER_AMPLITUDE_CAP = "CenterAmplitudeCap"
    FIXED_POINT_FAILURE = "FixedPointFailure"
    MASS_DRIFT = "MassDrift"


@dataclass(frozen=True)
class BlowupEvent:
    t_detect: float
    trigger: BlowupTrigger
    K_at_detect: float

    reason = "blowup"

    def to_dict(self) -> dict:
        return {"t_detect": self.t_detect, "trigger": self.trigger.value, "K_at_detect": self.K_at_detect}


@dataclass(frozen=True)
class BlowupCaps:
    """Trigger thresholds, relative to the initial data and the ground state.

    ``K > k_factor * max(K(u0), K_Q)``, ``|u(0)| > amplitude_factor *
    max(|u0|_inf, Q(0))`` and ``|M - M(u0)| / M(u0) > mass_drift``.
    """

    k_factor: float = 100.0
    amplitude_factor: float = 10.0
    mass_drift: float = 0.01

    def __post_init__(self):
        if not (self.k_factor > 1 and self.amplitude_factor > 1 and self.mass_drift > 0):
            raise InvalidArgumentError("blow-up caps must exceed 1 (factors) and 0 (mass drift)")

    def resolve(self, u0: WaveField, p: float) -> "ResolvedCaps":
        ref = ground_state_ref(p)
        k0 = kinetic_energy(u0)
        amp0 = float(np.max(np.abs(u0.values))) if u0.grid.n else 0.0
        return ResolvedCaps(
            k_cap=self.k_factor * max(k0, ref.K_Q),
            amplitude_cap=self.amplitude_factor * max(amp0, ground_state_amplitude(p)),
            mass0=mass(u0, "discrete"),
            mass_drift=self.mass_drift,
        )


@dataclass(frozen=True)
class ResolvedCaps:
    k_cap: float
    amplitude_cap: float
    mass0: float
    mass_drift: float


def detect_blowup(series: TimeSeries | None, f: WaveField, caps: ResolvedCaps,
                  t: float | None = None, step_failed: bool = False) -> BlowupEvent | None:
    """Check one field against the caps; return the first trigger that fires.

    The time stamp is ``t`` if given, else the last recorded trace time of
    ``series``.  Mass drift is measured with the discrete mass, which both
    steppers conserve, so a drift flags loss of resolution rather than physics.
    """
    if t is None:
        if series is not None and series.trace_t is not None and len(series.trace_t):
            t = float(series.trace_t[-1])
        elif series is not None and series.snapshots:
            t = series.snapshots[-1].t
        else:
            t = 0.0
    K = kinetic_energy(f)
    if step_failed:
        return BlowupEvent(t, BlowupTrigger.FIXED_POINT_FAILURE, K)
    if K > caps.k_cap:
        return BlowupEvent(t, BlowupTrigger.KINETIC_ESCAPE, K)
    if abs(f.center_value) > caps.amplitude_cap:
        return BlowupEvent(t, BlowupTrigger.CENTER_AMPLITUDE_CAP, K)
    if caps.mass0 > 0 and abs(mass(f, "discrete") - caps.mass0) > caps.mass_drift * caps.mass0:
        return BlowupEvent(t, BlowupTrigger.MASS_DRIFT, K)
    return None


class BlowupMonitor:
    """Observer for :func:`evolve` that halts the run on a blow-up event."""

    reason = "blowup"

    def __init__(self, u0: WaveField, p: float, caps: BlowupCaps = BlowupCaps()):
        self.caps = caps.resolve(u0, p)
        self.event = None

    def __call__(self, state: EvolutionState):
        if self.event is None:
            self.event = detect_blowup(None, state.field, self.caps, t=state.t)
        return self.event

    def on_step_failure(self, state: EvolutionState, exc):
        if self.event is None:
            self.event = detect_blowup(None, state.field, self.caps, t=state.t, step_failed=True)
        return self.event


# -- scattering -------------------------------------------------------------

@dataclass
class ScatterThresholds:
    saturation: float = 0.05
    exponent_target: float = -0.5
    exponent_band: float = 0.15
    cauchy: float = 0.05


@dataclass
class ScatterEvidence:
    la_partial: float
    la_saturation: float
    decay_exponent: float
    cauchy_defect: float
    la_series: np.ndarray = field(repr=False, default=None)
    n_monotone_decreasing: bool = False
    cauchy_source: str = "trace"
    window_start: float = 0.0
    thresholds: ScatterThresholds = field(default_factory=ScatterThresholds)

    @property
    def saturated(self) -> bool:
        return self.la_saturation < self.thresholds.saturation

    @property
    def free_decay(self) -> bool:
        th = self.thresholds
        return abs(self.decay_exponent - th.exponent_target) <= th.exponent_band

    @property
    def cauchy_small(self) -> bool:
        return self.cauchy_defect < self.thresholds.cauchy

    @property
    def verdict(self) -> bool:
        return self.saturated and self.free_decay and self.cauchy_small

    def to_dict(self) -> dict:
        return {
            "la_partial": self.la_partial,
            "la_saturation": self.la_saturation,
            "decay_exponent": self.decay_exponent,
            "cauchy_defect": self.cauchy_defect,
            "cauchy_source": self.cauchy_source,
            "n_monotone_decreasing": self.n_monotone_decreasing,
            "window_start": self.window_start,
            "saturated": self.saturated,
            "free_decay": self.free_decay,
            "cauchy_small": self.cauchy_small,
            "verdict": self.verdict,
        }


def h1_norm(f: WaveField) -> float:
    """Discrete H^1 norm from the Fourier coefficients of the grid samples."""
    g = f.grid
    coeff = np.fft.fft(f.values)
    return float(np.sqrt(g.dx / g.n * np.sum((1.0 + g.k ** 2) * np.abs(coeff) ** 2)))


def _defect_from_fields(fields, times, scale):
    pulled = [free_propagate(f, -t).values for f, t in zip(fields, times)]
    worst = 0.0
    for a, b in itertools.combinations(range(len(pulled)), 2):
        diff = WaveField(fields[0].grid, pulled[b] - pulled[a])
        worst = max(worst, h1_norm(diff))
    return worst / scale


def _segment_transform(t: np.ndarray, F: np.ndarray, dt: float, nfft: int):
    """``A(omega) = int F(s) e^{i omega s} ds`` over one segment on the FFT grid."""
    m = F.size
    wts = np.ones(m)
    wts[0] = wts[-1] = 0.5
    # e^{i omega t_j} = e^{i omega t_0} e^{i omega j dt}; ifft carries the + sign
    amp = np.fft.ifft(wts * F, nfft) * nfft
    omega = 2.0 * np.pi * np.arange(nfft) / (nfft * dt)
    half = nfft // 2
    omega, amp = omega[:half], amp[:half]
    # hat-function (piecewise linear) correction
    amp = amp * np.sinc(omega * dt / (2.0 * np.pi)) ** 2 * dt * np.exp(1j * omega * t[0])
    return omega, amp


def _defect_from_trace(trace, idx, coupling, p, scale):
    """Cauchy defect from the boundary trace alone.

    Between two times the pulled-back states differ by
    ``i int e^{-is d_xx} delta F(s) ds`` whose Fourier transform is
    ``i int e^{i s k^2} F(s) ds``; its squared H^1 norm is
    ``1/(2 pi) int_0^inf (1 + w) w^{-1/2} |A(w)|^2 dw``.
    """
    t, w, dt = trace.times, trace.w, trace.dt
    F = coupling * np.abs(w) ** (p - 1.0) * w
    longest = int(np.max(np.diff(idx))) + 1
    # zero padding sets the frequency spacing; one grid shared by all segments
    nfft = 1 << int(np.ceil(np.log2(8 * (idx[-1] - idx[0] + 1))))
    if nfft < longest:
        raise InternalError("FFT length shorter than a segment")
    segs = [_segment_transform(t[a:b + 1], F[a:b + 1], dt, nfft)
            for a, b in zip(idx[:-1], idx[1:])]
    om = segs[0][0]
    worst = 0.0
    for i, j in itertools.combinations(range(len(idx)), 2):
        A = sum(segs[k][1] for k in range(i, j))
        dens = (1.0 + om[1:]) / np.sqrt(om[1:]) * np.abs(A[1:]) ** 2
        total = np.trapezoid(dens, om[1:]) + 2.0 * np.sqrt(om[1]) * abs(A[0]) ** 2
        worst = max(worst, np.sqrt(total / (2.0 * np.pi)))
    return worst / scale


def scatter_evidence(trace, series: TimeSeries | None = None, p: float | None = None,
                     window: float = 0.5, n_window_times: int = 3,
                     thresholds: ScatterThresholds | None = None) -> ScatterEvidence:
    """Gather the three scattering indicators over the final ``window`` fraction.

    ``trace`` is a :class:`~deltanls.volterra.BoundaryTrace`.  The Cauchy
    defect uses recorded fields when ``series`` keeps fields covering the
    window, and the boundary trace otherwise.  It is reported relative to the
    H^1 norm of the initial data.
    """
    if not 0.0 < window < 1.0:
        raise InvalidArgumentError("window must be a fraction in (0, 1)")
    if n_window_times < 3:
        raise InvalidArgumentError("the Cauchy defect needs at least 3 window times")
    thresholds = thresholds or ScatterThresholds()
    p = trace.p if p is None else p
    a_index = ground_state_ref(p).a_index
    t = np.asarray(trace.times)
    w = np.asarray(trace.w)
    T = t[-1]
    t_start = (1.0 - window) * T
    sel = np.nonzero((t >= t_start - 1e-12) & (t > 0))[0]
    if sel.size < max(3, n_window_times) or T <= 0:
        raise InvalidArgumentError(
            f"insufficient samples in the final window ({sel.size} points)")
    la = cumulative_trapezoid(np.abs(w) ** a_index, t, initial=0.0)
    la_T = la[-1]
    sat = (la_T - la[sel[0]]) / la_T if la_T > 0 else 0.0
    amp = np.abs(w[sel])
    if np.any(amp == 0):
        slope = -np.inf
    else:
        slope = float(np.polyfit(np.log(t[sel]), np.log(amp), 1)[0])
    n_vals = amp ** (p + 1.0)
    monotone = bool(np.all(np.diff(n_vals) <= 0))

    u0 = trace.u0
    scale = h1_norm(u0) if u0 is not None else 1.0
    scale = scale if scale > 0 else 1.0
    idx = np.unique(np.round(np.linspace(sel[0], t.size - 1, n_window_times)).astype(int))
    source = "trace"
    defect = None
    if series is not None and series.fields:
        rec_t = series.t
        have = [k for k, tk in enumerate(rec_t) if tk >= t_start - 1e-12]
        if len(have) >= n_window_times and rec_t[-1] >= T - 1e-9:
            pick = np.unique(np.round(np.linspace(have[0], have[-1], n_window_times)).astype(int))
            defect = _defect_from_fields([series.fields[k] for k in pick], rec_t[pick], scale)
            source = "fields"
    if defect is None:
        defect = _defect_from_trace(trace, idx, trace.coupling, p, scale)
    return ScatterEvidence(
        la_partial=float(la_T), la_saturation=float(sat), decay_exponent=slope,
        cauchy_defect=float(defect), la_series=la, n_monotone_decreasing=monotone,
        cauchy_source=source, window_start=float(t[sel[0]]), thresholds=thresholds,
    )


# -- virial -----------------------------------------------------------------

def _uniform_step(t: np.ndarray) -> float:
    h = np.diff(t)
    if h.size == 0 or np.any(h <= 0) or np.ptp(h) > 1e-9 * max(1.0, abs(h).max()):
        raise InvalidArgumentError("snapshots are not on a uniform recording stride")
    return float(h.mean())


def virial_residuals(series: TimeSeries, coupling: float = 1.0) -> dict:
    """Residuals of ``V'' = G`` and ``V' = Vp`` from centered differences.

    ``coupling`` scales the point term as in :class:`PhysParams`, so that
    free runs are checked against ``V'' = 8K``.
    """
    if len(series.snapshots) < 5:
        raise InvalidArgumentError("virial check needs at least 5 snapshots")
    t = series.t
    h = _uniform_step(t)
    V, Vp = series.column("V"), series.column("Vp")
    G = 8.0 * series.column("K") - 4.0 * coupling * series.column("N")
    d2 = (V[2:] - 2.0 * V[1:-1] + V[:-2]) / h ** 2
    d1 = (V[2:] - V[:-2]) / (2.0 * h)
    second = np.abs(d2 - G[1:-1]) / (1.0 + np.abs(G[1:-1]))
    first = np.abs(d1 - Vp[1:-1]) / (1.0 + np.abs(Vp[1:-1]))
    return {"second": float(second.max()), "first": float(first.max())}


def virial_consistency(series: TimeSeries, coupling: float = 1.0) -> float:
    """Max over interior snapshots of ``|D^2 V - G| / (1 + |G|)``."""
    return virial_residuals(series, coupling)["second"]


def virial_at_zero(u0: WaveField, params: PhysParams, steps: int = 10) -> dict:
    """``V(0), V'(0), V''(0)`` from one forward and one backward run.

    The backward run integrates the reversed flow, so the two runs together
    give samples at ``-h, 0, h`` with ``h = steps * dt`` for centered differences.
    """
    h = steps * params.dt
    fwd = evolve(u0, params, h, record_stride=steps)
    bwd = evolve_reversed(u0, params, h, record_stride=steps)
    v_minus, v0, v_plus = bwd.snapshots[-1].V, fwd.snapshots[0].V, fwd.snapshots[-1].V
    return {
        "V": v0,
        "Vp": (v_plus - v_minus) / (2.0 * h),
        "Vpp": (v_plus - 2.0 * v0 + v_minus) / h ** 2,
        "h": h,
    }


# -- local virial weight ----------------------------------------------------

def _build_blend() -> Polynomial:
    """``phi''`` on ``[1, 2]`` as a polynomial in ``s = y - 1``.

    Conditions: value 2 and two vanishing derivatives at ``s=0``; value 0 and
    two vanishing derivatives at ``s=1``; integral ``-2`` so ``phi'`` returns
    from 2 to 0 and ``phi`` is constant beyond ``y=2``.
    """
    deg = 6
    rows, rhs = [], []
    basis = [Polynomial.basis(k) for k in range(deg + 1)]
    for s0, vals in ((0.0, (2.0, 0.0, 0.0)), (1.0, (0.0, 0.0, 0.0))):
        for order, v in enumerate(vals):
            rows.append([b.deriv(order)(s0) if order else b(s0) for b in basis])
            rhs.append(v)
    rows.append([b.integ()(1.0) - b.integ()(0.0) for b in basis])
    rhs.append(-2.0)
    coef = np.linalg.solve(np.array(rows), np.array(rhs))
    return Polynomial(coef)


_PHI2_BLEND = _build_blend()
_PHI1_BLEND = _PHI2_BLEND.integ(lbnd=0.0, k=2.0)
_PHI0_BLEND = _PHI1_BLEND.integ(lbnd=0.0, k=1.0)


def profile(y: np.ndarray, order: int = 0) -> np.ndarray:
    """The even profile ``phi`` (or its derivative of given order, up to 4)."""
    y = np.asarray(y, dtype=float)
    s = np.abs(y)
    sign = np.where(y < 0, -1.0, 1.0) ** order
    inner = [s ** 2, 2.0 * s, 2.0 * np.ones_like(s), np.zeros_like(s), np.zeros_like(s)][order]
    blends = [_PHI0_BLEND, _PHI1_BLEND, _PHI2_BLEND, _PHI2_BLEND.deriv(1), _PHI2_BLEND.deriv(2)]
    mid = blends[order](s - 1.0)
    outer = _PHI0_BLEND(1.0) if order == 0 else 0.0
    out = np.where(s <= 1.0, inner, np.where(s <= 2.0, mid, outer))
    return sign * out


@dataclass
class LocalVirialReport:
    I: float
    V: float
    epsilon: float
    checks: dict


def _weight_checks(epsilon: float, n_probe: int = 20001) -> dict:
    y = np.linspace(-3.0, 3.0, n_probe)
    a2 = profile(y, 2)
    a4 = epsilon ** 2 * profile(y, 4)
    checks = {
        "a(0)": float(profile(np.array([0.0]), 0)[0]) / epsilon ** 2,
        "a'(0)": float(profile(np.array([0.0]), 1)[0]) / epsilon,
        "a''(0)": float(profile(np.array([0.0]), 2)[0]),
        "a'''(0)": float(epsilon * profile(np.array([0.0]), 3)[0]),
        "max a''": float(a2.max()),
        "max |a''''| / eps^2": float(np.abs(a4).max() / epsilon ** 2),
    }
    # continuity of phi, phi', phi'' at the joins
    for order in range(3):
        for y0 in (1.0, 2.0):
            left = profile(np.array([y0 - 1e-12]), order)[0]
            right = profile(np.array([y0 + 1e-12]), order)[0]
            checks[f"jump phi^({order}) at {y0:g}"] = float(abs(left - right))
    ok = (checks["a(0)"] == 0.0 and checks["a'(0)"] == 0.0 and checks["a'''(0)"] == 0.0
          and abs(checks["a''(0)"] - 2.0) <= 1e-12 and checks["max a''"] <= 2.0 + 1e-9
          and all(v < 1e-9 for k, v in checks.items() if k.startswith("jump")))
    if not ok:
        raise InternalError(f"local virial weight violates its constraints: {checks}")
    return checks


def local_virial(f: WaveField, epsilon: float, R: float | None = None) -> LocalVirialReport:
    """``I(f) = int a(x) |f|^2`` with ``a(x) = eps^-2 phi(eps x)``.

    ``a = x^2`` on ``|x| <= R = 1/eps``.  ``R`` may be given instead of (or
    consistently with) ``epsilon``.
    """
    if R is not None:
        if not R > 0:
            raise InvalidArgumentError("R must be positive")
        if epsilon is None:
            epsilon = 1.0 / R
        elif abs(epsilon * R - 1.0) > 1e-12:
            raise InvalidArgumentError("epsilon and R must satisfy epsilon * R = 1")
    if epsilon is None or not epsilon > 0:
        raise InvalidArgumentError("epsilon must be positive")
    checks = _weight_checks(epsilon)
    a = profile(epsilon * f.x, 0) / epsilon ** 2
    I = integrate(f, a * np.abs(f.values) ** 2)
    return LocalVirialReport(I=I, V=variance(f), epsilon=epsilon, checks=checks)


def cs_inequality_check(f: WaveField, p: float) -> float:
    """Slack ``V [K - N^{4/(p+1)} / M] - (Im int x f' conj f)^2``."""
    s = snapshot(f, p)
    if not (s.M > 0 and s.V > 0):
        raise InvalidArgumentError("needs M(f) > 0 and V(f) > 0")
    lhs = (s.Vp / 4.0) ** 2
    rhs = s.V * (s.K - point_action(f, p) ** (4.0 / (p + 1.0)) / s.M)
    return float(rhs - lhs)


def cs_scale(f: WaveField, p: float) -> float:
    """Natural magnitude of both sides of the Cauchy-Schwarz bound."""
    s = snapshot(f, p)
    return float(s.V * (s.K + point_action(f, p) ** (4.0 / (p + 1.0)) / s.M))
