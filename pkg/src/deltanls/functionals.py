"""Conserved and monitored functionals, ground-state constants and scaling.

Quadrature notes
----------------
Every field of interest may carry a derivative jump at ``x = 0`` (the ground
state does), so all quadratures treat the two half lines separately and the
kink always sits on a panel boundary.  Two flavours are offered:

``"accurate"``
    composite Simpson for ``M`` and ``V``; ``K`` from first differences with
    one Richardson step (spacing ``dx`` and ``2dx``).  Fourth order on
    piecewise-smooth fields.
``"discrete"``
    the exact invariants of the Crank-Nicolson stepper: ``dx * sum |u_j|^2``
    and ``sum |u_{j+1} - u_j|^2 / dx`` with zero ghost nodes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import simpson

from .exceptions import InvalidArgumentError, NotApplicableError
from .grid import WaveField, check_power, ground_state_amplitude


@dataclass(frozen=True)
class GroundStateRef:
    """Closed-form constants attached to ``Q = 2^{1/(p-1)} e^{-|x|}``."""

    p: float
    gamma_c: float
    sigma_c: float
    a_index: float
    b_index: float
    M_Q: float
    K_Q: float
    N_Q: float
    E_Q: float

    @property
    def em_threshold(self) -> float:
        return self.E_Q * self.M_Q ** self.sigma_c

    @property
    def km_threshold(self) -> float:
        return self.K_Q * self.M_Q ** self.sigma_c

    @property
    def nm_threshold(self) -> float:
        return self.N_Q * self.M_Q ** self.sigma_c

    def closure_residuals(self) -> dict:
        """Residuals of the identities the constants must satisfy."""
        p, s = self.p, self.sigma_c
        return {
            "mass_equals_kinetic": self.M_Q - self.K_Q,
            "kinetic_equals_half_action": self.K_Q - 0.5 * self.N_Q,
            "energy_identity": self.E_Q - (p - 3.0) / (4.0 * (p + 1.0)) * self.N_Q,
            "optimal_constant": 2.0 ** s - (self.K_Q * self.M_Q ** s) ** ((p + 1.0) / 4.0),
        }


def critical_exponents(p: float) -> tuple[float, float]:
    """Return ``(gamma_c, sigma_c)``."""
    p = check_power(p)
    gamma_c = 0.5 - 1.0 / (p - 1.0)
    return gamma_c, (1.0 - gamma_c) / gamma_c


def ground_state_ref(p: float) -> GroundStateRef:
    p = check_power(p)
    gamma_c, sigma_c = critical_exponents(p)
    # integral of Q^2 = 2^{2/(p-1)} exp(-2|x|) over the line is 2^{2/(p-1)}
    m_q = ground_state_amplitude(p) ** 2
    n_q = ground_state_amplitude(p) ** (p + 1.0)
    return GroundStateRef(
        p=p,
        gamma_c=gamma_c,
        sigma_c=sigma_c,
        a_index=2.0 * (p - 1.0),
        b_index=2.0 * (p - 1.0) / p,
        M_Q=m_q,
        K_Q=m_q,
        N_Q=n_q,
        E_Q=(p - 3.0) / (4.0 * (p + 1.0)) * n_q,
    )


# -- quadrature -------------------------------------------------------------

def _halves(values: np.ndarray, c: int) -> tuple[np.ndarray, np.ndarray]:
    return values[c::-1], values[c:]


def integrate(f: WaveField, density: np.ndarray, method: str = "accurate") -> float:
    """Integrate a real density sampled on ``f.grid``."""
    g = f.grid
    if method == "discrete":
        return float(g.dx * np.sum(density))
    if method != "accurate":
        raise InvalidArgumentError(f"unknown quadrature method {method!r}")
    total = 0.0
    for half in _halves(density, g.center):
        total += simpson(half, dx=g.dx)
    return float(total)


def spectral_derivative(f: WaveField) -> np.ndarray:
    return np.fft.ifft(1j * f.grid.k * np.fft.fft(f.values))


def kinetic_energy(f: WaveField, method: str = "richardson") -> float:
    """``K(f) = int |f'|^2``.

    ``method`` is one of ``"richardson"`` (default), ``"difference"`` (the
    Crank-Nicolson invariant, zero ghost nodes) or ``"spectral"`` (periodic
    Fourier differentiation, inaccurate at a derivative jump; cross-check only).
    """
    u, dx = f.values, f.grid.dx
    if method == "difference":
        s = np.sum(np.abs(np.diff(u)) ** 2) + abs(u[0]) ** 2 + abs(u[-1]) ** 2
        return float(s / dx)
    if method == "spectral":
        return float(dx * np.sum(np.abs(spectral_derivative(f)) ** 2))
    if method != "richardson":
        raise InvalidArgumentError(f"unknown kinetic method {method!r}")
    fine = coarse = 0.0
    for half in _halves(u, f.grid.center):
        fine += np.sum(np.abs(np.diff(half)) ** 2) / dx
        coarse += np.sum(np.abs(np.diff(half[::2])) ** 2) / (2.0 * dx)
    return float((4.0 * fine - coarse) / 3.0)


def mass(f: WaveField, method: str = "accurate") -> float:
    return integrate(f, np.abs(f.values) ** 2, method)


def point_action(f: WaveField, p: float) -> float:
    """``N(f) = |f(0)|^{p+1}``, read at the center node."""
    return float(abs(f.center_value) ** (p + 1.0))


def variance(f: WaveField, method: str = "accurate") -> float:
    return integrate(f, f.x ** 2 * np.abs(f.values) ** 2, method)


def _difference_flux(values: np.ndarray, x: np.ndarray) -> float:
    # 4 * sum x_{j+1/2} Im(u_{j+1} conj(u_j)): midpoint rule for 4 Im int x u' conj(u)
    xm = 0.5 * (x[1:] + x[:-1])
    return 4.0 * float(np.sum(xm * np.imag(values[1:] * np.conj(values[:-1]))))


def variance_flux(f: WaveField, method: str = "accurate") -> float:
    """``V' = 4 Im int x f' conj(f)``.

    ``"accurate"`` applies one Richardson step to the cell-midpoint sum on each
    half line, ``"discrete"`` returns the plain midpoint sum (the exact rate of
    change of the discrete variance under the three-point Laplacian) and
    ``"spectral"`` uses a Fourier derivative with trapezoid weights.
    """
    u, x = f.values, f.x
    if method == "spectral":
        integrand = x * np.imag(spectral_derivative(f) * np.conj(u))
        return 4.0 * f.grid.dx * float(np.sum(integrand))
    if method == "discrete":
        return _difference_flux(u, x)
    if method != "accurate":
        raise InvalidArgumentError(f"unknown flux method {method!r}")
    c = f.grid.center
    fine = coarse = 0.0
    for sl in (slice(0, c + 1), slice(c, None)):
        uh, xh = u[sl], x[sl]
        fine += _difference_flux(uh, xh)
        # coarse level keeps the center node
        off = 0 if sl.start == c else c % 2
        coarse += _difference_flux(uh[off::2], xh[off::2])
    return (4.0 * fine - coarse) / 3.0


def energy(f: WaveField, p: float, method: str = "accurate") -> float:
    kin = kinetic_energy(f, "difference" if method == "discrete" else "richardson")
    return 0.5 * kin - point_action(f, p) / (p + 1.0)


@dataclass(frozen=True)
class FunctionalSnapshot:
    t: float
    M: float
    E: float
    K: float
    N: float
    G: float
    V: float
    Vp: float

    FIELDS = ("t", "M", "E", "K", "N", "G", "V", "Vp")

    def as_tuple(self) -> tuple:
        return tuple(getattr(self, name) for name in self.FIELDS)


def snapshot(f: WaveField, p: float, t: float = 0.0, method: str = "accurate") -> FunctionalSnapshot:
    """Evaluate ``(t, M, E, K, N, G, V, V')`` for one field."""
    kin = kinetic_energy(f, "difference" if method == "discrete" else "richardson")
    act = point_action(f, p)
    return FunctionalSnapshot(
        t=float(t),
        M=mass(f, method),
        E=0.5 * kin - act / (p + 1.0),
        K=kin,
        N=act,
        G=8.0 * kin - 4.0 * act,
        V=variance(f, method),
        Vp=variance_flux(f, method),
    )


def gn_deficit(f: WaveField, p: float, method: str = "accurate") -> float:
    """Slack in ``N(f) <= (K(f) M(f))^{(p+1)/4}``; zero at the ground state."""
    snap = snapshot(f, p, method=method)
    return (snap.K * snap.M) ** ((p + 1.0) / 4.0) - snap.N


def coercivity_deficit(f: WaveField, p: float, ref: GroundStateRef | None = None,
                       tol: float = 1e-6, method: str = "accurate") -> float:
    """Realized coercivity ratio ``G(f) / K(f)`` below the action threshold.

    Raises :class:`NotApplicableError` unless ``N M^sigma_c`` is below the
    ground-state value by more than the relative ``tol``.
    """
    ref = ref or ground_state_ref(p)
    snap = snapshot(f, p, method=method)
    nm = snap.N * snap.M ** ref.sigma_c / ref.nm_threshold
    if not nm < 1.0 - tol:
        raise NotApplicableError(
            f"N*M^sigma_c must lie below the ground-state threshold (ratio {nm:.9g})")
    if snap.K == 0.0:
        raise NotApplicableError("kinetic energy vanishes")
    return snap.G / snap.K


# -- scaling ----------------------------------------------------------------

def trig_interpolate(f: WaveField, y: np.ndarray, chunk: int = 512) -> np.ndarray:
    """Evaluate the band-limited interpolant of ``f`` at points ``y``.

    Points outside ``[-L, L]`` get zero, matching the Dirichlet convention.
    """
    g = f.grid
    y = np.asarray(y, dtype=float)
    coeff = np.fft.fft(f.values) / g.n
    out = np.zeros(y.shape, dtype=complex)
    inside = np.abs(y) <= g.L + 1e-12 * g.L
    yi = y[inside] - g.x[0]
    vals = np.empty(yi.shape, dtype=complex)
    for start in range(0, yi.size, chunk):
        seg = yi[start:start + chunk]
        vals[start:start + chunk] = np.exp(1j * np.outer(seg, g.k)) @ coeff
    out[inside] = vals
    return out


def rescale(f: WaveField, lam: float, p: float, support_tol: float = 1e-8) -> WaveField:
    """Scaling map ``g(x) = lam^{1/(p-1)} f(lam x)`` resampled on the same grid."""
    if not lam > 0:
        raise InvalidArgumentError(f"scale factor must be positive, got {lam}")
    if lam == 1.0:
        return f
    g = f.grid
    dens = np.abs(f.values) ** 2
    total = dens.sum()
    if lam < 1.0 and total > 0:
        escaped = dens[np.abs(g.x) > lam * g.L].sum() / total
        if escaped > support_tol:
            raise InvalidArgumentError(
                f"rescaled support leaves the grid (mass fraction {escaped:.3g} beyond lam*L)")
    y = lam * g.x
    # integer ratios map nodes onto nodes; read those exactly
    step = round(lam)
    if abs(lam - step) < 1e-14 and step >= 1:
        idx = g.center + step * (np.arange(g.n) - g.center)
        vals = np.zeros(g.n, dtype=complex)
        ok = (idx >= 0) & (idx < g.n)
        vals[ok] = f.values[idx[ok]]
    else:
        vals = trig_interpolate(f, y)
    return WaveField(g, lam ** (1.0 / (p - 1.0)) * vals)
