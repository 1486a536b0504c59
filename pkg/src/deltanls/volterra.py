"""Boundary-value route: the Duhamel formula restricted to ``x = 0``.

Evaluating Duhamel's formula at the origin gives a closed equation for
``w(t) = u(0, t)``::

    w(t) = (e^{it d_xx} u0)(0) + i/sqrt(4 pi i) int_0^t |w|^{p-1} w (s) / sqrt(t - s) ds

a nonlinear Volterra equation with an Abel kernel.  It lives on the whole
line, so it is free of the domain truncation that limits the grid steppers.

Free term.  The free evolution at a point is the Fresnel-kernel integral of
``u0``.  For short times the kernel oscillates faster than the grid resolves,
so ``u0`` is replaced by its piecewise-quadratic interpolant (kink at the
center node kept on a panel edge) and integrated against the kernel exactly
with Fresnel integrals.  Once the kernel phase changes by less than one radian
per cell, composite Simpson on the grid is used instead.

Nonlinear term.  Product integration: the density is piecewise linear in time
and the weight ``tau^{-1/2} exp(i x^2 / 4 tau)`` is integrated analytically on
each panel.  The implicit value at the newest node is found by fixed-point
iteration.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import simpson
from scipy.special import fresnel

from .exceptions import InvalidArgumentError, StepFailure
from .grid import WaveField

SQRT_4PI_I = 2.0 * np.sqrt(np.pi) * np.exp(0.25j * np.pi)
DUHAMEL_FACTOR = 1j / SQRT_4PI_I


@dataclass
class BoundaryTrace:
    times: np.ndarray
    w: np.ndarray
    dt: float
    p: float = 5.0
    coupling: float = 1.0
    u0: WaveField = None
    halted: str | None = None

    @property
    def T(self) -> float:
        return float(self.times[-1])


# -- free term --------------------------------------------------------------

def _fresnel_moments(s: np.ndarray, beta: float):
    """Antiderivatives of ``s^k exp(i beta s^2)`` for ``k = 0, 1, 2``."""
    scale = np.sqrt(2.0 * beta / np.pi)
    S, C = fresnel(s * scale)
    j0 = (C + 1j * S) / scale
    ph = np.exp(1j * beta * s * s)
    j1 = ph / (2j * beta)
    j2 = (s * ph - j0) / (2j * beta)
    return j0, j1, j2


def _panel_integrals(s: np.ndarray, v: np.ndarray, beta: float) -> complex:
    """Integrate the quadratic interpolant through consecutive node triples."""
    s0, s1, s2 = s[:-2:2], s[1:-1:2], s[2::2]
    f0, f1, f2 = v[:-2:2], v[1:-1:2], v[2::2]
    h = s1 - s0
    d1 = (f1 - f0) / h
    d2 = (f2 - 2.0 * f1 + f0) / (2.0 * h * h)
    c2 = d2
    c1 = d1 - d2 * (s0 + s1)
    c0 = f0 - d1 * s0 + d2 * s0 * s1
    a0, a1, a2 = _fresnel_moments(s0, beta)
    b0, b1, b2 = _fresnel_moments(s2, beta)
    total = np.sum(c0 * (b0 - a0) + c1 * (b1 - a1) + c2 * (b2 - a2))
    if (s.size - 1) % 2:
        # one leftover edge cell: linear interpolant
        sa, sb, fa, fb = s[-2], s[-1], v[-2], v[-1]
        slope = (fb - fa) / (sb - sa)
        a0, a1, _ = _fresnel_moments(np.array([sa]), beta)
        b0, b1, _ = _fresnel_moments(np.array([sb]), beta)
        total += (fa - slope * sa) * (b0 - a0)[0] + slope * (b1 - a1)[0]
    return complex(total)


def _free_value_filon(u0: WaveField, x: float, t: float) -> complex:
    g = u0.grid
    beta = 1.0 / (4.0 * t)
    s = g.x - x
    c = g.center
    total = 0.0
    # halves run outward from the center node so the kink is a panel edge
    total += _panel_integrals(s[c:], u0.values[c:], beta)
    total -= _panel_integrals(s[c::-1], u0.values[c::-1], beta)
    return total / np.sqrt(4j * np.pi * t)


def _free_value_simpson(u0: WaveField, x: float, t: float) -> complex:
    g = u0.grid
    kern = np.exp(1j * (g.x - x) ** 2 / (4.0 * t)) * u0.values
    c = g.center
    total = simpson(kern[c:], dx=g.dx) + simpson(kern[c::-1], dx=g.dx)
    return complex(total / np.sqrt(4j * np.pi * t))


def _support_radius(u0: WaveField, x: float, rel: float = 1e-12) -> float:
    a = np.abs(u0.values)
    peak = a.max()
    if peak == 0:
        return 0.0
    idx = np.nonzero(a > rel * peak)[0]
    return float(max(abs(u0.x[idx[0]] - x), abs(u0.x[idx[-1]] - x)))


def simpson_switch_time(u0: WaveField, x: float = 0.0) -> float:
    """Time after which the kernel phase varies by < 1 rad per cell on the support."""
    return _support_radius(u0, x) * u0.grid.dx / 2.0


def free_value(u0: WaveField, x: float, t: float, method: str = "auto") -> complex:
    """``(e^{i t d_xx} u0)(x)`` on the whole line (``u0`` vanishes off the grid).

    ``method`` is ``"auto"``, ``"filon"`` or ``"simpson"``.
    """
    if t < 0:
        raise InvalidArgumentError("free_value needs t >= 0")
    if t == 0:
        return complex(np.interp(x, u0.x, u0.values.real) + 1j * np.interp(x, u0.x, u0.values.imag))
    if method == "auto":
        method = "simpson" if t >= simpson_switch_time(u0, x) else "filon"
    if method == "filon":
        return _free_value_filon(u0, x, t)
    if method == "simpson":
        return _free_value_simpson(u0, x, t)
    raise InvalidArgumentError(f"unknown free-term method {method!r}")


def free_trace(u0: WaveField, times: np.ndarray, x: float = 0.0, chunk: int = 256) -> np.ndarray:
    """Vectorized :func:`free_value` over many times."""
    times = np.asarray(times, dtype=float)
    out = np.empty(times.shape, dtype=complex)
    t_switch = simpson_switch_time(u0, x)
    g = u0.grid
    c = g.center
    late = np.nonzero(times >= t_switch)[0]
    for i, t in enumerate(times):
        if t < t_switch or t == 0:
            out[i] = free_value(u0, x, t, method="filon" if t > 0 else "auto")
    late = late[times[late] > 0]
    if late.size:
        # Simpson weights on each half line, kink at the shared center node
        w = np.zeros(g.n)
        w[c:] += _simpson_weights(g.n - c)
        w[:c + 1] += _simpson_weights(c + 1)[::-1]
        w *= g.dx
        phase_base = (g.x - x) ** 2 / 4.0
        wu = w * u0.values
        for start in range(0, late.size, chunk):
            idx = late[start:start + chunk]
            tt = times[idx]
            kern = np.exp(1j * np.outer(1.0 / tt, phase_base))
            out[idx] = (kern @ wu) / np.sqrt(4j * np.pi * tt)
    return out


def _simpson_weights(m: int) -> np.ndarray:
    """Composite Simpson weights for ``m`` equally spaced samples (unit spacing)."""
    eye = np.eye(m)
    return np.array([simpson(eye[i], dx=1.0) for i in range(m)]) if m < 8 else _simpson_weights_fast(m)


def _simpson_weights_fast(m: int) -> np.ndarray:
    # scipy's simpson is linear in the samples; probe it with a few basis vectors
    # at both ends, the interior pattern 4/3, 2/3 is fixed
    w = np.empty(m)
    w[1:-1:2] = 4.0 / 3.0
    w[2:-1:2] = 2.0 / 3.0
    w[0] = w[-1] = 1.0 / 3.0
    if (m - 1) % 2:
        # even sample count: reproduce scipy's end correction exactly
        for i in (0, 1, 2, m - 4, m - 3, m - 2, m - 1):
            if 0 <= i < m:
                e = np.zeros(m)
                e[i] = 1.0
                w[i] = simpson(e, dx=1.0)
    return w


# -- product integration ----------------------------------------------------

def _abel_antiderivatives(tau: np.ndarray, alpha: float):
    """Antiderivatives of ``tau^{-1/2} e^{i alpha/tau}`` and ``tau^{1/2} e^{i alpha/tau}``."""
    tau = np.asarray(tau, dtype=float)
    if alpha == 0.0:
        r = np.sqrt(tau)
        return 2.0 * r, (2.0 / 3.0) * tau * r
    a0 = np.empty(tau.shape, dtype=complex)
    zero = tau <= 0.0
    pos = ~zero
    scale = np.sqrt(2.0 * alpha / np.pi)
    # Phi(v) = int_0^v exp(i alpha u^2) du with v = tau^{-1/2}
    phi_inf = 0.5 * np.sqrt(np.pi / alpha) * np.exp(0.25j * np.pi)
    if np.any(pos):
        tp = tau[pos]
        S, C = fresnel(scale / np.sqrt(tp))
        phi = (C + 1j * S) / scale
        a0[pos] = 2.0 * np.sqrt(tp) * np.exp(1j * alpha / tp) - 4j * alpha * phi
    a0[zero] = -4j * alpha * phi_inf
    a1 = np.empty(tau.shape, dtype=complex)
    a1[pos] = (2.0 / 3.0) * tau[pos] ** 1.5 * np.exp(1j * alpha / tau[pos]) + (2j * alpha / 3.0) * a0[pos]
    a1[zero] = (2j * alpha / 3.0) * a0[zero]
    return a0, a1


def product_weights(t_nodes: np.ndarray, t: float, alpha: float = 0.0) -> np.ndarray:
    """Weights ``W_j`` with ``int_0^t K(t-s) F(s) ds ~ sum_j W_j F(t_j)``.

    ``K(tau) = tau^{-1/2} exp(i alpha / tau)``; ``F`` is the piecewise-linear
    interpolant through ``t_nodes`` (increasing, first node 0, last node t).
    """
    s = np.asarray(t_nodes, dtype=float)
    tau = t - s
    A0, A1 = _abel_antiderivatives(tau, alpha)
    # panel [s_j, s_{j+1}] <-> tau in [tau_{j+1}, tau_j]
    m0 = A0[:-1] - A0[1:]
    mt = A1[:-1] - A1[1:]
    h = s[1:] - s[:-1]
    # F(s) = F_j (s_{j+1} - s)/h + F_{j+1} (s - s_j)/h and s = t - tau
    w_left = (s[1:] * m0 - (t * m0 - mt)) / h
    w_right = ((t * m0 - mt) - s[:-1] * m0) / h
    W = np.zeros(s.size, dtype=complex if alpha else float)
    W[:-1] += w_left
    W[1:] += w_right
    return W


def _uniform_abel_weights(N: int, dt: float):
    """Convolution weights of the uniform-grid Abel product rule.

    For node ``n`` the history weight of ``F_j`` (``1 <= j <= n-1``) is
    ``om[n-j]``, the weight of ``F_0`` is ``w_hi[n-1]`` and that of ``F_n`` is
    ``om[0]``.
    """
    m = np.arange(1, N + 1, dtype=float)
    lo, hi = (m - 1.0) * dt, m * dt
    sl, sh = np.sqrt(lo), np.sqrt(hi)
    m0 = 2.0 * (sh - sl)
    # int tau^{-1/2} (tau - lo) over [lo, hi], written to avoid cancellation
    m1 = (2.0 / 3.0) * (hi * sh - lo * sl) - lo * m0
    w_lo = m0 - m1 / dt
    w_hi = m1 / dt
    om = np.zeros(N + 1)
    om[:N] += w_lo
    om[1:] += w_hi
    return om, w_hi


def boundary_trace_volterra(u0: WaveField, p: float, T: float, dt: float, coupling: float = 1.0,
                            tol: float = 1e-13, max_iters: int = 200,
                            amplitude_cap: float | None = None) -> BoundaryTrace:
    """Solve the boundary Volterra equation for ``w(t) = u(0, t)`` on ``[0, T]``.

    Raises :class:`StepFailure` if the implicit node equation does not
    converge.  With ``amplitude_cap`` set, integration stops early once
    ``|w|`` exceeds it and ``trace.halted`` records why.
    """
    if not (T >= 0 and dt > 0):
        raise InvalidArgumentError("need T >= 0 and dt > 0")
    N = int(np.ceil(T / dt - 1e-9)) if T > 0 else 0
    times = np.arange(N + 1) * dt
    f = free_trace(u0, times)
    om, w_hi = _uniform_abel_weights(N, dt) if N else (np.zeros(1), np.zeros(0))
    cc = DUHAMEL_FACTOR * coupling
    w = np.empty(N + 1, dtype=complex)
    F = np.empty(N + 1, dtype=complex)
    w[0] = u0.center_value
    F[0] = abs(w[0]) ** (p - 1.0) * w[0]
    halted = None
    last = N
    for n in range(1, N + 1):
        hist = w_hi[n - 1] * F[0]
        if n > 1:
            hist += np.dot(om[n - 1:0:-1], F[1:n])
        base = f[n] + cc * hist
        k = cc * om[0]
        z = w[n - 1]
        for _ in range(max_iters):
            z_new = base + k * abs(z) ** (p - 1.0) * z
            if not np.isfinite(z_new):
                break
            if abs(z_new - z) <= tol * max(1.0, abs(z_new)):
                z = z_new
                break
            z = z_new
        else:
            z = None
        if z is None or not np.isfinite(z):
            raise StepFailure(f"boundary fixed point failed at t={times[n]:.6g}", t=times[n])
        w[n] = z
        F[n] = abs(z) ** (p - 1.0) * z
        if amplitude_cap is not None and abs(z) > amplitude_cap:
            halted = "amplitude-cap"
            last = n
            break
    return BoundaryTrace(times=times[:last + 1], w=w[:last + 1], dt=dt, p=p, coupling=coupling,
                         u0=u0, halted=halted)


def reconstruct_from_trace(u0: WaveField, trace: BoundaryTrace, x: float, t: float) -> complex:
    """Evaluate Duhamel's formula at ``(x, t)`` from a boundary trace."""
    if not (0.0 <= t <= trace.T * (1 + 1e-12)):
        raise InvalidArgumentError(f"t={t} outside the trace range [0, {trace.T}]")
    p = trace.p
    free = free_value(u0, x, t)
    if t == 0:
        return free
    times = trace.times
    k = int(np.searchsorted(times, t * (1 - 1e-12), side="left"))
    if k < times.size and abs(times[k] - t) <= 1e-12 * max(1.0, t):
        nodes = times[:k + 1].copy()
        nodes[-1] = t
        w = trace.w[:k + 1]
    else:
        nodes = np.append(times[:k], t)
        wt = np.interp(t, times, trace.w.real) + 1j * np.interp(t, times, trace.w.imag)
        w = np.append(trace.w[:k], wt)
    F = np.abs(w) ** (p - 1.0) * w
    W = product_weights(nodes, t, alpha=x * x / 4.0)
    return free + DUHAMEL_FACTOR * trace.coupling * complex(np.dot(W, F))
