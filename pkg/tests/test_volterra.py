import numpy as np
import pytest

from deltanls import (InvalidArgumentError, PhysParams, StepFailure, boundary_trace_volterra, evolve,
                      free_trace, free_value, reconstruct_from_trace, sample_gaussian)
from deltanls.volterra import _uniform_abel_weights, product_weights, simpson_switch_time

from oracles import free_gaussian, free_q, free_q_center, q_amplitude

P = 5.0


def test_free_trace_of_ground_state_matches_erfc_oracle(Q):
    t = np.array([1e-4, 1e-3, 0.01, 0.1, 0.5, 1.0, 5.0, 20.0, 40.0])
    err = np.abs(free_trace(Q, t) - free_q_center(t))
    assert err.max() < 1e-6


def test_free_value_both_methods_agree_near_switch(Q):
    t = 1.2 * simpson_switch_time(Q)
    a = free_value(Q, 0.0, t, method="filon")
    b = free_value(Q, 0.0, t, method="simpson")
    assert abs(a - b) < 1e-8


def test_free_value_off_center(Q):
    for x in (0.5, 1.0, 3.0):
        for t in (0.01, 0.5, 3.0):
            assert abs(free_value(Q, x, t) - free_q(x, t)) < 1e-7


def test_free_value_gaussian(ref_grid):
    f = sample_gaussian(ref_grid, 1.0, 1.0)
    for x, t in ((0.0, 0.3), (1.5, 1.0)):
        assert abs(free_value(f, x, t) - free_gaussian(x, t)) < 1e-9


def test_free_value_rejects_negative_time(Q):
    with pytest.raises(InvalidArgumentError):
        free_value(Q, 0.0, -1.0)
    with pytest.raises(InvalidArgumentError):
        free_value(Q, 0.0, 1.0, method="bogus")


def test_abel_weights_integrate_polynomials_exactly():
    dt, N = 0.01, 50
    om, whi = _uniform_abel_weights(N, dt)
    t = N * dt
    s = np.arange(N + 1) * dt
    for F, exact in ((np.ones_like(s), 2 * np.sqrt(t)), (s, 4 / 3 * t ** 1.5)):
        approx = om[0] * F[N] + np.dot(om[N - 1:0:-1], F[1:N]) + whi[N - 1] * F[0]
        assert approx == pytest.approx(exact, rel=1e-12)


def test_product_weights_match_uniform_weights():
    dt, N = 0.01, 20
    om, whi = _uniform_abel_weights(N, dt)
    s = np.arange(N + 1) * dt
    W = product_weights(s, N * dt)
    np.testing.assert_allclose(W[1:N], om[N - 1:0:-1], rtol=1e-12)
    assert W[0] == pytest.approx(whi[N - 1], rel=1e-12)
    assert W[N] == pytest.approx(om[0], rel=1e-12)


def test_oscillatory_weights_reduce_to_abel_as_x_vanishes():
    s = np.linspace(0.0, 0.5, 11)
    W0 = product_weights(s, 0.5)
    W = product_weights(s, 0.5, alpha=1e-12)
    np.testing.assert_allclose(W, W0, atol=1e-5)


def test_trace_starts_at_center_value(Q):
    tr = boundary_trace_volterra(Q, P, 0.01, 1e-3)
    assert tr.w[0] == Q.center_value
    assert tr.times.size == 11


def test_zero_coupling_gives_free_trace(Q):
    tr = boundary_trace_volterra(0.5 * Q, P, 0.5, 1e-3, coupling=0.0)
    np.testing.assert_allclose(tr.w[1:], 0.5 * free_q_center(tr.times[1:]), atol=1e-6)


def test_ground_state_trace(Q):
    tr = boundary_trace_volterra(Q, P, 1.0, 1e-4)
    exact = q_amplitude(P) * np.exp(1j * tr.times)
    assert np.max(np.abs(tr.w - exact)) < 1e-3


def test_second_order_in_dt(Q):
    errs = []
    for dt in (2e-3, 1e-3):
        tr = boundary_trace_volterra(Q, P, 0.2, dt)
        errs.append(abs(tr.w[-1] - q_amplitude(P) * np.exp(0.2j)))
    assert errs[0] / errs[1] > 3.0


def test_cross_check_against_cn(Q):
    u0 = 0.5 * Q
    tr = boundary_trace_volterra(u0, P, 1.0, 1e-4)
    cn = evolve(u0, PhysParams(p=P, dt=1e-3), 1.0, record_stride=10 ** 6)
    vol = tr.w[::10]
    rel = np.abs(vol - cn.trace_w) / np.abs(vol)
    assert rel.max() <= 1e-2


def test_fixed_point_failure_raises(Q):
    with pytest.raises(StepFailure):
        boundary_trace_volterra(Q, P, 0.01, 1e-3, max_iters=1, tol=1e-300)


def test_amplitude_cap_halts(Q):
    tr = boundary_trace_volterra(2.0 * Q, P, 1.0, 1e-4, amplitude_cap=3.0)
    assert tr.halted == "amplitude-cap"
    assert abs(tr.w[-1]) > 3.0


def test_reconstruct_consistency_at_origin(Q):
    tr = boundary_trace_volterra(Q, P, 0.5, 1e-3)
    z = reconstruct_from_trace(Q, tr, 0.0, 0.5)
    assert abs(z - tr.w[-1]) < 1e-9


def test_reconstruct_zero_coupling_is_free(Q):
    tr = boundary_trace_volterra(Q, P, 0.5, 1e-3, coupling=0.0)
    assert abs(reconstruct_from_trace(Q, tr, 1.0, 0.5) - free_q(1.0, 0.5)) < 1e-7


def test_reconstruct_ground_state(Q):
    tr = boundary_trace_volterra(Q, P, 0.5, 1e-4)
    z = reconstruct_from_trace(Q, tr, 1.0, 0.5)
    assert abs(z - np.exp(0.5j) * q_amplitude(P) * np.exp(-1.0)) < 1e-3


def test_reconstruct_between_nodes(Q):
    tr = boundary_trace_volterra(Q, P, 0.5, 1e-3)
    z = reconstruct_from_trace(Q, tr, 1.0, 0.3005)
    assert abs(z - np.exp(0.3005j) * q_amplitude(P) * np.exp(-1.0)) < 1e-3


def test_reconstruct_out_of_range(Q):
    tr = boundary_trace_volterra(Q, P, 0.1, 1e-3)
    with pytest.raises(InvalidArgumentError):
        reconstruct_from_trace(Q, tr, 0.0, 0.2)
    with pytest.raises(InvalidArgumentError):
        reconstruct_from_trace(Q, tr, 0.0, -0.1)
