import numpy as np
import pytest

from deltanls import (InvalidArgumentError, PhysParams, Scheme, UnsupportedRegimeError, WaveField,
                      make_grid, sample_gaussian, sample_ground_state, sample_phase_modulated)


def test_smallest_grid():
    g = make_grid(1.0, 3)
    assert list(g.x) == [-1.0, 0.0, 1.0]
    assert g.dx == 1.0


def test_reference_grid_spacing():
    g = make_grid(20.0, 4097)
    assert g.dx == 40.0 / 4096
    assert g.x[g.center] == 0.0
    assert np.all(np.diff(g.x) > 0)
    np.testing.assert_array_equal(g.x, -g.x[::-1])


@pytest.mark.parametrize("L,n", [(20.0, 4096), (0.0, 5), (-1.0, 5), (1.0, 1), (1.0, 4.5)])
def test_grid_rejects_bad_arguments(L, n):
    with pytest.raises(InvalidArgumentError):
        make_grid(L, n)


def test_ground_state_samples():
    g = make_grid(1.0, 3)
    q5 = sample_ground_state(g, 5)
    assert q5.center_value == pytest.approx(1.189207, abs=1e-6)
    assert q5.values[2].real == pytest.approx(2 ** 0.25 * np.exp(-1.0), abs=1e-12)
    assert abs(q5.values[2]) == pytest.approx(0.4374848, abs=1e-7)
    assert sample_ground_state(g, 3).center_value == pytest.approx(np.sqrt(2.0), abs=1e-15)


def test_ground_state_requires_p_above_one():
    with pytest.raises(InvalidArgumentError):
        sample_ground_state(make_grid(1.0, 3), 1.0)


def test_phase_modulation_keeps_modulus(ref_grid, Q):
    psi = sample_phase_modulated(ref_grid, Q, 0.25)
    np.testing.assert_allclose(np.abs(psi.values), Q.values.real, rtol=1e-15)
    assert psi.values[ref_grid.center + 100] == pytest.approx(
        Q.values[ref_grid.center + 100] * np.exp(0.25j * ref_grid.x[ref_grid.center + 100] ** 2))


def test_phase_modulation_grid_mismatch(Q):
    with pytest.raises(InvalidArgumentError):
        sample_phase_modulated(make_grid(20.0, 101), Q, 0.1)


def test_wavefield_rejects_nonfinite():
    g = make_grid(1.0, 3)
    with pytest.raises(InvalidArgumentError):
        WaveField(g, [0.0, np.nan, 0.0])
    with pytest.raises(InvalidArgumentError):
        WaveField(g, [0.0, 1.0])


def test_wavefield_is_immutable():
    f = WaveField(make_grid(1.0, 3), [1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        f.values[0] = 5.0


def test_boundary_smallness(Q):
    assert Q.is_boundary_small(1e-8)
    wide = sample_gaussian(Q.grid, width=15.0)
    assert not wide.is_boundary_small(1e-8)


def test_physparams_validation():
    assert PhysParams().scheme is Scheme.CRANK_NICOLSON
    assert PhysParams(scheme="split").scheme is Scheme.STRANG_SPLIT
    with pytest.raises(UnsupportedRegimeError):
        PhysParams(p=3.0)
    with pytest.raises(InvalidArgumentError):
        PhysParams(dt=0.0)
    with pytest.raises(InvalidArgumentError):
        PhysParams(fixed_point_tol=-1.0)
