import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lpvtube.vehicle import (LateralBounds, VehicleParams, build_lateral_lpv, build_longitudinal,
                             continuous_lateral, lateral_coefficients)


def test_coefficients_at_25():
    k = lateral_coefficients(VehicleParams(), 25.0)
    # -(2*153000 + 2*191000) / (2500 * 25)
    assert k.a == pytest.approx(-11.008, abs=1e-12)
    assert k.b == pytest.approx(275.2, abs=1e-12)


def test_speed_dependent_entries_scale_with_inverse_speed():
    P = VehicleParams()
    k1, k2 = lateral_coefficients(P, 15.0), lateral_coefficients(P, 30.0)
    for name in ("a", "c", "d", "f", "h"):
        assert getattr(k1, name) == pytest.approx(2 * getattr(k2, name), rel=1e-12)
    for name in ("b", "e"):
        assert getattr(k1, name) == getattr(k2, name)


def test_nonpositive_speed_rejected():
    with pytest.raises(ValueError):
        lateral_coefficients(VehicleParams(), 0.0)


def test_lpv_matches_euler_discretization():
    P = VehicleParams()
    model = build_lateral_lpv(P)
    for v in np.linspace(15.0, 30.0, 100):
        Ac, Bc, _ = continuous_lateral(P, v)
        np.testing.assert_allclose(model.A(1.0 / v), np.eye(4) + P.t_s * Ac, atol=1e-12)
        np.testing.assert_allclose(model.B, P.t_s * Bc, atol=1e-12)


def test_scheduling_range_and_sets():
    model = build_lateral_lpv(VehicleParams())
    assert model.p_min == pytest.approx(1 / 30)
    assert model.p_max == pytest.approx(1 / 15)
    assert model.vertex_params == (model.p_min, model.p_max)
    assert np.all(model.X.contains(np.array([4.0, 10.0, np.pi / 2, np.pi / 0.3])))
    assert not np.all(model.X.contains(np.array([4.01, 0.0, 0.0, 0.0])))
    assert np.all(model.W.contains(np.full(4, 0.01)))


def test_lane_geometry_limit():
    assert VehicleParams().e_y_max == 4.0
    assert LateralBounds().e_y_max == 4.0


def test_invalid_parameters():
    with pytest.raises(ValueError):
        VehicleParams(m=-1.0)
    with pytest.raises(ValueError):
        build_lateral_lpv(VehicleParams(), v_min=30.0, v_max=15.0)


def test_longitudinal_matrices_and_step():
    lon = build_longitudinal(VehicleParams())
    np.testing.assert_array_equal(lon.Ad, [[1.0, 0.1], [0.0, 1.0]])
    np.testing.assert_array_equal(lon.Bd, [[0.0], [0.1]])
    s, v = lon.step(1.0, 25.0, -6.0)
    assert s == pytest.approx(3.5)
    assert v == pytest.approx(24.4)


@settings(max_examples=50, deadline=None)
@given(v=st.floats(15.0, 30.0), x=st.lists(st.floats(-1, 1), min_size=4, max_size=4),
       u=st.floats(-0.5, 0.5))
def test_step_is_affine_in_state_and_input(v, x, u):
    model = build_lateral_lpv(VehicleParams())
    x = np.array(x)
    p = 1.0 / v
    lhs = model.step(x, u, p)
    np.testing.assert_allclose(lhs, model.step(x, 0.0, p) + model.step(np.zeros(4), u, p),
                               atol=1e-12)
