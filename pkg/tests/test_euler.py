import math

import numpy as np
import pytest

from vvlab import geometry as geo
from vvlab.errors import ConfigError, InvalidProfileError
from vvlab.euler import (
    LaurentProfile,
    ShearProfile,
    boundary_data_g,
    channel_base_flow,
    euler_residual,
    manufactured_flow,
    oscillating_shear_case,
    potential_vortex,
    rigid_rotation,
    swirl_base_flow,
)


def test_rigid_rotation_curl(annulus):
    flow = rigid_rotation(2.5, annulus)
    r = annulus.volume_grid(64)
    cu = flow.curl(0.0, r)
    assert np.allclose(cu[2], 5.0)          # (1/r) d(Omega r^2)/dr = 2 Omega
    assert np.allclose(cu[:2], 0.0)


def test_potential_vortex_curl_free(annulus):
    flow = potential_vortex(1.0, annulus)
    cu = flow.curl(0.0, annulus.volume_grid(64))
    assert np.allclose(cu, 0.0, atol=1e-14)


def test_swirl_residual_vanishes(annulus):
    prof = LaurentProfile({-1: 0.3, 0: 0.1, 1: 1.0, 2: -0.2})
    flow = swirl_base_flow(prof, annulus)
    assert euler_residual(flow, annulus.volume_grid(64)) < 1e-12


def test_swirl_fd_pressure_consistency(annulus):
    prof = LaurentProfile({1: 1.0, -1: 0.5})
    flow = swirl_base_flow(prof, annulus)
    res = euler_residual(flow, annulus.volume_grid(4096), mode="fd")
    assert res < 1e-5  # O(h^2) consistency of the integrated pressure


def test_channel_uniform_flow(channel):
    flow = channel_base_flow(ShearProfile(poly=(1.0,)), channel)
    y = channel.volume_grid(64)
    assert np.allclose(flow.curl(0.0, y), 0.0)
    assert euler_residual(flow, y) < 1e-14


def test_channel_cosine_wall_curl(channel):
    # U = cos(pi y / H): U'(0) = U'(H) = 0, so the wall curl vanishes
    flow = channel_base_flow(ShearProfile(cosines=((1.0, 1),), h=channel.h),
                             channel)
    bd = boundary_data_g(flow, channel)
    assert np.allclose(bd["lower"].g, 0.0, atol=1e-14)
    assert np.allclose(bd["upper"].g, 0.0, atol=1e-14)


def test_channel_parabola_wall_data(channel):
    # U = y (H - y): curl = -(H - 2y) e_z, nonzero at the walls
    h = channel.h
    flow = channel_base_flow(ShearProfile(poly=(0.0, h, -1.0)), channel)
    bd = boundary_data_g(flow, channel)
    assert np.abs(bd["lower"].g).max() == pytest.approx(h)
    assert np.abs(bd["upper"].g).max() == pytest.approx(h)


def test_manufactured_wrong_pressure_negative_control(channel):
    ok = manufactured_flow(oscillating_shear_case(channel), channel)
    assert euler_residual(ok, channel.volume_grid(64), t=0.3) < 1e-14
    bad = manufactured_flow(
        oscillating_shear_case(channel, pressure_bug=0.5), channel)
    assert euler_residual(bad, channel.volume_grid(64), t=0.3) > 0.1


def test_boundary_data_vortex_zero(annulus):
    bd = boundary_data_g(potential_vortex(1.0, annulus), annulus)
    for wall in bd.values():
        assert np.allclose(wall.g, 0.0, atol=1e-14)


def test_boundary_data_rigid_signs(annulus):
    # outer wall, n = -e_rad: curl x n = 2 Omega e_z x (-e_rad) = -2 Omega e_th
    bd = boundary_data_g(rigid_rotation(1.0, annulus), annulus)
    outer = bd["outer"]
    slot = outer.tangent_names.index("theta")
    assert outer.g[slot, 0] == pytest.approx(-2.0)
    inner = bd["inner"]
    slot = inner.tangent_names.index("theta")
    assert inner.g[slot, 0] == pytest.approx(2.0)


def test_boundary_data_matches_componentwise_cross(annulus):
    # brute-force cross product in the (rad, theta, axial) frame
    prof = LaurentProfile({1: 1.0, 2: 0.5})
    flow = swirl_base_flow(prof, annulus)
    bd = boundary_data_g(flow, annulus)
    for w in annulus.walls():
        cu = flow.curl(0.0, np.array([w.coord]))[:, 0]
        cross = np.array([
            cu[1] * w.normal[2] - cu[2] * w.normal[1],
            cu[2] * w.normal[0] - cu[0] * w.normal[2],
            cu[0] * w.normal[1] - cu[1] * w.normal[0],
        ])
        comp = {n: i for i, n in enumerate(annulus.comp_names)}
        for slot, name in enumerate(w.tangent_names):
            assert bd[w.wall_id].g[slot, 0] == pytest.approx(cross[comp[name]])


def test_boundary_data_linear_in_flow(annulus):
    g1 = boundary_data_g(swirl_base_flow(LaurentProfile({1: 1.0}), annulus),
                         annulus)
    g2 = boundary_data_g(swirl_base_flow(LaurentProfile({2: 1.0}), annulus),
                         annulus)
    g12 = boundary_data_g(
        swirl_base_flow(LaurentProfile({1: 2.0, 2: -3.0}), annulus), annulus)
    for wall in g1:
        assert np.allclose(g12[wall].g, 2.0 * g1[wall].g - 3.0 * g2[wall].g,
                           atol=1e-13)


def test_normal_velocity_zero_at_walls(annulus, channel):
    for flow, geom in ((rigid_rotation(1.0, annulus), annulus),
                       (channel_base_flow(ShearProfile(poly=(0.0, 1.0)),
                                          channel), channel)):
        for w in geom.walls():
            u = flow.velocity(0.0, np.array([w.coord]))[:, 0]
            assert abs(float(u @ w.normal)) == 0.0


def test_stretching_coefficient_vanishes(annulus):
    flow = rigid_rotation(1.0, annulus)
    s = np.linspace(1.0, 1.45, 8)
    assert np.all(flow.f_stretch(0.0, s) == 0.0)


def test_coupling_matrix_vanishes_for_swirl(annulus):
    flow = swirl_base_flow(LaurentProfile({-1: 1.0, 1: 2.0}), annulus)
    a = flow.coupling_matrix(0.0, "inner", np.linspace(1.0, 1.45, 5))
    assert np.all(a == 0.0)


def test_wrong_geometry_rejected(annulus, channel):
    with pytest.raises(ConfigError):
        swirl_base_flow(LaurentProfile({1: 1.0}), channel)
    with pytest.raises(ConfigError):
        channel_base_flow(ShearProfile(poly=(1.0,)), annulus)


def test_profile_validation():
    with pytest.raises(ConfigError):
        LaurentProfile({-2: 1.0})


def test_nonfinite_profile_rejected(annulus, channel):
    with pytest.raises(InvalidProfileError):
        swirl_base_flow(LaurentProfile({1: float("inf")}), annulus)
    with pytest.raises(InvalidProfileError):
        channel_base_flow(ShearProfile(poly=(float("nan"),)), channel)
