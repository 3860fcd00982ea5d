import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mcswitch.core import ChannelConfig, delta_from_indices, preset
from mcswitch.dynamics import (PlantState, accel, cube_plant, euler_rate_Q, point_plant, pusher_plant,
                               qs_velocity, rot2, square_plant, step)
from mcswitch.errors import ConfigError, NumericalFailure

M, J, L, UU = 0.2, 0.05, 0.3, 3.0


def e1(m=8):
    return delta_from_indices([0], m)


def test_zero_input_zero_accel():
    plant = square_plant(M, J, L)
    a = accel(plant, PlantState(np.zeros(3), np.zeros(3)), e1(), np.zeros(8))
    assert np.array_equal(a, np.zeros(3))


def test_square_first_channel_at_zero_angle():
    plant = square_plant(M, J, L, u_u=UU)
    u = np.zeros(8)
    u[0] = UU
    a = accel(plant, PlantState(np.zeros(3), np.zeros(3)), e1(), u)
    assert np.allclose(a, [0.0, UU / M, -L * UU / J])


def test_square_rotated_force():
    plant = square_plant(M, J, L, u_u=UU)
    u = np.zeros(8)
    u[0] = UU
    a0 = accel(plant, PlantState(np.zeros(3), np.zeros(3)), e1(), u)
    a = accel(plant, PlantState(np.array([0.0, 0.0, np.pi / 2]), np.zeros(3)), e1(), u)
    assert np.allclose(a[:2], rot2(np.pi / 2) @ a0[:2])
    assert a[2] == pytest.approx(a0[2])


def test_square_G_diag_and_det():
    plant = square_plant(M, J, L)
    assert np.allclose(plant.G(np.zeros(3)), np.diag([1 / M, 1 / M, 1 / J]))
    for th in np.linspace(-3, 3, 7):
        assert np.linalg.det(plant.G(np.array([0.0, 0.0, th]))) == pytest.approx(1 / (M**2 * J))


def test_cube_at_rest():
    Jm = np.diag([0.1, 0.2, 0.3])
    plant = cube_plant(0.2, Jm)
    z = np.zeros(6)
    assert np.array_equal(plant.f(z, z), z)
    assert np.allclose(plant.G(z)[3:, 3:], np.linalg.inv(Jm))
    assert np.allclose(plant.G(z)[:3, :3], np.eye(3) / 0.2)


def test_cube_gyroscopic_vanishes_on_principal_axis():
    plant = cube_plant(0.2, np.diag([0.1, 0.2, 0.3]))
    v = np.array([0.0, 0.0, 0.0, 0.7, 0.0, 0.0])  # roll rate only, eta = 0: omega = e_x * 0.7
    assert np.allclose(plant.f(np.zeros(6), v), 0.0, atol=1e-15)


@given(st.lists(st.floats(-1.2, 1.2), min_size=3, max_size=3),
       st.lists(st.floats(-2, 2), min_size=3, max_size=3))
def test_cube_matches_body_frame_euler_equations(eta, eta_dot):
    """eta'' from f + G tau reproduces J w' + w x J w = tau with w = Q eta'."""
    Jm = np.array([[0.1, 0.01, 0.0], [0.01, 0.2, 0.02], [0.0, 0.02, 0.3]])
    plant = cube_plant(0.2, Jm)
    eta, eta_dot = np.array(eta), np.array(eta_dot)
    q = np.concatenate([np.zeros(3), eta])
    v = np.concatenate([np.zeros(3), eta_dot])
    tau = np.array([0.3, -0.2, 0.1])
    wrench = np.concatenate([np.zeros(3), tau])
    eta_ddot = (plant.f(q, v) + plant.G(q) @ wrench)[3:]
    # finite-difference Q' along the motion
    h = 1e-6
    Q = euler_rate_Q(eta)
    Qdot = (euler_rate_Q(eta + h * eta_dot) - euler_rate_Q(eta - h * eta_dot)) / (2 * h)
    w = Q @ eta_dot
    w_dot = Q @ eta_ddot + Qdot @ eta_dot
    assert np.allclose(Jm @ w_dot + np.cross(w, Jm @ w), tau, atol=1e-6)


def test_torque_free_energy_conserved():
    Jm = np.diag([0.1, 0.2, 0.3])
    plant = cube_plant(0.2, Jm, u_u=1.0)
    state = PlantState(np.zeros(6), np.array([0, 0, 0, 0.3, 0.1, 0.2]), 0.0)

    def energy(s):
        w = euler_rate_Q(s.q[3:]) @ s.v[3:]
        return 0.5 * w @ Jm @ w

    E0 = energy(state)
    for _ in range(2000):
        state = step(plant, state, e1(24), np.zeros(24), 1e-3)
    assert energy(state) == pytest.approx(E0, rel=1e-9)


def test_cube_euler_guard():
    plant = cube_plant(0.2)
    state = PlantState(np.array([0, 0, 0, 0, np.deg2rad(84.99), 0]), np.array([0, 0, 0, 0, 10.0, 0]))
    with pytest.raises(NumericalFailure):
        step(plant, state, e1(24), np.zeros(24), 1e-3)


def test_pusher_velocity():
    plant = pusher_plant(l=0.4)
    u = np.zeros(8)
    u[0] = 1.0
    qd = qs_velocity(plant, PlantState(np.zeros(3)), e1(), u)
    assert np.allclose(qd, [0.0, 1 / plant.d_f, -0.4 / plant.d_tau])
    qd_pi = qs_velocity(plant, PlantState(np.array([0.0, 0.0, np.pi])), e1(), u)
    assert np.allclose(qd_pi[:2], -qd[:2])
    assert qd_pi[2] == pytest.approx(qd[2])


def test_pusher_friction_scalars():
    plant = pusher_plant(m_obj=10, mu=0.1, g=9.81, c=0.6, half_side=0.5)
    assert plant.d_f == pytest.approx(9.81)
    assert plant.d_tau == pytest.approx(0.6 * 0.5 * np.sqrt(2) * 9.81)


def test_pusher_zero_input():
    plant = pusher_plant()
    s = step(plant, PlantState(np.array([0.1, 0.2, 0.3]), None, 0.0), e1(), np.zeros(8), 0.005)
    assert np.array_equal(s.q, [0.1, 0.2, 0.3])
    assert s.t == 0.005


def test_zero_dynamics_zero_input_keeps_state():
    plant = point_plant(preset("axes2d", 1, 1.0))
    s0 = PlantState(np.array([0.5, -0.5]), np.zeros(2), 1.0)
    s1 = step(plant, s0, [1, 0, 0, 0], np.zeros(4), 0.01)
    assert np.array_equal(s1.q, s0.q) and np.array_equal(s1.v, s0.v)
    assert s1.t == pytest.approx(1.01)


@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(0.5, 3), st.floats(1e-3, 0.5))
def test_rk4_exact_for_constant_acceleration(q0, v0, u, dt):
    plant = point_plant(ChannelConfig(np.array([[1.0, -1.0]]), 1, 3.0))
    s = step(plant, PlantState(np.array([q0]), np.array([v0])), [1, 0], np.array([u, 0.0]), dt)
    assert s.q[0] == pytest.approx(q0 + v0 * dt + 0.5 * u * dt**2, rel=1e-12, abs=1e-12)
    assert s.v[0] == pytest.approx(v0 + u * dt, rel=1e-12, abs=1e-12)


def _rollout(plant, dt, T=10.0):
    state = PlantState(np.zeros(3), np.zeros(3), 0.0)
    delta = delta_from_indices([0], 8)
    u = np.zeros(8)
    u[0] = 0.05
    for k in range(int(round(T / dt))):
        state = step(plant, state, delta, u, dt, t_next=(k + 1) * dt)
    return state.q


def test_square_step_refinement():
    plant = square_plant(M, J, L)
    assert np.max(np.abs(_rollout(plant, 1e-3) - _rollout(plant, 1e-4))) < 1e-6


def test_input_shape_and_bounds():
    plant = square_plant(M, J, L, u_u=UU)
    s = PlantState(np.zeros(3), np.zeros(3))
    with pytest.raises(ValueError):
        step(plant, s, e1(), np.zeros(7), 1e-3)
    with pytest.warns(RuntimeWarning):
        step(plant, s, e1(), np.full(8, UU + 1), 1e-3)
    with pytest.raises(ValueError):
        step(plant, s, e1(), np.zeros(8), 0.0)


def test_plant_parameter_validation():
    with pytest.raises(ConfigError):
        square_plant(m_obj=-1)
    with pytest.raises(ConfigError):
        cube_plant(J=np.diag([1.0, -1.0, 1.0]))
    with pytest.raises(ConfigError):
        pusher_plant(c=2.0)
    with pytest.raises(ConfigError):
        pusher_plant(l=0.6, half_side=0.5)
