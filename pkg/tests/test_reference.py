import numpy as np
import pytest

from dmpcollab import dmp, quat
from dmpcollab.reference import InertiaParams, ReferenceModel, target_orientation


def make_ref(models, demo, inertia=None):
    return ReferenceModel(models[0], models[1], demo.positions[0], demo.orientations[0], inertia)


def true_theta(demo):
    Q0 = demo.orientations[0]
    return (np.r_[demo.positions[-1], demo.duration],
            np.r_[quat.quat_log(quat.relative(demo.orientations[-1], Q0)), demo.duration])


def test_unforced_reference_follows_dmp_rollout(models, demo):
    ref = make_ref(models, demo)
    th_p, th_o = true_theta(demo)
    dt = 0.002
    n = int(round(demo.duration / dt))
    for _ in range(n):
        ref.step(th_p, th_o, np.zeros(3), np.zeros(3), dt)
    roll = dmp.rollout(models[0], models[1], demo.positions[0], demo.orientations[0],
                       demo.positions[-1], demo.orientations[-1], demo.duration, demo.duration,
                       dt=dt, duration=demo.duration)
    # translation uses the same integrator; rotation integrates omega instead of q'
    assert np.allclose(ref.state.p, roll.p[-1], atol=1e-12)
    assert quat.angle_between(ref.state.Q, roll.Q[-1]) < 1e-3


def test_force_enters_through_inertia(models, demo):
    inertia = InertiaParams([2.0, 4.0, 8.0], [0.1, 0.2, 0.4])
    ref = make_ref(models, demo, inertia)
    th_p, th_o = true_theta(demo)
    f, tq = np.array([1.0, -2.0, 3.0]), np.array([0.05, 0.0, -0.1])
    acc_hat = ref.accel_hat(th_p, th_o)
    pddot, omegadot = ref.step(th_p, th_o, f, tq, 0.002)
    assert np.allclose(pddot - acc_hat[0], f / inertia.M_p, atol=1e-14)
    assert np.allclose(omegadot - acc_hat[1], tq / inertia.M_o, atol=1e-14)


def test_log_coordinate_identity_and_cache(models, demo, rng):
    ref = make_ref(models, demo)
    th_p, th_o = true_theta(demo)
    for _ in range(500):
        tq = 0.3 * rng.standard_normal(3)
        ref.step(th_p, th_o, rng.standard_normal(3), tq, 0.002, check=True)
    ref.state.check(tol=1e-9)
    assert abs(np.linalg.norm(ref.state.Q) - 1.0) < 1e-12


def test_clock_only_advances_when_asked(models, demo):
    ref = make_ref(models, demo)
    th_p, th_o = true_theta(demo)
    ref.step(th_p, th_o, np.zeros(3), np.zeros(3), 0.002, advance_clock=False)
    assert ref.state.t_clock == 0.0
    ref.step(th_p, th_o, np.zeros(3), np.zeros(3), 0.002)
    assert ref.state.t_clock == 0.002


def test_at_rest_on_target_stays_there(models, demo):
    ref = make_ref(models, demo)
    th_p = np.r_[demo.positions[0], 5.0]
    th_o = np.r_[np.zeros(3), 5.0]
    for _ in range(100):
        ref.step(th_p, th_o, np.zeros(3), np.zeros(3), 0.002)
    assert np.array_equal(ref.state.p, demo.positions[0])
    assert np.allclose(ref.state.Q, demo.orientations[0], atol=1e-15)


def test_target_orientation_reconstruction():
    Q0 = quat.quat_exp([0.1, 0.2, 0.3])
    Qg = quat.quat_exp([-0.4, 0.5, 0.2])
    theta_o = np.r_[quat.quat_log(quat.relative(Qg, Q0)), 3.0]
    assert quat.angle_between(target_orientation(theta_o, Q0), Qg) < 1e-12


def test_inertia_validation():
    assert np.array_equal(InertiaParams(np.diag([1.0, 2, 3]), 0.5).M_p, [1.0, 2, 3])
    with pytest.raises(ValueError):
        InertiaParams([1.0, 0.0, 1.0])
