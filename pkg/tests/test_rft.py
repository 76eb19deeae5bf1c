import numpy as np
import pytest
from hypothesis import given, strategies as st

from granfin.rft import (MediumModel, SegmentKinematics, SteadyDrag, calibrate_coefficients,
                         plate_integral_force, segment_force, steady_drag_from_record)

DEG = np.pi / 180


def kin_at(theta, speed=0.03, area=0.0011):
    """Element whose tangent makes ``theta`` with a velocity along +y."""
    t = np.array([np.sin(theta), np.cos(theta)])
    return SegmentKinematics(np.zeros(2), t, np.array([0.0, speed]), area)


def test_face_on_force():
    m = MediumModel(1000.0, 300.0)
    f, torque = segment_force(m, kin_at(90 * DEG))
    assert f[1] == pytest.approx(-1.1, rel=1e-12)
    assert abs(f[0]) < 1e-12
    assert torque == 0.0


def test_zero_velocity_zero_force():
    m = MediumModel(1000.0, 300.0, mode="sine")
    f, _ = segment_force(m, SegmentKinematics(np.zeros(2), (1.0, 0.0), (0.0, 0.0), 0.001))
    assert np.all(f == 0.0)


def test_edge_on_is_tangential_only():
    m = MediumModel(1000.0, 300.0)
    k = kin_at(0.0)
    f, _ = segment_force(m, k)
    expected = -300.0 * 0.0011 * np.tanh(0.03 / m.v_eps) * k.tangent
    assert np.allclose(f, expected, rtol=0, atol=1e-15)


def test_attack_angle_range():
    assert kin_at(30 * DEG).attack_angle == pytest.approx(30 * DEG)
    assert kin_at(150 * DEG).attack_angle == pytest.approx(150 * DEG)


@pytest.mark.parametrize("tangent, velocity", [((0.0, 0.0), (0.0, 1.0)), ((1.0, 0.0), (np.nan, 0.0)),
                                               ((np.inf, 0.0), (0.0, 1.0))])
def test_invalid_kinematics(tangent, velocity):
    with pytest.raises(ValueError):
        SegmentKinematics(np.zeros(2), tangent, velocity, 0.001)


@pytest.mark.parametrize("kw", [dict(sigma_perp=0.0, sigma_par=1.0), dict(sigma_perp=1.0, sigma_par=-1.0),
                                dict(sigma_perp=1.0, sigma_par=1.0, v_eps=0.0),
                                dict(sigma_perp=1.0, sigma_par=1.0, mode="linear")])
def test_invalid_medium(kw):
    with pytest.raises(ValueError):
        MediumModel(**kw)


@given(st.floats(0, 2 * np.pi), st.floats(-1, 1), st.floats(-1, 1), st.sampled_from(["constant", "sine"]),
       st.floats(0.0, 1.0))
def test_drag_is_dissipative(angle, vx, vy, mode, ratio):
    m = MediumModel(1000.0, 1000.0 * ratio, mode=mode)
    k = SegmentKinematics(np.zeros(2), (np.cos(angle), np.sin(angle)), (vx, vy), 0.002)
    f, _ = segment_force(m, k)
    assert f @ k.velocity <= 1e-15


@pytest.mark.parametrize("mode", ["constant", "sine"])
def test_speed_insensitive(mode):
    m = MediumModel(1000.0, 300.0, v_eps=1e-3, mode=mode)
    mags = [np.hypot(*segment_force(m, kin_at(40 * DEG, v))[0]) for v in (0.01, 0.02, 0.03, 0.04, 0.05)]
    assert (max(mags) - min(mags)) / max(mags) < 1e-3


def test_plate_translation_matches_single_element():
    m = MediumModel(1000.0, 300.0)
    for theta in (90 * DEG, 45 * DEG, 10 * DEG):
        t = np.array([np.sin(theta), np.cos(theta)])
        load = plate_integral_force(m, 0.060, 0.055, np.zeros(2), t, (0.0, 0.03), n_elements=40)
        single, _ = segment_force(m, kin_at(theta, area=0.060 * 0.055))
        assert np.allclose(load.force, single, rtol=1e-10, atol=1e-14)


def test_rigid_plate_face_on_closed_form():
    m = MediumModel(1000.0, 300.0)
    load = plate_integral_force(m, 0.060, 0.055, np.zeros(2), (1.0, 0.0), (0.0, 0.03))
    assert load.force[1] == pytest.approx(-3.3, rel=1e-12)


def test_rotation_torque_closed_form():
    m = MediumModel(1000.0, 300.0, v_eps=1e-7)
    load = plate_integral_force(m, 0.060, 0.055, np.zeros(2), (1.0, 0.0), (0.0, 0.0), omega=1.0,
                                n_elements=200)
    assert load.torque == pytest.approx(-1000.0 * 0.055 * 0.060 ** 2 / 2, rel=1e-6)


def test_oblique_projection_constant_mode():
    m = MediumModel(1000.0, 300.0)
    A = 0.060 * 0.055
    t = np.array([np.sin(45 * DEG), np.cos(45 * DEG)])
    load = plate_integral_force(m, 0.060, 0.055, np.zeros(2), t, (0.0, 0.03))
    assert -load.force[1] == pytest.approx(A * (1000.0 + 300.0) * np.sqrt(0.5), rel=1e-10)


def test_plate_needs_enough_elements():
    with pytest.raises(ValueError):
        plate_integral_force(MediumModel(1.0, 1.0), 0.06, 0.055, np.zeros(2), (1, 0), (0, 1), n_elements=10)


def synthetic(angles, sp=1400.0, sl=300.0, mode="constant", area=0.0033, noise=None, rng=None):
    out = []
    for a in angles:
        s, c = abs(np.sin(a)), abs(np.cos(a))
        if mode == "sine":
            s, c = s * s, c * c
        f = area * (sp * s + sl * c)
        if noise:
            f += noise * f * rng.standard_normal()
        out.append(SteadyDrag(a, f, area))
    return out


@pytest.mark.parametrize("mode", ["constant", "sine"])
def test_calibration_round_trip(mode):
    cal = calibrate_coefficients(synthetic([0.0, 45 * DEG, 90 * DEG], mode=mode), mode=mode)
    assert cal.medium.sigma_perp == pytest.approx(1400.0, rel=1e-3)
    assert cal.medium.sigma_par == pytest.approx(300.0, rel=1e-3)
    assert cal.rms_residual < 1e-9


def test_calibration_single_angle_rejected():
    with pytest.raises(ValueError, match="two distinct"):
        calibrate_coefficients(synthetic([90 * DEG, 90 * DEG]))


def test_calibration_noise_robust():
    # 1% noise on each record, seven angles from edge-on to face-on
    angles = np.arange(0, 91, 15) * DEG
    worst = 0.0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        cal = calibrate_coefficients(synthetic(angles, noise=0.01, rng=rng))
        worst = max(worst, abs(cal.medium.sigma_perp / 1400 - 1), abs(cal.medium.sigma_par / 300 - 1))
    assert worst < 0.05


def test_calibration_from_simulated_records(rigid):
    from granfin.scenarios import DragProtocol, run_drag

    m = MediumModel(1400.0, 300.0)
    samples = []
    for a in (5 * DEG, 45 * DEG, 90 * DEG):
        rec = run_drag(rigid, m, DragProtocol(0.03, 0.03, a, cycles=2)).record
        samples.append(steady_drag_from_record(rec, rigid.area))
    cal = calibrate_coefficients(samples)
    assert cal.medium.sigma_perp == pytest.approx(1400.0, rel=5e-3)
    assert cal.medium.sigma_par == pytest.approx(300.0, rel=5e-3)
