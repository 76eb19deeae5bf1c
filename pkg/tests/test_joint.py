import numpy as np
import pytest
from hypothesis import given, strategies as st

from granfin.joint import JointLaw, joint_torque, spring_energy

finite = st.floats(-3.0, 3.0, allow_nan=False)
stiff = st.floats(0.0, 100.0, allow_nan=False)


def test_soft_branch_arithmetic():
    assert joint_torque(JointLaw(0.05), 0.1, 0.0) == pytest.approx(-0.005)


def test_undeformed_is_torque_free():
    assert joint_torque(JointLaw(0.05), 0.0, 0.0) == 0.0


def test_stop_repels():
    law = JointLaw(0.05, k_stop=1e4)
    assert joint_torque(law, -0.01, 0.0) == pytest.approx(100.0)


def test_damping_opposes_rate():
    law = JointLaw(0.1, damping=0.02)
    assert joint_torque(law, 0.0, 2.0) == pytest.approx(-0.04)


def test_mirrored_law_is_reflected():
    law = JointLaw(0.1, 50.0, 0.01)
    m = JointLaw(0.1, 50.0, 0.01, mirrored=True)
    g = np.linspace(-0.5, 0.5, 11)
    assert np.allclose(joint_torque(m, g, g), -joint_torque(law, -g, -g))


@pytest.mark.parametrize("kw", [dict(k_soft=-1.0), dict(k_soft=2.0, k_stop=1.0),
                                dict(k_soft=1.0, damping=-0.1), dict(k_soft=np.nan)])
def test_invalid_laws(kw):
    with pytest.raises(ValueError):
        JointLaw(**kw)


@given(stiff, stiff, st.floats(-0.5, 0.5))
def test_continuous_at_stop(k1, dk, stop):
    law = JointLaw(k1, k1 + dk, stop_angle=stop)
    eps = 1e-9
    assert abs(joint_torque(law, stop + eps) - joint_torque(law, stop - eps)) < 1e-6


@given(stiff, stiff, finite)
def test_energy_nonnegative_and_zero_only_flat(k1, dk, g):
    law = JointLaw(k1, k1 + dk)
    e = spring_energy(law, g)
    assert e >= 0.0
    if abs(g) > 1e-6 and k1 > 1e-6:
        assert e > 0.0


@given(stiff, stiff, finite)
def test_torque_is_minus_energy_gradient(k1, dk, g):
    law = JointLaw(k1, k1 + dk)
    h = 1e-6
    grad = (spring_energy(law, g + h) - spring_energy(law, g - h)) / (2 * h)
    assert joint_torque(law, g) == pytest.approx(-grad, rel=1e-5, abs=1e-4)


def test_piecewise_linear_single_breakpoint():
    law = JointLaw(0.1, 1e4, stop_angle=0.0)
    g = np.linspace(-0.2, 0.2, 4001)
    slope = np.diff(joint_torque(law, g)) / np.diff(g)
    changes = np.flatnonzero(np.abs(np.diff(slope)) > 1e-6)
    assert len(changes) == 1
