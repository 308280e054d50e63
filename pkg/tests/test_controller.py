import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pourkit.controller import DEG, ControllerConfig, ControllerState, Phase, controller_step
from pourkit.errors import InputError, NonPositiveDt

CFG = ControllerConfig()
DT = 1 / 30


def pouring(target, prev_error):
    return ControllerState(target_ml=target, phase=Phase.POUR, prev_error=prev_error)


def test_defaults_match_published_gains():
    assert CFG.pre_tilt_angle == pytest.approx(75 * math.pi / 180, rel=1e-15)
    assert CFG.kp == pytest.approx(0.01 * math.pi / 180, rel=1e-15)
    assert CFG.kd == pytest.approx(0.2 * math.pi / 180, rel=1e-15)
    assert CFG.ki == 0.0


def test_zero_error_gives_zero_command():
    cmd, _ = controller_step(pouring(150.0, 0.0), CFG, 150.0, 1.2, DT)
    assert cmd == 0.0


def test_constant_error_is_proportional_only():
    cmd, st_ = controller_step(pouring(200.0, 100.0), CFG, 100.0, 1.3, DT)
    assert cmd == pytest.approx(0.01745, abs=1e-5)
    assert cmd == pytest.approx(100 * 0.01 * math.pi / 180, rel=1e-12)
    assert st_.phase == Phase.POUR and st_.prev_error == 100.0


def test_derivative_term():
    # error fell from 100 to 99 ml in one tick
    cmd, _ = controller_step(pouring(200.0, 100.0), CFG, 101.0, 1.3, DT)
    want = CFG.kp * 99 + CFG.kd * (99 - 100) / DT
    assert cmd == pytest.approx(want, rel=1e-12)


def test_first_pour_tick_has_no_derivative_kick():
    cmd, _ = controller_step(pouring(200.0, None), CFG, 50.0, 1.3, DT)
    assert cmd == pytest.approx(CFG.kp * 150.0, rel=1e-12)


def test_pre_tilt_then_pour():
    s = ControllerState(target_ml=100.0)
    cmd, s = controller_step(s, CFG, 0.0, 0.0, DT)
    assert s.phase == Phase.PRE_TILT and cmd == pytest.approx(30 * DEG)
    cmd, s = controller_step(s, CFG, 0.0, 75 * math.pi / 180, DT)
    assert s.phase == Phase.POUR
    assert cmd == pytest.approx(CFG.kp * 100.0)


def test_pre_tilt_lands_on_angle():
    s = ControllerState(target_ml=100.0)
    angle = 0.0
    for _ in range(200):
        cmd, s = controller_step(s, CFG, 0.0, angle, DT)
        if s.phase != Phase.PRE_TILT:
            break
        angle += cmd * DT
    assert angle == pytest.approx(CFG.pre_tilt_angle, abs=1e-12)
    assert s.phase == Phase.POUR


def test_reaching_target_returns_to_vertical_then_done():
    s = pouring(100.0, 5.0)
    angle = 1.4
    _, s = controller_step(s, CFG, 100.0, angle, DT)
    assert s.phase == Phase.RETURN
    for _ in range(200):
        cmd, s = controller_step(s, CFG, 100.0, angle, DT)
        assert cmd <= 0
        angle = max(0.0, angle + cmd * DT)
        if s.phase == Phase.DONE:
            break
    assert s.phase == Phase.DONE and angle == pytest.approx(0.0, abs=1e-12)
    cmd, s = controller_step(s, CFG, 0.0, angle, DT)
    assert cmd == 0.0 and s.phase == Phase.DONE


def test_non_positive_dt():
    for dt in (0.0, -0.1, float("nan")):
        with pytest.raises(NonPositiveDt):
            controller_step(ControllerState(10.0), CFG, 0.0, 0.0, dt)


@pytest.mark.parametrize("kw", [dict(kp=-1.0), dict(ki=0.1), dict(return_rate=0.0)])
def test_config_validation(kw):
    with pytest.raises(InputError):
        ControllerConfig(**kw)


@settings(max_examples=200, deadline=None)
@given(
    st.floats(0, 400),
    st.lists(st.tuples(st.floats(-50, 500), st.floats(0, math.pi)), min_size=1, max_size=60),
)
def test_phase_monotone_and_command_clamped(target, inputs):
    s = ControllerState(target_ml=target)
    for est, angle in inputs:
        cmd, nxt = controller_step(s, CFG, est, angle, DT)
        assert nxt.phase >= s.phase
        assert -CFG.max_wrist_rate <= cmd <= CFG.max_wrist_rate
        s = nxt


@settings(max_examples=100, deadline=None)
@given(st.floats(1, 400), st.integers(2, 30))
def test_constant_positive_error_gives_constant_positive_command(err, n):
    est = 500.0 - err
    s = pouring(500.0, 500.0 - est)
    cmds = set()
    for _ in range(n):
        cmd, s = controller_step(s, CFG, est, 1.3, DT)
        cmds.add(cmd)
    assert len(cmds) == 1 and cmds.pop() > 0


def test_replay_is_bit_exact():
    rng = np.random.default_rng(0)
    s = pouring(250.0, None)
    log = []
    est = 0.0
    for _ in range(300):
        est = min(260.0, est + rng.random() * 3)
        cmd, s = controller_step(s, CFG, est, 1.3, DT)
        log.append((est, cmd))
        if s.phase != Phase.POUR:
            break
    # replay from logged (e, e_prev, dt) only
    prev = None
    for est, cmd in log:
        e = 250.0 - est
        p = e if prev is None else prev
        want = max(-CFG.max_wrist_rate, min(CFG.max_wrist_rate, CFG.kp * e + CFG.kd * (e - p) / DT))
        assert want == cmd
        prev = e
