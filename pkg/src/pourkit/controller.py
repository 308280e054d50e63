"""Pouring controller: pre-tilt, PD on the volume error, return to vertical."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import IntEnum

from .errors import InputError, NonPositiveDt

DEG = math.pi / 180.0


class Phase(IntEnum):
    PRE_TILT = 0
    POUR = 1
    RETURN = 2
    DONE = 3


@dataclass(frozen=True)
class ControllerConfig:
    pre_tilt_angle: float = 75.0 * DEG  # rad from vertical
    kp: float = 0.01 * DEG  # rad/s per ml
    kd: float = 0.2 * DEG  # rad/s per ml/s
    ki: float = 0.0
    pre_tilt_rate: float = 30.0 * DEG  # rad/s
    return_rate: float = 30.0 * DEG
    max_wrist_rate: float = 60.0 * DEG

    def __post_init__(self):
        if self.kp < 0 or self.kd < 0:
            raise InputError("controller gains must be non-negative")
        if self.ki != 0:
            raise InputError("integral gain is fixed at 0")
        if min(self.pre_tilt_rate, self.return_rate, self.max_wrist_rate) <= 0:
            raise InputError("controller rates must be positive")


@dataclass(frozen=True)
class ControllerState:
    target_ml: float
    phase: Phase = Phase.PRE_TILT
    prev_error: float | None = None
    prev_time: float = 0.0


def controller_step(state: ControllerState, config: ControllerConfig, estimate_ml: float, wrist_angle: float, dt: float):
    """One control tick. Returns ``(wrist_rate_command, new_state)``.

    Pre-tilt and return commands are shortened on the final tick so the
    wrist lands on the pre-tilt angle and on vertical instead of
    overshooting them. The tick whose estimate reaches the target still
    gets the PD command; the return to vertical starts on the next tick.
    The first pour tick has no previous error, so its derivative term is 0.
    """
    if not dt > 0:
        raise NonPositiveDt(f"dt must be positive, got {dt}")
    now = state.prev_time + dt
    phase = state.phase

    if phase == Phase.PRE_TILT:
        if wrist_angle < config.pre_tilt_angle:
            cmd = min(config.pre_tilt_rate, (config.pre_tilt_angle - wrist_angle) / dt)
            return cmd, replace(state, prev_time=now)
        phase = Phase.POUR

    if phase == Phase.POUR:
        error = state.target_ml - estimate_ml
        prev = error if state.prev_error is None else state.prev_error
        cmd = config.kp * error + config.kd * (error - prev) / dt
        cmd = max(-config.max_wrist_rate, min(config.max_wrist_rate, cmd))
        # reaching the target ends the pour; the return starts next tick
        nxt = Phase.RETURN if estimate_ml >= state.target_ml else Phase.POUR
        return cmd, replace(state, phase=nxt, prev_error=error, prev_time=now)

    if phase == Phase.RETURN:
        if wrist_angle > 0:
            cmd = -min(config.return_rate, wrist_angle / dt)
            return cmd, replace(state, phase=phase, prev_time=now)
        phase = Phase.DONE

    return 0.0, replace(state, phase=Phase.DONE, prev_time=now)
