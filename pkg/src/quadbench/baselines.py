"""Cascaded PID position/attitude controller emitting CTBR commands.

Outer loop: per-axis PID on position error with velocity feedback for the
derivative term (no setpoint kick) and clamped integrators. The desired
acceleration is turned into a thrust magnitude plus a tilt-limited desired
attitude with yaw held at zero. Inner loop: P-D from the rotation-log
attitude error and the measured body rates to commanded rates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import ControlInput, QuadParams, QuadState
from .env import Limits


@dataclass
class PidGains:
    pos_kp: np.ndarray
    pos_ki: np.ndarray
    pos_kd: np.ndarray
    att_kp: np.ndarray
    att_kd: np.ndarray
    integrator_limit: float = 1.0        # m s per axis
    tilt_limit: float = math.radians(45.0)

    def __post_init__(self):
        for name in ("pos_kp", "pos_ki", "pos_kd", "att_kp", "att_kd"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))

    @classmethod
    def from_config(cls, cfg) -> "PidGains":
        p = cfg.pid
        return cls(pos_kp=p.pos_kp, pos_ki=p.pos_ki, pos_kd=p.pos_kd,
                   att_kp=p.att_kp, att_kd=p.att_kd,
                   integrator_limit=p.integrator_limit,
                   tilt_limit=math.radians(p.tilt_limit_deg))


@dataclass
class PidState:
    integral: np.ndarray    # position-error integrators, clamped

    @classmethod
    def zero(cls) -> "PidState":
        return cls(integral=np.zeros(3))


def rotation_log(M: np.ndarray) -> np.ndarray:
    """Axis-angle vector of a rotation matrix (vee of the matrix log)."""
    cos_th = max(-1.0, min(1.0, 0.5 * (np.trace(M) - 1.0)))
    th = math.acos(cos_th)
    w = 0.5 * np.array([M[2, 1] - M[1, 2], M[0, 2] - M[2, 0], M[1, 0] - M[0, 1]])
    if th < 1e-8:
        return w
    if th > math.pi - 1e-6:
        # Near pi the skew part vanishes; recover the axis from the diagonal.
        d = np.clip((np.diag(M) + 1.0) * 0.5, 0.0, 1.0)
        axis = np.sqrt(d)
        i = int(np.argmax(axis))
        if axis[i] > 0:
            j, k = (i + 1) % 3, (i + 2) % 3
            axis[j] = math.copysign(axis[j], M[i, j] + M[j, i])
            axis[k] = math.copysign(axis[k], M[i, k] + M[k, i])
        return th * axis / max(np.linalg.norm(axis), 1e-12)
    return th / math.sin(th) * w


def pid_control(quad: QuadState, target, gains: PidGains, state: PidState,
                params: QuadParams, limits: Limits, dt: float):
    """One controller tick; returns (ControlInput, updated PidState).

    ``params`` supplies the nominal mass and gravity used for feedforward;
    the controller never sees the randomized plant values.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    e = np.asarray(target, dtype=float) - quad.p

    integral = np.clip(state.integral + e * dt,
                       -gains.integrator_limit, gains.integrator_limit)
    a_des = gains.pos_kp * e + gains.pos_ki * integral - gains.pos_kd * quad.v

    # Desired force: cancel gravity, apply the commanded acceleration.
    f_vec = params.m * (a_des - params.g)
    fz = max(f_vec[2], 1e-6)  # thrust direction must stay upper hemisphere
    horiz = math.hypot(f_vec[0], f_vec[1])
    max_horiz = fz * math.tan(gains.tilt_limit)
    if horiz > max_horiz:
        f_vec[0] *= max_horiz / horiz
        f_vec[1] *= max_horiz / horiz
    f_vec[2] = fz
    f_cmd = min(float(np.linalg.norm(f_vec)), limits.f_max)

    # Desired attitude: body z along the force, yaw fixed at zero.
    b3 = f_vec / np.linalg.norm(f_vec)
    b2 = np.cross(b3, np.array([1.0, 0.0, 0.0]))
    b2 /= np.linalg.norm(b2)
    b1 = np.cross(b2, b3)
    R_des = np.column_stack([b1, b2, b3])

    att_err = rotation_log(R_des.T @ quad.R)
    omega_cmd = -gains.att_kp * att_err - gains.att_kd * quad.omega
    omega_cmd = np.clip(omega_cmd, -limits.omega_max, limits.omega_max)

    return ControlInput(f_cmd=f_cmd, omega_cmd=omega_cmd), PidState(integral=integral)


class CascadePid:
    """Stateful wrapper implementing the shared controller interface."""

    name = "pid"

    def __init__(self, gains: PidGains, params: QuadParams, limits: Limits):
        self.gains = gains
        self.params = params
        self.limits = limits
        self.state = PidState.zero()

    def reset(self) -> None:
        self.state = PidState.zero()

    def command(self, quad: QuadState, target, dt: float) -> ControlInput:
        out, self.state = pid_control(quad, target, self.gains, self.state,
                                      self.params, self.limits, dt)
        return out
