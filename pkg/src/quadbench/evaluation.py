"""Trajectory-tracking evaluation: run logs, RMSE metrics, stress protocol.

All controllers drive the same plant through one interface,
``command(QuadState, target, dt) -> ControlInput``. Learned policies go
through the observation pipeline with the moving target substituted into
the position error; the PID consumes the state directly. Episodes are
deterministic given the seed.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import dynamics
from .dynamics import ControlInput, QuadParams, QuadState, hover_state
from .env import (Limits, ObsConfig, RandomizationSpec, RewardConfig, StepRecord,
                  format_slice, perfect_hover_observation, reward_value, sample_params)
from .errors import EmptyRunError
from .sac import ActorNet, act
from .trajectories import TrajectorySpec, target_at

log = logging.getLogger(__name__)

CSV_HEADER = "t,px,py,pz,yx,yy,yz,ex,ey,ez,df,wx,wy,wz,reward"


@dataclass
class RunLog:
    """Time-aligned reference and actual positions plus per-step commands."""

    t: np.ndarray           # (N,)
    reference: np.ndarray   # (N, 3)
    position: np.ndarray    # (N, 3)
    command: np.ndarray     # (N, 4): thrust increment + commanded rates
    reward: np.ndarray      # (N,)
    failed: bool = False    # episode truncated by the distance limit

    @property
    def n_samples(self) -> int:
        return len(self.t)

    def to_csv(self) -> str:
        lines = [CSV_HEADER]
        err = self.reference - self.position
        for i in range(self.n_samples):
            vals = [self.t[i], *self.position[i], *self.reference[i], *err[i],
                    *self.command[i], self.reward[i]]
            lines.append(",".join(repr(float(v)) for v in vals))
        return "\n".join(lines) + "\n"

    @staticmethod
    def from_csv(text: str) -> "RunLog":
        lines = [ln for ln in text.strip().splitlines() if ln]
        if lines[0] != CSV_HEADER:
            raise ValueError("unexpected run-log header")
        rows = [[float(x) for x in ln.split(",")] for ln in lines[1:]]
        arr = np.asarray(rows, dtype=float).reshape(len(rows), 15)
        return RunLog(t=arr[:, 0], position=arr[:, 1:4], reference=arr[:, 4:7],
                      command=arr[:, 10:14], reward=arr[:, 14])


@dataclass
class MetricsReport:
    """Per-axis RMSE and their mean, in centimeters."""

    p_x: float
    p_y: float
    p_z: float
    p_c: float = field(init=False)
    runs: int = 1

    def __post_init__(self):
        self.p_c = (self.p_x + self.p_y + self.p_z) / 3.0


def rmse_metrics(run: RunLog) -> MetricsReport:
    """Single-run per-axis RMSE of the tracking error, reported in cm."""
    if run.n_samples < 1:
        raise EmptyRunError("run log has no samples")
    err = run.reference - run.position
    p = np.sqrt(np.mean(err * err, axis=0)) * 100.0
    return MetricsReport(p_x=float(p[0]), p_y=float(p[1]), p_z=float(p[2]))


def aggregate(reports, expected_runs: int = 3) -> MetricsReport:
    """Mean over the repeated runs of one experiment."""
    if len(reports) != expected_runs:
        raise ValueError(f"expected {expected_runs} reports, got {len(reports)}")
    out = MetricsReport(
        p_x=float(np.mean([r.p_x for r in reports])),
        p_y=float(np.mean([r.p_y for r in reports])),
        p_z=float(np.mean([r.p_z for r in reports])),
    )
    out.runs = len(reports)
    return out


class PolicyController:
    """Learned-policy controller over the shared interface.

    Rebuilds the observation pipeline outside the training environment:
    history ring, previous applied action, thrust-command integrator, and
    the hover-offset subtraction at the current weights.
    """

    def __init__(self, actor: ActorNet, obs_config: ObsConfig,
                 params: QuadParams, limits: Limits, name: str = "policy"):
        self.actor = actor
        self.obs_config = obs_config
        self.params = params
        self.limits = limits
        self.name = name
        self.o0 = perfect_hover_observation(obs_config)
        self.reset()

    def reset(self) -> None:
        self._history = None
        self._prev_u = np.zeros(4)
        self._f_cmd = self.params.hover_thrust()

    def command(self, quad: QuadState, target, dt: float) -> ControlInput:
        rec = StepRecord(e_world=np.asarray(target, dtype=float) - quad.p,
                         R=quad.R, omega=quad.omega, v_world=quad.v,
                         prev_action=self._prev_u)
        if self._history is None:
            self._history = [rec] * self.obs_config.H
        else:
            self._history = [rec] + self._history[:-1]
        obs = np.concatenate([format_slice(r, self.obs_config) for r in self._history])
        action = act(self.actor, obs, self.o0)
        self._f_cmd = min(max(self._f_cmd + action.df * dt, 0.0), self.limits.f_max)
        self._prev_u = action.as_array()
        omega_cmd = np.clip(action.omega_cmd, -self.limits.omega_max, self.limits.omega_max)
        return ControlInput(f_cmd=self._f_cmd, omega_cmd=omega_cmd)


class FrozenHoverController:
    """Holds the nominal hover input forever; the stress-test floor."""

    name = "frozen-hover"

    def __init__(self, params: QuadParams):
        self._input = ControlInput(f_cmd=params.hover_thrust(), omega_cmd=np.zeros(3))

    def reset(self) -> None:
        pass

    def command(self, quad: QuadState, target, dt: float) -> ControlInput:
        return ControlInput(f_cmd=self._input.f_cmd, omega_cmd=self._input.omega_cmd.copy())


class TeleportOracle:
    """Test oracle that relocates the vehicle onto the target each tick."""

    name = "teleport"

    def __init__(self, params: QuadParams):
        self.params = params

    def reset(self) -> None:
        pass

    def relocate(self, quad: QuadState, target) -> QuadState:
        return hover_state(self.params, p=np.asarray(target, dtype=float))

    def command(self, quad: QuadState, target, dt: float) -> ControlInput:
        return ControlInput(f_cmd=self.params.hover_thrust(), omega_cmd=np.zeros(3))


def run_episode(controller, spec: TrajectorySpec, duration: float, seed: int,
                nominal: QuadParams, limits: Limits,
                reward_cfg: RewardConfig = None,  # type: ignore[assignment]
                randomization: RandomizationSpec = None,  # type: ignore[assignment]
                ts: float = 0.01) -> RunLog:
    """Closed-loop run against the moving target; samples at every tick.

    With ``randomization`` the plant parameters are drawn around nominal
    from the seed; otherwise the plant is exactly nominal. The log is
    truncated and flagged if the tracking error exceeds the reward's
    distance limit.
    """
    if duration <= 0:
        raise ValueError("duration must be positive")
    reward_cfg = reward_cfg if reward_cfg is not None else RewardConfig()
    rng = np.random.default_rng(seed)
    params = sample_params(nominal, randomization, rng) if randomization else nominal
    quad = hover_state(nominal, p=target_at(spec, 0.0))
    if hasattr(controller, "reset"):
        controller.reset()

    n = int(round(duration / ts))
    t_arr = np.empty(n)
    y_arr = np.empty((n, 3))
    p_arr = np.empty((n, 3))
    u_arr = np.empty((n, 4))
    r_arr = np.empty(n)
    failed = False
    filled = 0
    prev_f_cmd = quad.f
    for k in range(n):
        t = k * ts
        y = target_at(spec, t)
        if hasattr(controller, "relocate"):
            quad = controller.relocate(quad, y)
        cmd = controller.command(quad, y, ts)
        quad = dynamics.step(quad, cmd, params, ts, f_max=limits.f_max)
        t_next = (k + 1) * ts
        y_next = target_at(spec, t_next)
        e = y_next - quad.p
        u = np.concatenate(([(cmd.f_cmd - prev_f_cmd) / ts], cmd.omega_cmd))
        prev_f_cmd = cmd.f_cmd
        t_arr[k] = t_next
        y_arr[k] = y_next
        p_arr[k] = quad.p
        u_arr[k] = u
        r_arr[k] = reward_value(e, u, reward_cfg)
        filled = k + 1
        if float(np.linalg.norm(e)) > reward_cfg.e_m:
            failed = True
            break
    sl = slice(0, filled)
    return RunLog(t=t_arr[sl].copy(), reference=y_arr[sl].copy(),
                  position=p_arr[sl].copy(), command=u_arr[sl].copy(),
                  reward=r_arr[sl].copy(), failed=failed)


def stress_test(controller, radius: float, ramp_accel: float, seed: int,
                nominal: QuadParams, limits: Limits, ts: float = 0.01,
                speed_cap: float = 3.0, center=(0.0, 0.0, 1.0),
                fail_distance: float = 0.50) -> float:
    """Ramping-speed circular pursuit; returns the target speed at the first
    instant the distance exceeds ``fail_distance``, or +inf at the cap."""
    if radius <= 0 or ramp_accel <= 0:
        raise ValueError("radius and ramp_accel must be positive")
    spec = TrajectorySpec("circle_ramp", center=np.asarray(center, dtype=float),
                          radius=radius, ramp_accel=ramp_accel)
    quad = hover_state(nominal, p=target_at(spec, 0.0))
    if hasattr(controller, "reset"):
        controller.reset()
    k = 0
    while True:
        t = k * ts
        if ramp_accel * t >= speed_cap:
            return math.inf
        y = target_at(spec, t)
        if hasattr(controller, "relocate"):
            quad = controller.relocate(quad, y)
        cmd = controller.command(quad, y, ts)
        quad = dynamics.step(quad, cmd, nominal, ts, f_max=limits.f_max)
        k += 1
        t_next = k * ts
        e = target_at(spec, t_next) - quad.p
        if float(np.linalg.norm(e)) > fail_distance:
            speed = ramp_accel * t_next
            if k == 1:
                log.warning("stress test failed on the first tick; controller "
                            "diverges immediately")
                return 0.0
            return speed
