"""Episodic hover/navigation environment with configurable observations.

The policy sees a history of H per-step slices, newest first. Each slice
concatenates, in fixed order, the enabled signals

    [position error (world or body frame), rotation matrix (row-major),
     body rates, world velocity, attitude quaternion, previous action]

per the active ObsConfig. The action is a collective-thrust increment plus
commanded body rates; the thrust command is integrated across steps. Per
episode the physical parameters are sampled around their nominals, a random
gravity bias is added, and each control action is released to the plant
after a random delay.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import dynamics
from .dynamics import ControlInput, QuadParams, QuadState
from .errors import EpisodeOverError


@dataclass(frozen=True)
class ObsConfig:
    """Which signals the policy sees, and the history window length."""

    frame: str = "world"              # "world" | "body", for the position error
    include_R: bool = True
    include_omega: bool = True
    include_prev_action: bool = True
    extras: str = "none"              # "none" | "velocity_world" | "quaternion"
    H: int = 10

    def __post_init__(self):
        if self.frame not in ("world", "body"):
            raise ValueError(f"bad frame {self.frame!r}")
        if self.extras not in ("none", "velocity_world", "quaternion"):
            raise ValueError(f"bad extras {self.extras!r}")
        if self.extras == "quaternion" and self.include_R:
            raise ValueError("quaternion replaces the rotation matrix")
        if self.H < 1:
            raise ValueError("history length must be >= 1")


def step_width(cfg: ObsConfig) -> int:
    """Per-step slice width N."""
    n = 3
    if cfg.include_R:
        n += 9
    if cfg.include_omega:
        n += 3
    if cfg.extras == "velocity_world":
        n += 3
    elif cfg.extras == "quaternion":
        n += 4
    if cfg.include_prev_action:
        n += 4
    return n


def canonical_name(cfg: ObsConfig) -> str:
    tokens = ["eW" if cfg.frame == "world" else "eB"]
    if cfg.extras == "velocity_world":
        tokens.append("vW")
    if cfg.include_R:
        tokens.append("R")
    elif cfg.extras == "quaternion":
        tokens.append("q")
    if cfg.include_omega:
        tokens.append("w")
    if cfg.include_prev_action:
        tokens.append("u")
    return "-".join(tokens)


def parse_name(name: str, H: int = 10) -> ObsConfig:
    """Build an ObsConfig from its canonical name, e.g. "eW-R-w-u"."""
    tokens = name.split("-")
    if not tokens or tokens[0] not in ("eW", "eB"):
        raise ValueError(f"unknown observation config {name!r}")
    frame = "world" if tokens[0] == "eW" else "body"
    rest = set(tokens[1:])
    if len(rest) != len(tokens) - 1 or not rest <= {"vW", "R", "q", "w", "u"}:
        raise ValueError(f"unknown observation config {name!r}")
    if "R" in rest and "q" in rest:
        raise ValueError(f"unknown observation config {name!r}")
    extras = "velocity_world" if "vW" in rest else ("quaternion" if "q" in rest else "none")
    cfg = ObsConfig(frame=frame, include_R="R" in rest, include_omega="w" in rest,
                    include_prev_action="u" in rest, extras=extras, H=H)
    if canonical_name(cfg) != name:
        raise ValueError(f"unknown observation config {name!r}")
    return cfg


# The eight benchmark configurations, plus the two input-ablation variants.
TABLE_NAMES = ("eW-R-w-u", "eW-R-u", "eW-w-u", "eW-u",
               "eB-R-w-u", "eB-R-u", "eB-w-u", "eB-u")
ABLATION_NAMES = ("eW-vW-R-u", "eW-q-u")
ALL_NAMES = TABLE_NAMES + ABLATION_NAMES


@dataclass
class Limits:
    """Actuation bounds shared by the plant, environment and controllers."""

    f_max: float                # N, collective thrust
    omega_max: np.ndarray       # rad/s, per axis
    df_max: float               # N/s, thrust increment action bound

    def __post_init__(self):
        self.omega_max = np.asarray(self.omega_max, dtype=float)

    def action_scale(self) -> np.ndarray:
        return np.concatenate(([self.df_max], self.omega_max))


@dataclass
class PolicyAction:
    df: float                   # thrust increment, applied as f_cmd += df*ts
    omega_cmd: np.ndarray       # rad/s

    def as_array(self) -> np.ndarray:
        return np.concatenate(([self.df], self.omega_cmd))

    @staticmethod
    def from_array(u) -> "PolicyAction":
        u = np.asarray(u, dtype=float)
        return PolicyAction(df=float(u[0]), omega_cmd=u[1:4].copy())


@dataclass
class RewardConfig:
    beta: float = 1.0           # exponent on the per-axis product
    k_u: float = 0.05           # effort weight
    e_m: float = 3.0            # m, max allowed distance from the target
    c: float = 50.0             # crash penalty


@dataclass
class RandomizationSpec:
    fraction: float = 0.10          # relative half-width for m, J, drag
    g_bias_max: float = 0.3         # m/s^2
    delay_range: tuple = (0.0, 0.010)  # s


@dataclass
class InitRanges:
    """Initial-condition perturbation bounds."""

    dist_min: float = 0.5       # m, |e(0)| lower bound
    dist_max: float = 2.4       # m, 0.8 x e_m by default
    tilt_max: float = math.radians(60.0)
    speed_max: float = 1.0      # m/s
    rate_max: float = 1.0       # rad/s


def rotation_to_quat(R: np.ndarray) -> np.ndarray:
    """Unit quaternion (w, x, y, z) for a rotation matrix, canonical w >= 0."""
    t = np.trace(R)
    if t > 0:
        s = math.sqrt(t + 1.0) * 2.0
        q = np.array([0.25 * s, (R[2, 1] - R[1, 2]) / s,
                      (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s])
    else:
        i = int(np.argmax(np.diag(R)))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = math.sqrt(max(1.0 + R[i, i] - R[j, j] - R[k, k], 0.0)) * 2.0
        q = np.empty(4)
        q[0] = (R[k, j] - R[j, k]) / s
        q[1 + i] = 0.25 * s
        q[1 + j] = (R[j, i] + R[i, j]) / s
        q[1 + k] = (R[k, i] + R[i, k]) / s
    if q[0] < 0:
        q = -q
    return q / np.linalg.norm(q)


def body_frame_error(e_world: np.ndarray, R: np.ndarray) -> np.ndarray:
    """Express the world-frame position error in the body frame."""
    return R.T @ e_world


@dataclass
class StepRecord:
    """Raw signals of one control tick, from which any slice can be formed."""

    e_world: np.ndarray
    R: np.ndarray
    omega: np.ndarray
    v_world: np.ndarray
    prev_action: np.ndarray     # u(k-1), the applied 4-vector


def format_slice(rec: StepRecord, cfg: ObsConfig) -> np.ndarray:
    parts = [body_frame_error(rec.e_world, rec.R) if cfg.frame == "body" else rec.e_world]
    if cfg.include_R:
        parts.append(rec.R.ravel())
    if cfg.include_omega:
        parts.append(rec.omega)
    if cfg.extras == "velocity_world":
        parts.append(rec.v_world)
    elif cfg.extras == "quaternion":
        parts.append(rotation_to_quat(rec.R))
    if cfg.include_prev_action:
        parts.append(rec.prev_action)
    return np.concatenate(parts)


def perfect_hover_observation(cfg: ObsConfig) -> np.ndarray:
    """The flat observation at the target, level and still, with zero actions."""
    rec = StepRecord(e_world=np.zeros(3), R=np.eye(3), omega=np.zeros(3),
                     v_world=np.zeros(3), prev_action=np.zeros(4))
    return np.tile(format_slice(rec, cfg), cfg.H)


@dataclass
class EnvState:
    quad: QuadState
    target: np.ndarray
    f_cmd_integrator: float
    prev_action: np.ndarray
    history: list                    # StepRecord ring, newest first, len <= H
    delay_queue: list                # (release_time, ControlInput), FIFO
    current_input: ControlInput      # last released input, held by the plant
    params: QuadParams
    k: int                           # step index
    done: bool
    cause: str | None
    seed: int
    rng: np.random.Generator


def build_observation(state: EnvState, cfg: ObsConfig) -> np.ndarray:
    """Flatten the history into the N*H policy input, newest slice first."""
    if len(state.history) != cfg.H:
        raise ValueError(f"history holds {len(state.history)} records, H={cfg.H}")
    return np.concatenate([format_slice(rec, cfg) for rec in state.history])


def reward_value(e: np.ndarray, u: np.ndarray, cfg: RewardConfig) -> float:
    """Distance-product reward with the effort penalty, or the crash penalty."""
    if float(np.linalg.norm(e)) >= cfg.e_m:
        return -cfg.c
    rx = max(0.0, 1.0 - abs(float(e[0])))
    ry = max(0.0, 1.0 - abs(float(e[1])))
    rz = max(0.0, 1.0 - abs(float(e[2])))
    track = (rx * ry * rz) ** cfg.beta
    un = float(np.linalg.norm(u))
    return track - cfg.k_u * un / (1.0 + un)


def _random_rotation(rng: np.random.Generator, tilt_max: float) -> np.ndarray:
    """Yaw uniform, tilt about a uniform horizontal axis, angle <= tilt_max."""
    yaw = rng.uniform(-math.pi, math.pi)
    cz, sz = math.cos(yaw), math.sin(yaw)
    Rz = np.array([[cz, -sz, 0.0], [sz, cz, 0.0], [0.0, 0.0, 1.0]])
    psi = rng.uniform(0.0, 2.0 * math.pi)
    axis = np.array([math.cos(psi), math.sin(psi), 0.0])
    ang = rng.uniform(0.0, tilt_max)
    K = dynamics.skew(axis)
    R_tilt = np.eye(3) + math.sin(ang) * K + (1.0 - math.cos(ang)) * (K @ K)
    return Rz @ R_tilt


def _uniform_ball(rng: np.random.Generator, radius: float) -> np.ndarray:
    if radius == 0.0:
        return np.zeros(3)
    d = rng.standard_normal(3)
    n = np.linalg.norm(d)
    if n == 0.0:
        return np.zeros(3)
    return d / n * radius * rng.uniform(0.0, 1.0) ** (1.0 / 3.0)


def _sphere_shell(rng: np.random.Generator, r_min: float, r_max: float) -> np.ndarray:
    d = rng.standard_normal(3)
    n = np.linalg.norm(d)
    while n == 0.0:  # pragma: no cover
        d = rng.standard_normal(3)
        n = np.linalg.norm(d)
    return d / n * rng.uniform(r_min, r_max)


def sample_params(nominal: QuadParams, rand: RandomizationSpec,
                  rng: np.random.Generator) -> QuadParams:
    """Draw per-episode physics: mass, inertia and drag uniform within
    +-fraction of nominal, gravity bias uniform in a ball."""
    fr = rand.fraction

    def jitter(x):
        return x * (1.0 + rng.uniform(-fr, fr, size=np.shape(x) or None))

    return QuadParams(
        m=float(jitter(nominal.m)),
        J=jitter(nominal.J),
        k_f=nominal.k_f,
        k_omega=nominal.k_omega.copy(),
        drag=jitter(nominal.drag),
        g=nominal.g.copy(),
        g_bias=_uniform_ball(rng, rand.g_bias_max),
    )


class HoverEnv:
    """Point-to-point navigation episodes around a fixed target."""

    def __init__(self, obs_config: ObsConfig, reward: RewardConfig,
                 rand: RandomizationSpec, nominal: QuadParams, limits: Limits,
                 ts: float = 0.01, substeps: int = 1, horizon: int = 500,
                 init: InitRanges = None, target=None, record: bool = False):  # type: ignore[assignment]
        self.obs_config = obs_config
        self.reward_config = reward
        self.rand = rand
        self.nominal = nominal
        self.limits = limits
        self.ts = ts
        self.substeps = substeps
        self.horizon = horizon
        self.init = init if init is not None else InitRanges()
        self.target = np.zeros(3) if target is None else np.asarray(target, dtype=float)
        self.record = record
        self.trace: list = []
        self.state: EnvState = None  # type: ignore[assignment]

    @classmethod
    def from_config(cls, cfg, obs, **overrides) -> "HoverEnv":
        """Assemble from a BenchConfig; obs is an ObsConfig or canonical name."""
        from .config import limits as limits_of, nominal_params

        if isinstance(obs, str):
            obs = parse_name(obs, H=cfg.env.history)
        kw = dict(
            obs_config=obs,
            reward=RewardConfig(beta=cfg.reward.beta, k_u=cfg.reward.effort_weight,
                                e_m=cfg.reward.max_distance, c=cfg.reward.crash_penalty),
            rand=RandomizationSpec(fraction=cfg.env.rand_fraction,
                                   g_bias_max=cfg.env.g_bias_max,
                                   delay_range=(cfg.env.delay_min, cfg.env.delay_max)),
            nominal=nominal_params(cfg),
            limits=limits_of(cfg),
            ts=cfg.dynamics.control_period,
            substeps=cfg.dynamics.substeps,
            horizon=cfg.env.horizon,
            init=InitRanges(dist_min=cfg.env.init_dist_min, dist_max=cfg.env.init_dist_max,
                            tilt_max=math.radians(cfg.env.init_tilt_max_deg),
                            speed_max=cfg.env.init_speed_max, rate_max=cfg.env.init_rate_max),
        )
        kw.update(overrides)
        return cls(**kw)

    def reset(self, seed: int) -> np.ndarray:
        """Start a new randomized episode; deterministic given the seed."""
        rng = np.random.default_rng(seed)
        params = sample_params(self.nominal, self.rand, rng)
        offset = _sphere_shell(rng, self.init.dist_min, self.init.dist_max)
        R = _random_rotation(rng, self.init.tilt_max)
        v = _uniform_ball(rng, self.init.speed_max)
        omega = _uniform_ball(rng, self.init.rate_max)
        hover_f = self.nominal.hover_thrust()
        quad = QuadState(p=self.target - offset, v=v, R=R, omega=omega, f=hover_f)
        hold = ControlInput(f_cmd=hover_f, omega_cmd=np.zeros(3))
        rec = StepRecord(e_world=offset.copy(), R=quad.R.copy(), omega=quad.omega.copy(),
                         v_world=quad.v.copy(), prev_action=np.zeros(4))
        self.state = EnvState(
            quad=quad, target=self.target.copy(), f_cmd_integrator=hover_f,
            prev_action=np.zeros(4), history=[rec] * self.obs_config.H,
            delay_queue=[], current_input=hold, params=params, k=0,
            done=False, cause=None, seed=seed, rng=rng,
        )
        self.trace = []
        return build_observation(self.state, self.obs_config)

    def step(self, action) -> tuple:
        """Apply one action; returns (obs, reward, done, info)."""
        st = self.state
        if st is None:
            raise EpisodeOverError("reset() must be called first")
        if st.done:
            raise EpisodeOverError("episode already terminated")

        if isinstance(action, PolicyAction):
            u = action.as_array()
        else:
            u = np.asarray(action, dtype=float).reshape(4).copy()
        scale = self.limits.action_scale()
        np.clip(u, -scale, scale, out=u)

        fc = st.f_cmd_integrator + u[0] * self.ts
        fc = min(max(fc, 0.0), self.limits.f_max)
        st.f_cmd_integrator = fc

        t_now = st.k * self.ts
        delay = st.rng.uniform(self.rand.delay_range[0], self.rand.delay_range[1])
        release = t_now + delay
        if st.delay_queue and release < st.delay_queue[-1][0]:
            release = st.delay_queue[-1][0]  # keep FIFO release order
        st.delay_queue.append((release, ControlInput(f_cmd=fc, omega_cmd=u[1:4].copy())))

        sub_dt = self.ts / self.substeps
        quad = st.quad
        for i in range(self.substeps):
            t_sub = t_now + i * sub_dt
            while st.delay_queue and st.delay_queue[0][0] <= t_sub + 1e-12:
                st.current_input = st.delay_queue.pop(0)[1]
            quad = dynamics.step(quad, st.current_input, st.params, sub_dt,
                                 f_max=self.limits.f_max)
        st.quad = quad
        st.k += 1

        e = st.target - quad.p
        rec = StepRecord(e_world=e, R=quad.R, omega=quad.omega, v_world=quad.v,
                         prev_action=u)
        st.history = [rec] + st.history[:-1]
        st.prev_action = u

        r = reward_value(e, u, self.reward_config)
        e_norm = float(np.linalg.norm(e))
        if e_norm > self.reward_config.e_m:
            st.done, st.cause = True, "out_of_bounds"
        elif st.k >= self.horizon:
            st.done, st.cause = True, "timeout"
        info = {"cause": st.cause, "e_norm": e_norm, "t": st.k * self.ts}

        if self.record:
            self.trace.append((st.k * self.ts, quad.p.copy(), quad.v.copy(),
                               quad.omega.copy(), e.copy(), u.copy(), r))
        return build_observation(st, self.obs_config), r, st.done, info

    def critic_observation(self) -> np.ndarray:
        """Privileged critic input [p, v, acceleration, R row-major, omega]."""
        st = self.state
        acc = dynamics.linear_acceleration(st.quad, st.params)
        return np.concatenate([st.quad.p, st.quad.v, acc, st.quad.R.ravel(), st.quad.omega])


def trace_csv(trace) -> str:
    """Render an episode trace as CSV: t, p, v, omega, e, action, reward."""
    lines = ["t,px,py,pz,vx,vy,vz,wx,wy,wz,ex,ey,ez,df,wcx,wcy,wcz,reward"]
    for t, p, v, w, e, u, r in trace:
        vals = [t, *p, *v, *w, *e, *u, r]
        lines.append(",".join(repr(float(x)) for x in vals))
    return "\n".join(lines) + "\n"
