"""Configuration file handling.

Every constant that is not hard-wired by the problem definition lives here,
in one flat human-readable INI document with the sections [dynamics], [env],
[reward], [sac], [pid], [trajectories] and [plan]. All values are SI unless
the key name says otherwise. ``write_default_config`` emits the documented
defaults; ``load_config`` overlays a user file on top of them.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import io
from dataclasses import dataclass, field

import numpy as np


def _v3(text) -> tuple[float, float, float]:
    parts = [float(p) for p in str(text).replace(",", " ").split()]
    if len(parts) != 3:
        raise ValueError(f"expected 3 numbers, got {text!r}")
    return tuple(parts)  # type: ignore[return-value]


def _names(text) -> tuple[str, ...]:
    return tuple(p for p in str(text).replace(",", " ").split() if p)


def _ints(text) -> tuple[int, ...]:
    return tuple(int(p) for p in str(text).replace(",", " ").split() if p)


@dataclass
class DynamicsConfig:
    mass: float = 0.75                                  # kg
    inertia: tuple = (0.0025, 0.0021, 0.0043)           # kg m^2, diagonal
    thrust_gain: float = 20.0                           # 1/s, collective thrust loop
    rate_gain: tuple = (25.0, 25.0, 12.0)               # 1/s, body-rate loop per axis
    drag: tuple = (0.10, 0.10, 0.15)                    # N s/m, linear drag
    gravity: tuple = (0.0, 0.0, -9.81)                  # m/s^2
    f_max: float = 29.43                                # N, 4 x nominal hover thrust
    omega_max: tuple = (5.0, 5.0, 2.0)                  # rad/s, commanded rate bound
    control_period: float = 0.01                        # s, one control tick
    substeps: int = 1                                   # integrator steps per tick


@dataclass
class EnvConfig:
    df_max: float = 2.0                # N/s, thrust-increment action bound
    horizon: int = 500                 # control steps per training episode
    history: int = 10                  # default observation window H
    init_dist_min: float = 0.5         # m, lower bound on |e(0)|
    init_dist_max: float = 2.4         # m, 0.8 x reward.max_distance
    init_tilt_max_deg: float = 60.0    # initial attitude perturbation
    init_speed_max: float = 1.0        # m/s
    init_rate_max: float = 1.0         # rad/s
    rand_fraction: float = 0.10        # +-10% on mass, inertia, drag
    g_bias_max: float = 0.3            # m/s^2, gravity bias ball radius
    delay_min: float = 0.0             # s, control action delay range
    delay_max: float = 0.010


@dataclass
class RewardSettings:
    beta: float = 1.0
    effort_weight: float = 0.05        # k_u
    max_distance: float = 3.0          # m, e_m
    crash_penalty: float = 50.0        # c


@dataclass
class SacSettings:
    gamma: float = 0.99
    tau: float = 0.005
    lr: float = 0.0003
    batch: int = 256
    entropy_target: float = -4.0
    buffer_capacity: int = 1_000_000
    updates_per_step: int = 1
    warmup_steps: int = 1000
    alpha_init: float = 0.2
    learn_alpha: bool = True
    twin_critic: bool = True
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8


@dataclass
class PidConfig:
    pos_kp: tuple = (16.0, 16.0, 20.0)
    pos_ki: tuple = (0.8, 0.8, 1.6)
    pos_kd: tuple = (5.0, 5.0, 6.0)
    att_kp: tuple = (12.0, 12.0, 6.0)
    att_kd: tuple = (0.3, 0.3, 0.3)
    integrator_limit: float = 0.2      # m s, per-axis anti-windup clamp
    tilt_limit_deg: float = 45.0


@dataclass
class TrajectoryConfig:
    center: tuple = (0.0, 0.0, 1.0)    # m
    semi_axis_a: float = 1.0           # m
    semi_axis_b: float = 0.5           # m
    vertical_amp: float = 0.3          # m, 3D eight z amplitude
    period: float = 20.0               # s, one lap
    circle_radius: float = 1.0         # m, stress circle
    ramp_accel: float = 0.03           # m/s^2, stress speed ramp


@dataclass
class PlanConfig:
    configs: tuple = ("eW-R-w-u", "eW-R-u", "eW-w-u", "eW-u",
                      "eB-R-w-u", "eB-R-u", "eB-w-u", "eB-u")
    seeds: tuple = (1,)
    train_steps: int = 50_000
    n_envs: int = 1
    eval_every: int = 5_000            # checkpoint interval, env steps
    scenarios: tuple = ("hover", "ellipse", "eight2d", "eight3d",
                        "ellipse-x2", "eight2d-x2", "eight3d-x2")
    runs: int = 3                      # repetitions per scenario
    eval_duration: float = 20.0        # s per run
    stress_speed_cap: float = 3.0      # m/s, sentinel threshold
    jobs: int = 1
    output_root: str = "results"


@dataclass
class BenchConfig:
    dynamics: DynamicsConfig = field(default_factory=DynamicsConfig)
    env: EnvConfig = field(default_factory=EnvConfig)
    reward: RewardSettings = field(default_factory=RewardSettings)
    sac: SacSettings = field(default_factory=SacSettings)
    pid: PidConfig = field(default_factory=PidConfig)
    trajectories: TrajectoryConfig = field(default_factory=TrajectoryConfig)
    plan: PlanConfig = field(default_factory=PlanConfig)


_SECTIONS = ("dynamics", "env", "reward", "sac", "pid", "trajectories", "plan")

# How to parse each non-scalar key.
_PARSERS = {
    ("dynamics", "inertia"): _v3,
    ("dynamics", "rate_gain"): _v3,
    ("dynamics", "drag"): _v3,
    ("dynamics", "gravity"): _v3,
    ("dynamics", "omega_max"): _v3,
    ("pid", "pos_kp"): _v3,
    ("pid", "pos_ki"): _v3,
    ("pid", "pos_kd"): _v3,
    ("pid", "att_kp"): _v3,
    ("pid", "att_kd"): _v3,
    ("trajectories", "center"): _v3,
    ("plan", "configs"): _names,
    ("plan", "scenarios"): _names,
    ("plan", "seeds"): _ints,
}

_BOOL_TRUE = {"1", "true", "yes", "on"}
_BOOL_FALSE = {"0", "false", "no", "off"}


def _parse_value(section: str, key: str, text: str, default):
    parser = _PARSERS.get((section, key))
    if parser is not None:
        return parser(text)
    if isinstance(default, bool):
        low = text.strip().lower()
        if low in _BOOL_TRUE:
            return True
        if low in _BOOL_FALSE:
            return False
        raise ValueError(f"[{section}] {key}: expected a boolean, got {text!r}")
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    return text.strip()


def load_config(path: str | None = None) -> BenchConfig:
    """Read an INI file over the defaults; ``None`` returns pure defaults.

    Unknown sections or keys raise ValueError so typos do not silently
    fall back to defaults.
    """
    cfg = BenchConfig()
    if path is None:
        return cfg
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    with open(path, "r", encoding="utf-8") as fh:
        parser.read_file(fh)
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ValueError(f"unknown config section [{section}]")
        sub = getattr(cfg, section)
        valid = {f.name for f in dataclasses.fields(sub)}
        for key, text in parser.items(section):
            if key not in valid:
                raise ValueError(f"unknown key '{key}' in section [{section}]")
            setattr(sub, key, _parse_value(section, key, text, getattr(sub, key)))
    return cfg


def _render_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(_render_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def dump_config(cfg: BenchConfig) -> str:
    """Render a config as INI text (no comments, canonical key order)."""
    out = io.StringIO()
    for section in _SECTIONS:
        sub = getattr(cfg, section)
        out.write(f"[{section}]\n")
        for f in dataclasses.fields(sub):
            out.write(f"{f.name} = {_render_value(getattr(sub, f.name))}\n")
        out.write("\n")
    return out.getvalue()


def write_default_config(path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dump_config(BenchConfig()))


def config_hash(cfg: BenchConfig) -> str:
    """SHA-256 over canonical section.key=value lines.

    Stable against formatting/comment differences: two files that parse to
    the same values hash identically, and any value change alters the hash.
    """
    lines = []
    for section in _SECTIONS:
        sub = getattr(cfg, section)
        for f in dataclasses.fields(sub):
            lines.append(f"{section}.{f.name}={_render_value(getattr(sub, f.name))}")
    blob = "\n".join(lines).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def nominal_params(cfg: BenchConfig):
    """Build the nominal physical parameter set from the [dynamics] section."""
    from .dynamics import QuadParams

    d = cfg.dynamics
    return QuadParams(
        m=d.mass,
        J=np.asarray(d.inertia, dtype=float),
        k_f=d.thrust_gain,
        k_omega=np.asarray(d.rate_gain, dtype=float),
        drag=np.asarray(d.drag, dtype=float),
        g=np.asarray(d.gravity, dtype=float),
    )


def limits(cfg: BenchConfig):
    """Actuation bounds shared by the environment and all controllers."""
    from .env import Limits

    return Limits(
        f_max=cfg.dynamics.f_max,
        omega_max=np.asarray(cfg.dynamics.omega_max, dtype=float),
        df_max=cfg.env.df_max,
    )
