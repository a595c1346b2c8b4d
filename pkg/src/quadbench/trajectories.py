"""Reference target generators for the evaluation scenarios.

Periodic kinds (ellipse, planar/3D eight) trace a closed curve once per
effective period T/speed_multiplier; the eights use the Gerono lemniscate
parameterization. ``circle_ramp`` is the stress scenario: a circular target
whose tangential speed grows linearly with time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .errors import NotPeriodicError

KINDS = ("hover", "ellipse", "eight_planar", "eight_3d", "circle_ramp")
PERIODIC_KINDS = ("ellipse", "eight_planar", "eight_3d")


@dataclass
class TrajectorySpec:
    kind: str
    center: np.ndarray
    a: float = 1.0              # m, first semi-axis / eight half-width
    b: float = 0.5              # m, second semi-axis
    c_z: float = 0.3            # m, vertical amplitude (eight_3d)
    period: float = 20.0        # s, one lap at multiplier 1
    speed_multiplier: float = 1.0
    radius: float = 1.0         # m, circle_ramp only
    ramp_accel: float = 0.05    # m/s^2, circle_ramp only

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown trajectory kind {self.kind!r}")
        self.center = np.asarray(self.center, dtype=float)
        if self.period <= 0 or self.speed_multiplier <= 0:
            raise ValueError("period and speed_multiplier must be positive")


def target_at(spec: TrajectorySpec, t: float) -> np.ndarray:
    """Reference position y_r at time t >= 0."""
    c = spec.center
    if spec.kind == "hover":
        return c.copy()
    if spec.kind == "circle_ramp":
        # angle(t) = integral of ramp_accel*t/radius
        phi = 0.5 * spec.ramp_accel * t * t / spec.radius
        return c + spec.radius * np.array([math.cos(phi), math.sin(phi), 0.0])
    th = 2.0 * math.pi * spec.speed_multiplier * t / spec.period
    if spec.kind == "ellipse":
        return c + np.array([spec.a * math.cos(th), spec.b * math.sin(th), 0.0])
    # Gerono lemniscate for both eights
    x = spec.a * math.sin(th)
    y = spec.b * math.sin(2.0 * th)
    z = spec.c_z * math.sin(2.0 * th) if spec.kind == "eight_3d" else 0.0
    return c + np.array([x, y, z])


def target_velocity(spec: TrajectorySpec, t: float) -> np.ndarray:
    """Analytic d/dt of target_at."""
    if spec.kind == "hover":
        return np.zeros(3)
    if spec.kind == "circle_ramp":
        phi = 0.5 * spec.ramp_accel * t * t / spec.radius
        speed = spec.ramp_accel * t
        return speed * np.array([-math.sin(phi), math.cos(phi), 0.0])
    rate = 2.0 * math.pi * spec.speed_multiplier / spec.period
    th = rate * t
    if spec.kind == "ellipse":
        return rate * np.array([-spec.a * math.sin(th), spec.b * math.cos(th), 0.0])
    dx = spec.a * math.cos(th)
    dy = 2.0 * spec.b * math.cos(2.0 * th)
    dz = 2.0 * spec.c_z * math.cos(2.0 * th) if spec.kind == "eight_3d" else 0.0
    return rate * np.array([dx, dy, dz])


def average_speed(spec: TrajectorySpec) -> float:
    """Arc length over one lap divided by the effective period.

    Length by adaptive quadrature of the analytic speed (rel. tol 1e-6).
    """
    if spec.kind not in PERIODIC_KINDS:
        raise NotPeriodicError(f"average speed undefined for kind {spec.kind!r}")

    def speed(t):
        return float(np.linalg.norm(target_velocity(spec, t)))

    t_eff = spec.period / spec.speed_multiplier
    length, _ = quad(speed, 0.0, t_eff, epsrel=1e-6, limit=400)
    return length / t_eff
