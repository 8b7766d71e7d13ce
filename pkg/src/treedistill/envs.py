"""Classic-control tasks: CartPole, MountainCar and Acrobot.

Physics follow the standard published implementations (Euler integration for
CartPole and MountainCar, RK4 for Acrobot's book dynamics).  Every episode
draws its initial state from a Philox generator seeded by ``reset``; there is
no other randomness and no global RNG state.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ContractError


@dataclass(frozen=True)
class EnvSpec:
    name: str
    obs_dim: int
    n_actions: int
    max_steps: int
    reward_range: tuple[float, float]
    feature_names: tuple[str, ...]


class Transition(NamedTuple):
    next_state: np.ndarray
    reward: float
    done: bool
    truncated: bool


def episode_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed) & (2**64 - 1)))


class _Env:
    spec: EnvSpec

    def __init__(self):
        self._t = 0
        self._over = True
        self._state: list[float] | None = None

    def reset(self, seed: int) -> np.ndarray:
        self._state = self._initial(episode_rng(seed))
        self._t = 0
        self._over = False
        return self._observe()

    def step(self, action: int) -> Transition:
        if self._over:
            raise ContractError("step() called on a finished episode; call reset() first")
        action = int(action)
        if not 0 <= action < self.spec.n_actions:
            raise ContractError(
                f"action {action} outside [0, {self.spec.n_actions}) for {self.spec.name}")
        reward, done = self._advance(action)
        self._t += 1
        truncated = not done and self._t >= self.spec.max_steps
        self._over = done or truncated
        return Transition(self._observe(), reward, done, truncated)

    def set_state(self, physical_state) -> np.ndarray:
        """Start an episode from an explicit physical state (for replay and tests).

        For Acrobot the physical state is (theta1, theta2, dtheta1, dtheta2),
        not the 6-dim observation.
        """
        self._state = [float(v) for v in physical_state]
        self._t = 0
        self._over = False
        return self._observe()

    @property
    def elapsed(self) -> int:
        return self._t

    def _observe(self) -> np.ndarray:
        return np.array(self._state, dtype=np.float64)

    def _initial(self, rng: np.random.Generator) -> list[float]:
        raise NotImplementedError

    def _advance(self, action: int) -> tuple[float, bool]:
        raise NotImplementedError


class CartPole(_Env):
    spec = EnvSpec("CartPole", 4, 2, 200, (1.0, 200.0),
                   ("cart_position", "cart_velocity", "pole_angle", "pole_angular_velocity"))

    gravity = 9.8
    masscart = 1.0
    masspole = 0.1
    total_mass = masspole + masscart
    length = 0.5
    polemass_length = masspole * length
    force_mag = 10.0
    tau = 0.02
    theta_threshold = 12 * 2 * math.pi / 360
    x_threshold = 2.4

    def _initial(self, rng):
        return [float(v) for v in rng.uniform(-0.05, 0.05, size=4)]

    def _advance(self, action):
        x, x_dot, theta, theta_dot = self._state
        force = self.force_mag if action == 1 else -self.force_mag
        costheta = math.cos(theta)
        sintheta = math.sin(theta)
        temp = (force + self.polemass_length * theta_dot**2 * sintheta) / self.total_mass
        thetaacc = (self.gravity * sintheta - costheta * temp) / (
            self.length * (4.0 / 3.0 - self.masspole * costheta**2 / self.total_mass))
        xacc = temp - self.polemass_length * thetaacc * costheta / self.total_mass
        x = x + self.tau * x_dot
        x_dot = x_dot + self.tau * xacc
        theta = theta + self.tau * theta_dot
        theta_dot = theta_dot + self.tau * thetaacc
        self._state = [x, x_dot, theta, theta_dot]
        done = (x < -self.x_threshold or x > self.x_threshold
                or theta < -self.theta_threshold or theta > self.theta_threshold)
        return 1.0, done


class MountainCar(_Env):
    spec = EnvSpec("MountainCar", 2, 3, 200, (-200.0, -1.0), ("position", "velocity"))

    min_position = -1.2
    max_position = 0.6
    max_speed = 0.07
    goal_position = 0.5
    force = 0.001
    gravity = 0.0025

    def _initial(self, rng):
        return [float(rng.uniform(-0.6, -0.4)), 0.0]

    def _advance(self, action):
        position, velocity = self._state
        velocity += (action - 1) * self.force + math.cos(3 * position) * (-self.gravity)
        velocity = min(max(velocity, -self.max_speed), self.max_speed)
        position += velocity
        position = min(max(position, self.min_position), self.max_position)
        if position == self.min_position and velocity < 0:
            velocity = 0.0
        self._state = [position, velocity]
        return -1.0, position >= self.goal_position


def _wrap(x: float, m: float, big_m: float) -> float:
    diff = big_m - m
    while x > big_m:
        x -= diff
    while x < m:
        x += diff
    return x


class Acrobot(_Env):
    """Acrobot with the book dynamics and no torque noise."""

    spec = EnvSpec("Acrobot", 6, 3, 500, (-500.0, -1.0),
                   ("cos_theta1", "sin_theta1", "cos_theta2", "sin_theta2",
                    "theta1_velocity", "theta2_velocity"))

    dt = 0.2
    link_length_1 = 1.0
    link_mass_1 = 1.0
    link_mass_2 = 1.0
    link_com_pos_1 = 0.5
    link_com_pos_2 = 0.5
    link_moi = 1.0
    max_vel_1 = 4 * math.pi
    max_vel_2 = 9 * math.pi
    torques = (-1.0, 0.0, 1.0)

    def _initial(self, rng):
        return [float(v) for v in rng.uniform(-0.1, 0.1, size=4)]

    def _observe(self):
        t1, t2, d1, d2 = self._state
        return np.array([math.cos(t1), math.sin(t1), math.cos(t2), math.sin(t2), d1, d2])

    def _dsdt(self, s, torque):
        m1, m2 = self.link_mass_1, self.link_mass_2
        l1 = self.link_length_1
        lc1, lc2 = self.link_com_pos_1, self.link_com_pos_2
        i1 = i2 = self.link_moi
        g = 9.8
        theta1, theta2, dtheta1, dtheta2 = s
        d1 = m1 * lc1**2 + m2 * (l1**2 + lc2**2 + 2 * l1 * lc2 * math.cos(theta2)) + i1 + i2
        d2 = m2 * (lc2**2 + l1 * lc2 * math.cos(theta2)) + i2
        phi2 = m2 * lc2 * g * math.cos(theta1 + theta2 - math.pi / 2.0)
        phi1 = (-m2 * l1 * lc2 * dtheta2**2 * math.sin(theta2)
                - 2 * m2 * l1 * lc2 * dtheta2 * dtheta1 * math.sin(theta2)
                + (m1 * lc1 + m2 * l1) * g * math.cos(theta1 - math.pi / 2)
                + phi2)
        ddtheta2 = (torque + d2 / d1 * phi1 - m2 * l1 * lc2 * dtheta1**2 * math.sin(theta2)
                    - phi2) / (m2 * lc2**2 + i2 - d2**2 / d1)
        ddtheta1 = -(d2 * ddtheta2 + phi1) / d1
        return (dtheta1, dtheta2, ddtheta1, ddtheta2)

    def _advance(self, action):
        torque = self.torques[action]
        y0 = self._state
        h = self.dt
        h2 = h / 2.0
        k1 = self._dsdt(y0, torque)
        k2 = self._dsdt([y + h2 * k for y, k in zip(y0, k1)], torque)
        k3 = self._dsdt([y + h2 * k for y, k in zip(y0, k2)], torque)
        k4 = self._dsdt([y + h * k for y, k in zip(y0, k3)], torque)
        ns = [y + h / 6.0 * (a + 2 * b + 2 * c + d)
              for y, a, b, c, d in zip(y0, k1, k2, k3, k4)]
        ns[0] = _wrap(ns[0], -math.pi, math.pi)
        ns[1] = _wrap(ns[1], -math.pi, math.pi)
        ns[2] = min(max(ns[2], -self.max_vel_1), self.max_vel_1)
        ns[3] = min(max(ns[3], -self.max_vel_2), self.max_vel_2)
        self._state = ns
        done = -math.cos(ns[0]) - math.cos(ns[1] + ns[0]) > 1.0
        return (0.0 if done else -1.0), done


TASKS = {cls.spec.name: cls for cls in (CartPole, MountainCar, Acrobot)}


def make(name: str) -> _Env:
    try:
        return TASKS[name]()
    except KeyError:
        raise ContractError(f"unknown task {name!r}; expected one of {sorted(TASKS)}") from None
