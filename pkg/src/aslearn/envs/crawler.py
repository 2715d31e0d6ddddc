"""Planar four-legged crawler with eight goal directions.

Legs sit at 45, 135, 225 and 315 degrees. Leg ``k`` has a hip (action slot
``2k``, swings the leg about the vertical axis, positive = counter-clockwise)
and a knee (slot ``2k+1``, lifts/lowers the foot; ``KNEE_SIGN[k]`` converts the
command into a physical "press down" amount).

Joints follow their command with first-order lag. A foot grips in proportion
to how hard it presses down; a gripping leg whose hip is turned pushes the
body along the leg's tangent and twists the body about the vertical axis.
Every quantity is built from odd/even functions of the joints arranged over
the legs, so the transition is exactly equivariant under the 8-element
symmetry group of the square (4 mirror planes, rotations by 90/180/270).

Observation (24 slots)::

    0 height, 1-2 goal direction (y, x) in the body frame, 3-5 body velocity
    (x, y, z), 6-7 tilt (x, y), then (position, speed) for joints 0..7.
"""

import numpy as np

from ..exceptions import DomainError, ShapeError
from ..symmetry import TransformSpec
from .base import EnvSpec, StepResult

N_LEGS = 4
N_JOINTS = 8
OBS_DIM = 8 + 2 * N_JOINTS
KNEE_SIGN = np.array([1.0, -1.0, -1.0, 1.0])

_H = np.sqrt(0.5)
# unit radial direction of each leg and the counter-clockwise tangent
RADIAL = np.array([[_H, _H], [-_H, _H], [-_H, -_H], [_H, -_H]])
TANGENT = np.stack([-RADIAL[:, 1], RADIAL[:, 0]], axis=1)

# world-frame signed permutation matrices acting on (x, y)
GROUP = {
    "mirror_xz": ("reflection", ((1, 0), (0, -1))),
    "mirror_yz": ("reflection", ((-1, 0), (0, 1))),
    "mirror_diag": ("reflection", ((0, 1), (1, 0))),
    "mirror_antidiag": ("reflection", ((0, -1), (-1, 0))),
    "rot90": ("rotation", ((0, -1), (1, 0))),
    "rot180": ("rotation", ((-1, 0), (0, -1))),
    "rot270": ("rotation", ((0, 1), (-1, 0))),
}


def _leg_permutation(R):
    """``perm[k]`` is the leg that leg ``k`` lands on under ``R``."""
    moved = RADIAL @ R.T
    perm = []
    for v in moved:
        perm.append(int(np.argmin(np.sum((RADIAL - v) ** 2, axis=1))))
    return perm


def _vector_slots(R, x_slot, y_slot):
    """Index/multiplier pairs for a 2D vector stored at ``x_slot`` and ``y_slot``."""
    src = {0: x_slot, 1: y_slot}
    out = {}
    for row, dst in ((0, x_slot), (1, y_slot)):
        col = int(np.flatnonzero(R[row])[0])
        out[dst] = (src[col], float(R[row, col]))
    return out


def crawler_transform(name):
    kind, R = GROUP[name]
    R = np.array(R, dtype=np.float64)
    det = float(round(np.linalg.det(R)))
    perm = _leg_permutation(R)
    act_idx = [0] * N_JOINTS
    act_mult = [1.0] * N_JOINTS
    for k in range(N_LEGS):
        d = perm[k]
        act_idx[2 * d], act_mult[2 * d] = 2 * k, det
        act_idx[2 * d + 1], act_mult[2 * d + 1] = 2 * k + 1, KNEE_SIGN[d] * KNEE_SIGN[k]

    obs_idx = list(range(OBS_DIM))
    obs_mult = [1.0] * OBS_DIM
    slots = {}
    slots.update(_vector_slots(R, 2, 1))   # goal stored as (y, x)
    slots.update(_vector_slots(R, 3, 4))   # velocity (x, y)
    slots.update(_vector_slots(R, 6, 7))   # tilt (x, y)
    for dst, (src, m) in slots.items():
        obs_idx[dst], obs_mult[dst] = src, m
    for i in range(N_JOINTS):
        for off in (0, 1):
            obs_idx[8 + 2 * i + off] = 8 + 2 * act_idx[i] + off
            obs_mult[8 + 2 * i + off] = act_mult[i]
    return TransformSpec(name, kind, tuple(obs_idx), tuple(obs_mult), tuple(act_idx), tuple(act_mult))


def crawler_transforms():
    return tuple(crawler_transform(n) for n in GROUP)


def goal_direction(goal):
    """Unit goal vector ``(x, y)``; goal ``g`` points ``45*g`` degrees counter-clockwise of +x."""
    if goal not in range(8):
        raise DomainError(f"goal index must be in 0..7, got {goal}")
    ang = np.deg2rad(45.0 * goal)
    return np.array([np.cos(ang), np.sin(ang)])


class Crawler:
    """Kinematic crawler. ``transition`` is a pure function of (observation, action)."""

    def __init__(self, step_limit=200, no_progress_window=30, max_yaw_deg=25.0, reset_noise=0.05,
                 leg_reach=0.1, tracking=0.5, twist=1.0, progress_scale=5.0, lateral_cost=2.0,
                 energy_cost=0.01, alive_bonus=0.05, base_height=0.5, knee_height=0.05):
        self.step_limit = int(step_limit)
        self.no_progress_window = int(no_progress_window)
        self.max_yaw = np.deg2rad(max_yaw_deg)
        self.reset_noise = float(reset_noise)
        self.leg_reach = float(leg_reach)
        self.tracking = float(tracking)
        self.twist = float(twist)
        self.progress_scale = float(progress_scale)
        self.lateral_cost = float(lateral_cost)
        self.energy_cost = float(energy_cost)
        self.alive_bonus = float(alive_bonus)
        self.base_height = float(base_height)
        self.knee_height = float(knee_height)
        self.spec = EnvSpec("crawler", OBS_DIM, N_JOINTS, crawler_transforms(), self.step_limit,
                            self.no_progress_window)
        self.state = None

    def _posture(self, pos):
        press = KNEE_SIGN * pos[1::2]
        height = self.base_height + self.knee_height * np.mean(press)
        tilt = press @ RADIAL
        return height, tilt

    def reset(self, goal=0, seed=None):
        g = goal_direction(goal)
        rng = np.random.default_rng(seed)
        pos = rng.uniform(-self.reset_noise, self.reset_noise, N_JOINTS)
        height, tilt = self._posture(pos)
        joints = np.zeros(2 * N_JOINTS)
        joints[0::2] = pos
        self.state = np.concatenate([[height, g[1], g[0], 0.0, 0.0, 0.0], tilt, joints])
        self.t = 0
        self.yaw = 0.0
        self.progress = 0.0
        self.best_progress = 0.0
        self.last_improvement = 0
        return self.state.copy()

    def _advance(self, s, a):
        s = np.asarray(s, dtype=np.float64)
        a = np.asarray(a, dtype=np.float64)
        if s.shape != (OBS_DIM,) or a.shape != (N_JOINTS,):
            raise ShapeError(f"crawler expects a {OBS_DIM}-element state and an {N_JOINTS}-element action")
        pos = s[8::2]
        new_pos = pos + self.tracking * (a - pos)
        speed = new_pos - pos
        hips, knees = new_pos[0::2], new_pos[1::2]
        grip = 0.5 * (1.0 + np.tanh(2.0 * KNEE_SIGN * knees))
        push = -self.leg_reach * grip * np.tanh(hips)
        disp = push @ TANGENT
        dyaw = self.twist * np.sum(push)
        goal = np.array([s[2], s[1]])
        forward = float(disp @ goal)
        lateral = float(disp[0] * goal[1] - disp[1] * goal[0])
        c, sn = np.cos(dyaw), np.sin(dyaw)
        new_goal = np.array([c * goal[0] + sn * goal[1], -sn * goal[0] + c * goal[1]])
        height, tilt = self._posture(new_pos)
        joints = np.empty(2 * N_JOINTS)
        joints[0::2], joints[1::2] = new_pos, speed
        s2 = np.concatenate([[height, new_goal[1], new_goal[0], disp[0], disp[1], height - s[0]],
                             tilt, joints])
        reward = (self.progress_scale * forward - self.lateral_cost * abs(lateral)
                  - self.energy_cost * float(np.sum(a * a)) + self.alive_bonus)
        return s2, reward, forward, dyaw

    def transition(self, s, a):
        s2, reward, _, _ = self._advance(s, a)
        return s2, reward

    def step(self, a):
        if self.state is None:
            raise RuntimeError("call reset() first")
        self.state, reward, forward, dyaw = self._advance(self.state, a)
        self.t += 1
        self.yaw += dyaw
        self.progress += forward
        if self.progress > self.best_progress + 1e-3:
            self.best_progress = self.progress
            self.last_improvement = self.t
        terminated = abs(self.yaw) > self.max_yaw
        stalled = self.no_progress_window > 0 and self.t - self.last_improvement >= self.no_progress_window
        truncated = not terminated and (self.t >= self.step_limit or stalled)
        return StepResult(self.state.copy(), reward, terminated, truncated)
