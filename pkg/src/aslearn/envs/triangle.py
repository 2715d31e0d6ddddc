"""Three-limbed robot on a triangle.

State ``[X0, X1, X2, Z]``: one extension per limb plus a clock ``Z`` that
decays linearly to zero over an episode. Each limb moves by
``kappa * p_i * a_i``; ``p`` models worn actuators (all ones when healthy).
The reward pulls every limb extension magnitude toward the same target, so
the task has the robot's full symmetry: 3 mirror planes and the 3-fold
rotation.
"""

import numpy as np

from ..exceptions import DomainError, ShapeError
from ..symmetry import TransformSpec
from .base import EnvSpec, StepResult

RUSTY = (1.0, 0.5, 1.0 / 3.0)


def triangle_transforms():
    def spec(name, kind, perm, sign):
        return TransformSpec(name, kind, tuple(perm) + (3,), tuple([sign] * 3) + (1,),
                             tuple(perm), tuple([sign] * 3))

    return (
        spec("a", "reflection", (0, 2, 1), -1),
        spec("b", "reflection", (2, 1, 0), -1),
        spec("c", "reflection", (1, 0, 2), -1),
        spec("d", "rotation", (2, 0, 1), 1),
        spec("e", "rotation", (1, 2, 0), 1),
    )


class TriangleRobot:
    def __init__(self, limb_gain=(1.0, 1.0, 1.0), kappa=0.1, target=0.5, step_limit=50,
                 reset_noise=0.3):
        self.limb_gain = np.asarray(limb_gain, dtype=np.float64)
        if self.limb_gain.shape != (3,) or np.any(self.limb_gain == 0):
            raise DomainError("limb_gain must hold three nonzero values")
        self.kappa = float(kappa)
        self.target = float(target)
        self.dz = 1.0 / step_limit
        self.reset_noise = float(reset_noise)
        self.spec = EnvSpec("triangle", 4, 3, triangle_transforms(), step_limit)
        self.state = None
        self.t = 0

    def reset(self, goal=0, seed=None):
        if goal != 0:
            raise DomainError("the triangle robot has a single goal (0)")
        rng = np.random.default_rng(seed)
        x = rng.uniform(-self.reset_noise, self.reset_noise, 3)
        self.state = np.concatenate([x, [1.0]])
        self.t = 0
        return self.state.copy()

    def transition(self, s, a):
        s = np.asarray(s, dtype=np.float64)
        a = np.asarray(a, dtype=np.float64)
        if s.shape != (4,) or a.shape != (3,):
            raise ShapeError("triangle robot expects a 4-element state and a 3-element action")
        x = s[:3] + self.kappa * self.limb_gain * a
        s2 = np.concatenate([x, [s[3] - self.dz]])
        reward = -float(np.sum((np.abs(x) - self.target) ** 2))
        return s2, reward

    def step(self, a):
        if self.state is None:
            raise RuntimeError("call reset() first")
        self.state, reward = self.transition(self.state, a)
        self.t += 1
        return StepResult(self.state.copy(), reward, False, self.t >= self.spec.step_limit)
