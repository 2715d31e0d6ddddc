"""Shared environment plumbing: step results, actuator perturbations, equivariance checks."""

from dataclasses import dataclass

import numpy as np

from ..exceptions import ConfigError, ShapeError
from ..symmetry import apply_declared_action_transform, apply_state_transform


@dataclass
class StepResult:
    state: np.ndarray
    reward: float
    terminated: bool
    truncated: bool


@dataclass(frozen=True)
class EnvSpec:
    name: str
    obs_dim: int
    act_dim: int
    transforms: tuple
    step_limit: int
    no_progress_window: int = 0


@dataclass
class PerturbationConfig:
    """Actuator scaling ``a <- clip(modifiers * a, range)``.

    ``clip`` is ``"fixed"`` for ``[-1, 1]`` or ``"scaled"`` for ``[-|m|, |m|]``.
    """

    modifiers: tuple = None
    clip: str = "fixed"
    enabled: bool = True

    def __post_init__(self):
        if self.clip not in ("fixed", "scaled"):
            raise ConfigError(f"unknown clip mode {self.clip!r}")
        if self.modifiers is not None:
            m = np.asarray(self.modifiers, dtype=np.float64)
            if np.any(m == 0) or not np.all(np.isfinite(m)):
                raise ConfigError("action modifiers must be finite and nonzero")
            self.modifiers = tuple(float(x) for x in m)

    def effective(self, act_dim):
        """Modifier vector and clip bounds for an action space of size ``act_dim``."""
        if not self.enabled or self.modifiers is None:
            m = np.ones(act_dim)
        else:
            m = np.asarray(self.modifiers)
            if m.size != act_dim:
                raise ShapeError(f"{m.size} action modifiers for an action space of size {act_dim}")
        hi = np.abs(m) if self.clip == "scaled" and self.enabled else np.ones(act_dim)
        return m, hi


class PerturbedEnv:
    """Applies a :class:`PerturbationConfig` before the inner dynamics. Observations are untouched."""

    def __init__(self, env, cfg=None):
        self.env = env
        self.cfg = PerturbationConfig() if cfg is None else cfg
        self.modifiers, self.bound = self.cfg.effective(env.spec.act_dim)

    @property
    def spec(self):
        return self.env.spec

    def effective_action(self, a):
        a = np.asarray(a, dtype=np.float64)
        if a.shape != (self.spec.act_dim,):
            raise ShapeError(f"action must have shape ({self.spec.act_dim},), got {a.shape}")
        return np.clip(self.modifiers * a, -self.bound, self.bound)

    def reset(self, goal=0, seed=None):
        return self.env.reset(goal=goal, seed=seed)

    def step(self, a):
        return self.env.step(self.effective_action(a))

    def transition(self, s, a):
        return self.env.transition(s, self.effective_action(a))

    def __getattr__(self, name):
        # unpickling looks up attributes before ``env`` is restored
        if name == "env":
            raise AttributeError(name)
        return getattr(self.env, name)


def inject_perturbation(env, cfg):
    return PerturbedEnv(env, cfg)


def equivariance_residual(env, j, s, a):
    """``|f(s') - s'_sym|_inf + |r - r_sym|`` for one transition; wrapped envs include their perturbation."""
    spec = env.spec.transforms[j] if isinstance(j, int) else next(t for t in env.spec.transforms
                                                                   if t.name == j)
    s2, r = env.transition(s, a)
    s2_sym, r_sym = env.transition(apply_state_transform(spec, s),
                                   apply_declared_action_transform(spec, a))
    return float(np.max(np.abs(apply_state_transform(spec, s2) - s2_sym)) + abs(r - r_sym))
