from .base import EnvSpec, PerturbationConfig, PerturbedEnv, StepResult, equivariance_residual, inject_perturbation
from .crawler import Crawler, crawler_transforms, goal_direction
from .scenario import Scenario, builtin_scenario, dump_scenario, load_scenario, parse_scenario
from .triangle import TriangleRobot, triangle_transforms

__all__ = [
    "Crawler", "EnvSpec", "PerturbationConfig", "PerturbedEnv", "Scenario", "StepResult",
    "TriangleRobot", "builtin_scenario", "crawler_transforms", "dump_scenario",
    "equivariance_residual", "goal_direction", "inject_perturbation", "load_scenario",
    "parse_scenario", "triangle_transforms",
]
