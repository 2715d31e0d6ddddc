"""Scenario files: a base environment, an actuator perturbation and goal lists.

Example::

    aslearn-scenario 1
    name = A2.1
    env = crawler
    perturbation.modifiers = 0.65 0.75 0.85 0.95 1.05 1.15 1.25 1.35
    perturbation.clip = fixed
    goals.train = 0 1 2 3 4 5 6 7
    goals.eval = 0 1 2 3 4 5 6 7
    env.step_limit = 200

``env.*`` keys are passed to the environment constructor as floats/ints.
"""

from dataclasses import dataclass, field
from importlib import resources

from ..exceptions import ConfigError
from ..kvfile import dump_kv, fmt_value, parse_kv, read_kv, to_bool, to_floats, to_ints
from .base import PerturbationConfig, PerturbedEnv
from .crawler import Crawler
from .triangle import RUSTY, TriangleRobot

SCENARIO_HEADER = "aslearn-scenario"
SCENARIO_VERSION = 1

ENVIRONMENTS = {"crawler": Crawler, "triangle": TriangleRobot}


@dataclass
class Scenario:
    name: str = "A1.1"
    env: str = "crawler"
    perturbation: PerturbationConfig = field(default_factory=PerturbationConfig)
    train_goals: tuple = tuple(range(8))
    eval_goals: tuple = tuple(range(8))
    env_kwargs: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.env not in ENVIRONMENTS:
            raise ConfigError(f"unknown environment {self.env!r}")
        if not self.train_goals or not self.eval_goals:
            raise ConfigError("goal lists must not be empty")
        self.train_goals = tuple(int(g) for g in self.train_goals)
        self.eval_goals = tuple(int(g) for g in self.eval_goals)

    @property
    def ground_truth_modifiers(self):
        """Actuator modifiers (the reference for fitted multipliers), or None when unperturbed."""
        p = self.perturbation
        if not p.enabled or p.modifiers is None:
            return None
        return p.modifiers

    def make_env(self, **overrides):
        kwargs = dict(self.env_kwargs)
        kwargs.update(overrides)
        return PerturbedEnv(ENVIRONMENTS[self.env](**kwargs), self.perturbation)

    def to_items(self):
        items = {"name": self.name, "env": self.env}
        p = self.perturbation
        items["perturbation.enabled"] = fmt_value(p.enabled)
        if p.modifiers is not None:
            items["perturbation.modifiers"] = fmt_value(list(p.modifiers))
        items["perturbation.clip"] = p.clip
        items["goals.train"] = fmt_value(list(self.train_goals))
        items["goals.eval"] = fmt_value(list(self.eval_goals))
        for k, v in self.env_kwargs.items():
            items[f"env.{k}"] = fmt_value(v)
        return items


def _number(text, key):
    try:
        return int(text)
    except ValueError:
        try:
            return float(text)
        except ValueError:
            raise ConfigError(f"{key}: expected a number, got {text!r}") from None


def scenario_from_items(items):
    known = {"name", "env", "perturbation.enabled", "perturbation.modifiers", "perturbation.clip",
             "goals.train", "goals.eval"}
    for k in items:
        if k not in known and not k.startswith("env."):
            raise ConfigError(f"unknown scenario key {k!r}")
    mods = items.get("perturbation.modifiers")
    pert = PerturbationConfig(
        modifiers=tuple(to_floats(mods, "perturbation.modifiers")) if mods else None,
        clip=items.get("perturbation.clip", "fixed"),
        enabled=to_bool(items.get("perturbation.enabled", "true"), "perturbation.enabled"),
    )
    env = items.get("env", "crawler")
    default_goals = "0 1 2 3 4 5 6 7" if env == "crawler" else "0"
    return Scenario(
        name=items.get("name", "unnamed"),
        env=env,
        perturbation=pert,
        train_goals=tuple(to_ints(items.get("goals.train", default_goals), "goals.train")),
        eval_goals=tuple(to_ints(items.get("goals.eval", default_goals), "goals.eval")),
        env_kwargs={k[4:]: _number(v, k) for k, v in items.items() if k.startswith("env.")},
    )


def parse_scenario(text, source="<string>"):
    return scenario_from_items(parse_kv(text, SCENARIO_HEADER, SCENARIO_VERSION, source))


def load_scenario(path):
    """Load a scenario file, or a built-in one via ``builtin:NAME``."""
    path = str(path)
    if path.startswith("builtin:"):
        return builtin_scenario(path[len("builtin:"):])
    return scenario_from_items(read_kv(path, SCENARIO_HEADER, SCENARIO_VERSION))


def dump_scenario(scenario):
    return dump_kv(scenario.to_items(), SCENARIO_HEADER, SCENARIO_VERSION)


def builtin_scenario_names():
    files = resources.files("aslearn").joinpath("scenarios")
    return sorted(p.name[:-len(".scenario")] for p in files.iterdir() if p.name.endswith(".scenario"))


def builtin_scenario(name):
    f = resources.files("aslearn").joinpath("scenarios", f"{name}.scenario")
    if not f.is_file():
        raise ConfigError(f"no built-in scenario {name!r}; available: {', '.join(builtin_scenario_names())}")
    return parse_scenario(f.read_text(encoding="utf-8"), source=f"builtin:{name}")


def triangle_rusty():
    return Scenario(name="triangle-rusty", env="triangle",
                    perturbation=PerturbationConfig(modifiers=RUSTY, clip="fixed"),
                    train_goals=(0,), eval_goals=(0,))
