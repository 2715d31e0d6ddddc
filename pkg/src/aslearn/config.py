"""Experiment configuration and its flat ``key = value`` file form.

Recognized keys (all optional except ``scenario``)::

    aslearn-config 1
    scenario = builtin:A1.1          # or a path, relative to the config file
    method = asl                     # none | msl | psl | asl
    seeds = 0 1 2
    train.total_steps = 4000000
    train.eval_every = 15
    train.metrics_every = 5
    train.eval_episodes = 16
    policy.hidden = 256 256
    policy.log_std_init = -1
    ppo.<field> = ...                # clip gamma lam epochs minibatch ent_coef vf_coef lr
                                     # batch_steps max_grad_norm
    sym.w_pi = 0.05                  # also sym.w_pi.<transform>
    sym.w_v = 0.5                    # also sym.w_v.<transform>
    sym.k_s = 0.3                    # also sym.k_s.<transform>
    sym.k_d.reflection = 0.1
    sym.k_d.rotation = 0
    sym.k_d.<transform> = ...
    sym.k_v = 1.5                    # "none" disables the value gate
    sym.window_batches = 10
    sym.fitting = false
    fit.form = mx+b                  # mx+b | mx
    fit.history_len = 10
    fit.min_dataset = 64
    fit.h_u.scale = 0.05             # H_U(x) = scale * width / (width + x^4)
    fit.h_u.width = 0.01
    fit.h_g.base = 1.1               # H_G(x) = base^-x
"""

import copy
import os
from dataclasses import dataclass, field, fields

from .envs.scenario import Scenario, load_scenario
from .exceptions import ConfigError
from .fitting import FitConfig, PenaltyG, PenaltyU
from .kvfile import dump_kv, fmt_value, parse_kv, read_kv, to_bool, to_floats, to_ints
from .losses import SymLossConfig
from .ppo import PpoConfig

CONFIG_HEADER = "aslearn-config"
CONFIG_VERSION = 1

DESK_TOTAL_STEPS = 200_000
DESK_HIDDEN = (64, 64)


@dataclass
class ExperimentConfig:
    scenario: Scenario = field(default_factory=Scenario)
    method: str = "none"
    ppo: PpoConfig = field(default_factory=PpoConfig)
    sym: SymLossConfig = None
    total_steps: int = 4_000_000
    hidden: tuple = (256, 256)
    log_std_init: float = -1.0
    seeds: tuple = (0,)
    eval_every: int = 15
    metrics_every: int = 5
    eval_episodes: int = 16
    scenario_ref: str = None

    def __post_init__(self):
        self.method = self.method.lower()
        if self.scenario_ref is None:
            self.scenario_ref = f"builtin:{self.scenario.name}"
        if self.sym is None:
            self.sym = SymLossConfig(method=self.method)
        elif self.sym.method != self.method:
            raise ConfigError(f"method {self.method!r} disagrees with the loss config {self.sym.method!r}")
        if self.total_steps < self.ppo.batch_steps:
            raise ConfigError("total_steps must cover at least one batch")
        if self.eval_every < 1 or self.metrics_every < 1 or self.eval_episodes < 1:
            raise ConfigError("schedule intervals and eval_episodes must be positive")

    @property
    def iterations(self):
        return self.total_steps // self.ppo.batch_steps

    def desk(self):
        """Copy with the desk-scale budget: 2e5 steps and [64, 64] hidden layers."""
        c = copy.deepcopy(self)
        c.total_steps = DESK_TOTAL_STEPS
        c.hidden = DESK_HIDDEN
        return c

    def replace(self, **kw):
        c = copy.deepcopy(self)
        for k, v in kw.items():
            setattr(c, k, v)
        if "scenario" in kw and "scenario_ref" not in kw:
            c.scenario_ref = f"builtin:{c.scenario.name}"
        return c


_PPO_FIELDS = {f.name: f.type for f in fields(PpoConfig)}


def _per_transform(items, key, default):
    per = {k[len(key) + 1:]: float(v) for k, v in items.items() if k.startswith(key + ".")}
    base = float(items[key]) if key in items else default
    if not per:
        return base
    return _DefaultDict(base, per)


class _DefaultDict(dict):
    """Per-transform values with a fallback for unlisted transforms."""

    def __init__(self, default, values):
        super().__init__(values)
        self.default = default

    def __missing__(self, key):
        return self.default

    def values(self):
        return list(super().values()) + ([self.default] if self.default is not None else [])


def config_from_items(items, base_dir="."):
    used = set()

    def take(key, default=None):
        used.add(key)
        return items.get(key, default)

    if "scenario" not in items:
        raise ConfigError("config must name a scenario")
    ref = take("scenario")
    path = ref if ref.startswith("builtin:") or os.path.isabs(ref) else os.path.join(base_dir, ref)
    scenario = load_scenario(path)
    method = take("method", "none")

    ppo_kw = {}
    for name in _PPO_FIELDS:
        v = take(f"ppo.{name}")
        if v is not None:
            ppo_kw[name] = int(v) if name in ("epochs", "minibatch", "batch_steps") else float(v)
    ppo = PpoConfig(**ppo_kw)

    fit = FitConfig(
        form=take("fit.form", "mx+b"),
        h_u=PenaltyU(float(take("fit.h_u.scale", 0.05)), float(take("fit.h_u.width", 0.01))),
        h_g=PenaltyG(float(take("fit.h_g.base", 1.1))),
        history_len=int(take("fit.history_len", 10)),
        min_dataset=int(take("fit.min_dataset", 64)),
    )
    k_v = take("sym.k_v", "1.5")
    k_d = {}
    for k in items:
        if k.startswith("sym.k_d.") and k not in ("sym.k_d.reflection", "sym.k_d.rotation"):
            k_d[k[len("sym.k_d."):]] = float(items[k])
            used.add(k)
    for prefix in ("sym.w_pi", "sym.w_v", "sym.k_s"):
        used.update(k for k in items if k == prefix or k.startswith(prefix + "."))
    sym = SymLossConfig(
        method=method,
        w_pi=_per_transform(items, "sym.w_pi", None),
        w_v=_per_transform(items, "sym.w_v", 0.5),
        k_s=_per_transform(items, "sym.k_s", 0.3),
        k_d_reflection=float(take("sym.k_d.reflection", 0.1)),
        k_d_rotation=float(take("sym.k_d.rotation", 0.0)),
        k_d=k_d,
        k_v=None if k_v.strip().lower() == "none" else float(k_v),
        window_batches=int(take("sym.window_batches", 10)),
        fitting=to_bool(take("sym.fitting", "false"), "sym.fitting"),
        fit=fit,
    )
    if isinstance(sym.w_pi, _DefaultDict) and sym.w_pi.default is None:
        from .losses import DEFAULT_POLICY_WEIGHT
        sym.w_pi.default = DEFAULT_POLICY_WEIGHT[sym.method]

    cfg = ExperimentConfig(
        scenario=scenario,
        method=method,
        ppo=ppo,
        sym=sym,
        total_steps=int(float(take("train.total_steps", 4_000_000))),
        hidden=tuple(to_ints(take("policy.hidden", "256 256"), "policy.hidden")),
        log_std_init=float(take("policy.log_std_init", -1.0)),
        seeds=tuple(to_ints(take("seeds", "0"), "seeds")),
        eval_every=int(take("train.eval_every", 15)),
        metrics_every=int(take("train.metrics_every", 5)),
        eval_episodes=int(take("train.eval_episodes", 16)),
        scenario_ref=ref if ref.startswith("builtin:") else os.path.abspath(path),
    )
    unknown = sorted(set(items) - used)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    return cfg


def parse_config(text, base_dir=".", source="<string>"):
    return config_from_items(parse_kv(text, CONFIG_HEADER, CONFIG_VERSION, source), base_dir)


def load_config(path):
    items = read_kv(path, CONFIG_HEADER, CONFIG_VERSION)
    return config_from_items(items, os.path.dirname(os.path.abspath(path)))


def _emit_weight(items, key, value):
    if isinstance(value, dict):
        default = getattr(value, "default", None)
        if default is not None:
            items[key] = fmt_value(float(default))
        for name, v in dict(value).items():
            items[f"{key}.{name}"] = fmt_value(float(v))
    else:
        items[key] = fmt_value(float(value))


def _checked_ref(cfg):
    ref = cfg.scenario_ref
    if ref.startswith("builtin:"):
        try:
            known = load_scenario(ref)
        except ConfigError:
            known = None
        if known != cfg.scenario:
            raise ConfigError(f"scenario {cfg.scenario.name!r} is not {ref}; "
                              "save it to a file and set scenario_ref to its path")
    return ref


def config_to_items(cfg):
    items = {"scenario": _checked_ref(cfg), "method": cfg.method, "seeds": fmt_value(list(cfg.seeds)),
             "train.total_steps": str(cfg.total_steps), "train.eval_every": str(cfg.eval_every),
             "train.metrics_every": str(cfg.metrics_every),
             "train.eval_episodes": str(cfg.eval_episodes),
             "policy.hidden": fmt_value(list(cfg.hidden)),
             "policy.log_std_init": fmt_value(float(cfg.log_std_init))}
    for name in _PPO_FIELDS:
        items[f"ppo.{name}"] = fmt_value(getattr(cfg.ppo, name))
    s = cfg.sym
    _emit_weight(items, "sym.w_pi", s.w_pi)
    _emit_weight(items, "sym.w_v", s.w_v)
    _emit_weight(items, "sym.k_s", s.k_s)
    items["sym.k_d.reflection"] = fmt_value(float(s.k_d_reflection))
    items["sym.k_d.rotation"] = fmt_value(float(s.k_d_rotation))
    for name, v in s.k_d.items():
        items[f"sym.k_d.{name}"] = fmt_value(float(v))
    items["sym.k_v"] = "none" if s.k_v is None else fmt_value(float(s.k_v))
    items["sym.window_batches"] = str(s.window_batches)
    items["sym.fitting"] = fmt_value(bool(s.fitting))
    f = s.fit
    items["fit.form"] = f.form
    items["fit.history_len"] = str(f.history_len)
    items["fit.min_dataset"] = str(f.min_dataset)
    if isinstance(f.h_u, PenaltyU):
        items["fit.h_u.scale"] = fmt_value(f.h_u.scale)
        items["fit.h_u.width"] = fmt_value(f.h_u.width)
    if isinstance(f.h_g, PenaltyG):
        items["fit.h_g.base"] = fmt_value(f.h_g.base)
    return items


def dump_config(cfg):
    return dump_kv(config_to_items(cfg), CONFIG_HEADER, CONFIG_VERSION)
