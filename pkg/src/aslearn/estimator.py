"""scikit-learn style wrappers around the fitter and the training loop."""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .config import ExperimentConfig
from .envs.scenario import load_scenario
from .exceptions import ShapeError
from .fitting import FitConfig, FitState, PenaltyG, PenaltyU, fit_round, slot_function_weights
from .harness import Trainer, evaluate_policy
from .losses import SymLossConfig
from .nets import forward_mean
from .ppo import PpoConfig
from .symmetry import AffineEstimator, EstimatorParams, extract_relation_graph


def check_actions(a, act_dim, name="actions"):
    """2-D finite float array with ``act_dim`` columns."""
    a = check_array(a, dtype=np.float64, ensure_2d=True, input_name=name)
    if a.shape[1] != act_dim:
        raise ShapeError(f"{name} has {a.shape[1]} columns, expected {act_dim}")
    return a


def check_paired(abar, abar_sym, names, act_dim):
    abar = check_actions(abar, act_dim, "abar")
    missing = [n for n in names if n not in abar_sym]
    if missing:
        raise KeyError(f"no transformed-state means for {', '.join(missing)}")
    out = {}
    for n in names:
        out[n] = check_actions(abar_sym[n], act_dim, f"abar_sym[{n!r}]")
        if out[n].shape[0] != abar.shape[0]:
            raise ShapeError(f"abar_sym[{n!r}] has {out[n].shape[0]} rows, expected {abar.shape[0]}")
    return abar, out


class _Rounds:
    def __init__(self, abar, abar_sym, fit_masks):
        self.abar, self.abar_sym, self.fit_masks = abar, abar_sym, fit_masks or {}


class SymmetryFitter(BaseEstimator):
    """Learns the action transforms of declared symmetries from paired policy means.

    ``partial_fit(abar, abar_sym)`` runs one fitting round, where ``abar`` are
    the means at states ``s`` and ``abar_sym[name]`` the means at the
    transformed states. ``transform(a, name)`` applies the fitted map.
    """

    def __init__(self, transforms=(), form="mx+b", history_len=10, min_dataset=64,
                 h_u_scale=0.05, h_u_width=0.01, h_g_base=1.1):
        self.transforms = transforms
        self.form = form
        self.history_len = history_len
        self.min_dataset = min_dataset
        self.h_u_scale = h_u_scale
        self.h_u_width = h_u_width
        self.h_g_base = h_g_base

    def _fit_config(self):
        return FitConfig(form=self.form, h_u=PenaltyU(self.h_u_scale, self.h_u_width),
                         h_g=PenaltyG(self.h_g_base), history_len=self.history_len,
                         min_dataset=self.min_dataset)

    def _init(self):
        specs = list(self.transforms)
        if not specs:
            raise ValueError("at least one transform is required")
        self.specs_ = specs
        self.graph_ = extract_relation_graph(specs)
        self.state_ = FitState(EstimatorParams(self.graph_))
        self.n_rounds_ = 0
        self.last_weights_ = {}

    def fit(self, abar, abar_sym, fit_masks=None):
        self._init()
        return self.partial_fit(abar, abar_sym, fit_masks)

    def partial_fit(self, abar, abar_sym, fit_masks=None):
        if not hasattr(self, "graph_"):
            self._init()
        names = [s.name for s in self.specs_]
        abar, abar_sym = check_paired(abar, abar_sym, names, self.graph_.act_dim)
        _, _, self.last_weights_ = fit_round(_Rounds(abar, abar_sym, fit_masks), self.graph_,
                                             self.specs_, self.state_.nu, self._fit_config(),
                                             self.state_)
        self.n_rounds_ += 1
        return self

    @property
    def nu_(self):
        check_is_fitted(self, "state_")
        return self.state_.nu

    def transform(self, a, name):
        check_is_fitted(self, "state_")
        a = check_actions(a, self.graph_.act_dim)
        return AffineEstimator(self.graph_, self.state_.nu, name)(a)

    def function_weights(self):
        """Per-transform, per-slot stability weights of the fitted maps."""
        check_is_fitted(self, "state_")
        return slot_function_weights(self.graph_, self.state_, [s.name for s in self.specs_],
                                     self.graph_.act_dim, PenaltyG(self.h_g_base))


class SymmetricPolicy(BaseEstimator):
    """PPO policy trained with an optional symmetry loss on a scenario.

    ``fit()`` trains from scratch on the scenario (there is no ``X``: the
    data comes from the environment). ``predict(states)`` returns the
    deterministic actions and ``score()`` the mean evaluation return.
    """

    def __init__(self, scenario="builtin:A1.1", method="none", total_steps=200_000,
                 hidden=(64, 64), seed=0, fitting=False, ppo_overrides=None, sym_overrides=None):
        self.scenario = scenario
        self.method = method
        self.total_steps = total_steps
        self.hidden = hidden
        self.seed = seed
        self.fitting = fitting
        self.ppo_overrides = ppo_overrides
        self.sym_overrides = sym_overrides

    def make_config(self):
        sc = load_scenario(self.scenario) if isinstance(self.scenario, str) else self.scenario
        sym_kw = dict(self.sym_overrides or {})
        sym_kw.setdefault("fitting", self.fitting)
        return ExperimentConfig(
            scenario=sc, method=self.method, ppo=PpoConfig(**(self.ppo_overrides or {})),
            sym=SymLossConfig(method=self.method, **sym_kw), total_steps=int(self.total_steps),
            hidden=tuple(self.hidden),
            scenario_ref=self.scenario if isinstance(self.scenario, str) else None)

    def fit(self, X=None, y=None, out_dir=None, max_iterations=None):
        self.config_ = self.make_config()
        self.trainer_ = Trainer(self.config_, self.seed)
        self.result_ = self.trainer_.run(out_dir, max_iterations)
        self.policy_ = self.result_.policy
        self.records_ = self.result_.records
        return self

    def predict(self, X):
        check_is_fitted(self, "policy_")
        X = check_array(X, dtype=np.float64, input_name="states")
        if X.shape[1] != self.policy_.obs_dim:
            raise ShapeError(f"states have {X.shape[1]} columns, expected {self.policy_.obs_dim}")
        return forward_mean(self.policy_, X)

    def score(self, X=None, y=None, episodes=16, seed=0):
        check_is_fitted(self, "policy_")
        sc = self.config_.scenario
        return evaluate_policy(sc.make_env(), self.policy_, sc.eval_goals, episodes, seed)
