"""Training loop, evaluation schedule and metric logging."""

import logging
import os
import pickle
from dataclasses import dataclass

import numpy as np

from .exceptions import AbortUpdate
from .fitting import FitState, fit_round, ground_truth_multipliers, slot_function_weights
from .losses import dead_zone_gate, value_gate
from .metrics import export_metrics
from .nets import GaussianPolicy, ValueFunction, forward_mean, save_checkpoint
from .numerics import RunningWindow, gaussian_log_density, window_mad
from .ppo import RolloutBatch, SymmetryHook, compute_gae, make_optimizers, normalize_advantages, update_epochs
from .symmetry import EstimatorParams, apply_declared_action_transform, apply_state_transform, extract_relation_graph

log = logging.getLogger(__name__)

STATE_MAGIC = "aslearn-train-state"
STATE_VERSION = 1


def evaluate_policy(env, policy, goals, episodes=16, seed=0):
    """Mean undiscounted return of the deterministic policy, cycling ``goals`` round-robin."""
    returns = []
    for i in range(episodes):
        s = env.reset(goal=goals[i % len(goals)], seed=_eval_seed(seed, i))
        total = 0.0
        while True:
            res = env.step(forward_mean(policy, s))
            total += res.reward
            if res.terminated or res.truncated:
                break
            s = res.state
        returns.append(total)
    return float(np.mean(returns))


def _eval_seed(seed, episode):
    return int(np.random.SeedSequence([int(seed), 7919, int(episode)]).generate_state(1)[0])


@dataclass
class TrainingResult:
    records: list
    final_return: float
    policy: object
    value_fn: object
    fit_state: object
    iterations: int
    aborted_updates: int


class Trainer:
    """One (config, seed) training run. ``run()`` executes the remaining iterations."""

    def __init__(self, config, seed=0):
        self.config = config
        self.seed = int(seed)
        init_ss, sample_ss, shuffle_ss, env_ss = np.random.SeedSequence(self.seed).spawn(4)
        init_rng = np.random.default_rng(init_ss)
        self.sample_rng = np.random.default_rng(sample_ss)
        self.shuffle_rng = np.random.default_rng(shuffle_ss)
        self.env_rng = np.random.default_rng(env_ss)

        sc = config.scenario
        self.env = sc.make_env()
        self.eval_env = sc.make_env()
        spec = self.env.spec
        self.specs = list(spec.transforms)
        self.graph = extract_relation_graph(self.specs)
        self.policy = GaussianPolicy(spec.obs_dim, spec.act_dim, config.hidden, config.log_std_init,
                                     rng=init_rng)
        self.value_fn = ValueFunction(spec.obs_dim, config.hidden, rng=init_rng)
        self.optimizers = make_optimizers(self.policy, self.value_fn, config.ppo)
        self.fit_state = FitState(EstimatorParams(self.graph))
        self.window = RunningWindow(config.sym.window_batches * config.ppo.batch_steps)
        am = sc.ground_truth_modifiers
        self.truth = ground_truth_multipliers(am, self.graph) if am is not None else None
        self.goal_cursor = 0
        self.obs = None
        self.iteration = 0
        self.records = []
        self.aborted_updates = 0
        self.last_batch = None

    # -- rollout ------------------------------------------------------------------

    def _reset_env(self):
        goals = self.config.scenario.train_goals
        goal = goals[self.goal_cursor % len(goals)]
        self.goal_cursor += 1
        self.obs = self.env.reset(goal=goal, seed=int(self.env_rng.integers(2 ** 31)))

    def collect(self):
        n = self.config.ppo.batch_steps
        spec = self.env.spec
        states = np.empty((n, spec.obs_dim))
        next_states = np.empty((n, spec.obs_dim))
        actions = np.empty((n, spec.act_dim))
        rewards = np.empty(n)
        term = np.zeros(n, dtype=bool)
        trunc = np.zeros(n, dtype=bool)
        sigma = self.policy.sigma
        net = self.policy.mean_net
        self.policy.check_finite()
        for t in range(n):
            if self.obs is None:
                self._reset_env()
            s = self.obs
            a = net.forward(s) + sigma * self.sample_rng.standard_normal(spec.act_dim)
            res = self.env.step(a)
            states[t], actions[t], rewards[t], next_states[t] = s, a, res.reward, res.state
            term[t], trunc[t] = res.terminated, res.truncated
            self.obs = None if (res.terminated or res.truncated) else res.state
        return states, actions, rewards, term, trunc, next_states

    def prepare(self, states, actions, rewards, term, trunc, next_states):
        cfg = self.config
        method = cfg.method
        sigma = self.policy.sigma
        abar = forward_mean(self.policy, states)
        values = self.value_fn(states)
        next_values = np.where(term, 0.0, self.value_fn(next_states))
        adv, ret = compute_gae(rewards, values, next_values, term | trunc, cfg.ppo.gamma, cfg.ppo.lam)
        batch = RolloutBatch(
            states=states, actions=actions, logp_old=gaussian_log_density(actions, abar, sigma),
            rewards=rewards, terminated=term, truncated=trunc, values=values,
            next_values=next_values, abar=abar, advantages=normalize_advantages(adv), returns=ret)
        self.window.extend(states)
        mad = window_mad(self.window)
        self.nsrr = {}
        for spec in self.specs:
            fs = apply_state_transform(spec, states)
            batch.sym_states[spec.name] = fs
            psi, nsrr = dead_zone_gate(states, fs, mad, cfg.sym.dead_zone(spec))
            self.nsrr[spec.name] = nsrr
            if method == "none":
                continue
            batch.abar_sym[spec.name] = forward_mean(self.policy, fs)
            if method == "psl":
                batch.logp_sym_old[spec.name] = gaussian_log_density(
                    apply_declared_action_transform(spec, abar), batch.abar_sym[spec.name], sigma)
            if method == "asl":
                batch.psi[spec.name] = psi
                batch.phi[spec.name] = value_gate(values, self.value_fn(fs), cfg.sym.k_v)
                batch.fit_masks[spec.name] = psi
        return batch

    # -- one iteration ---------------------------------------------------------------

    def step(self):
        cfg = self.config
        batch = self.prepare(*self.collect())
        self.last_batch = batch
        w_g = None
        if cfg.method == "asl" and cfg.sym.fitting:
            fit_round(batch, self.graph, self.specs, self.fit_state.nu, cfg.sym.fit, self.fit_state)
            w_g = slot_function_weights(self.graph, self.fit_state, [s.name for s in self.specs],
                                        self.env.spec.act_dim, cfg.sym.fit.h_g)
        hook = SymmetryHook(cfg.method, self.specs, cfg.sym, cfg.ppo.clip, self.graph,
                            self.fit_state.nu.copy(), w_g)
        try:
            update_epochs(batch, self.policy, self.value_fn, cfg.ppo, hook, self.shuffle_rng,
                          self.optimizers)
        except AbortUpdate as exc:
            self.aborted_updates += 1
            log.warning("iteration %d: update aborted (%s)", self.iteration + 1, exc)
        self.iteration += 1
        return batch

    def metrics_row(self, batch, eval_return=None):
        cfg = self.config
        row = {"iteration": self.iteration, "timestep": self.iteration * cfg.ppo.batch_steps,
               "eval_return": eval_return}
        v = self.value_fn(batch.states)
        dists = {}
        for spec in self.specs:
            dists[spec.name] = float(np.mean(np.abs(v - self.value_fn(batch.sym_states[spec.name]))))
        row["value_distance"] = float(np.mean(list(dists.values())))
        for name, d in dists.items():
            row[f"value_distance.{name}"] = d
        for spec in self.specs:
            if spec.kind == "reflection":
                row[f"nsrr.{spec.name}"] = self.nsrr[spec.name]
        if cfg.method == "asl" and cfg.sym.fitting:
            for k, val in self.fit_state.nu.as_dict().items():
                row[f"nu.{k}"] = val
            if self.truth is not None:
                row["target_error"] = float(np.mean([abs(self.fit_state.nu.pair(k)[0] - m)
                                                     for k, m in self.truth.items()]))
        return row

    def evaluate(self):
        sc = self.config.scenario
        return evaluate_policy(self.eval_env, self.policy, sc.eval_goals, self.config.eval_episodes,
                               self.seed)

    def run(self, out_dir=None, max_iterations=None):
        cfg = self.config
        stop = cfg.iterations if max_iterations is None else min(cfg.iterations, max_iterations)
        while self.iteration < stop:
            batch = self.step()
            it = self.iteration
            do_eval = it % cfg.eval_every == 0
            if it % cfg.metrics_every == 0 or do_eval:
                self.records.append(self.metrics_row(batch, self.evaluate() if do_eval else None))
                if out_dir is not None:
                    self.save(out_dir)
        final = self.evaluate()
        if out_dir is not None:
            self.save(out_dir)
        return TrainingResult(self.records, final, self.policy, self.value_fn, self.fit_state,
                              self.iteration, self.aborted_updates)

    # -- persistence ---------------------------------------------------------------------

    def save(self, out_dir):
        os.makedirs(out_dir, exist_ok=True)
        save_checkpoint(os.path.join(out_dir, "checkpoint.txt"), self.policy, self.value_fn)
        if self.records:
            export_metrics(self.records, os.path.join(out_dir, "metrics.csv"))
        state = {k: v for k, v in self.__dict__.items() if k != "config"}
        state["_magic"] = (STATE_MAGIC, STATE_VERSION)
        tmp = os.path.join(out_dir, "train_state.pkl.tmp")
        with open(tmp, "wb") as fh:
            pickle.dump(state, fh)
        os.replace(tmp, os.path.join(out_dir, "train_state.pkl"))

    @classmethod
    def resume(cls, config, out_dir):
        """Continue a run saved by :meth:`save`; the in-flight episode continues as well."""
        with open(os.path.join(out_dir, "train_state.pkl"), "rb") as fh:
            state = pickle.load(fh)
        if state.pop("_magic", None) != (STATE_MAGIC, STATE_VERSION):
            raise ValueError(f"{out_dir}: not a version-{STATE_VERSION} training state")
        obj = cls.__new__(cls)
        obj.__dict__.update(state)
        obj.config = config
        return obj


def run_training(config, seed=0, out_dir=None, max_iterations=None):
    """Train one seed. Writes metrics/checkpoints to ``out_dir`` when given."""
    return Trainer(config, seed).run(out_dir, max_iterations)
