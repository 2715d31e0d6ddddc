"""PPO with a clipped surrogate, GAE, and a pluggable symmetry-loss hook."""

import logging
from dataclasses import dataclass, field, fields

import numpy as np

from .exceptions import AbortUpdate
from .losses import Outputs, asl_targets, asl_terms, msl_terms, psl_terms
from .nets import Adam, Mlp
from .numerics import LOG_2PI, gaussian_log_density
from .symmetry import AffineEstimator

log = logging.getLogger(__name__)


@dataclass
class PpoConfig:
    clip: float = 0.4
    gamma: float = 0.99
    lam: float = 0.9
    epochs: int = 20
    minibatch: int = 64
    ent_coef: float = 0.0
    vf_coef: float = 0.5
    lr: float = 3e-5
    batch_steps: int = 4096
    max_grad_norm: float = 0.5

    def __post_init__(self):
        if not self.clip > 0:
            raise ValueError("clip must be positive")
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must be in (0, 1]")
        if not 0 <= self.lam <= 1:
            raise ValueError("lam must be in [0, 1]")
        if self.epochs < 1 or self.minibatch < 1 or self.batch_steps < 1:
            raise ValueError("epochs, minibatch and batch_steps must be positive")


@dataclass
class RolloutBatch:
    """One batch of experience. Per-transform quantities are dicts keyed by transform name."""

    states: np.ndarray
    actions: np.ndarray
    logp_old: np.ndarray
    rewards: np.ndarray
    terminated: np.ndarray
    truncated: np.ndarray
    values: np.ndarray
    next_values: np.ndarray
    abar: np.ndarray
    sym_states: dict = field(default_factory=dict)
    abar_sym: dict = field(default_factory=dict)
    logp_sym_old: dict = field(default_factory=dict)
    advantages: np.ndarray = None
    returns: np.ndarray = None
    psi: dict = field(default_factory=dict)
    phi: dict = field(default_factory=dict)
    fit_masks: dict = field(default_factory=dict)

    def __len__(self):
        return self.states.shape[0]

    def subset(self, idx):
        kw = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, dict):
                kw[f.name] = {k: a[idx] for k, a in v.items()}
            elif v is None:
                kw[f.name] = None
            else:
                kw[f.name] = v[idx]
        return RolloutBatch(**kw)


def compute_gae(rewards, values, next_values, episode_ends, gamma, lam):
    """Advantages and value targets.

    ``next_values[t]`` is the bootstrap value of the successor state (0 after a
    termination); ``episode_ends[t]`` stops the backward accumulation.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    next_values = np.asarray(next_values, dtype=np.float64)
    ends = np.asarray(episode_ends, dtype=bool)
    if not (rewards.shape == values.shape == next_values.shape == ends.shape):
        raise ValueError("rewards, values, next_values and episode_ends must be aligned")
    deltas = rewards + gamma * next_values - values
    adv = np.empty_like(rewards)
    running = 0.0
    for t in range(rewards.size - 1, -1, -1):
        if ends[t]:
            running = 0.0
        running = deltas[t] + gamma * lam * running
        adv[t] = running
    return adv, adv + values


def normalize_advantages(adv, eps=1e-8):
    adv = np.asarray(adv, dtype=np.float64)
    if adv.size < 2:
        raise ValueError("need at least two advantages to normalize")
    centered = adv - adv.mean()
    sd = np.sqrt(np.mean(centered * centered))
    if sd < eps:
        log.warning("advantages have zero variance; using zeros")
        return np.zeros_like(adv)
    return centered / sd


def clipped_surrogate(ratio, adv, clip):
    """``min(r*A, (1 + sgn(A)*clip)*A)`` with ``sgn(0) = 0``."""
    return np.minimum(ratio * adv, (1.0 + np.sign(adv) * clip) * adv)


def ppo_terms(out, mb, config):
    n = mb.states.shape[0]
    sigma = np.exp(out.log_sigma)
    lp = gaussian_log_density(mb.actions, out.mu_s, sigma)
    ratio = np.exp(lp - mb.logp_old)
    if not np.all(np.isfinite(ratio)):
        raise AbortUpdate("non-finite probability ratio")
    adv = mb.advantages
    bound = (1.0 + np.sign(adv) * config.clip) * adv
    surr = np.minimum(ratio * adv, bound)
    live = ratio * adv < bound
    err = out.v_s - mb.returns
    act_dim = sigma.size
    entropy = np.sum(out.log_sigma) + 0.5 * act_dim * (1.0 + LOG_2PI)
    loss = -np.mean(surr) + config.vf_coef * np.mean(err * err) - config.ent_coef * entropy

    dlp = np.where(live, -ratio * adv / n, 0.0)[:, None]
    z = (mb.actions - out.mu_s) / sigma
    out.dmu_s += dlp * z / sigma
    out.dlog_sigma += np.sum(dlp * (z * z - 1.0), axis=0) - config.ent_coef
    out.dv_s += config.vf_coef * 2.0 * err / n
    return loss


class SymmetryHook:
    """Adds one symmetry loss to the PPO objective.

    ``graph``, ``nu`` and ``w_g`` are only used by ASL and are frozen for the
    duration of an update.
    """

    def __init__(self, method, specs, config, clip, graph=None, nu=None, w_g=None):
        self.method = method
        self.config = config
        self.clip = clip
        self.graph, self.nu, self.w_g = graph, nu, w_g
        if method == "none":
            self.specs = []
        else:
            self.specs = [s for s in specs
                          if config.policy_weight(s) != 0.0 or config.value_weight(s) != 0.0]
        if method == "asl" and self.w_g is None:
            self.w_g = {s.name: np.ones(s.act_dim) for s in self.specs}
        self.estimators = None
        if method == "asl":
            self.estimators = {s.name: AffineEstimator(graph, nu, s.name) for s in self.specs}

    @property
    def names(self):
        return [s.name for s in self.specs]

    def terms(self, out, mb, sizes, last_params=None):
        """``last_params=None`` means the last-updated policy is the current one (held constant)."""
        if not self.specs:
            return 0.0
        if self.method == "msl":
            return msl_terms(out, mb, self.specs, self.config)
        if self.method == "psl":
            return psl_terms(out, mb, self.specs, self.config, self.clip)
        if self.method == "asl":
            if last_params is None:
                last_mu = out.mu_s.copy()
            else:
                n_mean = last_params.size - sizes[-1]
                last_mu = Mlp(sizes, params=last_params[:n_mean]).forward(mb.states)
            targets = asl_targets(mb, self.graph, self.nu, self.specs, last_mu,
                                  np.exp(out.log_sigma), self.config, self.clip, self.estimators)
            return asl_terms(out, mb, self.specs, self.config, targets, self.w_g)
        raise ValueError(f"unknown method {self.method!r}")


def loss_and_gradients(mb, policy, value_fn, config, hook=None, last_params=None):
    """Total minimized loss ``-L_ppo + L_sym`` and its gradients ``(loss, g_policy, g_value)``."""
    names = hook.names if hook is not None else []
    out = Outputs(policy, value_fn, mb, names)
    loss = ppo_terms(out, mb, config)
    if hook is not None:
        loss += hook.terms(out, mb, policy.sizes, last_params)
    gpol, gval = out.gradients()
    return loss, gpol, gval


def ppo_loss(batch, policy, value_fn, config):
    return loss_and_gradients(batch, policy, value_fn, config)


def make_optimizers(policy, value_fn, config):
    return (Adam(policy.params.size, lr=config.lr, max_grad_norm=config.max_grad_norm),
            Adam(value_fn.params.size, lr=config.lr, max_grad_norm=config.max_grad_norm))


def update_epochs(batch, policy, value_fn, config, hook=None, rng=None, optimizers=None):
    """Run ``epochs`` passes of shuffled mini-batch updates. Returns the number of steps taken.

    Symmetry targets use the policy as it stands after the previous step
    (the last-updated snapshot), treated as a constant. A
    non-finite gradient raises AbortUpdate with parameters left at the last
    completed step.
    """
    rng = np.random.default_rng() if rng is None else rng
    pol_opt, val_opt = make_optimizers(policy, value_fn, config) if optimizers is None else optimizers
    n = len(batch)
    steps = 0
    for _ in range(config.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, config.minibatch):
            mb = batch.subset(perm[start:start + config.minibatch])
            _, gpol, gval = loss_and_gradients(mb, policy, value_fn, config, hook)
            if not (np.all(np.isfinite(gpol)) and np.all(np.isfinite(gval))):
                raise AbortUpdate(f"non-finite gradient after {steps} steps")
            pol_opt.step(policy.params, gpol)
            val_opt.step(value_fn.params, gval)
            steps += 1
    return steps
