"""Symmetry losses attached to the PPO objective.

Each loss is implemented as an output-level kernel: it receives the network
outputs for the original and transformed states and returns the loss value
together with its gradient with respect to those outputs. The PPO driver
stacks all states into one forward pass and backpropagates once.
``msl_loss``/``psl_loss``/``asl_loss`` wrap the kernels for standalone use.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .fitting import FitConfig
from .numerics import gaussian_log_density
from .symmetry import apply_declared_action_transform, compose_global_estimator, declared_action_transform_vjp

log = logging.getLogger(__name__)

EXPONENT_CLAMP = 30.0
LOG_DENSITY_FLOOR = float(np.log(np.finfo(np.float64).tiny))
MAD_FLOOR = 1e-9

METHODS = ("none", "msl", "psl", "asl")
DEFAULT_POLICY_WEIGHT = {"none": 0.0, "msl": 10.0, "psl": 0.008, "asl": 0.05}


@dataclass
class SymLossConfig:
    """Weights and ASL settings. Per-transform fields take a scalar or a ``{name: value}`` dict."""

    method: str = "none"
    w_pi: object = None
    w_v: object = 0.5
    k_s: object = 0.3
    k_d_reflection: float = 0.1
    k_d_rotation: float = 0.0
    k_d: dict = field(default_factory=dict)
    k_v: object = 1.5
    window_batches: int = 10
    fitting: bool = False
    fit: FitConfig = field(default_factory=FitConfig)

    def __post_init__(self):
        self.method = self.method.lower()
        if self.method not in METHODS:
            raise ValueError(f"unknown symmetry method {self.method!r}")
        if self.w_pi is None:
            self.w_pi = DEFAULT_POLICY_WEIGHT[self.method]
        if self.k_v is not None and self.k_v <= 1.0:
            raise ValueError("k_v must be greater than 1")
        for name in ("w_pi", "w_v", "k_s"):
            vals = getattr(self, name)
            vals = vals.values() if isinstance(vals, dict) else [vals]
            if any(v < 0 for v in vals):
                raise ValueError(f"{name} must be non-negative")
        if self.k_d_reflection < 0 or self.k_d_rotation < 0 or any(v < 0 for v in self.k_d.values()):
            raise ValueError("dead zone thresholds must be non-negative")

    @staticmethod
    def _get(value, name):
        return float(value[name]) if isinstance(value, dict) else float(value)

    def policy_weight(self, spec):
        return self._get(self.w_pi, spec.name)

    def value_weight(self, spec):
        return self._get(self.w_v, spec.name)

    def shift_factor(self, spec):
        return self._get(self.k_s, spec.name)

    def dead_zone(self, spec):
        if spec.name in self.k_d:
            return float(self.k_d[spec.name])
        return self.k_d_rotation if spec.kind == "rotation" else self.k_d_reflection


# -- closed forms -------------------------------------------------------------------

def xi(eps, n):
    """Per-element soft limit ``(1 + eps)^(1/n) - 1`` on the probability ratio."""
    return (1.0 + eps) ** (1.0 / n) - 1.0


def delta_mu(k_s, sigma, xi_value):
    """Largest allowed shift of the mean toward a symmetry target."""
    return k_s * np.asarray(sigma) * np.sqrt(-2.0 * np.log(1.0 / (1.0 + xi_value)))


def delta_mu_full(k_e, sigma, xi_value):
    """Mean shift a PPO update would allow for an action explored ``k_e`` std devs away."""
    inner = min((1.0 + xi_value) * np.exp(-0.5 * k_e * k_e), 1.0)
    return sigma * (k_e - np.sqrt(-2.0 * np.log(inner)))


def value_gate_threshold(v, k_v):
    """``v_t``: ``k_v * V`` for non-negative ``V`` and ``V / k_v`` otherwise, in one expression."""
    alpha = (k_v * k_v + 1.0) / (2.0 * k_v)
    v = np.asarray(v, dtype=np.float64)
    return alpha * v + (k_v - alpha) * np.abs(v)


def value_gate(v_s, v_fs, k_v):
    """1 where the symmetric state's value is below the threshold, else 0. ``k_v=None`` disables."""
    v_fs = np.asarray(v_fs, dtype=np.float64)
    if k_v is None:
        return np.ones(v_fs.shape, dtype=bool)
    return value_gate_threshold(v_s, k_v) > v_fs


def dead_zone_gate(states, sym_states, mad, k_d):
    """Returns ``(psi, nsrr)``; ``psi`` is 1 where the state is far enough from neutrality."""
    mad = np.maximum(np.asarray(mad, dtype=np.float64), MAD_FLOOR)
    delta = np.abs(np.asarray(states) - np.asarray(sym_states)) / mad
    psi = delta.mean(axis=-1) > k_d
    return psi, np.count_nonzero(~psi) / psi.size if psi.size else 0.0


def asl_target(estimated, abar_sym, shift):
    """Clip the estimated symmetric action into a band of half-width ``shift`` around ``abar_sym``."""
    return np.clip(estimated, abar_sym - shift, abar_sym + shift)


def asl_exponent(tau, abar_sym, mu, sigma, w_g):
    """Exponent of the ASL ratio (before clamping)."""
    return np.sum(w_g * ((tau - abar_sym) ** 2 - (tau - mu) ** 2) / (2.0 * sigma * sigma), axis=-1)


def asl_ratio(tau, abar_sym, mu, sigma, w_g):
    e = asl_exponent(tau, abar_sym, mu, sigma, w_g)
    return np.exp(np.clip(e, -EXPONENT_CLAMP, EXPONENT_CLAMP))


# -- output-level kernels --------------------------------------------------------------

def _msl_residual(mu_s, mu_fs, spec, form):
    if form == "generalized":
        return apply_declared_action_transform(spec, mu_s) - mu_fs
    if form == "involutory":
        return mu_s - apply_declared_action_transform(spec, mu_fs)
    raise ValueError(f"unknown form {form!r}")


def msl_policy_term(mu_s, mu_fs, spec, form="generalized"):
    """Per-step squared symmetry residual of the mean."""
    d = _msl_residual(mu_s, mu_fs, spec, form)
    return np.sum(d * d, axis=-1)


def value_terms(out, mb, specs, config, gates=None):
    """Symmetric value loss ``mean_t w_V (V(f(s)) - V_targ)^2`` (gated for ASL)."""
    loss = 0.0
    for spec in specs:
        w = config.value_weight(spec)
        if w == 0.0:
            continue
        err = out.v_f[spec.name] - mb.returns
        g = 1.0 if gates is None else gates[spec.name]
        n = err.shape[0]
        loss += w * np.mean(g * err * err)
        out.dv_f[spec.name] += w * 2.0 * g * err / n
    return loss


def msl_terms(out, mb, specs, config, form="generalized"):
    loss = 0.0
    n = mb.states.shape[0]
    for spec in specs:
        w = config.policy_weight(spec)
        if w == 0.0:
            continue
        d = _msl_residual(out.mu_s, out.mu_f[spec.name], spec, form)
        loss += w * np.mean(np.sum(d * d, axis=-1))
        g = w * 2.0 * d / n
        if form == "generalized":
            out.dmu_s += declared_action_transform_vjp(spec, g)
            out.dmu_f[spec.name] -= g
        else:
            out.dmu_s += g
            out.dmu_f[spec.name] -= declared_action_transform_vjp(spec, g)
    return loss + value_terms(out, mb, specs, config)


def psl_terms(out, mb, specs, config, clip):
    loss = 0.0
    n = mb.states.shape[0]
    sigma = np.exp(out.log_sigma)
    log_cap = np.log1p(clip)
    for spec in specs:
        w = config.policy_weight(spec)
        if w == 0.0:
            continue
        target = apply_declared_action_transform(spec, mb.abar)
        mu = out.mu_f[spec.name]
        lp_theta = gaussian_log_density(target, mu, sigma)
        lp_den = mb.logp_sym_old[spec.name]
        valid = lp_den > LOG_DENSITY_FLOOR
        if not np.all(valid):
            log.warning("%s: %d steps skipped, symmetric density underflow", spec.name, int((~valid).sum()))
        theta_branch = lp_theta < mb.logp_old
        lognum = np.where(theta_branch, lp_theta, mb.logp_old)
        expo = lognum - lp_den
        capped = expo >= log_cap
        x = np.exp(np.minimum(expo, log_cap))
        loss += w * np.sum(np.where(valid, -x, 0.0)) / n
        live = valid & theta_branch & ~capped
        coef = np.where(live, -w * x / n, 0.0)[:, None]
        z = (target - mu) / sigma
        out.dmu_f[spec.name] += coef * z / sigma
        out.dlog_sigma += np.sum(coef * (z * z - 1.0), axis=0)
    return loss + value_terms(out, mb, specs, config)


def asl_terms(out, mb, specs, config, targets, w_g):
    """``targets[j]`` are the clipped symmetry targets, ``w_g[j]`` per-slot function weights."""
    loss = 0.0
    n = mb.states.shape[0]
    sigma = np.exp(out.log_sigma)
    gates = {s.name: (mb.psi[s.name] & mb.phi[s.name]).astype(np.float64) for s in specs}
    for spec in specs:
        w = config.policy_weight(spec)
        if w == 0.0:
            continue
        tau = targets[spec.name]
        abar_sym = mb.abar_sym[spec.name]
        mu = out.mu_f[spec.name]
        wg = w_g[spec.name]
        e = asl_exponent(tau, abar_sym, mu, sigma, wg)
        r = np.exp(np.clip(e, -EXPONENT_CLAMP, EXPONENT_CLAMP))
        gate = gates[spec.name]
        loss += w * np.sum(-r * gate) / n
        inside = (np.abs(e) < EXPONENT_CLAMP).astype(np.float64)
        coef = (-w * r * gate * inside / n)[:, None]
        out.dmu_f[spec.name] += coef * wg * (tau - mu) / (sigma * sigma)
    return loss + value_terms(out, mb, specs, config, gates)


# -- standalone wrappers ------------------------------------------------------------

class Outputs:
    """Network outputs for one mini-batch plus gradient accumulators of the same layout."""

    def __init__(self, policy, value_fn, mb, names, need_values=True):
        self.names = list(names)
        rows = [mb.states] + [mb.sym_states[j] for j in self.names]
        stacked = np.concatenate(rows, axis=0)
        self.n = mb.states.shape[0]
        mu, self._pacts = policy.mean_net.forward(stacked, cache=True)
        v, self._vacts = value_fn.net.forward(stacked, cache=True)
        v = v[:, 0]
        self.log_sigma = policy.log_sigma.copy()
        self.mu_s = mu[:self.n]
        self.v_s = v[:self.n]
        self.mu_f = {j: mu[(k + 1) * self.n:(k + 2) * self.n] for k, j in enumerate(self.names)}
        self.v_f = {j: v[(k + 1) * self.n:(k + 2) * self.n] for k, j in enumerate(self.names)}
        self._dmu = np.zeros_like(mu)
        self._dv = np.zeros_like(v)
        self.dmu_s = self._dmu[:self.n]
        self.dv_s = self._dv[:self.n]
        self.dmu_f = {j: self._dmu[(k + 1) * self.n:(k + 2) * self.n] for k, j in enumerate(self.names)}
        self.dv_f = {j: self._dv[(k + 1) * self.n:(k + 2) * self.n] for k, j in enumerate(self.names)}
        self.dlog_sigma = np.zeros_like(self.log_sigma)
        self._policy, self._value_fn = policy, value_fn

    def gradients(self):
        gmean = self._policy.mean_net.backward(self._pacts, self._dmu)
        gpol = np.concatenate([gmean, self.dlog_sigma])
        gval = self._value_fn.net.backward(self._vacts, self._dv[:, None])
        return gpol, gval


def asl_targets(mb, graph, nu, specs, last_mu_s, sigma, config, clip, estimators=None):
    """Clipped targets for every transform from the last-updated policy's means.

    ``estimators`` optionally maps transform names to precomputed
    :class:`~aslearn.symmetry.AffineEstimator` objects for ``nu``.
    """
    xi_value = xi(clip, last_mu_s.shape[-1])
    out = {}
    for spec in specs:
        if estimators is not None:
            est = estimators[spec.name](last_mu_s)
        else:
            est = compose_global_estimator(graph, nu, spec.name, last_mu_s)
        shift = delta_mu(config.shift_factor(spec), sigma, xi_value)
        out[spec.name] = asl_target(est, mb.abar_sym[spec.name], shift)
    return out


def msl_loss(batch, policy, value_fn, specs, config, form="generalized"):
    out = Outputs(policy, value_fn, batch, [s.name for s in specs])
    loss = msl_terms(out, batch, specs, config, form)
    return (loss, *out.gradients())


def psl_loss(batch, policy, value_fn, specs, config, clip):
    out = Outputs(policy, value_fn, batch, [s.name for s in specs])
    loss = psl_terms(out, batch, specs, config, clip)
    return (loss, *out.gradients())


def asl_loss(batch, policy, value_fn, specs, config, graph, nu, last_params, w_g, clip):
    """ASL loss with targets from the snapshot ``last_params`` (held fixed)."""
    from .nets import GaussianPolicy

    last = GaussianPolicy.from_params(policy.sizes, last_params)
    out = Outputs(policy, value_fn, batch, [s.name for s in specs])
    targets = asl_targets(batch, graph, nu, specs, last.mean_net.forward(batch.states),
                          np.exp(out.log_sigma), config, clip)
    loss = asl_terms(out, batch, specs, config, targets, w_g)
    return (loss, *out.gradients())
