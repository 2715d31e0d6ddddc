"""Fitting action-transform estimators from the policy's own behaviour.

Each round builds one dataset per pair and per single from the batch's
distribution means, fits a fresh local estimate ``zeta`` by closed-form least
squares, weights the update by how consistent the local estimates are around
every cycle, and blends ``zeta`` into the global parameters ``nu`` with an
exponential moving average.
"""

import logging
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DegenerateDesignError, DomainError, EmptyInputError, NearSingularError
from .numerics import Dataset1D, ols_fit_b_single, ols_fit_m_fixed_b, ols_fit_mb
from .symmetry import MIN_INVERTIBLE_SLOPE, EstimatorParams, compose_cycle, invert_recipe

log = logging.getLogger(__name__)

CV_OFFSET = 0.1
CYCLE_PROBES = (-1.0, 0.0, 1.0)


class PenaltyU:
    """Cycle-error penalty ``scale * width / (width + x^4)``."""

    def __init__(self, scale=0.05, width=0.01):
        self.scale, self.width = float(scale), float(width)

    def __call__(self, x):
        return self.scale * self.width / (self.width + x ** 4)


class PenaltyG:
    """Target-spread penalty ``base^-x``."""

    def __init__(self, base=1.1):
        self.base = float(base)

    def __call__(self, x):
        return self.base ** (-x)


default_h_u = PenaltyU()
default_h_g = PenaltyG()


@dataclass
class FitConfig:
    form: str = "mx+b"
    h_u: object = default_h_u
    h_g: object = default_h_g
    history_len: int = 10
    min_dataset: int = 64

    def __post_init__(self):
        if self.form not in ("mx+b", "mx"):
            raise ValueError(f"unknown estimator form {self.form!r}")
        if self.history_len < 1:
            raise ValueError("history_len must be positive")

    @property
    def fit_singles(self):
        return self.form == "mx+b"

    @property
    def max_update_weight(self):
        # both penalty functions peak at zero error
        return float(self.h_u(0.0))


@dataclass
class LocalFitResult:
    key: tuple
    params: tuple
    size: int
    rms: float


@dataclass
class FitState:
    """Global parameters plus the per-estimator history of local fits."""

    nu: EstimatorParams
    history: dict = field(default_factory=dict)

    def push(self, key, params, maxlen):
        self.history.setdefault(key, deque(maxlen=maxlen)).append(tuple(params))


def _masked(arr, mask):
    return arr if mask is None else arr[mask]


def _sym_mask(batch, name):
    masks = getattr(batch, "fit_masks", None)
    if not masks:
        return None
    m = masks.get(name)
    return None if m is None else np.asarray(m, dtype=bool)


def build_pair_dataset(batch, graph, specs, pair, nu=None):
    """Samples ``y ~ m*x + b`` for the canonical map ``pair[0] -> pair[1]``.

    Every (transform, slot) whose recipe uses ``pair`` contributes one section.
    Reflections at the destination are undone first (with the current single
    estimate), and sections traversing the pair backwards swap inputs and
    outputs, so all sections describe the same forward relation.
    """
    pair = tuple(pair)
    nu = EstimatorParams(graph) if nu is None else nu
    parts = []
    for spec in specs:
        mask = _sym_mask(batch, spec.name)
        abar = _masked(batch.abar, mask)
        abar_sym = _masked(batch.abar_sym[spec.name], mask)
        for u in range(graph.act_dim):
            r = graph.recipes[(spec.name, u)]
            if r.pair != pair:
                continue
            z = invert_recipe(r, nu, abar_sym[:, u])
            if r.inverse:
                parts.append(Dataset1D(z, abar[:, r.source]))
            else:
                parts.append(Dataset1D(abar[:, r.source], z))
    if not parts:
        raise EmptyInputError(f"pair {pair} is not used by any transform")
    return Dataset1D.concat(parts)


def build_single_dataset(batch, graph, specs, q):
    """Samples ``y ~ -x + b`` from every transform that reflects slot ``q`` onto itself."""
    parts = []
    for spec in specs:
        r = graph.recipes[(spec.name, q)]
        if r.source != q or r.reflect != "single":
            continue
        mask = _sym_mask(batch, spec.name)
        parts.append(Dataset1D(_masked(batch.abar, mask)[:, q],
                               _masked(batch.abar_sym[spec.name], mask)[:, q]))
    if not parts:
        raise EmptyInputError(f"slot {q} is not a single of any transform")
    return Dataset1D.concat(parts)


def _fit_pair(d, form):
    if form == "mx":
        m, b = ols_fit_m_fixed_b(d), 0.0
    else:
        m, b = ols_fit_mb(d)
    if not (np.isfinite(m) and np.isfinite(b)) or abs(m) < MIN_INVERTIBLE_SLOPE:
        raise NearSingularError(f"fitted slope {m} is not invertible")
    rms = float(np.sqrt(np.mean((m * d.xs + b - d.ys) ** 2)))
    return (m, b), rms


def cycle_error(cycle, pair_lookup, probes=CYCLE_PROBES):
    """Largest ``|composition(k) - k|`` over the probe points."""
    return max(abs(compose_cycle(cycle, pair_lookup, k) - k) for k in probes)


def update_weights(graph, zeta_pairs, nu, config):
    """Per pair update weight: the worst cycle penalty among cycles containing it."""
    def lookup(key):
        return zeta_pairs[key] if key in zeta_pairs else nu.pair(key)

    errors = {c: cycle_error(c, lookup) for c in graph.cycles}
    w = {}
    for key in graph.pairs:
        containing = graph.cycles_containing(key)
        if containing:
            w[key] = min(float(config.h_u(errors[c])) for c in containing)
        else:
            w[key] = config.max_update_weight
    return w


def fit_round(batch, graph, specs, nu, config, state=None):
    """One fitting round. Returns ``(new_nu, local_results, w_u)``.

    If ``state`` (a :class:`FitState`) is given, fitted ``zeta`` values are
    appended to its history and its ``nu`` is replaced by the result.
    """
    results = {}
    zeta_pairs = {}
    for key in graph.pairs:
        try:
            d = build_pair_dataset(batch, graph, specs, key, nu)
            if len(d) < config.min_dataset:
                continue
            params, rms = _fit_pair(d, config.form)
        except (DegenerateDesignError, NearSingularError, EmptyInputError, DomainError) as exc:
            log.debug("pair %s skipped: %s", key, exc)
            continue
        zeta_pairs[key] = params
        results[("pair", key)] = LocalFitResult(("pair", key), params, len(d), rms)

    zeta_singles = {}
    if config.fit_singles:
        for q in graph.singles:
            try:
                d = build_single_dataset(batch, graph, specs, q)
            except (EmptyInputError, DomainError):
                continue
            if len(d) < config.min_dataset:
                continue
            b = ols_fit_b_single(d)
            rms = float(np.sqrt(np.mean((-d.xs + b - d.ys) ** 2)))
            zeta_singles[q] = b
            results[("single", q)] = LocalFitResult(("single", q), (b,), len(d), rms)

    w_u = update_weights(graph, zeta_pairs, nu, config)
    new = nu.copy()
    for key, (m, b) in zeta_pairs.items():
        m0, b0 = nu.pair(key)
        new.set_pair(key, m0 + w_u[key] * (m - m0), b0 + w_u[key] * (b - b0))
    single_w = config.max_update_weight
    for q, b in zeta_singles.items():
        b0 = nu.single(q)
        new.set_single(q, b0 + single_w * (b - b0))
    weights = {("pair", k): v for k, v in w_u.items()}
    weights.update({("single", q): single_w for q in zeta_singles})

    if state is not None:
        for key, res in results.items():
            hist = res.params if key[0] == "single" or config.form == "mx+b" else res.params[:1]
            state.push(key, hist, config.history_len)
        state.nu = new
    return new, results, weights


def function_weight(history, h_g=default_h_g):
    """Stability weight of one estimator from its recent local fits (min over parameters)."""
    h = np.asarray(list(history), dtype=np.float64)
    if h.size == 0:
        raise EmptyInputError("history is empty")
    if h.ndim == 1:
        h = h[:, None]
    mu = h.mean(axis=0)
    sd = np.sqrt(np.mean((h - mu) ** 2, axis=0))
    return float(np.min(h_g(sd / (np.abs(mu) + CV_OFFSET))))


def slot_function_weights(graph, state, transform_names, act_dim, h_g=default_h_g):
    """``w_G[j]`` as an array over action slots: min over the estimators in each slot recipe.

    Estimators without history yet (and identity slots) get weight 1.
    """
    cache = {}
    out = {}
    for j in transform_names:
        w = np.ones(act_dim)
        for u in range(act_dim):
            for est in graph.recipes[(j, u)].estimators():
                if est not in cache:
                    hist = state.history.get(est)
                    cache[est] = function_weight(hist, h_g) if hist else 1.0
                w[u] = min(w[u], cache[est])
        out[j] = w
    return out


def ground_truth_multipliers(action_modifiers, graph):
    """True pair multipliers ``m_{q->u} = AM_q / AM_u`` under an actuator scaling."""
    am = np.asarray(action_modifiers, dtype=np.float64)
    if am.shape != (graph.act_dim,):
        raise DomainError(f"expected {graph.act_dim} modifiers, got {am.shape}")
    if np.any(am == 0) or not np.all(np.isfinite(am)):
        raise DomainError("action modifiers must be finite and nonzero")
    return {(q, u): float(am[q] / am[u]) for q, u in graph.pairs}


def mean_multiplier_error(nu, truth):
    return float(np.mean([abs(nu.pair(k)[0] - v) for k, v in truth.items()]))
