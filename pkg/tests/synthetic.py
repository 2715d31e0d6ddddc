"""Synthetic policies with a known symmetric relation, for fitting tests."""

import numpy as np

from aslearn.symmetry import apply_state_transform
from oracles import signed_perm_inverse


class SymmetricMeans:
    """``a*(s) = mean_h g_h^-1(phi(f_h(s)))`` over the group {identity} + specs.

    The group average makes ``a*(f_j(s)) == g_j(a*(s))`` hold exactly (up to
    rounding) for every declared transform, whatever the random map ``phi``.
    """

    def __init__(self, specs, obs_dim, act_dim, seed=0, scale=0.5):
        r = np.random.default_rng(seed)
        self.specs = list(specs)
        self.W = r.normal(0, scale / np.sqrt(obs_dim), (obs_dim, act_dim))
        self.c = r.normal(0, 0.2, act_dim)

    def phi(self, s):
        return np.tanh(s @ self.W + self.c)

    def __call__(self, s):
        s = np.atleast_2d(s)
        total = self.phi(s)
        for spec in self.specs:
            y = self.phi(apply_state_transform(spec, s))
            total = total + np.array([signed_perm_inverse(spec.act_indices, spec.act_multipliers, row)
                                      for row in y])
        return total / (len(self.specs) + 1)


class FitBatch:
    def __init__(self, abar, abar_sym, fit_masks=None):
        self.abar = abar
        self.abar_sym = abar_sym
        self.fit_masks = fit_masks or {}


def compensating_batch(policy, specs, modifiers, n, seed, obs_dim):
    """Means of the policy ``a*(s) / AM`` that undoes actuator scaling ``AM``."""
    r = np.random.default_rng(seed)
    s = r.normal(size=(n, obs_dim))
    am = np.asarray(modifiers, dtype=np.float64)
    abar = policy(s) / am
    sym = {spec.name: policy(apply_state_transform(spec, s)) / am for spec in specs}
    return FitBatch(abar, sym)
