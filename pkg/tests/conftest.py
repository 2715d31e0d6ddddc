import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from aslearn.nets import GaussianPolicy, ValueFunction, forward_mean  # noqa: E402
from aslearn.numerics import gaussian_log_density  # noqa: E402
from aslearn.ppo import RolloutBatch  # noqa: E402
from aslearn.symmetry import TransformSpec, apply_declared_action_transform, apply_state_transform  # noqa: E402

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


# Two toy transforms on a 3-d state and 2-d action: a mirror that negates
# state 0 and action 0, and a swap of the first two state/action slots.
TOY_SPECS = (
    TransformSpec("flip", "reflection", (0, 1, 2), (-1, 1, 1), (0, 1), (-1, 1)),
    TransformSpec("swap", "reflection", (1, 0, 2), (1, 1, 1), (1, 0), (1, 1)),
)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def small_nets(seed=0, obs_dim=3, act_dim=2, hidden=(6,), out_scale=1.0):
    r = np.random.default_rng(seed)
    pol = GaussianPolicy(obs_dim, act_dim, hidden, log_std_init=-0.5, rng=r, out_scale=out_scale)
    pol.log_sigma[:] = r.uniform(-0.8, -0.2, act_dim)
    return pol, ValueFunction(obs_dim, hidden, rng=r)


def toy_batch(policy, value_fn, specs=TOY_SPECS, n=8, seed=0, with_gates=True, action_noise=1.0):
    """A complete batch whose old-policy quantities come from ``policy``."""
    r = np.random.default_rng(seed)
    states = r.normal(size=(n, policy.obs_dim))
    abar = forward_mean(policy, states)
    sigma = policy.sigma
    actions = abar + action_noise * sigma * r.normal(size=abar.shape)
    batch = RolloutBatch(
        states=states, actions=actions, logp_old=gaussian_log_density(actions, abar, sigma),
        rewards=r.normal(size=n), terminated=np.zeros(n, bool), truncated=np.zeros(n, bool),
        values=value_fn(states), next_values=np.zeros(n), abar=abar,
        advantages=r.normal(size=n), returns=r.normal(size=n))
    for s in specs:
        fs = apply_state_transform(s, states)
        batch.sym_states[s.name] = fs
        batch.abar_sym[s.name] = forward_mean(policy, fs)
        batch.logp_sym_old[s.name] = gaussian_log_density(
            apply_declared_action_transform(s, abar), batch.abar_sym[s.name], sigma)
        if with_gates:
            batch.psi[s.name] = r.random(n) < 0.8
            batch.phi[s.name] = r.random(n) < 0.8
        else:
            batch.psi[s.name] = np.ones(n, bool)
            batch.phi[s.name] = np.ones(n, bool)
    return batch


def finite_difference(f, x, h=1e-6):
    """Central differences of scalar ``f()`` w.r.t. the array ``x`` (perturbed in place)."""
    g = np.empty_like(x)
    for i in range(x.size):
        old = x[i]
        x[i] = old + h
        fp = f()
        x[i] = old - h
        fm = f()
        x[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g


def rel_error(a, b):
    den = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / den)
