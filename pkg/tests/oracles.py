"""Independent reference implementations used only by the tests.

Each one takes the slow, obvious route (explicit loops, generic solvers) so
it shares no code path with the library function it checks.
"""

import math

import numpy as np


def lstsq_line(xs, ys):
    """Least-squares (m, b) through numpy's generic solver on the design matrix."""
    A = np.column_stack([xs, np.ones_like(xs)])
    (m, b), *_ = np.linalg.lstsq(A, ys, rcond=None)
    return m, b


def normal_equations_line(xs, ys):
    """Solve the 2x2 normal equations with Cramer's rule in exact rational form."""
    from fractions import Fraction

    fx = [Fraction(float(x)) for x in xs]
    fy = [Fraction(float(y)) for y in ys]
    n = len(fx)
    sx, sy = sum(fx), sum(fy)
    sxx = sum(x * x for x in fx)
    sxy = sum(x * y for x, y in zip(fx, fy))
    det = sxx * n - sx * sx
    m = (sxy * n - sx * sy) / det
    b = (sxx * sy - sx * sxy) / det
    return float(m), float(b)


def brute_force_gae(rewards, values, next_values, ends, gamma, lam):
    """O(T^2) double loop: A_t = sum_k (gamma*lam)^k delta_{t+k} inside the episode."""
    T = len(rewards)
    deltas = [rewards[t] + gamma * next_values[t] - values[t] for t in range(T)]
    adv = []
    for t in range(T):
        total = 0.0
        for k in range(T - t):
            total += (gamma * lam) ** k * deltas[t + k]
            if ends[t + k]:
                break
        adv.append(total)
    return np.array(adv)


def scalar_gaussian_logpdf(x, mu, sigma):
    return sum(-0.5 * ((xi - mi) / si) ** 2 - math.log(si * math.sqrt(2 * math.pi))
               for xi, mi, si in zip(x, mu, sigma))


def branch_threshold(v, k_v):
    """Two-branch form of the value gate threshold."""
    return k_v * v if v >= 0 else v / k_v


def scalar_value_gate(v_s, v_fs, k_v):
    return [1 if branch_threshold(a, k_v) > b else 0 for a, b in zip(v_s, v_fs)]


def scalar_dead_zone(states, sym_states, window, k_d):
    """Per-step neutrality test written out with plain loops."""
    n_el = len(states[0])
    mads = []
    for i in range(n_el):
        col = [w[i] for w in window]
        mean = sum(col) / len(col)
        mads.append(max(sum(abs(c - mean) for c in col) / len(col), 1e-9))
    psi = []
    for s, fs in zip(states, sym_states):
        delta = sum(abs(s[i] - fs[i]) / mads[i] for i in range(n_el)) / n_el
        psi.append(1 if delta > k_d else 0)
    return psi


def signed_perm_apply(idx, mult, x):
    return np.array([mult[i] * x[idx[i]] for i in range(len(idx))])


def signed_perm_inverse(idx, mult, y):
    x = np.empty(len(idx))
    for i in range(len(idx)):
        x[idx[i]] = y[i] / mult[i]
    return x
