"""Small numerical kernels: diagonal Gaussians, closed-form line fits, windowed MAD."""

from collections import deque
from dataclasses import dataclass

import numpy as np

from .exceptions import DegenerateDesignError, DomainError, EmptyInputError, ShapeError

LOG_2PI = np.log(2.0 * np.pi)


@dataclass
class Dataset1D:
    """Paired scalar samples ``ys ~ G(xs)`` used to fit one symmetry relation."""

    xs: np.ndarray
    ys: np.ndarray

    def __post_init__(self):
        self.xs = np.asarray(self.xs, dtype=np.float64).ravel()
        self.ys = np.asarray(self.ys, dtype=np.float64).ravel()
        if self.xs.shape != self.ys.shape:
            raise ShapeError(f"xs has {self.xs.size} entries, ys has {self.ys.size}")
        if not (np.all(np.isfinite(self.xs)) and np.all(np.isfinite(self.ys))):
            raise DomainError("dataset contains non-finite values")

    def __len__(self):
        return self.xs.size

    @classmethod
    def concat(cls, parts):
        parts = list(parts)
        if not parts:
            return cls(np.empty(0), np.empty(0))
        return cls(np.concatenate([p.xs for p in parts]), np.concatenate([p.ys for p in parts]))

    def swapped(self):
        return Dataset1D(self.ys.copy(), self.xs.copy())


def gaussian_log_density(x, mu, sigma):
    """Log density of a diagonal Gaussian, summed over the last axis.

    Works on single vectors or on batches with leading dimensions.
    """
    x = np.asarray(x, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    if x.shape[-1:] != mu.shape[-1:] or x.shape[-1:] != sigma.shape[-1:]:
        raise ShapeError(f"length mismatch: x{x.shape} mu{mu.shape} sigma{sigma.shape}")
    if np.any(sigma <= 0):
        raise DomainError("sigma must be strictly positive")
    z = (x - mu) / sigma
    n = x.shape[-1]
    return -0.5 * np.sum(z * z, axis=-1) - np.sum(np.log(sigma), axis=-1) - 0.5 * n * LOG_2PI


def normal_pdf(x, mu, sigma):
    """Univariate normal density."""
    return np.exp(-0.5 * ((x - mu) / sigma) ** 2) / (sigma * np.sqrt(2.0 * np.pi))


def inverse_pdf_largest(p, mu, sigma):
    """Largest ``x`` with ``normal_pdf(x, mu, sigma) == p``."""
    if sigma <= 0:
        raise DomainError("sigma must be strictly positive")
    beta = 1.0 / (sigma * np.sqrt(2.0 * np.pi))
    if p <= 0:
        raise DomainError(f"density must be positive, got {p}")
    if p > beta * (1.0 + 1e-15):
        raise DomainError(f"density {p} exceeds the peak {beta}")
    ratio = min(p / beta, 1.0)
    return mu + sigma * np.sqrt(-2.0 * np.log(ratio))


def ols_fit_mb(d):
    """Least-squares line ``y = m*x + b``. Returns ``(m, b)``."""
    u = len(d)
    if u < 2:
        raise EmptyInputError("need at least two points to fit a line")
    sx, sy = d.xs.sum(), d.ys.sum()
    sxx, sxy = np.dot(d.xs, d.xs), np.dot(d.xs, d.ys)
    den = u * sxx - sx * sx
    # den is u^2 times the variance of xs; compare against the scale of the data
    if den <= 1e-12 * max(u * sxx, 1e-300) or np.ptp(d.xs) == 0.0:
        raise DegenerateDesignError("all inputs are (numerically) identical")
    m = (u * sxy - sx * sy) / den
    b = (sy - m * sx) / u
    return float(m), float(b)


def ols_fit_b_single(d):
    """Intercept of ``y = -x + b`` (involutory single relation)."""
    u = len(d)
    if u == 0:
        raise EmptyInputError("empty dataset")
    return float((d.xs.sum() + d.ys.sum()) / u)


def ols_fit_m_fixed_b(d):
    """Slope of ``y = m*x`` through the origin."""
    if len(d) == 0:
        raise EmptyInputError("empty dataset")
    sxx = np.dot(d.xs, d.xs)
    if sxx <= 0.0:
        raise DegenerateDesignError("all inputs are zero")
    return float(np.dot(d.xs, d.ys) / sxx)


class RunningWindow:
    """Ring buffer over the last ``capacity`` state vectors."""

    def __init__(self, capacity):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self.buffer = deque(maxlen=self.capacity)

    def __len__(self):
        return len(self.buffer)

    def push(self, x):
        self.buffer.append(np.array(x, dtype=np.float64, copy=True))

    def extend(self, xs):
        for x in np.asarray(xs, dtype=np.float64):
            self.push(x)

    def as_array(self):
        if not self.buffer:
            raise EmptyInputError("window is empty")
        return np.stack(self.buffer)

    def mean(self):
        return self.as_array().mean(axis=0)


def window_mad(w):
    """Per-element mean absolute deviation around the window mean (two-pass)."""
    data = w.as_array() if isinstance(w, RunningWindow) else np.asarray(w, dtype=np.float64)
    if data.shape[0] == 0:
        raise EmptyInputError("window is empty")
    return np.mean(np.abs(data - data.mean(axis=0)), axis=0)
