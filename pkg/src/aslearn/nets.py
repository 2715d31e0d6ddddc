"""Numpy MLPs with hand-written backprop: Gaussian policy, value function, Adam.

Parameters of each network live in one flat float64 vector; layer weights
and biases are views into it. That keeps optimizer steps, clipping,
snapshots, checkpoints and finite-difference checks trivial.
"""

import hashlib

import numpy as np

from .exceptions import AbortUpdate, PoisonedParametersError, ShapeError


class Mlp:
    """Fully connected ReLU network with a linear output layer."""

    def __init__(self, sizes, rng=None, out_scale=1.0, params=None):
        self.sizes = [int(s) for s in sizes]
        if len(self.sizes) < 2:
            raise ValueError("need at least input and output sizes")
        self.shapes = [(a, b) for a, b in zip(self.sizes[:-1], self.sizes[1:])]
        self.n_params = sum(a * b + b for a, b in self.shapes)
        if params is None:
            rng = np.random.default_rng() if rng is None else rng
            params = np.empty(self.n_params)
            self.params = params
            self._bind()
            for i, (fan_in, _) in enumerate(self.shapes):
                bound = 1.0 / np.sqrt(fan_in)
                self.W[i][...] = rng.uniform(-bound, bound, self.W[i].shape)
                self.b[i][...] = rng.uniform(-bound, bound, self.b[i].shape)
            self.W[-1] *= out_scale
            self.b[-1] *= out_scale
        else:
            params = np.asarray(params, dtype=np.float64)
            if params.shape != (self.n_params,):
                raise ShapeError(f"expected {self.n_params} parameters, got {params.shape}")
            self.params = params
            self._bind()

    def _bind(self):
        self.W, self.b = [], []
        k = 0
        for a, b in self.shapes:
            self.W.append(self.params[k:k + a * b].reshape(a, b))
            k += a * b
            self.b.append(self.params[k:k + b])
            k += b

    @property
    def n_in(self):
        return self.sizes[0]

    @property
    def n_out(self):
        return self.sizes[-1]

    def forward(self, x, cache=False):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.n_in:
            raise ShapeError(f"expected input dimension {self.n_in}, got {x.shape[-1]}")
        acts = [x]
        h = x
        last = len(self.W) - 1
        for i, (W, b) in enumerate(zip(self.W, self.b)):
            h = h @ W + b
            if i < last:
                h = np.maximum(h, 0.0)
            if cache:
                acts.append(h)
        return (h, acts) if cache else h

    def backward(self, acts, dout):
        """Parameter gradient of ``sum(dout * output)`` given the cached activations."""
        grad = np.empty(self.n_params)
        dW, db = _views(grad, self.shapes)
        d = np.asarray(dout, dtype=np.float64)
        for i in range(len(self.W) - 1, -1, -1):
            a_in = acts[i]
            if a_in.ndim == 1:
                dW[i][...] = np.outer(a_in, d)
                db[i][...] = d
            else:
                dW[i][...] = a_in.T @ d
                db[i][...] = d.sum(axis=0)
            if i > 0:
                d = (d @ self.W[i].T) * (acts[i] > 0.0)
        return grad


def _views(flat, shapes):
    Ws, bs = [], []
    k = 0
    for a, b in shapes:
        Ws.append(flat[k:k + a * b].reshape(a, b))
        k += a * b
        bs.append(flat[k:k + b])
        k += b
    return Ws, bs


class GaussianPolicy:
    """Diagonal Gaussian policy with an MLP mean and a state-independent log std.

    ``params`` is ``[mean-net parameters..., log_sigma...]``.
    """

    def __init__(self, obs_dim, act_dim, hidden=(256, 256), log_std_init=-1.0, rng=None,
                 out_scale=0.01):
        sizes = [obs_dim, *hidden, act_dim]
        net = Mlp(sizes, rng=rng, out_scale=out_scale)
        self.params = np.concatenate([net.params, np.full(act_dim, float(log_std_init))])
        self.mean_net = Mlp(sizes, params=self.params[:net.n_params])
        self.log_sigma = self.params[net.n_params:]

    @classmethod
    def from_params(cls, sizes, params):
        obj = cls.__new__(cls)
        obj.params = np.array(params, dtype=np.float64)
        n = sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:]))
        obj.mean_net = Mlp(sizes, params=obj.params[:n])
        obj.log_sigma = obj.params[n:]
        if obj.log_sigma.size != sizes[-1]:
            raise ShapeError("log_sigma length does not match the action dimension")
        return obj

    @property
    def obs_dim(self):
        return self.mean_net.n_in

    @property
    def act_dim(self):
        return self.mean_net.n_out

    @property
    def sizes(self):
        return list(self.mean_net.sizes)

    @property
    def n_mean_params(self):
        return self.mean_net.n_params

    @property
    def sigma(self):
        return np.exp(self.log_sigma)

    def check_finite(self):
        if not np.all(np.isfinite(self.params)):
            raise PoisonedParametersError("policy parameters contain NaN or inf")

    def snapshot(self, tag="old"):
        return PolicySnapshot(self, tag)

    def copy(self):
        return GaussianPolicy.from_params(self.sizes, self.params.copy())

    def __reduce__(self):
        # the layer weights are views into ``params``; rebuild them after unpickling
        return GaussianPolicy.from_params, (self.sizes, self.params)


class PolicySnapshot:
    """Frozen copy of a policy (``tag`` is ``"old"`` or ``"last"``)."""

    def __init__(self, policy, tag="old"):
        if tag not in ("old", "last"):
            raise ValueError(f"unknown snapshot tag {tag!r}")
        self.tag = tag
        self._policy = GaussianPolicy.from_params(policy.sizes, policy.params.copy())
        self._policy.params.setflags(write=False)

    def __getattr__(self, name):
        return getattr(self._policy, name)

    def digest(self):
        return hashlib.sha256(self._policy.params.tobytes()).hexdigest()


def forward_mean(policy, s):
    """Deterministic action mean ``mu(s)`` for one state or a batch."""
    policy.check_finite()
    return policy.mean_net.forward(s)


def sample_action(policy, s, rng):
    """Draw ``a = mu(s) + sigma * z``; returns ``(a, log_prob)``."""
    from .numerics import gaussian_log_density

    mu = forward_mean(policy, s)
    sigma = policy.sigma
    a = mu + sigma * rng.standard_normal(mu.shape)
    return a, gaussian_log_density(a, mu, sigma)


class ValueFunction:
    def __init__(self, obs_dim, hidden=(256, 256), rng=None):
        self.net = Mlp([obs_dim, *hidden, 1], rng=rng)
        self.params = self.net.params

    @classmethod
    def from_params(cls, sizes, params):
        obj = cls.__new__(cls)
        obj.net = Mlp(sizes, params=np.array(params, dtype=np.float64))
        obj.params = obj.net.params
        return obj

    @property
    def sizes(self):
        return list(self.net.sizes)

    def __call__(self, s):
        return self.net.forward(s)[..., 0]

    def copy(self):
        return ValueFunction.from_params(self.sizes, self.params.copy())

    def __reduce__(self):
        return ValueFunction.from_params, (self.sizes, self.params)


class Adam:
    """Adam on a flat parameter vector with global-norm gradient clipping."""

    def __init__(self, n, lr=3e-5, betas=(0.9, 0.999), eps=1e-8, max_grad_norm=0.5):
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.max_grad_norm = max_grad_norm
        self.m = np.zeros(n)
        self.v = np.zeros(n)
        self.t = 0

    def step(self, params, grad):
        """Update ``params`` in place. Raises AbortUpdate on non-finite gradients."""
        grad = np.asarray(grad, dtype=np.float64)
        if grad.shape != params.shape:
            raise ShapeError(f"gradient shape {grad.shape} != parameter shape {params.shape}")
        if not np.all(np.isfinite(grad)):
            raise AbortUpdate("non-finite gradient")
        if self.max_grad_norm is not None:
            norm = np.sqrt(np.dot(grad, grad))
            if norm > self.max_grad_norm:
                grad = grad * (self.max_grad_norm / norm)
        self.t += 1
        self.m = self.b1 * self.m + (1 - self.b1) * grad
        self.v = self.b2 * self.v + (1 - self.b2) * grad * grad
        m_hat = self.m / (1 - self.b1 ** self.t)
        v_hat = self.v / (1 - self.b2 ** self.t)
        params -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
        return params

    def state_dict(self):
        return {"m": self.m.copy(), "v": self.v.copy(), "t": self.t}

    def load_state_dict(self, state):
        self.m = np.array(state["m"], dtype=np.float64)
        self.v = np.array(state["v"], dtype=np.float64)
        self.t = int(state["t"])


def apply_gradients(params, grads, optimizer):
    return optimizer.step(params, grads)


CHECKPOINT_MAGIC = "aslearn-checkpoint"
CHECKPOINT_VERSION = 1


def save_checkpoint(path, policy, value_fn):
    """Write both networks in the versioned text format described in the README."""
    lines = [f"{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}"]
    for name, sizes, flat in (
        ("policy", policy.sizes, policy.mean_net.params),
        ("value", value_fn.sizes, value_fn.params),
    ):
        shapes = list(zip(sizes[:-1], sizes[1:]))
        lines.append(f"network {name} {len(shapes)}")
        k = 0
        for a, b in shapes:
            lines.append(f"weight {a} {b}")
            lines.extend(repr(float(v)) for v in flat[k:k + a * b])
            k += a * b
            lines.append(f"bias {b}")
            lines.extend(repr(float(v)) for v in flat[k:k + b])
            k += b
    lines.append(f"log_sigma {policy.act_dim}")
    lines.extend(repr(float(v)) for v in policy.log_sigma)
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def load_checkpoint(path):
    """Inverse of :func:`save_checkpoint`; returns ``(policy, value_fn)``."""
    with open(path, encoding="ascii") as fh:
        tokens = fh.read().split("\n")
    it = iter(t for t in tokens if t.strip())
    magic, version = next(it).split()
    if magic != CHECKPOINT_MAGIC or int(version) != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: not a version-{CHECKPOINT_VERSION} checkpoint")
    nets = {}
    log_sigma = None
    for line in it:
        head = line.split()
        if head[0] == "network":
            name, n_layers = head[1], int(head[2])
            sizes, flat = [], []
            for _ in range(n_layers):
                _, a, b = next(it).split()
                a, b = int(a), int(b)
                if not sizes:
                    sizes.append(a)
                sizes.append(b)
                flat.extend(float(next(it)) for _ in range(a * b))
                _, nb = next(it).split()
                flat.extend(float(next(it)) for _ in range(int(nb)))
            nets[name] = (sizes, np.array(flat))
        elif head[0] == "log_sigma":
            log_sigma = np.array([float(next(it)) for _ in range(int(head[1]))])
        else:
            raise ValueError(f"{path}: unexpected record {head[0]!r}")
    psizes, pflat = nets["policy"]
    policy = GaussianPolicy.from_params(psizes, np.concatenate([pflat, log_sigma]))
    vsizes, vflat = nets["value"]
    return policy, ValueFunction.from_params(vsizes, vflat)
