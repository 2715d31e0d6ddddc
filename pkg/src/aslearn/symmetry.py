"""Declared symmetry transforms, the pair/single/cycle relation graph and the
composition of per-transform action estimators from independent linear maps.

A transform is encoded the usual way: ``out[i] = multipliers[i] * x[indices[i]]``
for both observations and actions. For action slot ``u`` of transform ``j``,
``q = act_indices[u]`` is its source slot, and the declared relation is
``a'[u] = mult * a[q]``.

Independent estimators:

* pair ``(q, u)`` with ``q < u``: ``y = m*x + b`` mapping slot ``q`` to ``u``;
  the reverse direction is its analytic inverse ``x = (y - b) / m``.
* single ``q``: the involution ``y = -x + b``.

A relation whose declared multiplier is negative is composed as
"pair map, then reflection at the destination", the reflection being the
single estimator of the destination slot when one exists and a plain
negation otherwise.
"""

from dataclasses import dataclass, field
import numpy as np

from .exceptions import ConfigError, NearSingularError, ShapeError

MIN_INVERTIBLE_SLOPE = 1e-6


@dataclass(frozen=True)
class TransformSpec:
    name: str
    kind: str
    obs_indices: tuple
    obs_multipliers: tuple
    act_indices: tuple
    act_multipliers: tuple

    def __post_init__(self):
        if self.kind not in ("reflection", "rotation"):
            raise ConfigError(f"transform {self.name!r}: unknown kind {self.kind!r}")
        for label, idx, mult in (
            ("obs", self.obs_indices, self.obs_multipliers),
            ("act", self.act_indices, self.act_multipliers),
        ):
            object.__setattr__(self, f"{label}_indices", tuple(int(i) for i in idx))
            object.__setattr__(self, f"{label}_multipliers", tuple(float(m) for m in mult))
            idx = getattr(self, f"{label}_indices")
            mult = getattr(self, f"{label}_multipliers")
            if len(idx) != len(mult):
                raise ConfigError(
                    f"transform {self.name!r}: {label}_indices has {len(idx)} slots, "
                    f"{label}_multipliers has {len(mult)}")
            if sorted(idx) != list(range(len(idx))):
                seen, bad = set(), None
                for i, v in enumerate(idx):
                    if not 0 <= v < len(idx) or v in seen:
                        bad = i
                        break
                    seen.add(v)
                raise ConfigError(
                    f"transform {self.name!r}: {label}_indices is not a permutation (slot {bad})")
            for i, m in enumerate(mult):
                if m == 0.0 or not np.isfinite(m):
                    raise ConfigError(f"transform {self.name!r}: {label}_multipliers slot {i} is {m}")
        object.__setattr__(self, "_obs", (np.array(self.obs_indices), np.array(self.obs_multipliers)))
        object.__setattr__(self, "_act", (np.array(self.act_indices), np.array(self.act_multipliers)))

    @property
    def obs_dim(self):
        return len(self.obs_indices)

    @property
    def act_dim(self):
        return len(self.act_indices)

    def is_involution(self, tol=0.0):
        """True when applying the transform twice is the identity on both spaces."""
        for idx, mult in (self._obs, self._act):
            x = np.arange(1.0, len(idx) + 1.0)
            twice = mult * (mult * x[idx])[idx]
            if np.max(np.abs(twice - x)) > tol:
                return False
        return True


def apply_state_transform(spec, s):
    s = np.asarray(s, dtype=np.float64)
    idx, mult = spec._obs
    if s.shape[-1] != idx.size:
        raise ShapeError(f"state has {s.shape[-1]} elements, transform {spec.name!r} expects {idx.size}")
    return s[..., idx] * mult


def apply_declared_action_transform(spec, a):
    a = np.asarray(a, dtype=np.float64)
    idx, mult = spec._act
    if a.shape[-1] != idx.size:
        raise ShapeError(f"action has {a.shape[-1]} elements, transform {spec.name!r} expects {idx.size}")
    return a[..., idx] * mult


def declared_action_transform_vjp(spec, grad_out):
    """Transpose of :func:`apply_declared_action_transform` (it is linear)."""
    idx, mult = spec._act
    grad_in = np.empty_like(grad_out)
    grad_in[..., idx] = grad_out * mult
    return grad_in


def involution_check(m, b, tol=1e-12):
    """A line ``y = m*x + b`` is its own inverse iff ``m == -1`` or ``(m, b) == (1, 0)``."""
    return abs(m + 1.0) <= tol or (abs(m - 1.0) <= tol and abs(b) <= tol)


@dataclass(frozen=True)
class Recipe:
    """How slot ``dest`` of one transform is produced from slot ``source``.

    ``pair`` is the canonical pair index (or None), ``inverse`` whether the
    pair is traversed against its canonical direction, ``reflect`` one of
    ``None``, ``"single"`` or ``"fixed"``, and ``scale`` a fixed factor used
    only for identity-like relations (source == dest, positive multiplier).
    """

    source: int
    dest: int
    pair: object = None
    inverse: bool = False
    reflect: object = None
    scale: float = 1.0

    def estimators(self):
        out = []
        if self.pair is not None:
            out.append(("pair", self.pair))
        if self.reflect == "single":
            out.append(("single", self.dest))
        return out


@dataclass
class RelationGraph:
    act_dim: int
    pairs: list
    singles: list
    cycles: list
    recipes: dict
    transform_names: list
    pair_init_m: dict = field(default_factory=dict)

    def pair_index(self, q, u):
        return self.pairs.index((min(q, u), max(q, u)))

    def cycles_containing(self, pair):
        q, u = pair
        out = []
        for c in self.cycles:
            k = len(c)
            edges = {(min(c[i], c[(i + 1) % k]), max(c[i], c[(i + 1) % k])) for i in range(k)}
            if (q, u) in edges:
                out.append(c)
        return out


def _find_cycles(nodes, adj):
    found = set()
    for start in sorted(nodes):
        stack = [(start, [start])]
        while stack:
            node, path = stack.pop()
            for nxt in sorted(adj.get(node, ())):
                if nxt == start and len(path) >= 3:
                    if path[1] < path[-1]:
                        found.add(tuple(path))
                elif nxt > start and nxt not in path:
                    stack.append((nxt, path + [nxt]))
    return sorted(found, key=lambda c: (len(c), c))


def extract_relation_graph(specs):
    specs = list(specs)
    if not specs:
        raise ConfigError("at least one transform is required")
    n = specs[0].act_dim
    if any(s.act_dim != n for s in specs):
        raise ShapeError("transforms disagree on the action dimension")
    ordered = sorted(specs, key=lambda s: s.name)

    pair_m = {}
    singles = set()
    for spec in ordered:
        for u, (q, mult) in enumerate(zip(spec.act_indices, spec.act_multipliers)):
            if q == u:
                if mult < 0:
                    singles.add(u)
            else:
                key = (min(q, u), max(q, u))
                mag = abs(mult) if q < u else 1.0 / abs(mult)
                pair_m.setdefault(key, mag)
    pairs = sorted(pair_m)

    recipes = {}
    for spec in ordered:
        for u, (q, mult) in enumerate(zip(spec.act_indices, spec.act_multipliers)):
            if q == u:
                if mult < 0:
                    r = Recipe(q, u, reflect="single")
                else:
                    r = Recipe(q, u, scale=mult)
            else:
                reflect = None
                if mult < 0:
                    reflect = "single" if u in singles else "fixed"
                r = Recipe(q, u, pair=(min(q, u), max(q, u)), inverse=q > u, reflect=reflect)
            recipes[(spec.name, u)] = r

    adj = {}
    for q, u in pairs:
        adj.setdefault(q, set()).add(u)
        adj.setdefault(u, set()).add(q)
    cycles = _find_cycles(adj.keys(), adj)
    return RelationGraph(
        act_dim=n,
        pairs=pairs,
        singles=sorted(singles),
        cycles=cycles,
        recipes=recipes,
        transform_names=[s.name for s in specs],
        pair_init_m=pair_m,
    )


class EstimatorParams:
    """Global estimator parameters ``nu``: ``(m, b)`` per pair and ``b`` per single."""

    def __init__(self, graph, pair_m=None, pair_b=None, single_b=None):
        self.pairs = list(graph.pairs)
        self.singles = list(graph.singles)
        self.pair_m = np.array([graph.pair_init_m[p] for p in self.pairs] if pair_m is None else pair_m,
                               dtype=np.float64)
        self.pair_b = np.zeros(len(self.pairs)) if pair_b is None else np.array(pair_b, dtype=np.float64)
        self.single_b = (np.zeros(len(self.singles)) if single_b is None
                         else np.array(single_b, dtype=np.float64))
        self._pidx = {p: i for i, p in enumerate(self.pairs)}
        self._sidx = {q: i for i, q in enumerate(self.singles)}

    @classmethod
    def from_declared(cls, graph):
        return cls(graph)

    def copy(self):
        new = EstimatorParams.__new__(EstimatorParams)
        new.pairs, new.singles = self.pairs, self.singles
        new.pair_m, new.pair_b, new.single_b = self.pair_m.copy(), self.pair_b.copy(), self.single_b.copy()
        new._pidx, new._sidx = self._pidx, self._sidx
        return new

    def pair(self, key):
        i = self._pidx[key]
        return self.pair_m[i], self.pair_b[i]

    def set_pair(self, key, m, b):
        i = self._pidx[key]
        self.pair_m[i], self.pair_b[i] = m, b

    def single(self, q):
        return self.single_b[self._sidx[q]]

    def set_single(self, q, b):
        self.single_b[self._sidx[q]] = b

    def as_dict(self):
        out = {}
        for (q, u), m, b in zip(self.pairs, self.pair_m, self.pair_b):
            out[f"m_{q}_{u}"] = float(m)
            out[f"b_{q}_{u}"] = float(b)
        for q, b in zip(self.singles, self.single_b):
            out[f"b_{q}"] = float(b)
        return out


def pair_map(m, b, x, inverse=False):
    """Forward ``m*x + b`` or inverse ``(x - b)/m`` of one pair estimator."""
    if inverse:
        if abs(m) < MIN_INVERTIBLE_SLOPE:
            raise NearSingularError(f"cannot invert slope {m}")
        return (x - b) / m
    return m * x + b


def apply_recipe(recipe, nu, x):
    """Map source-slot values ``x`` to destination-slot values through ``nu``."""
    y = x
    if recipe.pair is not None:
        m, b = nu.pair(recipe.pair)
        y = pair_map(m, b, y, recipe.inverse)
    else:
        y = recipe.scale * y
    if recipe.reflect == "single":
        y = -y + nu.single(recipe.dest)
    elif recipe.reflect == "fixed":
        y = -y
    return y


def invert_recipe(recipe, nu, y):
    """Recover the pair-map output (the canonical relation input side) from a destination value.

    Undoes only the reflection stage, so ``pair_map(source) == invert_recipe(dest)``.
    """
    if recipe.reflect == "single":
        return -y + nu.single(recipe.dest)
    if recipe.reflect == "fixed":
        return -y
    return y


def compose_global_estimator(graph, nu, j, a):
    """Apply the estimated action transform of transform ``j`` to ``a`` (vector or batch)."""
    a = np.asarray(a, dtype=np.float64)
    if a.shape[-1] != graph.act_dim:
        raise ShapeError(f"action has {a.shape[-1]} elements, expected {graph.act_dim}")
    out = np.empty_like(a)
    for u in range(graph.act_dim):
        r = graph.recipes[(j, u)]
        out[..., u] = apply_recipe(r, nu, a[..., r.source])
    return out


def recipe_affine(recipe, nu):
    """``(scale, offset)`` with ``apply_recipe(recipe, nu, x) == scale*x + offset`` up to rounding."""
    if recipe.pair is not None:
        m, b = nu.pair(recipe.pair)
        if recipe.inverse:
            if abs(m) < MIN_INVERTIBLE_SLOPE:
                raise NearSingularError(f"cannot invert slope {m}")
            scale, offset = 1.0 / m, -b / m
        else:
            scale, offset = m, b
    else:
        scale, offset = recipe.scale, 0.0
    if recipe.reflect == "single":
        scale, offset = -scale, nu.single(recipe.dest) - offset
    elif recipe.reflect == "fixed":
        scale, offset = -scale, -offset
    return scale, offset


class AffineEstimator:
    """Vectorized form of ``compose_global_estimator`` for fixed ``nu``."""

    def __init__(self, graph, nu, j):
        self.name = j
        rs = [graph.recipes[(j, u)] for u in range(graph.act_dim)]
        self.source = np.array([r.source for r in rs])
        aff = np.array([recipe_affine(r, nu) for r in rs])
        self.scale, self.offset = aff[:, 0], aff[:, 1]

    def __call__(self, a):
        return a[..., self.source] * self.scale + self.offset


def compose_cycle(cycle, nu_pair, k):
    """Push ``k`` around ``cycle`` in traversal order using per-pair ``(m, b)``."""
    x = k
    n = len(cycle)
    for i in range(n):
        q, u = cycle[i], cycle[(i + 1) % n]
        m, b = nu_pair((min(q, u), max(q, u)))
        x = pair_map(m, b, x, inverse=q > u)
    return x


# -- transform declaration files -------------------------------------------------

TRANSFORM_FILE_HEADER = "aslearn-transforms 1"


def dump_transforms(specs):
    lines = [TRANSFORM_FILE_HEADER]
    for s in specs:
        lines += [
            "",
            f"transform {s.name}",
            f"kind {s.kind}",
            "obs_indices " + " ".join(str(i) for i in s.obs_indices),
            "obs_multipliers " + " ".join(_fmt(m) for m in s.obs_multipliers),
            "act_indices " + " ".join(str(i) for i in s.act_indices),
            "act_multipliers " + " ".join(_fmt(m) for m in s.act_multipliers),
        ]
    return "\n".join(lines) + "\n"


def _fmt(x):
    return str(int(x)) if float(x).is_integer() else repr(float(x))


_FIELDS = ("kind", "obs_indices", "obs_multipliers", "act_indices", "act_multipliers")


def parse_transforms(text):
    lines = [ln.split("#", 1)[0].strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines or lines[0] != TRANSFORM_FILE_HEADER:
        raise ConfigError(f"missing header line {TRANSFORM_FILE_HEADER!r}")
    specs, current = [], None

    def finish():
        if current is None:
            return
        missing = [f for f in _FIELDS if f not in current]
        if missing:
            raise ConfigError(f"transform {current['name']!r}: missing {', '.join(missing)}")
        specs.append(TransformSpec(**current))

    for ln in lines[1:]:
        key, _, rest = ln.partition(" ")
        if key == "transform":
            finish()
            current = {"name": rest.strip()}
            continue
        if current is None:
            raise ConfigError(f"field {key!r} appears before any transform")
        if key == "kind":
            current[key] = rest.strip()
        elif key in _FIELDS:
            conv = int if key.endswith("indices") else float
            try:
                current[key] = tuple(conv(v) for v in rest.split())
            except ValueError as exc:
                raise ConfigError(f"transform {current['name']!r}: bad {key}: {exc}") from None
        else:
            raise ConfigError(f"transform {current['name']!r}: unknown field {key!r}")
    finish()
    names = [s.name for s in specs]
    if len(set(names)) != len(names):
        raise ConfigError("duplicate transform names")
    return specs


def load_transforms(path):
    with open(path, encoding="utf-8") as fh:
        return parse_transforms(fh.read())
