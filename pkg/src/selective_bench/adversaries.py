"""Seed-deterministic generators for hard loss matrices.

Every generator is a pure function of its parameters plus a seed, so an
Instance's origin header is enough to rebuild it bit for bit.  Trees use
a counter-based RNG keyed by (seed, tree, node); everything else draws
from a generator derived once from the full parameter list.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import Instance, floor_log2
from .seeding import counter_uniform, derive_key, derive_rng

__all__ = [
    "GeneratorSpec",
    "LabeledTree",
    "WindowLaw",
    "from_bitstrings",
    "block_adversary",
    "tree_adversary",
    "tree_level_values",
    "bounded_recall_adversary",
    "threshold_adversary",
    "realizable_random",
    "estimate_window_law",
]

KINDS = ("bitstrings", "block", "tree", "bounded_recall_mix", "threshold", "realizable_random")


# ---------------------------------------------------------------------------
# generator spec and tag round-trip


@dataclass(frozen=True)
class GeneratorSpec:
    """What to generate: kind, shape, kind-specific params, seed.

    Serializes to a one-token tag like "block:n=8:m=2:l=4" (list values
    joined with '+'); tag plus seed round-trips through from_tag/build
    to a bit-identical Instance.
    """

    kind: str
    n: int
    m: int
    seed: int
    params: tuple[tuple[str, object], ...] = ()

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown generator kind {self.kind!r}")
        if self.n < 1 or self.m < 1:
            raise ValueError(f"need n >= 1 and m >= 1, got n={self.n}, m={self.m}")
        object.__setattr__(self, "params", tuple(sorted(dict(self.params).items())))

    def tag(self) -> str:
        parts = [self.kind, f"n={self.n}", f"m={self.m}"]
        for key, val in self.params:
            if isinstance(val, (tuple, list)):
                parts.append(f"{key}={'+'.join(str(v) for v in val)}")
            else:
                parts.append(f"{key}={val}")
        return ":".join(parts)

    def with_seed(self, seed: int) -> "GeneratorSpec":
        return GeneratorSpec(self.kind, self.n, self.m, seed, self.params)

    @staticmethod
    def from_tag(tag: str, seed: int) -> "GeneratorSpec":
        parts = tag.split(":")
        kind = parts[0]
        kv: dict[str, object] = {}
        for part in parts[1:]:
            if "=" not in part:
                raise ValueError(f"malformed tag component {part!r} in {tag!r}")
            key, raw = part.split("=", 1)
            kv[key] = _parse_param(kind, key, raw)
        if kind == "threshold" and "m" not in kv and "n" in kv:
            kv["m"] = int(kv["n"]) + 1  # the model class is the n+1 cut points
        try:
            n = int(kv.pop("n"))
            m = int(kv.pop("m"))
        except KeyError as exc:
            raise ValueError(f"tag {tag!r} is missing {exc}") from None
        return GeneratorSpec(kind, n, m, seed, tuple(kv.items()))

    def validate(self) -> None:
        """Structural checks that need no construction work; raises
        ValueError with the reason."""
        p = dict(self.params)
        required = {"block": ("l",), "bounded_recall_mix": ("indices",), "realizable_random": ("density",)}
        for key in required.get(self.kind, ()):
            if key not in p:
                raise ValueError(f"generator {self.kind!r} needs parameter {key!r}")
        if self.kind in ("tree", "bounded_recall_mix") and 1 << floor_log2(self.n) != self.n:
            raise ValueError(f"{self.kind} instances need n a power of two, got {self.n}")
        if self.kind == "threshold" and self.m != self.n + 1:
            raise ValueError(f"threshold class has m = n + 1, got m={self.m}, n={self.n}")
        if self.kind == "bounded_recall_mix":
            _check_mixture_shape(floor_log2(self.n), self.m, p["indices"])

    def build(self) -> Instance:
        self.validate()
        p = dict(self.params)
        if self.kind == "bitstrings":
            inst = from_bitstrings(p["a"])
            if (inst.m, inst.n) != (self.m, self.n):
                raise ValueError("bitstrings do not match the declared shape")
        elif self.kind == "block":
            inst = block_adversary(self.n, self.m, p["l"], self.seed)
        elif self.kind == "tree":
            inst = tree_adversary(floor_log2(self.n), self.m, self.seed)
        elif self.kind == "bounded_recall_mix":
            inst = bounded_recall_adversary(floor_log2(self.n), self.m, p["indices"], self.seed)
        elif self.kind == "threshold":
            inst = threshold_adversary(self.n, self.seed)
        else:
            inst = realizable_random(self.n, self.m, p["density"], self.seed)
        return Instance(inst.losses, origin=(self.tag(), self.seed))


_INT_PARAMS = {"l"}
_INT_LIST_PARAMS = {"indices"}
_FLOAT_PARAMS = {"density"}


def _parse_param(kind: str, key: str, raw: str) -> object:
    if key in _INT_LIST_PARAMS:
        return tuple(int(tok) for tok in raw.split("+"))
    if key in _INT_PARAMS or key in ("n", "m"):
        return int(raw)
    if key in _FLOAT_PARAMS:
        return float(raw)
    if key == "a":
        return tuple(raw.split("+"))
    raise ValueError(f"unknown parameter {key!r} for generator kind {kind!r}")


# ---------------------------------------------------------------------------
# generators


def from_bitstrings(a) -> Instance:
    """Loss matrix with row i spelled by binary string a[i]."""
    strings = list(a)
    if not strings:
        raise ValueError("need at least one bitstring")
    n = len(strings[0])
    rows = []
    for s in strings:
        if len(s) != n:
            raise ValueError(f"ragged input: expected length {n}, got {len(s)} in {s!r}")
        if set(s) - {"0", "1"}:
            raise ValueError(f"non-binary character in {s!r}")
        rows.append([float(c) for c in s])
    return Instance(np.asarray(rows))


def block_adversary(n: int, m: int, l: int, seed: int) -> Instance:
    """Each row: one fair bit per length-floor(l/4) block, repeated across
    the block.  The final block may be partial."""
    if l < 4:
        raise ValueError(f"need l >= 4, got {l}")
    if m < 2:
        raise ValueError(f"need m >= 2, got {m}")
    blen = l // 4
    nblocks = -(-n // blen)
    rng = derive_rng(seed, "block", n, m, l)
    bits = rng.integers(0, 2, size=(m, nblocks)).astype(np.float64)
    losses = np.repeat(bits, blen, axis=1)[:, :n]
    return Instance(losses, origin=(f"block:n={n}:m={m}:l={l}", seed))


@dataclass(frozen=True)
class LabeledTree:
    """One sampled value tree: levels[j] holds the 2^j node values at
    depth j, left to right; leaves sit at depth k.

    Values at depth j are 1/2 +- j/(4k).  A child keeps its parent's
    sign except with probability exactly 1/(2j), which makes each
    root-to-leaf value path a martingale.
    """

    k: int
    levels: tuple[np.ndarray, ...] = field(repr=False)

    def __post_init__(self) -> None:
        if len(self.levels) != self.k + 1:
            raise ValueError(f"expected {self.k + 1} levels, got {len(self.levels)}")
        frozen = []
        for j, vals in enumerate(self.levels):
            v = np.array(vals, dtype=np.float64)
            if v.shape != (1 << j,):
                raise ValueError(f"level {j} must have {1 << j} values, got shape {v.shape}")
            v.setflags(write=False)
            frozen.append(v)
        object.__setattr__(self, "levels", tuple(frozen))

    @property
    def leaf_values(self) -> np.ndarray:
        return self.levels[-1]


def tree_level_values(k: int, m: int, seed: int) -> list[np.ndarray]:
    """Node values for m independent trees, vectorized: element j is an
    (m, 2^j) array of depth-j values.  Node (j, pos) flips relative to
    its parent iff the counter-based uniform for heap id 2^j + pos is
    below 1/(2j)."""
    if k < 1:
        raise ValueError(f"need k >= 1, got {k}")
    if m < 1:
        raise ValueError(f"need m >= 1, got {m}")
    keys = np.array([derive_key(seed, "tree", i) for i in range(m)], dtype=np.uint64)
    sign = np.ones((m, 1))
    levels = [np.full((m, 1), 0.5)]
    for j in range(1, k + 1):
        node_ids = (1 << j) + np.arange(1 << j, dtype=np.uint64)
        u = counter_uniform(keys[:, None], node_ids[None, :])  # (m, 2^j)
        flip = np.where(u < 1.0 / (2 * j), -1.0, 1.0)
        sign = np.repeat(sign, 2, axis=1) * flip
        levels.append(0.5 + sign * (j / (4.0 * k)))
    return levels


def labeled_trees(k: int, m: int, seed: int) -> list[LabeledTree]:
    levels = tree_level_values(k, m, seed)
    return [LabeledTree(k, tuple(lv[i] for lv in levels)) for i in range(m)]


def tree_adversary(k: int, m: int, seed: int) -> Instance:
    """n = 2^k losses per model: model i's step-j loss is a Bernoulli
    draw with success probability equal to leaf j's value in tree i."""
    leaf_vals = tree_level_values(k, m, seed)[-1]  # (m, 2^k)
    keys = np.array([derive_key(seed, "tree", i) for i in range(m)], dtype=np.uint64)
    leaf_ids = (1 << (k + 1)) + np.arange(1 << k, dtype=np.uint64)
    u = counter_uniform(keys[:, None], leaf_ids[None, :])
    losses = (u < leaf_vals).astype(np.float64)
    return Instance(losses, origin=(f"tree:n={1 << k}:m={m}", seed))


def _block_string(rng: np.random.Generator, k: int, i: int) -> np.ndarray:
    """One draw from D_i: n/2^i fair bits, each repeated 2^i times."""
    bits = rng.integers(0, 2, size=1 << (k - i)).astype(np.float64)
    return np.repeat(bits, 1 << i)


def mixture_rows(k: int, m: int, indices, rng: np.random.Generator) -> np.ndarray:
    """Pre-permutation mixture: m/2 rows from D_{indices[0]-1}, m/4 from
    D_{indices[1]-1}, ..., 1 from the last, then one all-zero row."""
    rows = []
    for j, idx in enumerate(indices, start=1):
        rows.extend(_block_string(rng, k, idx - 1) for _ in range(m >> j))
    rows.append(np.zeros(1 << k))
    return np.stack(rows)


def _check_mixture_shape(k: int, m: int, indices) -> tuple[int, ...]:
    indices = tuple(int(i) for i in indices)
    if m < 2 or m & (m - 1):
        raise ValueError(f"need m a power of two with m >= 2, got {m}")
    logm = m.bit_length() - 1
    if len(indices) != logm:
        raise ValueError(f"need exactly log2(m) = {logm} indices, got {len(indices)}")
    if any(not 1 <= i <= k - 1 for i in indices):
        raise ValueError(f"indices must lie in [1, {k - 1}], got {indices}")
    if any(b <= a for a, b in zip(indices, indices[1:])):
        raise ValueError(f"indices must be strictly increasing, got {indices}")
    return indices


def bounded_recall_adversary(k: int, m: int, indices, seed: int) -> Instance:
    """Mixture of block-constant random strings at the window scales a
    short-memory learner visits most, plus a single all-zero string,
    with the m rows randomly permuted."""
    indices = _check_mixture_shape(k, m, indices)
    rng = derive_rng(seed, "bounded_recall_mix", k, m, indices)
    rows = mixture_rows(k, m, indices, rng)
    losses = rows[rng.permutation(m)]
    tag = f"bounded_recall_mix:n={1 << k}:m={m}:indices={'+'.join(map(str, indices))}"
    return Instance(losses, origin=(tag, seed))


def threshold_adversary(n: int, seed: int) -> Instance:
    """Bisection stream against the n + 1 threshold behaviors.

    Points x_i arrive as interval midpoints with fair-bit labels y_i;
    the interval halves toward the consistent side each step, so some
    threshold classifies every (x_i, y_i) correctly and its behavior row
    is all-zero.  Row 0 predicts 1 everywhere; row j (j >= 1) predicts
    1 on x > (j-th smallest point).
    """
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    rng = derive_rng(seed, "threshold", n)
    # midpoints tracked as exact integers over an implicit denominator
    # 2^n; float bisection runs out of mantissa near n = 53 and silently
    # destroys the consistent-threshold guarantee
    lo, hi = 0, 1 << n
    xs: list[int] = []
    ys = np.empty(n)
    for i in range(n):
        x = (lo + hi) // 2
        y = int(rng.integers(0, 2))
        xs.append(x)
        ys[i] = y
        if y == 1:
            hi = x  # consistent thresholds sit below x
        else:
            lo = x
    cuts = [0] + sorted(xs)  # cuts[j]: predict 1 on x > cuts[j]
    preds = np.array([[1.0 if x > c else 0.0 for x in xs] for c in cuts])  # (n+1, n)
    losses = np.abs(preds - ys[None, :])
    return Instance(losses, origin=(f"threshold:n={n}:m={n + 1}", seed))


def realizable_random(n: int, m: int, density: float, seed: int) -> Instance:
    """Row 0 all-zero, remaining rows i.i.d. Bernoulli(density), rows
    permuted.  Always satisfies the realizable learner's precondition."""
    if not 0.0 <= density <= 1.0:
        raise ValueError(f"density must lie in [0, 1], got {density}")
    if n < 1 or m < 1:
        raise ValueError(f"need n >= 1 and m >= 1, got n={n}, m={m}")
    rng = derive_rng(seed, "realizable_random", n, m, density)
    rows = np.zeros((m, n))
    if m > 1:
        rows[1:] = (rng.random((m - 1, n)) < density).astype(np.float64)
    losses = rows[rng.permutation(m)]
    tag = f"realizable_random:n={n}:m={m}:density={density:g}"
    return Instance(losses, origin=(tag, seed))


# ---------------------------------------------------------------------------
# window-law estimation


@dataclass(frozen=True)
class WindowLaw:
    """Estimated law of a learner's window length on sequences of length n:
    mass at w = 1, mass per dyadic interval I_i = (2^(i-1), 2^i] for
    i = 1..k-1, and mass at w = n."""

    n: int
    w1: float
    intervals: np.ndarray
    wn: float
    samples: int

    def __post_init__(self) -> None:
        v = np.array(self.intervals, dtype=np.float64)
        v.setflags(write=False)
        object.__setattr__(self, "intervals", v)

    def heaviest(self, count: int) -> tuple[int, ...]:
        """The `count` interval indices with the most mass, ascending;
        ties resolved toward the smaller index."""
        if not 1 <= count <= self.intervals.size:
            raise ValueError(f"count must be in [1, {self.intervals.size}], got {count}")
        order = np.argsort(-self.intervals, kind="stable")[:count]
        return tuple(sorted(int(i) + 1 for i in order))


def _resolve_window_sampler(alg):
    """Map an algorithm descriptor to a window sampler rng -> (t, w)."""
    from . import algorithms as A
    from .convexity import mean_predict

    if callable(alg):
        return lambda inst, rng: alg(inst, rng).window

    name, _, argstr = str(alg).partition(":")
    kwargs = dict(part.split("=", 1) for part in argstr.split(":") if part)
    if name == "bounded_recall_ew":
        params = A.BoundedRecallParams(alpha=0.0)
        return lambda inst, rng: A.bounded_recall_ew(inst, params, rng).window
    if name == "erm":
        return lambda inst, rng: A.erm(inst, rng).window
    if name == "hybrid_ew":
        delta = int(kwargs["delta"]) if "delta" in kwargs else "auto"
        params = A.HybridParams(delta=delta, eta=1.0)
        return lambda inst, rng: A.hybrid_ew(inst, params, rng).window
    if name == "mean_predict":
        return lambda inst, rng: mean_predict(inst.losses[0], rng).window
    if name == "stub":
        from .core import WindowChoice

        w = int(kwargs["w"])
        return lambda inst, rng: WindowChoice(0, w)
    raise ValueError(f"unknown algorithm descriptor {alg!r}")


def estimate_window_law(alg, n: int, samples: int, seed: int) -> WindowLaw:
    """Monte Carlo estimate of an algorithm's window-length law on an
    all-zero length-n instance (valid for learners whose window choice
    does not read the losses)."""
    if samples < 1:
        raise ValueError(f"need samples >= 1, got {samples}")
    k = floor_log2(n)
    sampler = _resolve_window_sampler(alg)
    inst = Instance(np.zeros((1, n)))
    rng = derive_rng(seed, "window_law", n, samples)
    c1 = 0
    cn = 0
    interval_counts = np.zeros(max(k - 1, 0), dtype=np.int64)
    for _ in range(samples):
        w = sampler(inst, rng).w
        if w == 1:
            c1 += 1
        elif w == n:
            cn += 1
        elif w > 1 << (k - 1):
            raise ValueError(f"window length {w} falls outside the dyadic buckets for n={n}")
        else:
            interval_counts[(w - 1).bit_length() - 1] += 1
    return WindowLaw(n, c1 / samples, interval_counts / samples, cn / samples, samples)
