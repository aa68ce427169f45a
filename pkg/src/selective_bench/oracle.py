"""Exact expectations over learner randomness, plus inequality checkers.

The learners' randomness is a small discrete set of atoms ((w, i1, i2)
for the hybrid learner, (k', t) for the half-block family, t for the
realizable learner), and decisions carry model distributions, so the
expected excess risk is a finite weighted sum evaluated here exactly.
Monte Carlo estimation lives alongside for cross-validation and for
instances too large to enumerate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .algorithms import BoundedRecallParams, HybridParams, RealizabilityError
from .convexity import ConvexSpec, as_points, batch_gradient, batch_value, f_loss, mean_predict
from .core import Instance, excess_risk, floor_log2, scale_profile
from .seeding import derive_rng, derive_seed

__all__ = [
    "ExactRisk",
    "RiskReport",
    "ScaleVerdict",
    "EnumerationTooLarge",
    "ENUMERATION_CAP",
    "exact_risk",
    "check_lemma1",
    "lemma1_aggregate",
    "check_experts_bound",
    "experts_sweep",
    "check_theorem5",
    "monte_carlo_risk",
]

ENUMERATION_CAP = 10_000_000

ALGORITHMS = ("hybrid_ew", "bounded_recall_ew", "erm", "realizable_learner", "mean_predict")


class EnumerationTooLarge(RuntimeError):
    """Raised when an exact enumeration would exceed ENUMERATION_CAP atoms."""


@dataclass(frozen=True)
class ExactRisk:
    """Exact expected excess risk with its per-scale conditionals.

    by_scale maps window length to the conditional expectation given
    that length; probability_mass re-adds the atom probabilities (1 up
    to rounding) as a self-check.
    """

    total: float
    by_scale: dict[int, float]
    enumeration_size: int
    probability_mass: float


@dataclass(frozen=True)
class RiskReport:
    """Monte Carlo mean excess risk; stderr is None when trials == 1."""

    mean: float
    stderr: float | None
    trials: int
    seed: int


@dataclass(frozen=True)
class ScaleVerdict:
    """One conditional inequality: lhs <= rhs + 1e-9 at window 2^i."""

    i: int
    w: int
    lhs: float
    rhs: float

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs + 1e-9


def _check_cap(atoms: int) -> None:
    if atoms > ENUMERATION_CAP:
        raise EnumerationTooLarge(
            f"{atoms} enumeration atoms exceed the cap of {ENUMERATION_CAP}; "
            "use monte_carlo_risk instead"
        )


def _softmax_cols(u: np.ndarray, scale: float) -> np.ndarray:
    """Column-wise distribution proportional to exp(-scale * u) along
    axis 0; scale=inf gives uniform over the per-column argmin ties."""
    if not math.isfinite(scale):
        mask = u == u.min(axis=0, keepdims=True)
        return mask / mask.sum(axis=0, keepdims=True)
    w = np.exp(-scale * (u - u.min(axis=0, keepdims=True)))
    return w / w.sum(axis=0, keepdims=True)


def _halves(inst: Instance, kp: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-model means of the observation/prediction half-blocks at
    scale k': arrays (m, 2^(k-k'))."""
    k = inst.k
    half = 1 << (kp - 1)
    a = inst.losses[:, : 1 << k].reshape(inst.m, 1 << (k - kp), 2, half).mean(axis=3)
    return a[:, :, 0], a[:, :, 1]


def _exact_recall(inst: Instance, alpha: float) -> ExactRisk:
    k = inst.k
    if k < 1:
        raise ValueError(f"need n >= 2, got n={inst.n}")
    _check_cap((1 << k) - 1)
    by_scale = {}
    mass = 0.0
    for kp in range(1, k + 1):
        u, v = _halves(inst, kp)
        p = _softmax_cols(u, alpha)
        ex = (p * v).sum(axis=0) - v.min(axis=0)
        by_scale[1 << (kp - 1)] = float(np.maximum(ex, 0.0).mean())
        nblk = 1 << (k - kp)
        mass += nblk * (1.0 / (k * nblk))
    total = sum(by_scale.values()) / k
    return ExactRisk(total, by_scale, (1 << k) - 1, mass)


def _exact_erm(inst: Instance) -> ExactRisk:
    k = inst.k
    if k < 1:
        raise ValueError(f"need n >= 2, got n={inst.n}")
    _check_cap((1 << k) - 1)
    by_scale = {}
    mass = 0.0
    for kp in range(1, k + 1):
        u, v = _halves(inst, kp)
        pick = u.argmin(axis=0)  # lowest index on ties
        ex = v[pick, np.arange(v.shape[1])] - v.min(axis=0)
        by_scale[1 << (kp - 1)] = float(ex.mean())
        nblk = 1 << (k - kp)
        mass += nblk * (1.0 / (k * nblk))
    total = sum(by_scale.values()) / k
    return ExactRisk(total, by_scale, (1 << k) - 1, mass)


def _hybrid_scale_tensor(inst: Instance, i: int, delta: int) -> tuple[np.ndarray, np.ndarray]:
    """Block means X (m, n1, 2^delta) at scale i and the exclusive prefix
    sums U: U[., b, s] is the watched-loss sum (in block-mean units) a
    learner holds before predicting block s of superblock b."""
    k = inst.k
    w = 1 << i
    n1 = 1 << (k - delta - i)
    x = inst.losses[:, : 1 << k].reshape(inst.m, n1, 1 << delta, w).mean(axis=3)
    u = np.cumsum(x, axis=2) - x  # exclusive: empty watch = 0
    return x, u


def _exact_hybrid(inst: Instance, delta: int, eta: float) -> ExactRisk:
    k = inst.k
    if delta > k:
        raise ValueError(f"delta={delta} exceeds floor(log2 n)={k} for n={inst.n}")
    scales = k - delta + 1
    atoms = sum((1 << (k - i)) for i in range(scales))
    _check_cap(atoms)
    by_scale = {}
    mass = 0.0
    for i in range(scales):
        x, u = _hybrid_scale_tensor(inst, i, delta)
        flat_u = u.reshape(inst.m, -1)
        flat_x = x.reshape(inst.m, -1)
        p = _softmax_cols(flat_u, eta)
        ex = (p * flat_x).sum(axis=0) - flat_x.min(axis=0)
        by_scale[1 << i] = float(np.maximum(ex, 0.0).mean())
        count = flat_x.shape[1]
        mass += count * (1.0 / (scales * count))
    total = sum(by_scale.values()) / scales
    return ExactRisk(total, by_scale, atoms, mass)


def _exact_realizable(inst: Instance) -> ExactRisk:
    nonzero = inst.losses > 0
    if nonzero.any(axis=1).all():
        raise RealizabilityError(np.argmax(nonzero, axis=1))
    _check_cap(inst.n)
    seen = np.logical_or.accumulate(nonzero, axis=1)
    consistent = np.ones_like(nonzero)
    consistent[:, 1:] = ~seen[:, :-1]  # perfect on every step before t
    counts = consistent.sum(axis=0)
    mean_loss = (inst.losses * consistent).sum(axis=0) / counts
    ex = mean_loss - inst.losses.min(axis=0)
    total = float(np.maximum(ex, 0.0).mean())
    mass = float(np.full(inst.n, 1.0 / inst.n).sum())
    return ExactRisk(total, {1: total}, inst.n, mass)


def _exact_mean_predict(seq, f: ConvexSpec) -> ExactRisk:
    pts = as_points(seq)
    n = pts.shape[0]
    if n < 2:
        raise ValueError(f"need at least 2 points, got {n}")
    k = floor_log2(n)
    _check_cap((1 << k) - 1)
    by_scale = {}
    mass = 0.0
    for kp in range(1, k + 1):
        half = 1 << (kp - 1)
        b = pts[: 1 << k].reshape(1 << (k - kp), 2, half, -1).mean(axis=2)
        xhat, xbar = b[:, 0], b[:, 1]  # (nblk, d)
        diff = xhat - xbar
        # symmetrized divergence, both directions spelled out
        fwd = (
            batch_value(f, xhat)
            - batch_value(f, xbar)
            - (batch_gradient(f, xbar) * diff).sum(axis=-1)
        )
        bwd = (
            batch_value(f, xbar)
            - batch_value(f, xhat)
            - (batch_gradient(f, xhat) * -diff).sum(axis=-1)
        )
        by_scale[half] = float(np.maximum(fwd + bwd, 0.0).mean())
        mass += (1 << (k - kp)) * (1.0 / (k * (1 << (k - kp))))
    total = sum(by_scale.values()) / k
    return ExactRisk(total, by_scale, (1 << k) - 1, mass)


def exact_risk(alg: str, inst, params=None) -> ExactRisk:
    """Exact expected excess risk of `alg` on an instance (or, for
    mean_predict, the expected prediction loss on a point sequence with
    params the ConvexSpec).  params may be HybridParams or
    BoundedRecallParams where the algorithm takes them."""
    if alg == "hybrid_ew":
        p = params if params is not None else HybridParams()
        delta, eta = p.resolve(inst.n, inst.m)
        return _exact_hybrid(inst, delta, eta)
    if alg == "bounded_recall_ew":
        p = params if params is not None else BoundedRecallParams()
        return _exact_recall(inst, p.resolve(inst.n, inst.m))
    if alg == "erm":
        return _exact_erm(inst)
    if alg == "realizable_learner":
        return _exact_realizable(inst)
    if alg == "mean_predict":
        if not isinstance(params, ConvexSpec):
            raise ValueError("mean_predict needs a ConvexSpec as params")
        seq = inst.losses[0] if isinstance(inst, Instance) else inst
        return _exact_mean_predict(seq, params)
    raise ValueError(f"unknown algorithm {alg!r}; expected one of {ALGORITHMS}")


# ---------------------------------------------------------------------------
# inequality checkers


def check_lemma1(inst: Instance, delta: int, eta: float | str = "auto") -> list[ScaleVerdict]:
    """Conditional excess risk of the hybrid learner at each window scale
    against the profile-gap bound (L_{i+delta} - L_i) + ln m/(eta 2^delta)
    + eta/8."""
    params = HybridParams(delta=delta, eta=eta)
    delta, eta = params.resolve(inst.n, inst.m)
    risk = exact_risk("hybrid_ew", inst, params)
    prof = scale_profile(inst).values
    slack = math.log(inst.m) / (eta * (1 << delta)) + eta / 8 if eta > 0 else 0.0
    out = []
    for i in range(inst.k - delta + 1):
        lhs = risk.by_scale[1 << i]
        rhs = (prof[i + delta] - prof[i]) + slack
        out.append(ScaleVerdict(i, 1 << i, lhs, rhs))
    return out


def lemma1_aggregate(inst: Instance, delta: int) -> tuple[float, float]:
    """Average of the per-scale bounds at the auto rate, next to its
    telescoped closed form: the profile sums collapse to
    (sum of the top delta L values - sum of the bottom delta) / (k-delta+1)
    plus sqrt(ln m / 2^(delta+1))."""
    verdicts = check_lemma1(inst, delta, "auto")
    mean_rhs = sum(v.rhs for v in verdicts) / len(verdicts)
    prof = scale_profile(inst).values
    k = inst.k
    tele = (prof[k - delta + 1 :].sum() - prof[:delta].sum()) / (k - delta + 1)
    tele += math.sqrt(math.log(inst.m) / (1 << (delta + 1)))
    return mean_rhs, tele


def _block_means(inst: Instance, w: int, t0: int, steps: int) -> np.ndarray:
    return inst.losses[:, t0 : t0 + steps * w].reshape(inst.m, steps, w).mean(axis=2)


def check_experts_bound(
    inst: Instance, w: int, t0: int, delta: int, eta: float
) -> tuple[float, float, float]:
    """Run exponential weights over the 2^delta per-block-average steps
    starting at t0 and compare with the best fixed model.

    Returns (ew_avg_loss, min_avg_loss, bound) where bound folds the
    ln m/(eta T) + eta/8 slack onto the minimum.  The first never exceeds
    the last by more than 1e-9; a violation raises AssertionError since
    it can only mean the simulation itself is broken.
    """
    if w < 1 or delta < 0 or not eta > 0:
        raise ValueError(f"need w >= 1, delta >= 0, eta > 0; got w={w}, delta={delta}, eta={eta}")
    T = 1 << delta
    big = T * w
    if t0 % big != 0:
        raise ValueError(f"t0={t0} is not aligned to the superblock length {big}")
    if t0 + big > 1 << inst.k:
        raise ValueError(f"superblock [{t0}, {t0 + big}) exceeds the first 2^k={1 << inst.k} steps")
    steps = _block_means(inst, w, t0, T)  # (m, T)
    cum = np.zeros(inst.m)
    ew = 0.0
    for s in range(T):
        dist = _softmax_cols(cum[:, None], eta)[:, 0]
        ew += float(dist @ steps[:, s])
        cum += steps[:, s]
    ew /= T
    best = float(cum.min()) / T
    bound = best + math.log(inst.m) / (eta * T) + eta / 8
    if ew > bound + 1e-9:
        raise AssertionError(
            f"exponential weights exceeded its regret bound: {ew} > {bound} "
            f"at (w={w}, t0={t0}, delta={delta}, eta={eta})"
        )
    return ew, best, bound


def experts_sweep(inst: Instance, delta: int, eta: float) -> list[tuple[int, int, float, float, float]]:
    """check_experts_bound over every aligned (w, t0) pair; rows are
    (w, t0, ew_avg_loss, min_avg_loss, bound)."""
    k = inst.k
    out = []
    for i in range(0, k - delta + 1):
        w = 1 << i
        big = (1 << delta) * w
        for t0 in range(0, 1 << k, big):
            out.append((w, t0, *check_experts_bound(inst, w, t0, delta, eta)))
    return out


def check_theorem5(seq, f: ConvexSpec) -> tuple[float, float]:
    """Exact expected prediction loss of mean_predict on seq next to the
    bound (4 c1 + 8) (f_sup - f(mean)) / k.  Sequence length must be a
    power of two."""
    pts = as_points(seq)
    n = pts.shape[0]
    if n < 2 or n & (n - 1):
        raise ValueError(f"need length a power of two (>= 2), got {n}")
    exact = exact_risk("mean_predict", pts, f).total
    mu = pts.mean(axis=0)
    if not f.in_domain(mu):
        raise ValueError("sequence average falls outside the domain")
    bound = (4.0 * f.c1 + 8.0) * (f.certified_sup() - float(batch_value(f, mu))) / floor_log2(n)
    return exact, bound


# ---------------------------------------------------------------------------
# Monte Carlo


def _sample_loss(alg: str, inst, params, rng: np.random.Generator) -> float:
    from . import algorithms as A

    if alg == "hybrid_ew":
        p = params if params is not None else HybridParams()
        return excess_risk(inst, A.hybrid_ew(inst, p, rng))
    if alg == "bounded_recall_ew":
        p = params if params is not None else BoundedRecallParams()
        return excess_risk(inst, A.bounded_recall_ew(inst, p, rng))
    if alg == "erm":
        return excess_risk(inst, A.erm(inst, rng))
    if alg == "realizable_learner":
        return excess_risk(inst, A.realizable_learner(inst, rng))
    if alg == "mean_predict":
        if not isinstance(params, ConvexSpec):
            raise ValueError("mean_predict needs a ConvexSpec as params")
        # a loss matrix stands in for a sequence through its first row
        seq = inst.losses[0] if isinstance(inst, Instance) else inst
        pts = as_points(seq)
        pred = mean_predict(pts, rng)
        win = pred.window
        actual = pts[win.t : win.t + win.w].mean(axis=0)
        return f_loss(params, pred.estimate, actual)
    raise ValueError(f"unknown algorithm {alg!r}; expected one of {ALGORITHMS}")


def monte_carlo_risk(alg: str, inst_or_generator, trials: int, seed: int, params=None) -> RiskReport:
    """Mean excess risk over `trials` independent runs, each with its own
    derived rng; a GeneratorSpec input is rebuilt fresh per trial (its
    seed replaced by a per-trial derivation), a fixed instance is reused.
    Trial t's result depends only on (seed, t), not on execution order.
    """
    if trials < 1:
        raise ValueError(f"need trials >= 1, got {trials}")
    from .adversaries import GeneratorSpec

    losses = np.empty(trials)
    for t in range(trials):
        if isinstance(inst_or_generator, GeneratorSpec):
            inst = inst_or_generator.with_seed(derive_seed(seed, "inst", t)).build()
        else:
            inst = inst_or_generator
        losses[t] = _sample_loss(alg, inst, params, derive_rng(seed, "trial", t))
    mean = float(losses.mean())
    stderr = float(losses.std(ddof=1) / math.sqrt(trials)) if trials > 1 else None
    return RiskReport(mean, stderr, trials, seed)
