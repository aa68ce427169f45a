"""Selective learners.

Every learner samples a prediction window from its own window law and
returns a Decision whose model distribution is explicit, so downstream
code can either sample a model from it or integrate it out exactly.

The samplers split into two layers: `_sample_*` consumes the rng and
picks the discrete randomness atom, and `*_decision_at` deterministically
maps an atom to a Decision.  The exact-expectation oracle enumerates the
same atoms, which pins the two code paths to one definition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Decision, Instance, WindowChoice, excess_risk, floor_log2

__all__ = [
    "HybridParams",
    "BoundedRecallParams",
    "RealizabilityError",
    "auto_delta",
    "auto_eta",
    "auto_alpha",
    "hybrid_ew",
    "bounded_recall_ew",
    "erm",
    "realizable_learner",
    "decompose_risk",
]


def auto_eta(m: int, delta: int) -> float:
    """Learning rate sqrt(8 ln m / 2^delta) balancing the two slack terms
    of the per-timescale bound (their sum becomes sqrt(ln m / 2^(delta+1)))."""
    return math.sqrt(8.0 * math.log(max(m, 1)) / (1 << delta))


def auto_alpha(n: int, m: int, c: float = 1.0) -> float:
    """Weight scale c * sqrt(log2(n) * ln m) for the bounded-recall learner."""
    return c * math.sqrt(math.log2(n) * math.log(max(m, 1)))


def auto_delta(n: int, m: int) -> int:
    """Block-count exponent minimizing the worst-case aggregate bound
    delta/(k-delta+1) + sqrt(ln m / 2^(delta+1)) over delta in {1..k}."""
    k = floor_log2(n)
    if k < 1:
        raise ValueError(f"need n >= 2, got n={n}")
    lm = math.log(max(m, 1))
    best, best_val = 1, math.inf
    for d in range(1, k + 1):
        val = d / (k - d + 1) + math.sqrt(lm / (1 << (d + 1)))
        if val < best_val:
            best, best_val = d, val
    return best


@dataclass(frozen=True)
class HybridParams:
    """Knobs for `hybrid_ew`: block-count exponent delta and weight rate eta.

    Either field may be the string "auto": delta then minimizes the
    worst-case aggregate bound and eta = sqrt(8 ln m / 2^delta).
    """

    delta: int | str = "auto"
    eta: float | str = "auto"

    def __post_init__(self) -> None:
        if isinstance(self.delta, str):
            if self.delta != "auto":
                raise ValueError(f"delta must be an int or 'auto', got {self.delta!r}")
        elif self.delta < 1:
            raise ValueError(f"delta must be >= 1, got {self.delta}")
        if isinstance(self.eta, str):
            if self.eta != "auto":
                raise ValueError(f"eta must be a positive real or 'auto', got {self.eta!r}")
        elif not self.eta > 0:
            raise ValueError(f"eta must be > 0, got {self.eta}")

    def resolve(self, n: int, m: int) -> tuple[int, float]:
        """Concrete (delta, eta) for an m x n instance."""
        k = floor_log2(n)
        delta = auto_delta(n, m) if self.delta == "auto" else int(self.delta)
        if delta > k:
            raise ValueError(f"delta={delta} exceeds floor(log2 n)={k} for n={n}")
        eta = auto_eta(m, delta) if self.eta == "auto" else float(self.eta)
        return delta, eta


@dataclass(frozen=True)
class BoundedRecallParams:
    """Weight scale alpha for `bounded_recall_ew`.

    alpha = 0 plays uniform; alpha = inf is the exponential-weights limit
    (uniform over exact argmin ties).  "auto" = c * sqrt(log2 n * ln m).
    """

    alpha: float | str = "auto"
    c: float = 1.0

    def __post_init__(self) -> None:
        if isinstance(self.alpha, str):
            if self.alpha != "auto":
                raise ValueError(f"alpha must be a real >= 0 or 'auto', got {self.alpha!r}")
        elif math.isnan(self.alpha) or self.alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if not self.c > 0:
            raise ValueError(f"c must be > 0, got {self.c}")

    def resolve(self, n: int, m: int) -> float:
        return auto_alpha(n, m, self.c) if self.alpha == "auto" else float(self.alpha)


class RealizabilityError(ValueError):
    """No model has all-zero losses.  `first_nonzero_step[i]` is the first
    step (0-based) on which model i incurs a positive loss."""

    def __init__(self, first_nonzero_step: np.ndarray):
        self.first_nonzero_step = first_nonzero_step
        super().__init__(
            "instance is not realizable: every model has a positive loss "
            f"(first nonzero step per model: {first_nonzero_step.tolist()})"
        )


def _weights_dist(u: np.ndarray, scale: float) -> np.ndarray:
    """Distribution proportional to exp(-scale * u), stabilized by
    subtracting the min.  scale=inf degenerates to uniform over argmins."""
    u = np.asarray(u, dtype=np.float64)
    if not math.isfinite(scale):
        mask = u == u.min()
        return mask / mask.sum()
    w = np.exp(-scale * (u - u.min()))
    return w / w.sum()


# ---------------------------------------------------------------------------
# hybrid exponential weights


def _sample_hybrid_atom(rng: np.random.Generator, k: int, delta: int) -> tuple[int, int, int]:
    """Draw (w, i1, i2): window length w = 2^i with i uniform on
    {0..k-delta}, superblock index i1 in [2^k/(2^delta w)], step i2 in [2^delta]."""
    i = int(rng.integers(0, k - delta + 1))
    w = 1 << i
    n1 = 1 << (k - delta - i)
    i1 = int(rng.integers(1, n1 + 1))
    i2 = int(rng.integers(1, (1 << delta) + 1))
    return w, i1, i2


def hybrid_decision_at(
    inst: Instance, delta: int, eta: float, w: int, i1: int, i2: int
) -> Decision:
    """Decision at one randomness atom of the hybrid learner.

    The superblock [t0, t0 + 2^delta w) is split into 2^delta blocks of
    length w; the learner has watched blocks 1..i2-1 and predicts block i2.
    u_i is model i's cumulative loss over the watched blocks divided by w
    (an empty watch, i2 = 1, gives u = 0 and a uniform distribution).
    """
    big = (1 << delta) * w
    t0 = (i1 - 1) * big
    t = t0 + (i2 - 1) * w
    u = inst.losses[:, t0:t].sum(axis=1) / w  # (m,)
    return Decision(WindowChoice(t, w), _weights_dist(u, eta))


def hybrid_ew(inst: Instance, params: HybridParams, rng: np.random.Generator) -> Decision:
    """Exponential weights simulated over 2^delta blocks at a random timescale.

    Samples w uniform over {2^0, ..., 2^(k-delta)} (so, conditioned on w,
    the window start is uniform over {0, w, 2w, ..., 2^k - w}), then plays
    exponential weights on per-block average losses within the superblock.
    """
    delta, eta = params.resolve(inst.n, inst.m)
    w, i1, i2 = _sample_hybrid_atom(rng, inst.k, delta)
    return hybrid_decision_at(inst, delta, eta, w, i1, i2)


# ---------------------------------------------------------------------------
# bounded-recall exponential weights, ERM


def _sample_recall_atom(rng: np.random.Generator, k: int) -> tuple[int, int]:
    """Draw (k', t): scale k' uniform on {1..k}, start t uniform over the
    aligned multiples {0, 2^k', ..., 2^k - 2^k'}."""
    kp = int(rng.integers(1, k + 1))
    j = int(rng.integers(0, 1 << (k - kp)))
    return kp, j << kp


def recall_observation(inst: Instance, kp: int, t: int) -> np.ndarray:
    """Per-model mean loss over the observation half-block (t, t + 2^(k'-1)]."""
    half = 1 << (kp - 1)
    return inst.losses[:, t : t + half].mean(axis=1)


def recall_window(kp: int, t: int) -> WindowChoice:
    half = 1 << (kp - 1)
    return WindowChoice(t + half, half)


def bounded_recall_decision_at(inst: Instance, alpha: float, kp: int, t: int) -> Decision:
    u = recall_observation(inst, kp, t)
    return Decision(recall_window(kp, t), _weights_dist(u, alpha))


def bounded_recall_ew(
    inst: Instance, params: BoundedRecallParams, rng: np.random.Generator
) -> Decision:
    """Pick a random half-block, weight models by exp(-alpha * mean loss)
    on it, and predict the adjacent half-block of the same length.

    The decision depends on the losses in the observation half only:
    editing any entry outside (t, t + 2^(k'-1)] cannot change it.
    """
    if inst.n < 2:
        raise ValueError(f"need n >= 2, got n={inst.n}")
    alpha = params.resolve(inst.n, inst.m)
    kp, t = _sample_recall_atom(rng, inst.k)
    return bounded_recall_decision_at(inst, alpha, kp, t)


def erm_decision_at(inst: Instance, kp: int, t: int) -> Decision:
    u = recall_observation(inst, kp, t)
    dist = np.zeros(inst.m)
    dist[int(np.argmin(u))] = 1.0  # argmin takes the lowest index on ties
    return Decision(recall_window(kp, t), dist)


def erm(inst: Instance, rng: np.random.Generator) -> Decision:
    """Same window law as `bounded_recall_ew`, but a point mass on the
    model with the best observed mean (lowest index on ties)."""
    if inst.n < 2:
        raise ValueError(f"need n >= 2, got n={inst.n}")
    kp, t = _sample_recall_atom(rng, inst.k)
    return erm_decision_at(inst, kp, t)


# ---------------------------------------------------------------------------
# realizable-case learner


def consistent_mask(inst: Instance, t: int) -> np.ndarray:
    """Boolean mask of models with zero loss on every step < t."""
    if t == 0:
        return np.ones(inst.m, dtype=bool)
    return ~(inst.losses[:, :t] > 0).any(axis=1)


def realizable_decision_at(inst: Instance, t: int) -> Decision:
    mask = consistent_mask(inst, t)
    return Decision(WindowChoice(t, 1), mask / mask.sum())


def realizable_learner(inst: Instance, rng: np.random.Generator) -> Decision:
    """Watch a uniformly random prefix, then predict one step with a
    uniform choice among the models that were perfect so far.

    Requires a model with all-zero losses; otherwise raises
    RealizabilityError carrying each model's first nonzero step.
    """
    nonzero = inst.losses > 0
    if nonzero.any(axis=1).all():
        first = np.argmax(nonzero, axis=1)
        raise RealizabilityError(first)
    t = int(rng.integers(0, inst.n))
    return realizable_decision_at(inst, t)


# ---------------------------------------------------------------------------
# diagnostics


def decompose_risk(
    inst: Instance, dec: Decision, train_window: WindowChoice
) -> tuple[float, float, float]:
    """Split the excess risk of a decision into three parts.

    With u/v the per-model mean losses on the train/prediction windows and
    P the decision's model distribution:

        term1 = sum_i P(i) (v_i - u_i)     drift between the two windows
        term2 = sum_i P(i) (u_i - min u)   optimization slack of P on u
        term3 = min u - min v              comparator shift

    The three sum to excess_risk(inst, dec) within 1e-9.  Requires the
    train window to immediately precede the prediction window with the
    same length.
    """
    win = dec.window
    if train_window.w != win.w or train_window.t + train_window.w != win.t:
        raise ValueError(
            f"train window (t={train_window.t}, w={train_window.w}) does not "
            f"immediately precede prediction window (t={win.t}, w={win.w})"
        )
    train_window.check_bounds(inst.n)
    win.check_bounds(inst.n)
    u = inst.losses[:, train_window.t : train_window.t + train_window.w].mean(axis=1)
    v = inst.losses[:, win.t : win.t + win.w].mean(axis=1)
    p = dec.model_dist
    term1 = float(p @ (v - u))
    term2 = float(p @ (u - u.min()))
    term3 = float(u.min() - v.min())
    return term1, term2, term3


def sample_model(dec: Decision, rng: np.random.Generator) -> int:
    """Draw a concrete model index from a decision's distribution."""
    return int(rng.choice(dec.model_dist.size, p=dec.model_dist))


def realized_excess_risk(inst: Instance, dec: Decision) -> float:
    """Excess risk of a decision with the model draw integrated out."""
    return excess_risk(inst, dec)
