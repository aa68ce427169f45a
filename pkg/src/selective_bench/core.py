"""Loss-matrix instances, prediction windows, and scale profiles.

An Instance is an m x n matrix of per-model, per-step losses in [0, 1]:
rows are models, columns are time steps.  A learner's output is a
Decision: a prediction window (start step t, length w) plus an explicit
probability distribution over models, kept as a distribution rather
than a sample so that expectations over the model draw are exact.

All window arithmetic lives here, together with the per-timescale
learnability profile (L_0, ..., L_k): L_i is the average, over the
aligned length-2^i blocks of the first 2^k steps, of the best single
model's mean loss on the block.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "Instance",
    "WindowChoice",
    "Decision",
    "ScaleProfile",
    "floor_log2",
    "window_avg_loss",
    "excess_risk",
    "scale_profile",
    "write_instance",
    "read_instance",
]

_FILE_MAGIC = "selective-bench instance v1"


def floor_log2(n: int) -> int:
    """Largest k with 2^k <= n.  Requires n >= 1."""
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    return int(n).bit_length() - 1


@dataclass(frozen=True, eq=False)
class Instance:
    """Immutable m x n loss matrix with entries in [0, 1].

    Parameters
    ----------
    losses : array_like, shape (m, n)
        losses[i, j] is model i's loss on step j (0-based steps).
    origin : (tag, seed) pair, optional
        Generator tag plus seed; regenerating from the same pair must
        reproduce the matrix bit for bit.
    """

    losses: np.ndarray
    origin: tuple[str, int] | None = None

    def __post_init__(self) -> None:
        a = np.array(self.losses, dtype=np.float64, copy=True, order="C")
        if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
            raise ValueError(f"losses must be a non-empty 2-D matrix, got shape {a.shape}")
        if not np.isfinite(a).all():
            raise ValueError("losses must be finite")
        if a.min() < 0.0 or a.max() > 1.0:
            raise ValueError("losses must lie in [0, 1]")
        a.setflags(write=False)
        object.__setattr__(self, "losses", a)

    @property
    def m(self) -> int:
        return self.losses.shape[0]

    @property
    def n(self) -> int:
        return self.losses.shape[1]

    @property
    def k(self) -> int:
        """Timescale count: floor(log2 n).  Algorithms only touch steps < 2^k."""
        return floor_log2(self.n)


@dataclass(frozen=True)
class WindowChoice:
    """Prediction window: steps t, t+1, ..., t+w-1 (0-based)."""

    t: int
    w: int

    def __post_init__(self) -> None:
        if self.t < 0:
            raise ValueError(f"window start must be >= 0, got {self.t}")
        if self.w < 1:
            raise ValueError(f"window length must be >= 1, got {self.w}")

    def check_bounds(self, n: int) -> None:
        if self.t + self.w > n:
            raise ValueError(
                f"window (t={self.t}, w={self.w}) exceeds sequence length {n}"
            )


@dataclass(frozen=True, eq=False)
class Decision:
    """A prediction window plus an explicit model distribution."""

    window: WindowChoice
    model_dist: np.ndarray

    def __post_init__(self) -> None:
        p = np.array(self.model_dist, dtype=np.float64, copy=True)
        if p.ndim != 1 or p.size < 1:
            raise ValueError("model_dist must be a non-empty vector")
        if p.min() < 0.0:
            raise ValueError("model_dist entries must be >= 0")
        if abs(p.sum() - 1.0) > 1e-9:
            raise ValueError(f"model_dist must sum to 1 within 1e-9, got {p.sum()!r}")
        p.setflags(write=False)
        object.__setattr__(self, "model_dist", p)


@dataclass(frozen=True, eq=False)
class ScaleProfile:
    """Learnability averages (L_0, ..., L_k) over the first 2^k steps."""

    k: int
    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.array(self.values, dtype=np.float64, copy=True)
        if v.shape != (self.k + 1,):
            raise ValueError(f"expected {self.k + 1} values, got shape {v.shape}")
        if v.min() < 0.0 or v.max() > 1.0:
            raise ValueError("profile values must lie in [0, 1]")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)


def window_avg_loss(inst: Instance, model: int, win: WindowChoice) -> float:
    """Mean loss of one model over the window's steps."""
    if not 0 <= model < inst.m:
        raise ValueError(f"model index {model} out of range for m={inst.m}")
    win.check_bounds(inst.n)
    return float(inst.losses[model, win.t : win.t + win.w].mean())


def excess_risk(inst: Instance, dist: Decision) -> float:
    """Expected window loss under the decision's model distribution,
    minus the best single model's loss on the same window.  Always >= 0."""
    win = dist.window
    win.check_bounds(inst.n)
    if dist.model_dist.size != inst.m:
        raise ValueError(
            f"model_dist has {dist.model_dist.size} entries for m={inst.m} models"
        )
    avgs = inst.losses[:, win.t : win.t + win.w].mean(axis=1)  # (m,)
    # p . a >= min(a) holds exactly for any distribution p; only rounding
    # can push the difference below zero, so clamp it away
    return max(float(dist.model_dist @ avgs - avgs.min()), 0.0)


def scale_profile(inst: Instance) -> ScaleProfile:
    """L_i for i = 0..k: mean over aligned 2^i-blocks of the per-block
    best model's average loss.  Steps past 2^k are ignored."""
    k = inst.k
    head = inst.losses[:, : 1 << k]
    values = np.empty(k + 1)
    for i in range(k + 1):
        blocks = head.reshape(inst.m, 1 << (k - i), 1 << i).mean(axis=2)  # (m, nblk)
        values[i] = blocks.min(axis=0).mean()
    return ScaleProfile(k, values)


def _fmt(x: float) -> str:
    return format(x, ".17g")


def write_instance(inst: Instance, path: str | Path) -> None:
    """Write the text format: 3 header lines, then one line per step
    holding the m losses of that step with 17 significant digits."""
    lines = [_FILE_MAGIC, f"m {inst.m} n {inst.n}"]
    if inst.origin is None:
        lines.append("origin none")
    else:
        tag, seed = inst.origin
        lines.append(f"origin {tag} seed {seed}")
    cols = inst.losses.T  # (n, m): one output line per step
    lines.extend(" ".join(_fmt(v) for v in row) for row in cols)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_instance(path: str | Path) -> Instance:
    """Inverse of `write_instance`; round-trips bit-exactly."""
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    if len(lines) < 3 or lines[0] != _FILE_MAGIC:
        raise ValueError(f"{path}: not a selective-bench instance file")
    hdr = lines[1].split()
    if len(hdr) != 4 or hdr[0] != "m" or hdr[2] != "n":
        raise ValueError(f"{path}: malformed size header {lines[1]!r}")
    m, n = int(hdr[1]), int(hdr[3])
    origin_parts = lines[2].split()
    if origin_parts[:2] == ["origin", "none"]:
        origin = None
    elif len(origin_parts) == 4 and origin_parts[0] == "origin" and origin_parts[2] == "seed":
        origin = (origin_parts[1], int(origin_parts[3]))
    else:
        raise ValueError(f"{path}: malformed origin header {lines[2]!r}")
    data = lines[3 : 3 + n]
    if len(data) != n:
        raise ValueError(f"{path}: expected {n} data lines, found {len(data)}")
    rows = [[float(tok) for tok in line.split()] for line in data]
    arr = np.asarray(rows, dtype=np.float64)
    if arr.shape != (n, m):
        raise ValueError(f"{path}: data shape {arr.shape} does not match header ({n}, {m})")
    return Instance(arr.T, origin=origin)
