"""Bregman losses, mean prediction, and numeric certification.

A ConvexSpec packages a convex function with its domain box, gradient,
a certified range bound c0, and a certified third-derivative ratio c1
(the constant in |g'''(t)| <= c1 * g''(t) along line restrictions).
The built-ins (`quadratic`, `log_sum_exp`) carry analytic constants;
`certify_self_concordance` re-derives c1 numerically for any spec.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import WindowChoice, floor_log2

__all__ = [
    "ConvexSpec",
    "MeanPrediction",
    "quadratic",
    "log_sum_exp",
    "bregman",
    "f_loss",
    "mean_predict",
    "certify_self_concordance",
    "lemma4_check",
]

_BOX_TOL = 1e-12


@dataclass(frozen=True)
class ConvexSpec:
    """A convex function on a box, with certified constants.

    value/gradient accept a single point of shape (dim,); the built-ins
    also accept stacked arrays of shape (..., dim), which `batch_value`
    and `batch_gradient` exploit and fall back from otherwise.

    c0 bounds sup f - inf f on the domain.  c1 bounds |g'''|/g'' along
    every segment in the domain.  f_sup, when set, is the analytic
    domain supremum; otherwise certified_sup() estimates it as
    c0 + (sampled infimum).
    """

    dim: int
    value: Callable[[np.ndarray], float | np.ndarray]
    gradient: Callable[[np.ndarray], np.ndarray]
    lo: np.ndarray
    hi: np.ndarray
    c0: float
    c1: float
    tag: str = "custom"
    f_sup: float | None = None
    member: Callable[[np.ndarray], bool] | None = None

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        lo = np.broadcast_to(np.asarray(self.lo, dtype=np.float64), (self.dim,)).copy()
        hi = np.broadcast_to(np.asarray(self.hi, dtype=np.float64), (self.dim,)).copy()
        if not (np.isfinite(lo).all() and np.isfinite(hi).all() and (lo < hi).all()):
            raise ValueError("domain box must be finite with lo < hi")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        if not (self.c0 >= 0 and self.c1 >= 0):
            raise ValueError(f"c0, c1 must be >= 0, got c0={self.c0}, c1={self.c1}")

    def in_domain(self, x: np.ndarray) -> bool:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.dim,) or not np.isfinite(x).all():
            return False
        if ((x < self.lo - _BOX_TOL) | (x > self.hi + _BOX_TOL)).any():
            return False
        return self.member(x) if self.member is not None else True

    def certified_sup(self, rng: np.random.Generator | None = None, samples: int = 4096) -> float:
        if self.f_sup is not None:
            return self.f_sup
        rng = np.random.default_rng(0) if rng is None else rng
        pts = rng.uniform(self.lo, self.hi, size=(samples, self.dim))
        return self.c0 + float(batch_value(self, pts).min())

    def validate(self, rng: np.random.Generator, trials: int = 200) -> None:
        """Check gradient against central finite differences at random
        interior points (relative error < 1e-5 at step 1e-6) and that c0
        covers the observed value range.  Raises ValueError on failure."""
        step = 1e-6
        span = self.hi - self.lo
        pts = rng.uniform(self.lo + 0.01 * span, self.hi - 0.01 * span, size=(trials, self.dim))
        vals = batch_value(self, pts)
        if float(vals.max() - vals.min()) > self.c0 + 1e-9:
            raise ValueError(
                f"{self.tag}: observed range {float(vals.max() - vals.min())} exceeds c0={self.c0}"
            )
        eye = np.eye(self.dim)
        for x in pts:
            g = np.asarray(self.gradient(x), dtype=np.float64)
            fd = (batch_value(self, x + step * eye) - batch_value(self, x - step * eye)) / (2 * step)
            denom = max(float(np.abs(g).max()), 1.0)
            rel = float(np.abs(fd - g).max()) / denom
            if rel >= 1e-5:
                raise ValueError(f"{self.tag}: gradient mismatch {rel:.3e} at x={x.tolist()}")


def batch_value(f: ConvexSpec, x: np.ndarray) -> np.ndarray:
    """f.value over stacked points of shape (..., dim), looping if the
    callable only handles single points."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape == (f.dim,):
        return np.float64(f.value(x))
    try:
        out = np.asarray(f.value(x), dtype=np.float64)
        if out.shape == x.shape[:-1]:
            return out
    except Exception:
        pass
    flat = x.reshape(-1, f.dim)
    return np.array([f.value(p) for p in flat], dtype=np.float64).reshape(x.shape[:-1])


def batch_gradient(f: ConvexSpec, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape == (f.dim,):
        return np.asarray(f.gradient(x), dtype=np.float64)
    try:
        out = np.asarray(f.gradient(x), dtype=np.float64)
        if out.shape == x.shape:
            return out
    except Exception:
        pass
    flat = x.reshape(-1, f.dim)
    return np.stack([np.asarray(f.gradient(p), dtype=np.float64) for p in flat]).reshape(x.shape)


# ---------------------------------------------------------------------------
# built-ins


def quadratic(dim: int = 1) -> ConvexSpec:
    """f(x) = 0.5 ||x||^2 on [0,1]^dim.  c1 = 0; its symmetrized Bregman
    loss is the squared distance."""

    def value(x):
        x = np.asarray(x, dtype=np.float64)
        return 0.5 * (x * x).sum(axis=-1)

    def gradient(x):
        return np.asarray(x, dtype=np.float64)

    return ConvexSpec(
        dim=dim,
        value=value,
        gradient=gradient,
        lo=np.zeros(dim),
        hi=np.ones(dim),
        c0=dim / 2,
        c1=0.0,
        tag="quadratic",
        f_sup=dim / 2,
    )


def log_sum_exp(alpha: float, dim: int) -> ConvexSpec:
    """f(x) = ln sum_i exp(-alpha x_i) on [0,1]^dim.

    Range on the box is alpha (from ln dim down to ln dim - alpha) and
    the restriction ratio |g'''|/g'' is at most 4 alpha.  dim = 1 makes
    f affine, so every Bregman divergence degenerates to 0.
    """
    if not alpha > 0:
        raise ValueError(f"alpha must be > 0, got {alpha}")

    def value(x):
        z = -alpha * np.asarray(x, dtype=np.float64)
        zmax = z.max(axis=-1, keepdims=True)
        out = np.log(np.exp(z - zmax).sum(axis=-1)) + zmax[..., 0]
        return out

    def gradient(x):
        z = -alpha * np.asarray(x, dtype=np.float64)
        z -= z.max(axis=-1, keepdims=True)
        p = np.exp(z)
        p /= p.sum(axis=-1, keepdims=True)
        return -alpha * p

    return ConvexSpec(
        dim=dim,
        value=value,
        gradient=gradient,
        lo=np.zeros(dim),
        hi=np.ones(dim),
        c0=alpha,
        c1=4.0 * alpha,
        tag=f"log_sum_exp({alpha:g})",
        f_sup=math.log(dim),
    )


def lse_restriction_derivs(
    alpha: float, x: np.ndarray, direction: np.ndarray, ts: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form g'', g''' for g(t) = log_sum_exp(alpha) at x + t*direction.

    With p the softmax of -alpha*(x + t d), the derivatives are cumulants
    of d under p: g'' = alpha^2 Var_p(d), g''' = -alpha^3 E_p[(d - E_p d)^3].
    """
    x = np.asarray(x, dtype=np.float64)
    d = np.asarray(direction, dtype=np.float64)
    ts = np.asarray(ts, dtype=np.float64)
    pts = x[None, :] + ts[:, None] * d[None, :]  # (T, dim)
    z = -alpha * pts
    z -= z.max(axis=-1, keepdims=True)
    p = np.exp(z)
    p /= p.sum(axis=-1, keepdims=True)
    mu = (p * d[None, :]).sum(axis=-1, keepdims=True)
    cen = d[None, :] - mu
    m2 = (p * cen**2).sum(axis=-1)
    m3 = (p * cen**3).sum(axis=-1)
    return alpha**2 * m2, -(alpha**3) * m3


# ---------------------------------------------------------------------------
# losses


def _require_domain(f: ConvexSpec, name: str, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if not f.in_domain(x):
        raise ValueError(f"{name}={x.tolist()} is outside the domain of {f.tag}")
    return x


def bregman(f: ConvexSpec, x: np.ndarray, y: np.ndarray) -> float:
    """Divergence f(x) - f(y) - <grad f(y), x - y>.  Nonnegative for
    convex f up to 1e-12 of rounding."""
    x = _require_domain(f, "x", x)
    y = _require_domain(f, "y", y)
    val = float(batch_value(f, x)) - float(batch_value(f, y))
    val -= float(np.asarray(f.gradient(y), dtype=np.float64) @ (x - y))
    return val


def f_loss(f: ConvexSpec, xhat: np.ndarray, xbar: np.ndarray) -> float:
    """Symmetrized divergence bregman(xhat, xbar) + bregman(xbar, xhat)."""
    return bregman(f, xhat, xbar) + bregman(f, xbar, xhat)


# ---------------------------------------------------------------------------
# mean prediction


@dataclass(frozen=True)
class MeanPrediction:
    """A window to predict and the point estimate for its average.
    The estimate is an average of observed points, so it stays in any
    convex domain containing the sequence."""

    window: WindowChoice
    estimate: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        est = np.array(self.estimate, dtype=np.float64).reshape(-1)
        est.setflags(write=False)
        object.__setattr__(self, "estimate", est)


def as_points(seq: np.ndarray) -> np.ndarray:
    """Normalize a sequence to shape (n, d); scalars become d = 1 rows."""
    arr = np.asarray(seq, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise ValueError(f"need a nonempty (n,) or (n, d) sequence, got shape {arr.shape}")
    return arr


def mean_predict(seq: np.ndarray, rng: np.random.Generator) -> MeanPrediction:
    """Estimate a random future half-block average by the adjacent past one.

    Draws a scale k' uniform on {1..k} with k = floor(log2 n), a start t
    uniform over multiples of 2^k', averages seq[t : t + 2^(k'-1)], and
    predicts the window of the following 2^(k'-1) steps.  n = 2 forces
    the single atom (k'=1, t=0): predict step 2 by the value of step 1.
    """
    pts = as_points(seq)
    n = pts.shape[0]
    if n < 2:
        raise ValueError(f"need at least 2 points, got {n}")
    kp, t = _sample_scale_start(rng, floor_log2(n))
    half = 1 << (kp - 1)
    return MeanPrediction(WindowChoice(t + half, half), pts[t : t + half].mean(axis=0))


def _sample_scale_start(rng: np.random.Generator, k: int) -> tuple[int, int]:
    kp = int(rng.integers(1, k + 1))
    j = int(rng.integers(0, 1 << (k - kp)))
    return kp, j << kp


# ---------------------------------------------------------------------------
# certification

# Central differences on g leave rounding residue of order eps*|g|/h^2
# (second) and eps*|g|/h^3 (third).  Estimates below those floors carry
# no signal and are treated as exact zeros, which is what makes affine
# and quadratic functions certify to a ratio of 0.0 rather than noise.
_NOISE_C = 64.0


def certify_self_concordance(
    f: ConvexSpec,
    trials: int = 1000,
    grid: int = 50,
    rng: np.random.Generator | None = None,
    h: float = 1e-4,
    hessian_floor: float = 1e-8,
) -> float:
    """Max observed |g'''(t)| / g''(t) over random segments in the domain.

    g(t) = f(x + t (y - x)) for segment endpoints x, y sampled inside the
    box (inset by 2h per unit span so the 5-point stencil stays inside);
    derivatives by central differences at `grid` points t in [0, 1].
    Points with g'' below `hessian_floor` (or below rounding noise) are
    skipped; if every point is skipped the ratio is 0 by convention.
    Non-finite stencil values raise FloatingPointError naming the spot.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    span = f.hi - f.lo
    inset = 2.0 * h * span
    ts = np.linspace(0.0, 1.0, grid)
    worst = 0.0
    for trial in range(trials):
        x = rng.uniform(f.lo + inset, f.hi - inset)
        y = rng.uniform(f.lo + inset, f.hi - inset)
        g2, g3 = fd_restriction_derivs(f, x, y - x, ts, h, context=f"segment {trial}")
        keep = g2 > hessian_floor  # sub-noise g2 arrive as exact zeros
        if keep.any():
            worst = max(worst, float((np.abs(g3[keep]) / g2[keep]).max()))
    return worst


def fd_restriction_derivs(
    f: ConvexSpec,
    x: np.ndarray,
    direction: np.ndarray,
    ts: np.ndarray,
    h: float,
    context: str = "",
) -> tuple[np.ndarray, np.ndarray]:
    """Central-difference g'', g''' of g(t) = f(x + t*direction) at `ts`,
    on a 5-point stencil of spacing h.  Estimates drowned by rounding
    noise are returned as exact zeros (see _NOISE_C note above)."""
    ts = np.asarray(ts, dtype=np.float64)
    offsets = np.array([-2.0 * h, -h, 0.0, h, 2.0 * h])
    tgrid = ts[None, :] + offsets[:, None]  # (5, T)
    pts = x[None, None, :] + tgrid[:, :, None] * np.asarray(direction)[None, None, :]
    g = batch_value(f, pts)  # (5, T)
    if not np.isfinite(g).all():
        i, j = np.argwhere(~np.isfinite(g))[0]
        where = f" on {context}" if context else ""
        raise FloatingPointError(
            f"non-finite value for {f.tag}{where} at t={tgrid[i, j]:.6g}"
        )
    fscale = max(float(np.abs(g).max()), 1.0)
    noise3 = _NOISE_C * np.finfo(np.float64).eps * fscale / h**3
    g2 = (g[3] - 2.0 * g[2] + g[1]) / (h * h)
    g3 = (g[4] - 2.0 * g[3] + 2.0 * g[1] - g[0]) / (2.0 * h**3)
    g2 = np.where(np.abs(g2) < noise3 * h, 0.0, g2)
    g3 = np.where(np.abs(g3) < noise3, 0.0, g3)
    return g2, g3


def lemma4_check(f: ConvexSpec, u: np.ndarray, v: np.ndarray) -> tuple[float, float]:
    """Compare the symmetrized divergence of (u, v) against the midpoint
    gap scaled by (2 c1 + 4).  Returns (lhs, rhs); lhs <= rhs + 1e-9 for
    any spec whose constants are honest, with equality for quadratics."""
    u = _require_domain(f, "u", u)
    v = _require_domain(f, "v", v)
    mid = 0.5 * (u + v)
    if not f.in_domain(mid):
        raise ValueError(f"midpoint {mid.tolist()} is outside the domain of {f.tag}")
    lhs = f_loss(f, u, v)
    gap = float(batch_value(f, u)) + float(batch_value(f, v)) - 2.0 * float(batch_value(f, mid))
    return lhs, (2.0 * f.c1 + 4.0) * gap
