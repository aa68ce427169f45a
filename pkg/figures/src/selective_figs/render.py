"""Render benchmark sweep CSVs to static plots.

Read-only consumer of the harness CSV schema. The only math here is
series grouping, per-x aggregation, and a least-squares fit of the
constant in an overlay curve; anything resembling science happens
upstream of the CSV.
"""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


class FigureError(ValueError):
    """A spec referenced data the CSV does not carry, or selected nothing."""


@dataclass(frozen=True)
class FigureSpec:
    """One figure: points from csv_paths, split into one series per
    distinct value tuple of the group columns.

    overlays are curve templates like "c/log2(n)" where c is fitted by
    least squares over the plotted points and the x column is referenced
    by its header name. Each template must be linear in c.
    """

    csv_paths: tuple[str, ...]
    x: str
    out: str
    group: tuple[str, ...] = ()
    overlays: tuple[str, ...] = ()
    y: str = "excess_risk"
    stderr: str = "stderr"
    logx: bool = False


@dataclass(frozen=True)
class RenderReport:
    out_path: str
    points: int
    series: tuple[str, ...]
    overlay_fits: tuple[tuple[str, float], ...]


def _load_rows(spec: FigureSpec) -> list[dict[str, str]]:
    if not spec.csv_paths:
        raise FigureError("no input CSV given")
    rows: list[dict[str, str]] = []
    for path in spec.csv_paths:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            header = reader.fieldnames or []
            for col in (spec.x, spec.y, *spec.group):
                if col not in header:
                    raise FigureError(
                        f"column '{col}' not present in {path} (header: {', '.join(header)})"
                    )
            rows.extend(reader)
    return rows


@dataclass(frozen=True)
class _Point:
    x: float
    y: float
    err: float | None


def _select(spec: FigureSpec, rows: list[dict[str, str]]) -> dict[tuple[str, ...], list[_Point]]:
    # bucket rows by (series key, x), then aggregate each bucket to one point
    buckets: dict[tuple[tuple[str, ...], float], list[dict[str, str]]] = {}
    for row in rows:
        try:
            x = float(row[spec.x])
            float(row[spec.y])
        except (TypeError, ValueError):
            continue  # non-numeric cells select nothing rather than crashing
        key = tuple(row[g] for g in spec.group)
        buckets.setdefault((key, x), []).append(row)
    if not buckets:
        raise FigureError(
            f"empty selection: no rows with numeric '{spec.x}' and '{spec.y}'"
        )
    series: dict[tuple[str, ...], list[_Point]] = {}
    for (key, x), group_rows in sorted(buckets.items()):
        ys = np.array([float(r[spec.y]) for r in group_rows])
        errs = [r.get(spec.stderr, "") for r in group_rows]
        if all(e not in ("", None) for e in errs):
            # independent estimates averaged: variances add, divide by count
            err = float(math.sqrt(sum(float(e) ** 2 for e in errs)) / len(errs))
        else:
            err = None
        series.setdefault(key, []).append(_Point(x, float(ys.mean()), err))
    return series


_OVERLAY_NAMES = {"log": np.log, "log2": np.log2, "sqrt": np.sqrt,
                  "exp": np.exp, "floor": np.floor}


def _overlay_basis(expr: str, xname: str, xs: np.ndarray) -> np.ndarray:
    names = set(re.findall(r"[A-Za-z_][A-Za-z_0-9]*", expr))
    allowed = set(_OVERLAY_NAMES) | {"c", xname}
    if unknown := names - allowed:
        raise FigureError(
            f"overlay '{expr}' uses unknown names {sorted(unknown)}; "
            f"allowed: c, {xname}, {', '.join(sorted(_OVERLAY_NAMES))}"
        )
    if "c" not in names:
        raise FigureError(f"overlay '{expr}' has no fitted constant 'c'")

    def evaluate(c: float) -> np.ndarray:
        ns = dict(_OVERLAY_NAMES)
        ns.update({"c": c, xname: xs})
        out = eval(compile(expr, "<overlay>", "eval"), {"__builtins__": {}}, ns)
        return np.asarray(out, dtype=float) + np.zeros_like(xs)

    basis = evaluate(1.0)
    if not np.allclose(evaluate(2.0), 2.0 * basis, rtol=1e-9, atol=1e-12):
        raise FigureError(f"overlay '{expr}' is not linear in c; cannot fit by least squares")
    return basis


def _fit_overlay(expr: str, xname: str, xs: np.ndarray, ys: np.ndarray) -> float:
    basis = _overlay_basis(expr, xname, xs)
    if not np.all(np.isfinite(basis)):
        raise FigureError(f"overlay '{expr}' is not finite on the plotted x range")
    denom = float(basis @ basis)
    if denom == 0.0:
        raise FigureError(f"overlay '{expr}' vanishes on the plotted x range")
    return float(basis @ ys) / denom


def render(spec: FigureSpec) -> RenderReport:
    series = _select(spec, _load_rows(spec))

    all_x = np.array([p.x for pts in series.values() for p in pts])
    all_y = np.array([p.y for pts in series.values() for p in pts])
    fits = tuple((expr, _fit_overlay(expr, spec.x, all_x, all_y)) for expr in spec.overlays)

    fig, ax = plt.subplots(figsize=(6.4, 4.2), dpi=120)
    labels = []
    for key in sorted(series):
        pts = sorted(series[key], key=lambda p: p.x)
        label = ", ".join(f"{g}={v}" for g, v in zip(spec.group, key)) or spec.y
        labels.append(label)
        xs = [p.x for p in pts]
        ys = [p.y for p in pts]
        errs = [p.err for p in pts]
        yerr = errs if all(e is not None for e in errs) else None
        ax.errorbar(xs, ys, yerr=yerr, marker="o", markersize=4,
                    capsize=3, linewidth=1.2, label=label)

    for expr, c in fits:
        lo, hi = float(all_x.min()), float(all_x.max())
        if lo == hi:
            dense = np.array([lo])
        elif spec.logx and lo > 0:
            dense = np.geomspace(lo, hi, 256)
        else:
            dense = np.linspace(lo, hi, 256)
        curve = c * _overlay_basis(expr, spec.x, dense)
        ax.plot(dense, curve, linestyle="--", linewidth=1.0,
                label=f"{expr}, c={c:.3g}")

    if spec.logx:
        ax.set_xscale("log", base=2)
    ax.set_xlabel(spec.x)
    ax.set_ylabel(spec.y)
    if len(labels) > 1 or fits:
        ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(spec.out)
    plt.close(fig)
    return RenderReport(
        out_path=spec.out,
        points=int(all_x.size),
        series=tuple(labels),
        overlay_fits=fits,
    )
