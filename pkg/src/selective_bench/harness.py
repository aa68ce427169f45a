"""Experiment sweeps and verification suites behind the CLI.

A run takes one adversary template plus axis lists (algorithms, n, m,
rate parameters), expands the cartesian product into sweep points with
independently derived seeds, evaluates each point exactly or by Monte
Carlo, and writes one CSV row per point.  Timings and inequality
verdicts go to a JSON sidecar so the CSV stays byte-identical across
reruns of the same config.
"""

from __future__ import annotations

import csv
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .adversaries import KINDS, GeneratorSpec
from .algorithms import BoundedRecallParams, HybridParams, auto_eta
from .convexity import certify_self_concordance, lemma4_check, log_sum_exp, quadratic
from .core import Instance, read_instance, scale_profile
from .oracle import (
    check_lemma1,
    check_theorem5,
    exact_risk,
    experts_sweep,
    monte_carlo_risk,
)
from .seeding import derive_key, derive_rng

__all__ = [
    "CSV_COLUMNS",
    "CHECK_SUITES",
    "ConfigError",
    "ExperimentConfig",
    "SweepPoint",
    "RunResult",
    "CheckReport",
    "parse_config_file",
    "expand_points",
    "run",
    "check_suite",
]

CSV_COLUMNS = (
    "algorithm",
    "n",
    "m",
    "delta",
    "eta",
    "alpha",
    "adversary",
    "seed",
    "mode",
    "excess_risk",
    "stderr",
    "wall_ms",
)

CHECK_SUITES = ("lemma1", "experts", "theorem5", "lemma4", "selfconc")

# which sweep axes an algorithm actually consumes; the rest collapse to
# a single empty slot instead of multiplying out duplicate rows
_RELEVANT = {
    "hybrid_ew": ("delta", "eta"),
    "bounded_recall_ew": ("alpha",),
    "erm": (),
    "realizable_learner": (),
    "mean_predict": (),
}

_CONFIG_KEYS = ("alg", "adversary", "n", "m", "delta", "eta", "alpha", "mode", "trials", "seed", "out")


class ConfigError(ValueError):
    pass


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def parse_config_file(path: str) -> dict[str, str]:
    """Plain `key = value` lines; '#' starts a comment; later flags
    override these values."""
    out: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}")
            key, val = (part.strip() for part in line.split("=", 1))
            if key not in _CONFIG_KEYS:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            if key in out:
                raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
            if not val:
                raise ConfigError(f"{path}:{lineno}: empty value for {key!r}")
            out[key] = val
    return out


def _split_list(raw: str) -> list[str]:
    toks = [tok.strip() for tok in raw.split(",")]
    if any(not tok for tok in toks):
        raise ConfigError(f"empty element in list {raw!r}")
    return toks


def _parse_int_axis(raw: str, key: str) -> tuple[int, ...]:
    try:
        return tuple(int(tok) for tok in _split_list(raw))
    except ValueError:
        raise ConfigError(f"{key} must be a comma list of integers, got {raw!r}") from None


def _parse_rate_axis(raw: str, key: str, integer: bool) -> tuple[object, ...]:
    out: list[object] = []
    for tok in _split_list(raw):
        if tok == "auto":
            out.append("auto")
            continue
        try:
            out.append(int(tok) if integer else float(tok))
        except ValueError:
            raise ConfigError(f"{key} elements must be numbers or 'auto', got {tok!r}") from None
    return tuple(out)


@dataclass(frozen=True)
class ExperimentConfig:
    algorithms: tuple[str, ...]
    adversary: str  # generator template "kind[:key=val...]" or an instance file path
    ns: tuple[int, ...] = ()
    ms: tuple[int, ...] = ()
    deltas: tuple[object, ...] = ("auto",)
    etas: tuple[object, ...] = ("auto",)
    alphas: tuple[object, ...] = ("auto",)
    mode: str = "exact"
    trials: int = 1000
    seed: int = 0
    out: str = "results.csv"

    def __post_init__(self) -> None:
        if not self.algorithms:
            raise ConfigError("need at least one algorithm")
        for alg in self.algorithms:
            if alg not in _RELEVANT:
                raise ConfigError(f"unknown algorithm {alg!r}; expected one of {tuple(_RELEVANT)}")
        if self.mode not in ("exact", "mc"):
            raise ConfigError(f"mode must be 'exact' or 'mc', got {self.mode!r}")
        if self.trials < 1:
            raise ConfigError(f"trials must be >= 1, got {self.trials}")
        for name, axis in (("delta", self.deltas), ("eta", self.etas), ("alpha", self.alphas)):
            if not axis:
                raise ConfigError(f"{name} axis is empty")

    @staticmethod
    def from_strings(values: dict[str, str]) -> "ExperimentConfig":
        for key in values:
            if key not in _CONFIG_KEYS:
                raise ConfigError(f"unknown config key {key!r}")
        missing = [key for key in ("alg", "adversary") if key not in values]
        if missing:
            raise ConfigError(f"config is missing {missing}")
        kwargs: dict[str, object] = {
            "algorithms": tuple(_split_list(values["alg"])),
            "adversary": values["adversary"],
        }
        if "n" in values:
            kwargs["ns"] = _parse_int_axis(values["n"], "n")
        if "m" in values:
            kwargs["ms"] = _parse_int_axis(values["m"], "m")
        if "delta" in values:
            kwargs["deltas"] = _parse_rate_axis(values["delta"], "delta", integer=True)
        if "eta" in values:
            kwargs["etas"] = _parse_rate_axis(values["eta"], "eta", integer=False)
        if "alpha" in values:
            kwargs["alphas"] = _parse_rate_axis(values["alpha"], "alpha", integer=False)
        if "mode" in values:
            kwargs["mode"] = values["mode"]
        for key, cast in (("trials", int), ("seed", int)):
            if key in values:
                try:
                    kwargs[key] = cast(values[key])
                except ValueError:
                    raise ConfigError(f"{key} must be an integer, got {values[key]!r}") from None
        if "out" in values:
            kwargs["out"] = values["out"]
        return ExperimentConfig(**kwargs)


@dataclass(frozen=True)
class SweepPoint:
    index: int
    algorithm: str
    n: int
    m: int
    delta: object  # raw axis value ("auto" or int); None when unused
    eta: object
    alpha: object
    point_id: str
    seed: int
    spec: GeneratorSpec | None  # None when the config named an instance file
    instance: Instance | None = field(default=None, compare=False)

    @property
    def adversary_tag(self) -> str:
        if self.spec is not None:
            return self.spec.tag()
        if self.instance is not None and self.instance.origin is not None:
            return self.instance.origin[0]
        return "file"


def _parse_template(adversary: str) -> tuple[str, dict[str, object], int | None, int | None]:
    """Split "kind[:key=val...]" into kind, params, and inline n/m."""
    from .adversaries import _parse_param  # same grammar as full tags

    parts = adversary.split(":")
    kind = parts[0]
    if kind not in KINDS:
        raise ConfigError(
            f"adversary {adversary!r} is neither a known generator kind {KINDS} nor an existing file"
        )
    kv: dict[str, object] = {}
    for part in parts[1:]:
        if "=" not in part:
            raise ConfigError(f"malformed template component {part!r} in {adversary!r}")
        key, raw = part.split("=", 1)
        try:
            kv[key] = _parse_param(kind, key, raw)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    n_inline = kv.pop("n", None)
    m_inline = kv.pop("m", None)
    return kind, kv, n_inline, m_inline


def _point_params(pt: SweepPoint):
    if pt.algorithm == "hybrid_ew":
        return HybridParams(delta=pt.delta, eta=pt.eta)
    if pt.algorithm == "bounded_recall_ew":
        return BoundedRecallParams(alpha=pt.alpha)
    if pt.algorithm == "mean_predict":
        return quadratic(1)  # squared loss on the instance's first row
    return None


def _resolved_rates(pt: SweepPoint) -> tuple[str, str, str]:
    """CSV cells for delta/eta/alpha: the numeric values actually used."""
    if pt.algorithm == "hybrid_ew":
        delta, eta = HybridParams(delta=pt.delta, eta=pt.eta).resolve(pt.n, pt.m)
        return str(delta), _fmt(eta), ""
    if pt.algorithm == "bounded_recall_ew":
        alpha = BoundedRecallParams(alpha=pt.alpha).resolve(pt.n, pt.m)
        return "", "", _fmt(alpha)
    return "", "", ""


def expand_points(config: ExperimentConfig) -> list[SweepPoint]:
    """Cartesian product of the axes in canonical order (algorithm
    outermost, then n, m, delta, eta, alpha), with axes the algorithm
    ignores collapsed to one slot.  Every point is validated here,
    before any computation; the error names the offending point."""
    file_inst: Instance | None = None
    template: tuple[str, dict[str, object], int | None, int | None] | None = None
    if config.adversary.split(":")[0] in KINDS:
        template = _parse_template(config.adversary)
    elif os.path.exists(config.adversary):
        file_inst = read_instance(config.adversary)
    else:
        raise ConfigError(
            f"adversary {config.adversary!r} is neither a known generator kind {KINDS} nor an existing file"
        )

    if file_inst is not None:
        ns, ms = (file_inst.n,), (file_inst.m,)
        if config.ns and config.ns != ns:
            raise ConfigError(f"n={config.ns} does not match the instance file (n={file_inst.n})")
        if config.ms and config.ms != ms:
            raise ConfigError(f"m={config.ms} does not match the instance file (m={file_inst.m})")
    else:
        kind, _, n_inline, m_inline = template
        ns, ms = config.ns, config.ms
        if n_inline is not None:
            if ns:
                raise ConfigError("n appears both inline in the adversary template and as an axis")
            ns = (int(n_inline),)
        if m_inline is not None:
            if ms:
                raise ConfigError("m appears both inline in the adversary template and as an axis")
            ms = (int(m_inline),)
        if not ns:
            raise ConfigError("no n axis given")
        if not ms:
            if kind != "threshold":
                raise ConfigError("no m axis given")
            ms = (None,)  # threshold fills m = n + 1 per point

    points: list[SweepPoint] = []
    for alg in config.algorithms:
        rel = _RELEVANT[alg]
        deltas = config.deltas if "delta" in rel else (None,)
        etas = config.etas if "eta" in rel else (None,)
        alphas = config.alphas if "alpha" in rel else (None,)
        for n in ns:
            for m_axis in ms:
                m = n + 1 if m_axis is None else m_axis
                for delta in deltas:
                    for eta in etas:
                        for alpha in alphas:
                            pid = (
                                f"{alg}|{config.adversary}|n={n}|m={m}"
                                f"|delta={'' if delta is None else delta}"
                                f"|eta={'' if eta is None else eta}"
                                f"|alpha={'' if alpha is None else alpha}"
                                f"|mode={config.mode}"
                            )
                            spec = None
                            if template is not None:
                                kind, kv, _, _ = template
                                try:
                                    spec = GeneratorSpec(kind, n, m, 0, tuple(kv.items()))
                                    spec.validate()
                                except ValueError as exc:
                                    raise ConfigError(f"sweep point {pid}: {exc}") from None
                            pt = SweepPoint(
                                index=len(points),
                                algorithm=alg,
                                n=n,
                                m=m,
                                delta=delta,
                                eta=eta,
                                alpha=alpha,
                                point_id=pid,
                                seed=derive_key(config.seed, "point", pid),
                                spec=spec,
                                instance=file_inst,
                            )
                            try:
                                _point_params(pt)
                                _resolved_rates(pt)
                                if alg == "mean_predict" and n < 2:
                                    raise ValueError(f"mean_predict needs n >= 2, got {n}")
                            except ValueError as exc:
                                raise ConfigError(f"sweep point {pid}: {exc}") from None
                            points.append(pt)
    return points


@dataclass(frozen=True)
class _PointResult:
    excess: float
    stderr: float | None
    wall_ms: float
    verdicts: tuple[dict, ...]


def _execute_point(pt: SweepPoint, config: ExperimentConfig) -> _PointResult:
    start = time.perf_counter()
    params = _point_params(pt)
    verdicts: list[dict] = []
    if config.mode == "exact":
        inst = pt.instance if pt.instance is not None else pt.spec.with_seed(pt.seed).build()
        r = exact_risk(pt.algorithm, inst, params)
        excess, stderr = r.total, None
        if pt.algorithm == "realizable_learner":
            bound = math.log(pt.m) / pt.n
            verdicts.append(
                {
                    "check": "realizable_upper_bound",
                    "excess_risk": excess,
                    "bound": bound,
                    "holds": bool(excess <= bound + 1e-9),
                }
            )
    else:
        target = pt.instance if pt.instance is not None else pt.spec
        rep = monte_carlo_risk(pt.algorithm, target, config.trials, seed=pt.seed, params=params)
        excess, stderr = rep.mean, rep.stderr
    wall_ms = (time.perf_counter() - start) * 1000.0
    return _PointResult(excess, stderr, wall_ms, tuple(verdicts))


def _worker_count(npoints: int) -> int:
    size = min(npoints, os.cpu_count() or 1)
    cap = os.environ.get("SELECTIVE_BENCH_THREADS")
    if cap is not None:
        try:
            size = min(size, int(cap))
        except ValueError:
            raise ConfigError(f"SELECTIVE_BENCH_THREADS must be an integer, got {cap!r}") from None
    return max(size, 1)


@dataclass(frozen=True)
class RunResult:
    csv_path: str
    sidecar_path: str
    points: tuple[SweepPoint, ...]
    rows: tuple[tuple[str, ...], ...]  # CSV cells, header excluded
    verdicts: tuple[dict, ...]


def run(config: ExperimentConfig, config_echo: dict[str, str] | None = None) -> RunResult:
    """Execute every sweep point and write the CSV plus JSON sidecar.

    Points run on a thread pool (capped by SELECTIVE_BENCH_THREADS) but
    rows are emitted in canonical sweep order, so identical config and
    seed give byte-identical CSV output.
    """
    points = expand_points(config)
    with ThreadPoolExecutor(max_workers=_worker_count(len(points))) as pool:
        results = list(pool.map(lambda pt: _execute_point(pt, config), points))

    rows = []
    side_points = []
    all_verdicts = []
    for pt, res in zip(points, results):
        delta_s, eta_s, alpha_s = _resolved_rates(pt)
        rows.append(
            (
                pt.algorithm,
                str(pt.n),
                str(pt.m),
                delta_s,
                eta_s,
                alpha_s,
                pt.adversary_tag,
                str(pt.seed),
                config.mode,
                _fmt(res.excess),
                "" if res.stderr is None else _fmt(res.stderr),
                "",  # timings are nondeterministic; they live in the sidecar
            )
        )
        side_points.append(
            {
                "id": pt.point_id,
                "row": pt.index,
                "wall_ms": res.wall_ms,
                "verdicts": list(res.verdicts),
            }
        )
        all_verdicts.extend(res.verdicts)

    out_dir = os.path.dirname(config.out)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
    with open(config.out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        writer.writerows(rows)

    sidecar_path = os.path.splitext(config.out)[0] + ".json"
    sidecar = {
        "config": dict(config_echo) if config_echo is not None else None,
        "mode": config.mode,
        "trials": config.trials if config.mode == "mc" else None,
        "seed": config.seed,
        "columns": list(CSV_COLUMNS),
        "points": side_points,
    }
    with open(sidecar_path, "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")

    return RunResult(config.out, sidecar_path, tuple(points), tuple(rows), tuple(all_verdicts))


# ---------------------------------------------------------------------------
# verification suites


@dataclass(frozen=True)
class CheckReport:
    suite: str
    checks: int
    failures: tuple[str, ...]
    worst: float  # max over checks of lhs - rhs (negative margin = healthy)
    elapsed_s: float

    @property
    def ok(self) -> bool:
        return not self.failures

    def summary(self) -> str:
        state = "PASS" if self.ok else f"FAIL ({len(self.failures)} violations)"
        return (
            f"{self.suite}: {state}, {self.checks} checks, "
            f"worst margin {self.worst:+.3e}, {self.elapsed_s:.1f}s"
        )


def _bound_corpus(seed: int, count: int = 500) -> list[tuple[str, Instance]]:
    """Random loss matrices for the window-scale checks: n in [16, 256],
    m in [2, 8], alternating dense-uniform and binary entries."""
    out = []
    for idx in range(count):
        rng = derive_rng(seed, "check-corpus", idx)
        n = int(rng.integers(16, 257))
        m = int(rng.integers(2, 9))
        vals = rng.uniform(0.0, 1.0, (m, n))
        kind = "uniform"
        if idx % 2:
            vals = (vals < 0.5).astype(float)
            kind = "binary"
        out.append((f"corpus[{idx}]:{kind}:n={n}:m={m}", Instance(vals)))
    return out


_GRID_DELTAS = (1, 2, 3)
_GRID_ETAS = (0.25, "auto", 2.0)


def _check_lemma1_suite(seed: int) -> tuple[int, list[str], float]:
    checks, fails, worst = 0, [], -math.inf
    for tag, inst in _bound_corpus(seed):
        for delta in _GRID_DELTAS:
            for eta in _GRID_ETAS:
                for v in check_lemma1(inst, delta, eta):
                    checks += 1
                    worst = max(worst, v.lhs - v.rhs)
                    if not v.holds:
                        fails.append(
                            f"{tag} delta={delta} eta={eta} scale w={v.w}: "
                            f"conditional risk {v.lhs!r} > bound {v.rhs!r}"
                        )
    return checks, fails, worst


def _check_experts_suite(seed: int) -> tuple[int, list[str], float]:
    checks, fails, worst = 0, [], -math.inf
    for tag, inst in _bound_corpus(seed):
        for delta in _GRID_DELTAS:
            for eta in _GRID_ETAS:
                eta_v = auto_eta(inst.m, delta) if eta == "auto" else eta
                try:
                    for _, _, ew, _, bound in experts_sweep(inst, delta, eta_v):
                        checks += 1
                        worst = max(worst, ew - bound)
                except AssertionError as exc:
                    fails.append(f"{tag} delta={delta} eta={eta}: {exc}")
    return checks, fails, worst


def _check_theorem5_suite(seed: int) -> tuple[int, list[str], float]:
    specs = [quadratic(1)] + [log_sum_exp(a, d) for a in (0.5, 1.0, 2.0) for d in (2, 4)]
    checks, fails, worst = 0, [], -math.inf
    for f in specs:
        for j in range(100):
            rng = derive_rng(seed, "check-theorem5", f.tag, f.dim, j)
            n = 1 << int(rng.integers(1, 11))
            pts = rng.uniform(0.0, 1.0, (n, f.dim))
            exact, bound = check_theorem5(pts, f)
            checks += 1
            worst = max(worst, exact - bound)
            if exact > bound + 1e-9:
                fails.append(f"{f.tag} dim={f.dim} n={n} draw={j}: exact {exact!r} > bound {bound!r}")
    return checks, fails, worst


def _check_lemma4_suite(seed: int) -> tuple[int, list[str], float]:
    checks, fails, worst = 0, [], -math.inf
    for f, exact_case in ((quadratic(3), True), (log_sum_exp(1.0, 4), False)):
        rng = derive_rng(seed, "check-lemma4", f.tag, f.dim)
        for j in range(10_000):
            u = rng.uniform(0.0, 1.0, f.dim)
            v = rng.uniform(0.0, 1.0, f.dim)
            lhs, rhs = lemma4_check(f, u, v)
            checks += 1
            worst = max(worst, lhs - rhs)
            if lhs > rhs + 1e-9:
                fails.append(f"{f.tag} dim={f.dim} draw={j}: lhs {lhs!r} > rhs {rhs!r}")
            if exact_case and abs(lhs - rhs) > 1e-9:
                fails.append(
                    f"{f.tag} dim={f.dim} draw={j}: quadratic case should be an identity, "
                    f"|lhs - rhs| = {abs(lhs - rhs)!r}"
                )
    return checks, fails, worst


def _check_selfconc_suite(seed: int) -> tuple[int, list[str], float]:
    checks, fails, worst = 0, [], -math.inf
    for dim in (2, 3, 5):
        for alpha in (0.5, 1.0, 2.0, 4.0):
            f = log_sum_exp(alpha, dim)
            rng = derive_rng(seed, "check-selfconc", dim, alpha)
            ratio = certify_self_concordance(f, trials=1000, grid=50, rng=rng, h=1e-3)
            cap = 4.0 * alpha * (1.0 + 1e-2)
            checks += 1
            worst = max(worst, ratio - cap)
            if ratio > cap:
                fails.append(f"{f.tag} dim={dim}: measured ratio {ratio!r} > {cap!r}")
    return checks, fails, worst


_SUITE_FNS = {
    "lemma1": _check_lemma1_suite,
    "experts": _check_experts_suite,
    "theorem5": _check_theorem5_suite,
    "lemma4": _check_lemma4_suite,
    "selfconc": _check_selfconc_suite,
}


def check_suite(suite: str, seed: int = 0) -> CheckReport:
    """Run one named verification suite over its built-in corpus."""
    if suite not in _SUITE_FNS:
        raise ConfigError(f"unknown suite {suite!r}; expected one of {CHECK_SUITES}")
    start = time.perf_counter()
    checks, fails, worst = _SUITE_FNS[suite](seed)
    return CheckReport(suite, checks, tuple(fails), worst, time.perf_counter() - start)


def format_profile(inst: Instance) -> str:
    prof = scale_profile(inst)
    lines = [f"n={inst.n} m={inst.m} k={prof.k}"]
    for i, val in enumerate(prof.values):
        lines.append(f"i={i} w={1 << i} L={_fmt(float(val))}")
    return "\n".join(lines)
