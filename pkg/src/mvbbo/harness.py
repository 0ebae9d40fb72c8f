"""Seeded multi-trial experiments: configuration, runs, statistics, CSV and SVG output."""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union
from xml.sax.saxutils import escape

import numpy as np

from . import benchmarks
from .cma import population_size
from .margin import MODIFIED, ORIGINAL
from .optimizer import CatCMAwM
from .sofomore import ComoCatCMAwM

SINGLE_VARIANTS = ("catcmawm", "catcmawm-original-margin", "catcmawm-no-centering")
MULTI_VARIANT = "como-catcmawm"
VARIANTS = SINGLE_VARIANTS + (MULTI_VARIANT,)

# (margin mode, centering) implied by each single-objective variant
_VARIANT_MARGIN = {
    "catcmawm": (MODIFIED, True),
    "catcmawm-original-margin": (ORIGINAL, False),
    "catcmawm-no-centering": (MODIFIED, False),
}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    benchmark: str
    variant: str = "catcmawm"
    n_co: int = 3
    n_in: int = 3
    n_ca: int = 3
    spec_overrides: Dict[str, Any] = field(default_factory=dict)
    budget: int = 10_000
    trials: int = 1
    seed: int = 0
    alpha: Optional[float] = None
    q_min: Optional[float] = None
    margin_mode: Optional[str] = None
    centering: Optional[bool] = None
    init_box: Tuple[float, float] = (1.0, 3.0)
    sigma0: float = 1.0
    lam: Optional[int] = None
    target: Optional[float] = None
    kernels: Optional[int] = None
    reference_point: Optional[Tuple[float, float]] = None
    out: str = "results"

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ConfigError(f"unknown config fields: {', '.join(unknown)}")
        if "benchmark" not in data:
            raise ConfigError("config needs a 'benchmark' field")
        try:
            return cls(**data).resolved()
        except TypeError as exc:
            raise ConfigError(f"malformed config: {exc}") from exc

    @classmethod
    def load(cls, path: Union[str, Path]) -> "ExperimentConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"config {path} must hold a JSON object")
        return cls.from_dict(data)

    def to_dict(self) -> Dict[str, Any]:
        d = dataclasses.asdict(self)
        for key in ("init_box", "reference_point"):
            if d[key] is not None:
                d[key] = list(d[key])
        return d

    @property
    def multi_objective(self) -> bool:
        return self.variant == MULTI_VARIANT

    def benchmark_spec(self) -> benchmarks.BenchmarkSpec:
        try:
            return benchmarks.default_spec(
                self.benchmark, self.n_co, self.n_in, self.n_ca, **self.spec_overrides
            )
        except (KeyError, ValueError, TypeError) as exc:
            raise ConfigError(f"invalid benchmark setup: {exc}") from exc

    def resolved(self) -> "ExperimentConfig":
        """Validated copy with the multi-objective defaults filled in."""
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; choose from {', '.join(VARIANTS)}")
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if self.sigma0 <= 0:
            raise ConfigError("sigma0 must be positive")
        if self.margin_mode not in (None, ORIGINAL, MODIFIED):
            raise ConfigError(f"unknown margin_mode {self.margin_mode!r}")
        if len(tuple(self.init_box)) != 2:
            raise ConfigError("init_box needs exactly two values (lo, hi)")
        spec = self.benchmark_spec()
        if self.multi_objective != (spec.arity == 2):
            raise ConfigError(
                f"variant {self.variant} cannot optimize {self.benchmark} "
                f"({spec.arity} objective(s))"
            )
        cfg = dataclasses.replace(self, init_box=tuple(float(b) for b in self.init_box))
        if cfg.multi_objective:
            ref = cfg.reference_point if cfg.reference_point is not None else spec.reference_point
            if ref is None:
                raise ConfigError("como-catcmawm needs a reference_point")
            cfg.reference_point = tuple(float(r) for r in ref)
            if len(cfg.reference_point) != 2:
                raise ConfigError("reference_point needs two values")
            cfg.kernels = 5 if cfg.kernels is None else cfg.kernels
            if cfg.kernels < 1:
                raise ConfigError("kernels must be at least 1")
        elif cfg.kernels is not None or cfg.reference_point is not None:
            raise ConfigError("kernels and reference_point only apply to como-catcmawm")
        lam = self.lam or population_size(spec.space().n_total)
        per_step = cfg.kernels * (lam + 1) if cfg.multi_objective else lam
        if cfg.budget < per_step:
            raise ConfigError(f"budget {cfg.budget} is smaller than one iteration ({per_step})")
        return cfg

    def kernel_options(self, spec: benchmarks.BenchmarkSpec) -> Dict[str, Any]:
        mode, centering = _VARIANT_MARGIN.get(self.variant, (MODIFIED, True))
        if self.margin_mode is not None:
            mode = self.margin_mode
        if self.centering is not None:
            centering = self.centering
        alpha = self.alpha
        if alpha is None and self.variant == "catcmawm-original-margin" and spec.n_in > 0:
            lam = self.lam or population_size(spec.n_co + spec.n_in + spec.n_ca)
            alpha = 1.0 / (lam * (spec.n_co + spec.n_in))
        q_min = None
        if self.q_min is not None and spec.n_ca:
            q_min = [self.q_min] * spec.n_ca
        return dict(
            sigma=self.sigma0,
            init_box=self.init_box,
            lam=self.lam,
            alpha=alpha,
            q_min=q_min,
            margin_mode=mode,
            centering=centering,
        )


@dataclass
class TrialRecord:
    """Trace of one trial, one entry per iteration (or per step for two objectives).

    ``values`` holds the best-so-far fitness or the archive hypervolume;
    ``p_mut`` and ``flags`` are the integer mutation rates after the update
    and the successful-mutation flags of the same iteration.
    """

    trial: int
    seed: int
    kind: str
    evaluations: List[int]
    values: List[float]
    p_mut: List[List[float]] = field(default_factory=list)
    flags: List[List[bool]] = field(default_factory=list)
    alpha: Optional[float] = None
    stop_reason: str = "budget"
    wall_time: float = 0.0


def _run_single(cfg: ExperimentConfig, index: int) -> TrialRecord:
    spec = cfg.benchmark_spec()
    objective = benchmarks.make_single(cfg.benchmark, spec)
    seed = cfg.seed + index
    opt = CatCMAwM(objective.space, seed=seed, **cfg.kernel_options(spec))
    rec = TrialRecord(
        index, seed, "best_fitness", [], [], alpha=opt.margin.alpha if opt.margin else None
    )

    def log(o: CatCMAwM) -> None:
        rec.evaluations.append(o.evaluations)
        rec.values.append(o.best_fitness)
        if o.gauss is not None and o.space.n_in:
            rec.p_mut.append(o.gauss.p_mut.tolist())
            rec.flags.append(o.last_flags.tolist())

    rec.stop_reason = opt.optimize(objective, cfg.budget, cfg.target, callback=log)
    return rec


def _run_multi(cfg: ExperimentConfig, index: int) -> TrialRecord:
    spec = cfg.benchmark_spec()
    objective = benchmarks.make_bi(cfg.benchmark, spec)
    seed = cfg.seed + index
    opts = cfg.kernel_options(spec)
    sigma, init_box = opts.pop("sigma"), opts.pop("init_box")
    como = ComoCatCMAwM(
        objective, cfg.reference_point, cfg.kernels, sigma, init_box, seed, **opts
    )
    rec = TrialRecord(index, seed, "hypervolume", [como.evaluations], [como.hypervolume()])

    def log(c: ComoCatCMAwM) -> None:
        rec.evaluations.append(c.evaluations)
        rec.values.append(c.hypervolume())

    como.run(cfg.budget, callback=log)
    return rec


def run_trial(cfg: ExperimentConfig, index: int) -> TrialRecord:
    start = time.perf_counter()
    rec = _run_multi(cfg, index) if cfg.multi_objective else _run_single(cfg, index)
    rec.wall_time = time.perf_counter() - start
    return rec


def worker_count(trials: int) -> int:
    env = os.environ.get("MVBBO_THREADS")
    cap = os.cpu_count() or 1
    if env:
        try:
            cap = int(env)
        except ValueError as exc:
            raise ConfigError(f"MVBBO_THREADS must be an integer, got {env!r}") from exc
        if cap < 1:
            raise ConfigError("MVBBO_THREADS must be at least 1")
    return max(1, min(cap, trials))


def run_experiment(cfg: ExperimentConfig, workers: Optional[int] = None) -> List[TrialRecord]:
    """All trials of ``cfg``, ordered by trial index. Trial ``i`` uses seed ``cfg.seed + i``."""
    cfg = cfg.resolved()
    workers = worker_count(cfg.trials) if workers is None else max(1, min(workers, cfg.trials))
    indices = range(cfg.trials)
    if workers == 1:
        return [run_trial(cfg, i) for i in indices]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_trial, [cfg] * cfg.trials, indices))


@dataclass
class Stats:
    kind: str
    evaluations: np.ndarray
    median: np.ndarray
    q25: np.ndarray
    q75: np.ndarray

    def __len__(self) -> int:
        return len(self.evaluations)


def aggregate_stats(records: Sequence[TrialRecord]) -> Stats:
    """Median and quartiles across trials at every evaluation count any trial logged.

    A trial contributes its latest value at or before each checkpoint.
    Checkpoints before every trial has logged something are dropped.
    """
    if not records:
        raise ValueError("need at least one trial record")
    first = max(r.evaluations[0] for r in records if r.evaluations)
    checkpoints = np.unique(np.concatenate([np.asarray(r.evaluations, dtype=np.int64) for r in records]))
    checkpoints = checkpoints[checkpoints >= first]
    table = np.empty((len(records), len(checkpoints)))
    for row, rec in enumerate(records):
        idx = np.searchsorted(np.asarray(rec.evaluations), checkpoints, side="right") - 1
        table[row] = np.asarray(rec.values, dtype=float)[idx]
    q25, med, q75 = np.percentile(table, [25, 50, 75], axis=0, method="linear")
    return Stats(records[0].kind, checkpoints, med, q25, q75)


def _fmt(v: Any) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _write_rows(path: Union[str, Path], header: List[str], rows) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([_fmt(v) for v in row])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def emit_csv(data: Union[Stats, Sequence[TrialRecord]], path: Union[str, Path]) -> Path:
    """Write stats (``evaluations,median,q25,q75``) or per-iteration trial records.

    Floats are written in shortest round-trip form, so reading them back with
    ``float`` gives the identical double.
    """
    if isinstance(data, Stats):
        rows = zip(data.evaluations, data.median, data.q25, data.q75)
        return _write_rows(path, ["evaluations", "median", "q25", "q75"], rows)
    records = list(data)
    kind = records[0].kind if records else "best_fitness"
    n_in = max((len(r.p_mut[0]) for r in records if r.p_mut), default=0)
    header = ["trial", "iteration", "evaluations", kind] + [f"p_mut_{k + 1}" for k in range(n_in)]

    def rows():
        for rec in records:
            for it, (ev, val) in enumerate(zip(rec.evaluations, rec.values)):
                pm = rec.p_mut[it] if it < len(rec.p_mut) else []
                yield [rec.trial, it, ev, val, *pm]

    return _write_rows(path, header, rows())


def read_stats_csv(path: Union[str, Path], kind: str = "best_fitness") -> Stats:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["evaluations", "median", "q25", "q75"]:
        raise ValueError(f"{path} is not a stats file (expected header evaluations,median,q25,q75)")
    body = rows[1:]
    if not body:
        raise ValueError(f"{path} holds no data rows")
    cols = list(zip(*body))
    return Stats(
        kind,
        np.array([int(v) for v in cols[0]]),
        *(np.array([float(v) for v in col]) for col in cols[1:]),
    )


_W, _H = 640, 420
_LEFT, _RIGHT, _TOP, _BOTTOM = 80, 20, 40, 60


def _ticks(lo: float, hi: float, log: bool) -> List[float]:
    if log:
        a, b = math.floor(lo), math.ceil(hi)
        step = max(1, (b - a) // 6)
        return [float(k) for k in range(a, b + 1, step) if lo - 1e-9 <= k <= hi + 1e-9]
    if hi == lo:
        return [lo]
    raw = (hi - lo) / 5
    mag = 10 ** math.floor(math.log10(raw))
    step = min((s * mag for s in (1, 2, 5, 10) if s * mag >= raw), default=raw)
    start = math.ceil(lo / step) * step
    return [start + k * step for k in range(int((hi - start) / step + 1e-9) + 1)]


def emit_plot(
    stats: Stats,
    path: Union[str, Path],
    title: str = "",
    label: str = "median",
    log_y: Optional[bool] = None,
) -> Path:
    """Median line with a shaded inter-quartile band, written as standalone SVG.

    The y-axis is logarithmic for fitness and linear for hypervolume unless
    ``log_y`` says otherwise. Non-positive values on a log axis are drawn at
    the smallest positive value present.
    """
    if len(stats) == 0:
        raise ValueError("cannot plot empty stats")
    if log_y is None:
        log_y = stats.kind != "hypervolume"
    x = stats.evaluations.astype(float)
    ys = [stats.median, stats.q25, stats.q75]
    if log_y:
        allv = np.concatenate(ys)
        pos = allv[np.isfinite(allv) & (allv > 0)]
        floor = pos.min() if pos.size else 1e-300
        ys = [np.log10(np.maximum(y, floor)) for y in ys]
    finite = np.concatenate([y[np.isfinite(y)] for y in ys])
    y_lo, y_hi = (float(finite.min()), float(finite.max())) if finite.size else (0.0, 1.0)
    if y_hi == y_lo:
        y_lo, y_hi = y_lo - 0.5, y_hi + 0.5
    x_lo, x_hi = float(x.min()), float(x.max())
    if x_hi == x_lo:
        x_lo, x_hi = x_lo - 0.5, x_hi + 0.5
    pw, ph = _W - _LEFT - _RIGHT, _H - _TOP - _BOTTOM

    def px(v: float) -> float:
        return _LEFT + (v - x_lo) / (x_hi - x_lo) * pw

    def py(v: float) -> float:
        v = min(max(v, y_lo), y_hi) if math.isfinite(v) else (y_hi if v > 0 else y_lo)
        return _TOP + (y_hi - v) / (y_hi - y_lo) * ph

    med, q25, q75 = ys
    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W / 2:.1f}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<rect x="{_LEFT}" y="{_TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    for tx in _ticks(x_lo, x_hi, False):
        parts.append(
            f'<line x1="{px(tx):.2f}" y1="{_TOP + ph}" x2="{px(tx):.2f}" y2="{_TOP + ph + 5}" stroke="black"/>'
            f'<text x="{px(tx):.2f}" y="{_TOP + ph + 18}" text-anchor="middle">{tx:g}</text>'
        )
    for ty in _ticks(y_lo, y_hi, log_y):
        text = f"1e{int(ty)}" if log_y else f"{ty:g}"
        parts.append(
            f'<line x1="{_LEFT - 5}" y1="{py(ty):.2f}" x2="{_LEFT}" y2="{py(ty):.2f}" stroke="black"/>'
            f'<text x="{_LEFT - 8}" y="{py(ty) + 4:.2f}" text-anchor="end">{text}</text>'
        )
    ylabel = "hypervolume" if stats.kind == "hypervolume" else "best fitness"
    parts.append(f'<text x="{_LEFT + pw / 2:.1f}" y="{_H - 15}" text-anchor="middle">evaluations</text>')
    parts.append(
        f'<text x="18" y="{_TOP + ph / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 18 {_TOP + ph / 2:.1f})">{escape(ylabel)}</text>'
    )
    if len(x) == 1:
        parts.append(
            f'<circle cx="{px(x[0]):.2f}" cy="{py(med[0]):.2f}" r="4" fill="steelblue"/>'
        )
    else:
        upper = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x, q75))
        lower = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x[::-1], q25[::-1]))
        parts.append(f'<polygon points="{upper} {lower}" fill="steelblue" fill-opacity="0.25" stroke="none"/>')
        line = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x, med))
        parts.append(f'<polyline points="{line}" fill="none" stroke="steelblue" stroke-width="1.5"/>')
    lx, ly = _LEFT + pw - 150, _TOP + 15
    parts.append(
        f'<line x1="{lx}" y1="{ly}" x2="{lx + 20}" y2="{ly}" stroke="steelblue" stroke-width="1.5"/>'
        f'<text x="{lx + 26}" y="{ly + 4}">{escape(label)}</text>'
        f'<rect x="{lx}" y="{ly + 10}" width="20" height="10" fill="steelblue" fill-opacity="0.25"/>'
        f'<text x="{lx + 26}" y="{ly + 19}">inter-quartile range</text>'
    )
    parts.append("</svg>")
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("\n".join(parts) + "\n", encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def write_outputs(cfg: ExperimentConfig, records: Sequence[TrialRecord], out: Union[str, Path]) -> Dict[str, Path]:
    out = Path(out)
    stats = aggregate_stats(records)
    title = f"{cfg.variant} on {cfg.benchmark} ({cfg.n_co},{cfg.n_in},{cfg.n_ca})"
    paths = {
        "records": emit_csv(records, out / "records.csv"),
        "stats": emit_csv(stats, out / "stats.csv"),
        "plot": emit_plot(stats, out / "plot.svg", title=title, label=f"median of {len(records)} trials"),
    }
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2) + "\n", encoding="utf-8")
    return paths


SUITE_SINGLE_FUNCTIONS = ("SphereIntCOM", "EllipsoidIntCLO", "REllipsoidIntCLO", "MVProximity")
SUITE_SINGLE_DIMS = ((2, 2, 2), (4, 4, 4), (6, 6, 6), (15, 15, 15))
SUITE_BI_DIMS = ((3, 3, 3),)


def suite_configs(trials: int = 5, scale: float = 1.0, seed: int = 0) -> List[Tuple[str, ExperimentConfig]]:
    """Desk-sized grid: the four single-objective functions over four dimension
    triples, plus the bi-objective benchmark. Budgets grow with the dimension
    and are multiplied by ``scale``."""
    out = []
    for name in SUITE_SINGLE_FUNCTIONS:
        for dims in SUITE_SINGLE_DIMS:
            budget = max(100, int(scale * 1000 * sum(dims)))
            cfg = ExperimentConfig(name, "catcmawm", *dims, budget=budget, trials=trials, seed=seed, target=1e-10)
            out.append((f"{name}_{'-'.join(map(str, dims))}", cfg))
    for dims in SUITE_BI_DIMS:
        budget = max(500, int(scale * 20_000))
        cfg = ExperimentConfig(
            "DSIntLFTL", MULTI_VARIANT, *dims, budget=budget, trials=trials, seed=seed,
            init_box=(-5.0, 15.0), sigma0=4.0,
        )
        out.append((f"DSIntLFTL_{'-'.join(map(str, dims))}", cfg))
    return out
