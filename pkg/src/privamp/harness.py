"""Experiment driver: ingestion, preprocessing, sampler sweep, aggregation.

One experiment sweeps sampler families, budget constants ``B`` and target
sample sizes ``m``. Each repetition draws a Poisson sample, runs weighted
DP-Lloyd on it and scores the centers on the whole preprocessed dataset.
"""

from __future__ import annotations

import csv
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .kmeans import (
    DEFAULT_RHO,
    LloydConfig,
    core_sampler_epsilon,
    full_data_epsilon,
    init_centers,
    kmeans_cost,
    lloyd_profile,
    weighted_dp_lloyd,
)
from .privacy import amplify
from .sampling import DataStats, WeightedDataset, data_stats, draw, make_coreset, make_optimal, make_uniform

__all__ = [
    "FAMILY_NAMES",
    "DataFormatError",
    "SyntheticSpec",
    "ExperimentConfig",
    "RunRecord",
    "SummaryRow",
    "load_csv",
    "preprocess",
    "make_synthetic",
    "family_epsilon",
    "run_experiment",
    "aggregate",
    "write_summary",
    "write_records",
    "write_metadata",
    "save_outputs",
    "QUANTILE_METHOD",
    "WORKERS_ENV",
]

# short names used on the command line and in output files
FAMILY_NAMES = ("full", "unif", "core", "opt")
QUANTILE_METHOD = "linear"
WORKERS_ENV = "PRIVAMP_WORKERS"
SUMMARY_HEADER = ("family", "B", "m", "epsilon", "cost_median", "cost_q25", "cost_q75", "reps")


class DataFormatError(ValueError):
    """Malformed input file; the message carries the row and column."""


def load_csv(path) -> np.ndarray:
    """Read comma-separated numeric rows into an ``(n, d)`` array.

    Blank lines are skipped. Rows and columns in error messages are 1-based.
    """
    rows = []
    width = None
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise DataFormatError(f"{path}: row {lineno} has {len(row)} fields, expected {width}")
            values = []
            for col, cell in enumerate(row, start=1):
                try:
                    v = float(cell)
                except ValueError:
                    raise DataFormatError(f"{path}: row {lineno}, column {col}: {cell.strip()!r} is not a number") from None
                if not math.isfinite(v):
                    raise DataFormatError(f"{path}: row {lineno}, column {col}: {cell.strip()!r} is not finite")
                values.append(v)
            rows.append(values)
    if not rows:
        raise DataFormatError(f"{path}: row 1: file contains no data")
    return np.array(rows, dtype=float)


def preprocess(data, trim_fraction: float = 0.025) -> tuple[np.ndarray, DataStats]:
    """Center, drop the ``floor(trim_fraction * n)`` largest-l1 rows, center again.

    Ties in l1 norm drop later rows first. Returns the processed array and its
    statistics; ``radius`` and ``mean_norm`` refer to the processed data.
    """
    X = np.atleast_2d(np.asarray(data, dtype=float))
    n = len(X)
    if not 0.0 <= trim_fraction < 1.0:
        raise ValueError(f"trim_fraction must lie in [0, 1), got {trim_fraction}")
    if n * (1.0 - trim_fraction) < 1.0:
        raise ValueError(f"trimming a fraction {trim_fraction} of {n} rows leaves less than one row")
    drop = math.floor(trim_fraction * n)
    X = X - X.mean(axis=0)
    if drop:
        norms = np.abs(X).sum(axis=1)
        # lexsort uses the last key as primary: norm descending, then index descending
        order = np.lexsort((-np.arange(n), -norms))
        keep = np.sort(order[drop:])
        X = X[keep]
        X = X - X.mean(axis=0)
    return X, data_stats(X)


@dataclass(frozen=True)
class SyntheticSpec:
    n: int
    d: int
    k_true: int
    spread: float = 0.1

    def __post_init__(self):
        if self.n < 1 or self.d < 1:
            raise ValueError("n and d must be positive")
        if self.k_true < 1:
            raise ValueError("k_true must be >= 1")
        if self.spread < 0:
            raise ValueError("spread must be >= 0")

    @classmethod
    def parse(cls, text: str) -> "SyntheticSpec":
        """Parse ``"n,d,k,spread"`` (spread optional)."""
        parts = [p.strip() for p in text.split(",")]
        if len(parts) not in (3, 4):
            raise ValueError(f"expected n,d,k[,spread], got {text!r}")
        spread = float(parts[3]) if len(parts) == 4 else 0.1
        return cls(int(parts[0]), int(parts[1]), int(parts[2]), spread)


def make_synthetic(spec: SyntheticSpec, seed: int, trim_fraction: float = 0.025) -> np.ndarray:
    """Equal-weight spherical Gaussian mixture, rescaled so that the data has
    l1 radius one after :func:`preprocess` with ``trim_fraction``.

    Component centers are uniform in ``[-1, 1]^d`` and ``spread`` is the
    per-coordinate standard deviation before rescaling.
    """
    rng = np.random.default_rng(seed)
    centers = rng.uniform(-1.0, 1.0, size=(spec.k_true, spec.d))
    labels = rng.integers(spec.k_true, size=spec.n)
    X = centers[labels] + spec.spread * rng.standard_normal((spec.n, spec.d))
    _, stats = preprocess(X, trim_fraction)
    if stats.radius > 0:
        X = X / stats.radius  # preprocessing commutes with scaling
    return X


@dataclass
class ExperimentConfig:
    k: int = 25
    T: int = 10
    m_list: Sequence[int] = (1000,)
    B_list: Sequence[float] = (0.0001, 0.001, 0.01, 0.1, 1.0, 3.0)
    lam: float = 0.5
    trim_fraction: float = 0.025
    repetitions: int = 50
    families: Sequence[str] = FAMILY_NAMES
    seed: int = 0
    input_path: str | None = None
    synthetic: SyntheticSpec | None = None
    output_path: str | None = None
    rho: float = DEFAULT_RHO

    def __post_init__(self):
        if isinstance(self.synthetic, dict):
            self.synthetic = SyntheticSpec(**self.synthetic)
        elif isinstance(self.synthetic, str):
            self.synthetic = SyntheticSpec.parse(self.synthetic)
        self.m_list = tuple(int(m) for m in self.m_list)
        self.B_list = tuple(float(b) for b in self.B_list)
        self.families = tuple(self.families)
        if (self.input_path is None) == (self.synthetic is None):
            raise ValueError("give exactly one of input_path and synthetic")
        if not self.families:
            raise ValueError("families must be non-empty")
        unknown = set(self.families) - set(FAMILY_NAMES)
        if unknown:
            raise ValueError(f"unknown families {sorted(unknown)}; choose from {FAMILY_NAMES}")
        if not self.m_list or min(self.m_list) < 1:
            raise ValueError("m_list must hold positive sample sizes")
        if not self.B_list or min(self.B_list) <= 0:
            raise ValueError("B_list must hold positive constants")
        if self.k < 1 or self.T < 1 or self.repetitions < 1:
            raise ValueError("k, T and repetitions must be positive")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lambda must lie in [0, 1], got {self.lam}")
        if not 0.0 <= self.trim_fraction < 1.0:
            raise ValueError(f"trim_fraction must lie in [0, 1), got {self.trim_fraction}")

    def load_data(self) -> np.ndarray:
        if self.synthetic is not None:
            return make_synthetic(self.synthetic, self.seed, self.trim_fraction)
        return load_csv(self.input_path)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["m_list"] = list(self.m_list)
        out["B_list"] = list(self.B_list)
        out["families"] = list(self.families)
        return out


@dataclass(frozen=True)
class RunRecord:
    """One repetition of one (family, B, m) cell.

    Failed or skipped runs carry a message in ``error`` and NaN results.
    """

    family: str
    B: float
    m: float
    seed: int
    epsilon: float
    cost: float
    realized_size: int
    wall_ms: float
    max_psi: float = float("nan")
    error: str = ""

    @property
    def ok(self) -> bool:
        return not self.error


@dataclass(frozen=True)
class SummaryRow:
    family: str
    B: float
    m: float
    epsilon: float
    cost_median: float
    cost_q25: float
    cost_q75: float
    reps: int
    failed: int = 0


def _lloyd_config(cfg: ExperimentConfig, B: float, stats: DataStats) -> LloydConfig:
    return LloydConfig.from_budget(B, cfg.T, stats.radius, stats.d, cfg.k, cfg.rho)


def family_epsilon(family: str, lloyd: LloydConfig, stats: DataStats, m: float, lam: float) -> float:
    """Realized epsilon of one cell from public quantities only.

    ``full`` and ``opt`` give the unsampled guarantee (the optimal sampler
    targets exactly that value); ``unif`` and ``core`` give the amplified
    guarantee of the mixture sampler with ``lam = 1`` and ``lam`` respectively.
    """
    if family in ("full", "opt"):
        return full_data_epsilon(lloyd)
    if family == "unif":
        return core_sampler_epsilon(lloyd, stats.n, m, 1.0, stats.mean_norm)
    if family == "core":
        return core_sampler_epsilon(lloyd, stats.n, m, lam, stats.mean_norm)
    raise ValueError(f"unknown family {family!r}")


def _rep_seed(seed: int, rep: int) -> int:
    # shared by every family, B and m so that comparisons use common randomness
    return int(np.random.SeedSequence([int(seed), int(rep)]).generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class _Cell:
    family: str
    B: float
    m: float
    epsilon: float
    skip: str = ""
    max_psi: float = float("nan")


def _plan(cfg: ExperimentConfig, X: np.ndarray, stats: DataStats):
    """Expand the sweep into cells; samplers are built once per cell."""
    cells = []
    samplers = {}
    for family in cfg.families:
        for B in cfg.B_list:
            lloyd = _lloyd_config(cfg, B, stats)
            if family == "full":
                cells.append(_Cell(family, B, float(stats.n), full_data_epsilon(lloyd)))
                continue
            if family == "opt":
                eps_star = full_data_epsilon(lloyd)
                try:
                    spec = make_optimal(lloyd_profile(lloyd), X, eps_star)
                except ValueError as exc:
                    cells.append(_Cell(family, B, float("nan"), eps_star, skip=f"skipped: {exc}"))
                    continue
                q = spec.solution.probabilities
                psi = amplify([lloyd.per_point_rate(v) / qi for v, qi in zip(np.abs(X).sum(axis=1), q)], q)
                m = round(spec.expected_size, 6)
                samplers[(family, B, m)] = spec
                cells.append(_Cell(family, B, m, eps_star, max_psi=float(np.max(psi))))
                continue
            for m in cfg.m_list:
                lam = 1.0 if family == "unif" else cfg.lam
                try:
                    spec = make_uniform(stats.n, m) if family == "unif" else make_coreset(stats, m, lam)
                    eps = family_epsilon(family, lloyd, stats, m, cfg.lam)
                except ValueError as exc:
                    cells.append(_Cell(family, B, float(m), float("nan"), skip=f"skipped: {exc}"))
                    continue
                samplers[(family, B, float(m))] = spec
                cells.append(_Cell(family, B, float(m), eps))
    return cells, samplers


# worker-side state; set once per process so the data is not re-sent per job
_STATE: dict = {}


def _init_worker(cfg, X, stats, samplers):
    _STATE.update(cfg=cfg, X=X, stats=stats, samplers=samplers)


def _run_one(cell: _Cell, rep: int) -> RunRecord:
    cfg, X, stats, samplers = _STATE["cfg"], _STATE["X"], _STATE["stats"], _STATE["samplers"]
    seed = _rep_seed(cfg.seed, rep)
    if cell.skip:
        return RunRecord(cell.family, cell.B, cell.m, seed, cell.epsilon, float("nan"), 0, 0.0, cell.max_psi, cell.skip)
    start = time.perf_counter()
    try:
        lloyd = _lloyd_config(cfg, cell.B, stats)
        if cell.family == "full":
            sample = WeightedDataset(np.ones(len(X)), X)
        else:
            sample = draw(samplers[(cell.family, cell.B, cell.m)], X, seed).items
        init = init_centers(sample.points, cfg.k, seed)
        centers = weighted_dp_lloyd(sample, init, lloyd, seed=seed)
        cost = kmeans_cost(X, centers) / len(X)
        error = ""
    except (ValueError, RuntimeError, FloatingPointError) as exc:
        cost, error = float("nan"), f"{type(exc).__name__}: {exc}"
        sample = WeightedDataset(np.ones(0), np.empty((0, X.shape[1])))
    wall_ms = (time.perf_counter() - start) * 1e3
    return RunRecord(cell.family, cell.B, cell.m, seed, cell.epsilon, cost, len(sample), wall_ms, cell.max_psi, error)


def _run_job(job):
    return _run_one(*job)


def _workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
    return max(1, n)


def run_experiment(cfg: ExperimentConfig, data=None) -> list[RunRecord]:
    """Run the full sweep and return one record per (cell, repetition).

    ``data`` overrides the config's data source (useful for tests). Records
    are ordered by family (as listed in the config), then ``B``, ``m`` and
    repetition, whatever the worker count.
    """
    raw = cfg.load_data() if data is None else np.asarray(data, dtype=float)
    X, stats = preprocess(raw, cfg.trim_fraction)
    too_big = [m for m in cfg.m_list if m > stats.n]
    if too_big and any(f in ("unif", "core") for f in cfg.families):
        raise ValueError(f"m values {too_big} exceed n = {stats.n} after trimming")
    if stats.mean_norm == 0.0 and any(f in ("core", "opt") for f in cfg.families):
        raise ValueError("all points coincide after centering; core and opt samplers are undefined")
    cells, samplers = _plan(cfg, X, stats)
    jobs = [(cell, rep) for cell in cells for rep in range(cfg.repetitions)]
    workers = _workers()
    if workers == 1:
        _init_worker(cfg, X, stats, samplers)
        return [_run_job(j) for j in jobs]
    # samplers hold closures, so workers rebuild the plan themselves
    with ProcessPoolExecutor(max_workers=workers, initializer=_init_from_config, initargs=(cfg, X, stats)) as pool:
        return list(pool.map(_run_job, jobs, chunksize=max(1, len(jobs) // (4 * workers))))


def _init_from_config(cfg, X, stats):
    _, samplers = _plan(cfg, X, stats)
    _init_worker(cfg, X, stats, samplers)


def aggregate(records: Iterable[RunRecord]) -> list[SummaryRow]:
    """Median and quartiles of cost per (family, B, m), in first-seen order.

    Quartiles use linear interpolation between order statistics. Failed runs
    are counted in ``failed`` and left out of the statistics.
    """
    groups: dict = {}
    for rec in records:
        groups.setdefault((rec.family, rec.B, rec.m), []).append(rec)
    rows = []
    for (family, B, m), recs in groups.items():
        good = np.array([r.cost for r in recs if r.ok], dtype=float)
        eps = next((r.epsilon for r in recs), float("nan"))
        if len(good):
            q25, med, q75 = np.quantile(good, [0.25, 0.5, 0.75], method=QUANTILE_METHOD)
        else:
            q25 = med = q75 = float("nan")
        rows.append(SummaryRow(family, B, m, eps, float(med), float(q25), float(q75), len(good), len(recs) - len(good)))
    return rows


def write_summary(rows: Sequence[SummaryRow], path) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(SUMMARY_HEADER)
        for r in rows:
            out.writerow([r.family, repr(r.B), repr(r.m), repr(r.epsilon), repr(r.cost_median),
                          repr(r.cost_q25), repr(r.cost_q75), r.reps])


def write_records(records: Sequence[RunRecord], path) -> None:
    names = [f.name for f in fields(RunRecord)]
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(names)
        for rec in records:
            out.writerow([getattr(rec, n) for n in names])


def write_metadata(cfg: ExperimentConfig, records: Sequence[RunRecord], path, stats: DataStats | None = None) -> None:
    from . import __version__

    skipped = sorted({(r.family, r.B, r.m, r.error) for r in records if r.error.startswith("skipped")})
    meta = {
        "config": cfg.to_dict(),
        "version": __version__,
        "repetition_seeds": [_rep_seed(cfg.seed, rep) for rep in range(cfg.repetitions)],
        "quantile_method": QUANTILE_METHOD,
        "epsilon_uses": "n, radius and mean l1 norm of the data after trimming",
        "opt_m": "expected sample size of the optimal sampler; the m list does not apply",
        "full_m": "n after trimming",
        "non_private_steps": "centering, trimming, radius and mean l1 norm are computed from the data "
        "without noise; the reported epsilon covers sampling and Lloyd only",
        "stats": asdict(stats) if stats is not None else None,
        "skipped_cells": [list(s) for s in skipped],
        "failed_runs": sum(1 for r in records if r.error and not r.error.startswith("skipped")),
    }
    Path(path).write_text(json.dumps(meta, indent=2, default=float))


def save_outputs(cfg: ExperimentConfig, records: Sequence[RunRecord], out_path, stats: DataStats | None = None):
    """Write ``out_path`` (summary), ``*.runs.csv`` and ``*.meta.json``."""
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    write_summary(aggregate(records), out_path)
    stem = out_path.with_suffix("")
    write_records(records, f"{stem}.runs.csv")
    write_metadata(cfg, records, f"{stem}.meta.json", stats)
    return out_path
