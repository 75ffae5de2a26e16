"""Sweep harness: enumerate runs over a prompt suite and a ratio grid,
execute them (optionally in parallel), and aggregate the metrics.

Every run owns a seed derived by hashing its identity, so results are
independent of worker count and completion order; rows are written in
enumeration order and aggregation sorts before reducing.
"""

from __future__ import annotations

import csv
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields

import numpy as np

from .analytic import AnalyticDenoiser
from .conditioning import (
    block_split,
    constant_schedule,
    qualitative_settings,
    step_switch,
)
from .diffusion import NoiseSchedule, SamplerConfig, build_schedule, sample
from .metrics import MetricsRecord, evaluate
from .neural import NeuralDenoiser, load_checkpoint
from .worldgen import (
    PromptRecord,
    condition_of,
    embed_event,
    gaussian_of,
    generate_suite,
    read_suite,
)

__all__ = [
    "MODES",
    "METRIC_FIELDS",
    "RUNS_CSV_COLUMNS",
    "WORKERS_ENV_VAR",
    "ConfigurationError",
    "SweepConfig",
    "RunRecord",
    "AggregateRow",
    "fnv1a64",
    "derive_seed",
    "load_sweep_config",
    "backend_for_record",
    "run_sweep",
    "write_runs_csv",
    "read_runs_csv",
    "aggregate",
]

MODES = ("step_switch", "block_split", "qualitative")
METRIC_FIELDS = ("ta1", "ta2", "ta_mean", "ic", "bc", "turning_frame", "occupancy2")
RUNS_CSV_COLUMNS = (
    "run_id",
    "mode",
    "category",
    "prompt_id",
    "view",
    "x",
    "setting",
    "seed",
    "ta1",
    "ta2",
    "ta_mean",
    "ic",
    "bc",
    "turning_frame",
    "occupancy2",
    "wall_time_ms",
)
WORKERS_ENV_VAR = "TURNPOINT_WORKERS"


class ConfigurationError(ValueError):
    """Bad sweep/training configuration or startup input."""


def fnv1a64(data: bytes) -> int:
    """64-bit FNV-1a hash."""
    h = 0xCBF29CE484222325
    for byte in data:
        h ^= byte
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


def derive_seed(
    base_seed: int, prompt_id: str, x_index: int, repeat_index: int,
    setting_index: int = 0,
) -> int:
    """Stable per-run sampler seed.

    FNV-1a over the canonical byte string
    ``"{base_seed}|{prompt_id}|{x_index}|{repeat_index}|{setting_index}"``
    (UTF-8); ``setting_index`` is 0 outside qualitative mode.
    """
    key = f"{base_seed}|{prompt_id}|{x_index}|{repeat_index}|{setting_index}"
    return fnv1a64(key.encode("utf-8"))


def _default_grid() -> tuple[float, ...]:
    return tuple(i / 10 for i in range(11))


@dataclass(frozen=True)
class SweepConfig:
    mode: str = "step_switch"
    grid: tuple[float, ...] = field(default_factory=_default_grid)
    backend: str = "analytic"  # "analytic" or a checkpoint path
    suite: str | None = None  # suite file wins over suite_seed
    suite_seed: int = 0
    repeats: int = 3
    base_seed: int = 0
    out_dir: str = "sweep-out"
    workers: int = 1
    n_steps: int = 50
    sampler_kind: str = "ancestral"
    guidance_scale: float = 1.0
    frames: int = 16
    sigma: float = 0.5
    w_mix: float = 0.5
    beta_min: float = 1e-4
    beta_max: float = 0.02

    def __post_init__(self):
        object.__setattr__(self, "grid", tuple(float(x) for x in self.grid))
        if self.mode not in MODES:
            raise ConfigurationError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not self.grid:
            raise ConfigurationError("grid must contain at least one ratio")
        for x in self.grid:
            if not (np.isfinite(x) and 0.0 <= x <= 1.0):
                raise ConfigurationError(f"grid ratios must lie in [0, 1], got {x}")
        if any(b <= a for a, b in zip(self.grid, self.grid[1:])):
            raise ConfigurationError("grid ratios must increase strictly")
        if self.repeats < 1:
            raise ConfigurationError("repeats must be at least 1")
        if self.workers < 1:
            raise ConfigurationError("workers must be at least 1")
        if self.mode == "block_split" and self.backend == "analytic":
            raise ConfigurationError(
                "block_split mode needs a block-structured (checkpoint) backend"
            )
        if self.frames < 4:
            raise ConfigurationError("frames must be at least 4 for the metrics")
        if not (np.isfinite(self.sigma) and self.sigma >= 0.0):
            raise ConfigurationError("sigma must be finite and >= 0")


_SWEEP_KEYS = {f.name for f in fields(SweepConfig)}


def load_sweep_config(path: str | None = None, **overrides) -> SweepConfig:
    """Build a :class:`SweepConfig` from a JSON file plus overrides.

    The file is a flat object whose keys mirror the dataclass fields;
    ``None``-valued overrides are ignored so CLI flags can pass through.
    """
    data: dict = {}
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                loaded = json.load(fh)
        except OSError as exc:
            raise ConfigurationError(f"cannot read config file {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config file {path} is not valid JSON: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigurationError("config file must hold a key-value object")
        data.update(loaded)
    data.update({k: v for k, v in overrides.items() if v is not None})
    unknown = set(data) - _SWEEP_KEYS
    if unknown:
        raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
    try:
        return SweepConfig(**data)
    except TypeError as exc:
        raise ConfigurationError(str(exc)) from exc


@dataclass(frozen=True)
class RunRecord:
    run_id: str
    mode: str
    category: str
    prompt_id: str
    view: str
    x: float
    setting: int | None
    seed: int
    metrics: MetricsRecord | None
    wall_time_ms: int
    error: str | None = None  # kept programmatic; the CSV schema has no status column


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _record_to_row(rec: RunRecord) -> list[str]:
    m = rec.metrics
    return [
        rec.run_id,
        rec.mode,
        rec.category,
        rec.prompt_id,
        rec.view,
        _fmt(rec.x),
        _fmt(rec.setting),
        str(rec.seed),
        _fmt(m.ta1 if m else None),
        _fmt(m.ta2 if m else None),
        _fmt(m.ta_mean if m else None),
        _fmt(m.ic if m else None),
        _fmt(m.bc if m else None),
        _fmt(m.turning_frame if m else None),
        _fmt(m.occupancy2 if m else None),
        str(rec.wall_time_ms),
    ]


def write_runs_csv(records, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RUNS_CSV_COLUMNS)
        for rec in records:
            writer.writerow(_record_to_row(rec))


def read_runs_csv(path) -> list[RunRecord]:
    records = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != list(RUNS_CSV_COLUMNS):
            raise ValueError(f"unexpected runs.csv header in {path}")
        for row in reader:
            if len(row) != len(RUNS_CSV_COLUMNS):
                raise ValueError(f"malformed runs.csv row in {path}: {row}")
            metric_cells = row[8:15]
            if any(cell == "" for cell in metric_cells[:5]):
                metrics = None
            else:
                metrics = MetricsRecord(
                    ta1=float(row[8]),
                    ta2=float(row[9]),
                    ta_mean=float(row[10]),
                    ic=float(row[11]),
                    bc=float(row[12]),
                    turning_frame=int(row[13]) if row[13] != "" else None,
                    occupancy2=float(row[14]),
                )
            records.append(
                RunRecord(
                    run_id=row[0],
                    mode=row[1],
                    category=row[2],
                    prompt_id=row[3],
                    view=row[4],
                    x=float(row[5]),
                    setting=int(row[6]) if row[6] != "" else None,
                    seed=int(row[7]),
                    metrics=metrics,
                    wall_time_ms=int(row[15]),
                )
            )
    return records


def backend_for_record(
    record: PromptRecord,
    sched: NoiseSchedule,
    n_frames: int,
    sigma: float,
    w_mix: float = 0.5,
) -> AnalyticDenoiser:
    """Analytic backend with this prompt's three conditions registered."""
    frame_dim = 2 + 2 * record.feature_dim
    backend = AnalyticDenoiser(sched, (n_frames, frame_dim))
    for which in ("event1", "event2", "concat"):
        backend.register(
            condition_of(record, which),
            gaussian_of(record, which, n_frames, sigma, w_mix),
        )
    return backend


@dataclass(frozen=True)
class _Job:
    run_id: str
    prompt_id: str
    x: float
    x_index: int
    repeat: int
    setting: int | None
    seed: int


def _execute_job(job: _Job, cfg: SweepConfig, records_by_id, model) -> RunRecord:
    record = records_by_id[job.prompt_id]
    start = time.perf_counter()
    try:
        sched = build_schedule(cfg.n_steps, cfg.beta_min, cfg.beta_max)
        frame_dim = 2 + 2 * record.feature_dim
        if model is None:
            backend = backend_for_record(record, sched, cfg.frames, cfg.sigma, cfg.w_mix)
        else:
            backend = NeuralDenoiser(model, sched, (cfg.frames, frame_dim))
        e1, e2 = record.events
        cond1 = condition_of(record, "event1")
        cond2 = condition_of(record, "event2")
        assign = None
        if cfg.mode == "step_switch":
            schedule = step_switch(job.x, cfg.n_steps, cond1, cond2)
        elif cfg.mode == "block_split":
            # conditioning enters through the assignment only; the constant
            # schedule just pins the step count
            assign = block_split(job.x, model.n_blocks, cond1, cond2)
            schedule = constant_schedule(cfg.n_steps, condition_of(record, "concat"))
        else:
            schedules = qualitative_settings(
                job.x, embed_event(e1), embed_event(e2), cfg.n_steps
            )
            schedule = schedules[job.setting - 1]
        sampler_cfg = SamplerConfig(
            n_steps=cfg.n_steps,
            sampler_kind=cfg.sampler_kind,
            guidance_scale=cfg.guidance_scale,
            seed=job.seed,
        )
        traj = sample(backend, schedule, sampler_cfg, block_assign=assign)
        metrics = evaluate(traj, e1, e2)
        error = None
    except Exception as exc:  # failed runs are recorded, not fatal
        metrics = None
        error = f"{type(exc).__name__}: {exc}"
    wall_ms = int(round((time.perf_counter() - start) * 1000.0))
    return RunRecord(
        run_id=job.run_id,
        mode=cfg.mode,
        category=record.category,
        prompt_id=record.id,
        view=record.view,
        x=job.x,
        setting=job.setting,
        seed=job.seed,
        metrics=metrics,
        wall_time_ms=wall_ms,
        error=error,
    )


_WORKER_STATE: tuple | None = None


def _init_worker(cfg, records_by_id, model) -> None:
    global _WORKER_STATE
    _WORKER_STATE = (cfg, records_by_id, model)


def _run_in_worker(job: _Job) -> RunRecord:
    cfg, records_by_id, model = _WORKER_STATE
    return _execute_job(job, cfg, records_by_id, model)


def _plan_jobs(cfg: SweepConfig, records) -> list[_Job]:
    settings = (1, 2, 3, 4) if cfg.mode == "qualitative" else (None,)
    jobs = []
    for record in records:
        for x_index, x in enumerate(cfg.grid):
            for repeat in range(cfg.repeats):
                for setting in settings:
                    seed = derive_seed(
                        cfg.base_seed, record.id, x_index, repeat,
                        setting if setting is not None else 0,
                    )
                    run_id = f"{cfg.mode}-{record.id}-x{x_index:02d}-r{repeat}"
                    if setting is not None:
                        run_id += f"-s{setting}"
                    jobs.append(
                        _Job(run_id, record.id, x, x_index, repeat, setting, seed)
                    )
    return jobs


def _resolve_workers(cfg: SweepConfig) -> int:
    raw = os.environ.get(WORKERS_ENV_VAR)
    if raw is None:
        return cfg.workers
    try:
        workers = int(raw)
    except ValueError as exc:
        raise ConfigurationError(
            f"{WORKERS_ENV_VAR} must be an integer, got {raw!r}"
        ) from exc
    if workers < 1:
        raise ConfigurationError(f"{WORKERS_ENV_VAR} must be at least 1")
    return workers


def run_sweep(cfg: SweepConfig, records=None) -> list[RunRecord]:
    """Execute the sweep and stream ``runs.csv`` under ``cfg.out_dir``.

    Returns the run records in enumeration order (prompt, then ratio,
    then repeat, then setting), which is also the CSV row order
    regardless of worker count.
    """
    if records is None:
        if cfg.suite is not None:
            records = read_suite(cfg.suite)
        else:
            records = generate_suite(cfg.suite_seed)
    records = list(records)
    if not records:
        raise ConfigurationError("the prompt suite is empty")
    records_by_id = {r.id: r for r in records}
    if len(records_by_id) != len(records):
        raise ConfigurationError("the prompt suite contains duplicate ids")
    model = None
    if cfg.backend != "analytic":
        if not os.path.exists(cfg.backend):
            raise ConfigurationError(f"checkpoint not found: {cfg.backend}")
        model = load_checkpoint(cfg.backend)
        frame_dim = 2 + 2 * records[0].feature_dim
        if model.dim != cfg.frames * frame_dim:
            raise ConfigurationError(
                f"checkpoint dimension {model.dim} does not match "
                f"{cfg.frames} x {frame_dim} trajectories"
            )

    jobs = _plan_jobs(cfg, records)
    workers = _resolve_workers(cfg)
    os.makedirs(cfg.out_dir, exist_ok=True)
    out_path = os.path.join(cfg.out_dir, "runs.csv")
    results: list[RunRecord] = []
    with open(out_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RUNS_CSV_COLUMNS)
        if workers == 1:
            iterator = (_execute_job(job, cfg, records_by_id, model) for job in jobs)
            for rec in iterator:
                results.append(rec)
                writer.writerow(_record_to_row(rec))
        else:
            with ProcessPoolExecutor(
                max_workers=workers,
                initializer=_init_worker,
                initargs=(cfg, records_by_id, model),
            ) as pool:
                # map() yields in submission order, keeping output deterministic
                for rec in pool.map(_run_in_worker, jobs, chunksize=8):
                    results.append(rec)
                    writer.writerow(_record_to_row(rec))
    return results


@dataclass(frozen=True)
class AggregateRow:
    mode: str
    category: str
    x: float
    setting: int | None
    n: int
    stats: dict[str, tuple[float, float] | None]  # metric -> (mean, population std)


def aggregate(records) -> list[AggregateRow]:
    """Mean and population std per (mode, category, x, setting).

    Rows within a group are sorted by run id before reducing, so output
    is identical under any input permutation; failed runs are skipped.
    """
    groups: dict[tuple, list[RunRecord]] = {}
    for rec in records:
        if rec.metrics is None:
            continue
        key = (rec.mode, rec.category, rec.x, rec.setting)
        groups.setdefault(key, []).append(rec)
    rows = []
    for key in sorted(groups, key=lambda k: (k[0], k[1], k[2], k[3] if k[3] is not None else -1)):
        members = sorted(groups[key], key=lambda r: r.run_id)
        stats: dict[str, tuple[float, float] | None] = {}
        for metric in METRIC_FIELDS:
            values = [getattr(r.metrics, metric) for r in members]
            values = [v for v in values if v is not None]
            if not values:
                stats[metric] = None
                continue
            arr = np.asarray(values, dtype=np.float64)
            stats[metric] = (float(arr.mean()), float(arr.std()))
        mode, category, x, setting = key
        rows.append(AggregateRow(mode, category, x, setting, len(members), stats))
    return rows
