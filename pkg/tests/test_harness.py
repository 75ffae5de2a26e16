"""Sweep harness: seed derivation, config loading, the runs.csv schema,
job planning/execution and aggregation."""

import csv

import numpy as np
import pytest

from turnpoint.conditioning import constant_schedule
from turnpoint.diffusion import SamplerConfig, build_schedule, sample
from turnpoint.harness import (
    METRIC_FIELDS,
    RUNS_CSV_COLUMNS,
    WORKERS_ENV_VAR,
    ConfigurationError,
    RunRecord,
    SweepConfig,
    _plan_jobs,
    _resolve_workers,
    aggregate,
    backend_for_record,
    derive_seed,
    fnv1a64,
    load_sweep_config,
    read_runs_csv,
    run_sweep,
    write_runs_csv,
)
from turnpoint.metrics import MetricsRecord, evaluate
from turnpoint.worldgen import condition_of, generate_suite


def small_cfg(tmp_path, **kw):
    kw.setdefault("grid", (0.0, 1.0))
    kw.setdefault("repeats", 1)
    kw.setdefault("n_steps", 5)
    kw.setdefault("frames", 8)
    kw.setdefault("out_dir", str(tmp_path / "out"))
    return SweepConfig(**kw)


def metrics_with(ta1=0.5, turning_frame=3):
    return MetricsRecord(
        ta1=ta1, ta2=0.6, ta_mean=(ta1 + 0.6) / 2, ic=0.9, bc=0.8,
        turning_frame=turning_frame, occupancy2=0.4,
    )


def record_with(run_id="r0", x=0.5, category="General", metrics="default",
                setting=None, mode="step_switch", error=None):
    if metrics == "default":
        metrics = metrics_with()
    return RunRecord(
        run_id=run_id, mode=mode, category=category, prompt_id="p1",
        view="third", x=x, setting=setting, seed=7, metrics=metrics,
        wall_time_ms=12, error=error,
    )


# ---------------------------------------------------------------------------
# seeds


class TestSeedDerivation:
    def test_fnv1a64_reference_vectors(self):
        # published FNV-1a 64-bit test vectors
        assert fnv1a64(b"") == 0xCBF29CE484222325
        assert fnv1a64(b"a") == 0xAF63DC4C8601EC8C
        assert fnv1a64(b"foobar") == 0x85944171F73967E8

    def test_derive_seed_matches_documented_key(self):
        want = fnv1a64(b"11|mo-003|4|2|0")
        assert derive_seed(11, "mo-003", 4, 2) == want
        assert derive_seed(11, "mo-003", 4, 2, 0) == want

    def test_derive_seed_sensitivity(self):
        base = derive_seed(1, "p", 0, 0)
        assert derive_seed(2, "p", 0, 0) != base
        assert derive_seed(1, "q", 0, 0) != base
        assert derive_seed(1, "p", 1, 0) != base
        assert derive_seed(1, "p", 0, 1) != base
        assert derive_seed(1, "p", 0, 0, 3) != base


# ---------------------------------------------------------------------------
# configuration


class TestSweepConfig:
    def test_defaults(self):
        cfg = SweepConfig()
        assert cfg.grid == tuple(i / 10 for i in range(11))
        assert cfg.repeats == 3 and cfg.workers == 1
        assert cfg.backend == "analytic"

    @pytest.mark.parametrize(
        "kw",
        [
            {"mode": "both"},
            {"grid": ()},
            {"grid": (0.0, 1.5)},
            {"grid": (0.5, 0.5)},
            {"grid": (0.8, 0.2)},
            {"repeats": 0},
            {"workers": 0},
            {"mode": "block_split"},  # analytic backend cannot split blocks
            {"frames": 3},
            {"sigma": -1.0},
        ],
    )
    def test_rejects(self, kw):
        with pytest.raises(ConfigurationError):
            SweepConfig(**kw)

    def test_block_split_allowed_with_checkpoint(self):
        cfg = SweepConfig(mode="block_split", backend="model.ckpt")
        assert cfg.backend == "model.ckpt"


class TestLoadSweepConfig:
    def test_file_plus_overrides(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text('{"mode": "step_switch", "repeats": 5, "sigma": 0.25}')
        cfg = load_sweep_config(str(path), repeats=2, workers=None)
        assert cfg.repeats == 2  # override wins
        assert cfg.sigma == 0.25  # file value kept
        assert cfg.workers == 1  # None override ignored

    def test_no_file(self):
        cfg = load_sweep_config(None, repeats=4)
        assert cfg.repeats == 4

    def test_unknown_key(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text('{"repaets": 5}')
        with pytest.raises(ConfigurationError, match="repaets"):
            load_sweep_config(str(path))

    def test_bad_json(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text("{not json")
        with pytest.raises(ConfigurationError, match="not valid JSON"):
            load_sweep_config(str(path))

    def test_non_object_json(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text("[1, 2]")
        with pytest.raises(ConfigurationError, match="key-value object"):
            load_sweep_config(str(path))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigurationError, match="cannot read"):
            load_sweep_config(str(tmp_path / "nope.json"))


# ---------------------------------------------------------------------------
# runs.csv


class TestRunsCsv:
    def test_roundtrip(self, tmp_path):
        records = [
            record_with("a", x=0.1 + 0.2),
            record_with("b", metrics=metrics_with(turning_frame=None)),
            record_with("c", metrics=None, error="ValueError: boom"),
            record_with("d", setting=3, mode="qualitative"),
        ]
        path = tmp_path / "runs.csv"
        write_runs_csv(records, path)
        back = read_runs_csv(path)
        assert len(back) == 4
        # the error text is diagnostic only and is not persisted
        for orig, rec in zip(records, back):
            assert rec == RunRecord(**{**orig.__dict__, "error": None})
        assert back[0].x == 0.1 + 0.2  # repr round-trips exactly
        assert back[2].metrics is None

    def test_header_written_exactly(self, tmp_path):
        path = tmp_path / "runs.csv"
        write_runs_csv([], path)
        with open(path, newline="") as fh:
            header = next(csv.reader(fh))
        assert header == list(RUNS_CSV_COLUMNS)
        assert len(header) == 16

    def test_failed_run_has_empty_metric_cells(self, tmp_path):
        path = tmp_path / "runs.csv"
        write_runs_csv([record_with(metrics=None)], path)
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[1][8:15] == [""] * 7

    def test_read_rejects_wrong_header(self, tmp_path):
        path = tmp_path / "runs.csv"
        path.write_text("run_id,mode\nx,y\n")
        with pytest.raises(ValueError, match="header"):
            read_runs_csv(path)

    def test_read_rejects_short_row(self, tmp_path):
        path = tmp_path / "runs.csv"
        path.write_text(",".join(RUNS_CSV_COLUMNS) + "\na,b,c\n")
        with pytest.raises(ValueError, match="malformed"):
            read_runs_csv(path)


# ---------------------------------------------------------------------------
# planning and workers


class TestPlanning:
    def test_job_grid(self):
        records = generate_suite(0)[:2]
        cfg = SweepConfig(grid=(0.0, 0.5, 1.0), repeats=2)
        jobs = _plan_jobs(cfg, records)
        assert len(jobs) == 2 * 3 * 2
        first = jobs[0]
        assert first.run_id == f"step_switch-{records[0].id}-x00-r0"
        assert first.seed == derive_seed(0, records[0].id, 0, 0, 0)
        assert jobs[-1].x == 1.0 and jobs[-1].repeat == 1

    def test_qualitative_expands_settings(self):
        records = generate_suite(0)[:1]
        cfg = SweepConfig(mode="qualitative", grid=(0.5,), repeats=1)
        jobs = _plan_jobs(cfg, records)
        assert [j.setting for j in jobs] == [1, 2, 3, 4]
        assert jobs[2].run_id.endswith("-x00-r0-s3")
        assert len({j.seed for j in jobs}) == 4

    def test_workers_env_override(self, monkeypatch):
        cfg = SweepConfig(workers=2)
        monkeypatch.delenv(WORKERS_ENV_VAR, raising=False)
        assert _resolve_workers(cfg) == 2
        monkeypatch.setenv(WORKERS_ENV_VAR, "5")
        assert _resolve_workers(cfg) == 5
        monkeypatch.setenv(WORKERS_ENV_VAR, "zero")
        with pytest.raises(ConfigurationError):
            _resolve_workers(cfg)
        monkeypatch.setenv(WORKERS_ENV_VAR, "0")
        with pytest.raises(ConfigurationError):
            _resolve_workers(cfg)


# ---------------------------------------------------------------------------
# sweep execution


class TestRunSweep:
    def test_small_sweep_end_to_end(self, tmp_path):
        records = generate_suite(0)[:2]
        cfg = small_cfg(tmp_path)
        out = run_sweep(cfg, records=records)
        assert len(out) == 4  # 2 prompts x 2 ratios x 1 repeat
        assert all(r.metrics is not None and r.error is None for r in out)
        back = read_runs_csv(tmp_path / "out" / "runs.csv")
        assert [r.run_id for r in back] == [r.run_id for r in out]
        assert [r.metrics for r in back] == [r.metrics for r in out]

    def test_x_zero_equals_constant_second_condition(self, tmp_path):
        record = generate_suite(0)[0]
        cfg = small_cfg(tmp_path, grid=(0.0,))
        (run,) = run_sweep(cfg, records=[record])

        sched = build_schedule(cfg.n_steps, cfg.beta_min, cfg.beta_max)
        backend = backend_for_record(record, sched, cfg.frames, cfg.sigma, cfg.w_mix)
        schedule = constant_schedule(cfg.n_steps, condition_of(record, "event2"))
        traj = sample(
            backend, schedule,
            SamplerConfig(n_steps=cfg.n_steps, seed=run.seed),
        )
        want = evaluate(traj, record.events[0], record.events[1])
        assert run.metrics == want

    def test_failed_runs_recorded_not_fatal(self, tmp_path, monkeypatch):
        def boom(*a, **k):
            raise RuntimeError("metric exploded")

        monkeypatch.setattr("turnpoint.harness.evaluate", boom)
        records = generate_suite(0)[:1]
        cfg = small_cfg(tmp_path, grid=(0.5,))
        (run,) = run_sweep(cfg, records=records)
        assert run.metrics is None
        assert run.error == "RuntimeError: metric exploded"
        back = read_runs_csv(tmp_path / "out" / "runs.csv")
        assert back[0].metrics is None

    def test_rejects_duplicate_prompt_ids(self, tmp_path):
        record = generate_suite(0)[0]
        cfg = small_cfg(tmp_path)
        with pytest.raises(ConfigurationError, match="duplicate"):
            run_sweep(cfg, records=[record, record])

    def test_rejects_empty_suite(self, tmp_path):
        with pytest.raises(ConfigurationError, match="empty"):
            run_sweep(small_cfg(tmp_path), records=[])

    def test_missing_checkpoint_path(self, tmp_path):
        cfg = small_cfg(tmp_path, backend=str(tmp_path / "ghost.ckpt"))
        with pytest.raises(ConfigurationError, match="checkpoint not found"):
            run_sweep(cfg, records=generate_suite(0)[:1])

    def test_parallel_matches_serial(self, tmp_path, monkeypatch):
        records = generate_suite(0)[:1]
        serial = run_sweep(
            small_cfg(tmp_path / "s", n_steps=3, frames=4), records=records
        )
        monkeypatch.setenv(WORKERS_ENV_VAR, "2")
        parallel = run_sweep(
            small_cfg(tmp_path / "p", n_steps=3, frames=4), records=records
        )
        strip = lambda r: RunRecord(**{**r.__dict__, "wall_time_ms": 0})
        assert [strip(r) for r in serial] == [strip(r) for r in parallel]


# ---------------------------------------------------------------------------
# aggregation


class TestAggregate:
    def test_mean_and_population_std(self):
        rows = aggregate(
            [
                record_with("a", metrics=metrics_with(ta1=0.2)),
                record_with("b", metrics=metrics_with(ta1=0.8)),
            ]
        )
        assert len(rows) == 1
        row = rows[0]
        assert (row.mode, row.category, row.x, row.setting) == (
            "step_switch", "General", 0.5, None,
        )
        assert row.n == 2
        mean, std = row.stats["ta1"]
        assert mean == pytest.approx(0.5)
        assert std == pytest.approx(0.3)  # population, not sample, std

    def test_permutation_invariant(self):
        records = [
            record_with("a", x=0.2, metrics=metrics_with(ta1=0.1)),
            record_with("b", x=0.2, metrics=metrics_with(ta1=0.9)),
            record_with("c", x=0.8, category="ComplexPlot"),
        ]
        assert aggregate(records) == aggregate(records[::-1])

    def test_failed_runs_skipped(self):
        rows = aggregate(
            [
                record_with("a"),
                record_with("b", metrics=None, error="ValueError: x"),
            ]
        )
        assert rows[0].n == 1

    def test_turning_frame_none_handling(self):
        all_none = aggregate(
            [
                record_with("a", metrics=metrics_with(turning_frame=None)),
                record_with("b", metrics=metrics_with(turning_frame=None)),
            ]
        )
        assert all_none[0].stats["turning_frame"] is None
        mixed = aggregate(
            [
                record_with("a", metrics=metrics_with(turning_frame=None)),
                record_with("b", metrics=metrics_with(turning_frame=7)),
            ]
        )
        assert mixed[0].stats["turning_frame"] == (7.0, 0.0)

    def test_sorted_output_keys(self):
        records = [
            record_with("a", x=0.9),
            record_with("b", x=0.1),
            record_with("c", x=0.1, category="ComplexPlot"),
            record_with("d", x=0.5, mode="qualitative", setting=2),
            record_with("e", x=0.5, mode="qualitative", setting=1),
        ]
        keys = [(r.mode, r.category, r.x, r.setting) for r in aggregate(records)]
        assert keys == sorted(
            keys, key=lambda k: (k[0], k[1], k[2], k[3] if k[3] is not None else -1)
        )

    def test_stats_cover_all_metric_fields(self):
        rows = aggregate([record_with("a")])
        assert set(rows[0].stats) == set(METRIC_FIELDS)
