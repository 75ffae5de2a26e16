"""Command-line entry points.

Subcommands: ``suite gen`` / ``suite validate``, ``train``, ``sample``,
``sweep`` and ``report``.  Exit codes: 0 on success, 1 on usage or
configuration errors (including invalid suites), 2 on runtime failures.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys

from .conditioning import block_split, constant_schedule, step_switch
from .diffusion import SamplerConfig, build_schedule, sample
from .harness import (
    ConfigurationError,
    aggregate,
    backend_for_record,
    load_sweep_config,
    read_runs_csv,
    run_sweep,
)
from .metrics import evaluate
from .neural import NeuralDenoiser, TrainConfig, init_model, load_checkpoint, save_checkpoint, train
from .report import emit_report
from .worldgen import (
    condition_of,
    gaussian_of,
    generate_suite,
    mixture_data_sampler,
    read_suite,
    validate_suite,
    write_suite,
)

__all__ = ["main", "build_parser"]


class _ArgumentParser(argparse.ArgumentParser):
    """argparse exits with 2 on usage errors; the contract reserves 2 for
    runtime failures, so route usage problems to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _ratio(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError(f"ratio must lie in [0, 1], got {text}")
    return value


def _grid(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must be comma-separated numbers, got {text!r}")


def _read_suite_checked(path: str):
    if not os.path.exists(path):
        raise ConfigurationError(f"suite file not found: {path}")
    try:
        return read_suite(path)
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from exc


# ---------------------------------------------------------------------------
# suite gen / suite validate

def _cmd_suite_gen(args) -> int:
    records = generate_suite(args.seed)
    report = validate_suite(records, strict_counts=args.strict_table1)
    if not report.ok:  # would mean the generator itself is broken
        for line in report.lines():
            print(line, file=sys.stderr)
        return 2
    write_suite(records, args.out)
    print(f"wrote {len(records)} records to {args.out}")
    return 0


def _cmd_suite_validate(args) -> int:
    if not os.path.exists(args.file):
        raise ConfigurationError(f"suite file not found: {args.file}")
    report = validate_suite(args.file, strict_counts=args.strict_table1)
    for line in report.lines():
        print(line)
    return 0 if report.ok else 1


# ---------------------------------------------------------------------------
# train

_TRAIN_DEFAULTS = {
    "suite": None,
    "suite_seed": 0,
    "conditions": ["event1", "event2", "concat"],
    "frames": 16,
    "sigma": 0.5,
    "w_mix": 0.5,
    "hidden": 64,
    "n_blocks": 8,
    "t_emb_dim": 16,
    "init_seed": 0,
    "diffusion_steps": 50,
    "beta_min": 1e-4,
    "beta_max": 0.02,
    "learning_rate": 1e-3,
    "beta1": 0.9,
    "beta2": 0.999,
    "eps": 1e-8,
    "batch_size": 128,
    "steps": 20_000,
    "seed": 0,
    "ema_decay": None,
}


def _load_train_config(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            loaded = json.load(fh)
    except OSError as exc:
        raise ConfigurationError(f"cannot read config file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(loaded, dict):
        raise ConfigurationError("config file must hold a key-value object")
    unknown = set(loaded) - set(_TRAIN_DEFAULTS)
    if unknown:
        raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
    config = dict(_TRAIN_DEFAULTS)
    config.update(loaded)
    return config


def _cmd_train(args) -> int:
    config = _load_train_config(args.config)
    if config["suite"] is not None:
        records = _read_suite_checked(config["suite"])
    else:
        records = generate_suite(config["suite_seed"])
    if not records:
        raise ConfigurationError("the prompt suite is empty")
    bad = set(config["conditions"]) - {"event1", "event2", "concat"}
    if bad:
        raise ConfigurationError(f"unknown condition kinds: {sorted(bad)}")

    d = records[0].feature_dim
    frames = int(config["frames"])
    dim = frames * (2 + 2 * d)
    try:
        sched = build_schedule(int(config["diffusion_steps"]), config["beta_min"], config["beta_max"])
        pairs = [
            (condition_of(r, w), gaussian_of(r, w, frames, config["sigma"], config["w_mix"]))
            for r in records
            for w in config["conditions"]
        ]
        sampler = mixture_data_sampler(pairs)
        model = init_model(
            dim,
            hidden=int(config["hidden"]),
            n_blocks=int(config["n_blocks"]),
            t_emb_dim=int(config["t_emb_dim"]),
            cond_width=3 + 2 * d,
            seed=int(config["init_seed"]),
        )
        train_cfg = TrainConfig(
            learning_rate=config["learning_rate"],
            beta1=config["beta1"],
            beta2=config["beta2"],
            eps=config["eps"],
            batch_size=int(config["batch_size"]),
            steps=int(config["steps"]),
            seed=int(config["seed"]),
            ema_decay=config["ema_decay"],
        )
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(str(exc)) from exc

    model, trace = train(model, sampler, train_cfg, sched)
    save_checkpoint(model, args.out)
    if trace:
        print(
            f"trained {train_cfg.steps} steps: loss {trace[0][1]:.4f} -> {trace[-1][1]:.4f}"
        )
    print(f"wrote checkpoint to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# sample

def _write_trajectory_csv(path: str, traj) -> None:
    n_frames, frame_dim = traj.shape
    d = (frame_dim - 2) // 2
    header = (
        ["frame", "pos_x", "pos_y"]
        + [f"identity_{i}" for i in range(d)]
        + [f"background_{i}" for i in range(d)]
    )
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for m in range(n_frames):
            writer.writerow([m] + [repr(float(v)) for v in traj[m]])


def _cmd_sample(args) -> int:
    records = _read_suite_checked(args.suite)
    by_id = {r.id: r for r in records}
    record = by_id.get(args.prompt_id)
    if record is None:
        raise ConfigurationError(f"prompt id {args.prompt_id!r} not in {args.suite}")

    sched = build_schedule(args.n_steps)
    frame_dim = 2 + 2 * record.feature_dim
    frames = args.frames
    if args.backend == "analytic":
        if args.mode == "block":
            raise ConfigurationError(
                "block mode needs a block-structured (checkpoint) backend"
            )
        backend = backend_for_record(record, sched, frames, args.sigma, args.w_mix)
        model = None
    else:
        if not os.path.exists(args.backend):
            raise ConfigurationError(f"checkpoint not found: {args.backend}")
        model = load_checkpoint(args.backend)
        if model.dim % frame_dim != 0:
            raise ConfigurationError(
                f"checkpoint dimension {model.dim} is not a multiple of the "
                f"frame dimension {frame_dim}"
            )
        frames = model.dim // frame_dim
        backend = NeuralDenoiser(model, sched, (frames, frame_dim))

    cond1 = condition_of(record, "event1")
    cond2 = condition_of(record, "event2")
    if args.mode == "step":
        schedule = step_switch(args.x, args.n_steps, cond1, cond2)
        assign = None
    else:
        assign = block_split(args.x, model.n_blocks, cond1, cond2)
        # conditioning enters through the assignment; the schedule only
        # pins the step count
        schedule = constant_schedule(args.n_steps, condition_of(record, "concat"))

    sampler_cfg = SamplerConfig(n_steps=args.n_steps, seed=args.seed)
    traj = sample(backend, schedule, sampler_cfg, block_assign=assign)
    metrics = evaluate(traj, *record.events)

    os.makedirs(args.out, exist_ok=True)
    _write_trajectory_csv(os.path.join(args.out, "trajectory.csv"), traj)
    payload = {
        "prompt_id": record.id,
        "category": record.category,
        "view": record.view,
        "mode": args.mode,
        "x": args.x,
        "backend": args.backend,
        "seed": args.seed,
        "n_steps": args.n_steps,
        "frames": frames,
        "metrics": dataclasses.asdict(metrics),
    }
    with open(os.path.join(args.out, "metrics.json"), "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote trajectory.csv and metrics.json to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# sweep / report

def _cmd_sweep(args) -> int:
    cfg = load_sweep_config(
        args.config,
        mode=args.mode,
        grid=args.grid,
        backend=args.backend,
        suite=args.suite,
        suite_seed=args.suite_seed,
        repeats=args.repeats,
        base_seed=args.base_seed,
        out_dir=args.out_dir,
        workers=args.workers,
        n_steps=args.n_steps,
        frames=args.frames,
        sigma=args.sigma,
        w_mix=args.w_mix,
        guidance_scale=args.guidance_scale,
    )
    records = run_sweep(cfg)
    emit_report(aggregate(records), cfg.out_dir)
    failed = sum(1 for r in records if r.metrics is None)
    note = f" ({failed} failed)" if failed else ""
    print(f"{len(records)} runs{note}; results in {cfg.out_dir}")
    return 0


def _cmd_report(args) -> int:
    if not os.path.exists(args.runs):
        raise ConfigurationError(f"runs file not found: {args.runs}")
    try:
        records = read_runs_csv(args.runs)
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from exc
    emit_report(aggregate(records), args.out)
    print(f"report for {len(records)} runs written to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(
        prog="turnpoint",
        description="Conditional-diffusion probing workbench for dual-event prompts.",
    )
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    suite = sub.add_parser("suite", help="generate or validate prompt suites")
    suite_sub = suite.add_subparsers(dest="suite_command", metavar="ACTION")

    gen = suite_sub.add_parser("gen", help="generate a suite file")
    gen.add_argument("--seed", type=int, required=True, help="generation seed")
    gen.add_argument("--out", required=True, help="output JSONL path")
    gen.add_argument(
        "--strict-table1",
        action="store_true",
        help="also pin the fixed per-category counts",
    )
    gen.set_defaults(func=_cmd_suite_gen)

    val = suite_sub.add_parser("validate", help="validate a suite file")
    val.add_argument("file", help="suite JSONL path")
    val.add_argument(
        "--strict-table1",
        action="store_true",
        help="also pin the fixed per-category counts",
    )
    val.set_defaults(func=_cmd_suite_validate)

    tr = sub.add_parser("train", help="train a denoiser and save a checkpoint")
    tr.add_argument("--config", required=True, help="JSON training config")
    tr.add_argument("--out", required=True, help="checkpoint output path")
    tr.set_defaults(func=_cmd_train)

    sm = sub.add_parser("sample", help="sample one trajectory for a prompt")
    sm.add_argument("--prompt-id", required=True, help="record id inside the suite")
    sm.add_argument("--suite", required=True, help="suite JSONL path")
    sm.add_argument("--mode", choices=("step", "block"), required=True)
    sm.add_argument("--x", type=_ratio, required=True, help="split ratio in [0, 1]")
    sm.add_argument(
        "--backend",
        required=True,
        help="'analytic' or a checkpoint path",
    )
    sm.add_argument("--seed", type=int, required=True, help="sampler seed")
    sm.add_argument("--out", required=True, help="output directory")
    sm.add_argument("--n-steps", type=int, default=50, help="denoising steps")
    sm.add_argument("--frames", type=int, default=16, help="frames (analytic backend)")
    sm.add_argument("--sigma", type=float, default=0.5, help="data noise scale")
    sm.add_argument("--w-mix", type=float, default=0.5, help="concat mixture weight")
    sm.set_defaults(func=_cmd_sample)

    sw = sub.add_parser("sweep", help="run a sweep and write runs.csv plus a report")
    sw.add_argument("--config", help="JSON sweep config; flags override")
    sw.add_argument("--mode", choices=("step_switch", "block_split", "qualitative"))
    sw.add_argument("--grid", type=_grid, help="comma-separated split ratios")
    sw.add_argument("--backend", help="'analytic' or a checkpoint path")
    sw.add_argument("--suite", help="suite JSONL path")
    sw.add_argument("--suite-seed", type=int, help="seed when generating the suite")
    sw.add_argument("--repeats", type=int, help="repeats per (prompt, ratio)")
    sw.add_argument("--base-seed", type=int, help="base seed for run-seed derivation")
    sw.add_argument("--out-dir", help="output directory")
    sw.add_argument("--workers", type=int, help="parallel worker processes")
    sw.add_argument("--n-steps", type=int, help="denoising steps")
    sw.add_argument("--frames", type=int, help="frames per trajectory")
    sw.add_argument("--sigma", type=float, help="data noise scale")
    sw.add_argument("--w-mix", type=float, help="concat mixture weight")
    sw.add_argument("--guidance-scale", type=float, help="guidance strength")
    sw.set_defaults(func=_cmd_sweep)

    rp = sub.add_parser("report", help="aggregate a runs.csv into charts and a summary")
    rp.add_argument("--runs", required=True, help="runs.csv path")
    rp.add_argument("--out", required=True, help="output directory")
    rp.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not hasattr(args, "func"):
        parser.print_usage(sys.stderr)
        return 1
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # anything unexpected is a runtime failure
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
