"""Command-line interface.

Commands: simulate (one pipeline run), sweep (grid of runs with resume),
verify (behavioral checks), plot (frontier SVG), frontier (frontier CSV).

Exit codes: 0 success, 2 configuration/usage error, 3 numeric failure
(divergence or a failed check).  The output directory defaults to the
STAGELAB_OUT environment variable, then ./stagelab-out.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from concurrent.futures import ThreadPoolExecutor

from .checks import run_all_checks
from .config import ExperimentConfig, load_config
from .errors import ConfigError, StagelabError, TrainingDiverged
from .frontier import pareto_front, points_from_records
from .network import train
from .pipeline import (
    CSV_COLUMNS,
    PipelineRun,
    continue_from_pretrained,
    make_run_id,
    plan_key,
    run_pipeline,
    stage_training_distribution,
)
from .records import (
    existing_run_ids,
    format_float,
    pipeline_run_record,
    read_records,
    stable_hash,
    write_records,
)
from .svgplot import render_frontier_svg

RUNS_FILE = "runs.jsonl"
SWEEP_CSV = "sweep.csv"
FRONTIER_SVG = "frontier.svg"
FRONTIER_CSV = "frontier.csv"


def _default_out() -> str:
    return os.environ.get("STAGELAB_OUT", "stagelab-out")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stagelab",
        description="Staged-training laboratory for two-layer linear networks.",
    )
    parser.add_argument("--config", metavar="PATH", default=None, help="INI config file")
    parser.add_argument("--out", metavar="DIR", default=None, help="output directory")
    parser.add_argument("--seed", type=int, default=0, help="seed recorded in run provenance")
    parser.add_argument("--threads", type=int, default=1, help="worker threads for sweeps")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", help="run one pretrain/posttrain/finetune pipeline")
    sub.add_parser("sweep", help="run the configured hyperparameter grid (resumable)")
    sub.add_parser("verify", help="run the behavioral checks and print a pass/fail table")
    sub.add_parser("plot", help="render the frontier SVG from recorded runs")
    sub.add_parser("frontier", help="export the per-method frontier as CSV")
    return parser


def _out_dir(args: argparse.Namespace) -> str:
    out = args.out if args.out is not None else _default_out()
    os.makedirs(out, exist_ok=True)
    return out


def _method_of(record: dict) -> str:
    return "mixed" if float(record.get("mix_fraction", 0.0)) > 0 else "unmixed"


def cmd_simulate(args: argparse.Namespace, cfg: ExperimentConfig) -> int:
    out = _out_dir(args)
    family = cfg.task_family()
    plans = cfg.stage_plans()
    init = cfg.init_state()
    run_id = make_run_id(*plans)
    run = run_pipeline(family, plans, init, run_id=run_id)
    record = pipeline_run_record(run, seed=args.seed, config_hash=stable_hash(cfg.canonical()))
    write_records(os.path.join(out, RUNS_FILE), [record])
    if run.metrics is None:
        print(f"run {run.run_id}: diverged during {run.failed_stage}", file=sys.stderr)
        return 3
    print(f"run {run.run_id}")
    for key, value in run.metrics.as_record().items():
        print(f"  {key} = {format_float(float(value))}")
    return 0


def _sweep_tasks(cfg: ExperimentConfig):
    family = cfg.task_family()
    init = cfg.init_state()
    stage1, stage2, stage3 = cfg.sweep_plans()
    tasks = []
    for plan1 in stage1:
        for plan2 in stage2:
            for plan3 in stage3:
                tasks.append((plan1, plan2, plan3))
    return family, init, tasks


def cmd_sweep(args: argparse.Namespace, cfg: ExperimentConfig) -> int:
    out = _out_dir(args)
    family, init, tasks = _sweep_tasks(cfg)
    if not tasks:
        raise ConfigError("sweep grid is empty; every [sweep] list needs at least one value")
    runs_path = os.path.join(out, RUNS_FILE)
    done = existing_run_ids(runs_path)
    config_hash = stable_hash(cfg.canonical())

    # Stage-1 checkpoints depend only on the stage-1 plan; compute each once.
    stage1_cache: dict[tuple, object] = {}

    def pretrained_for(plan1):
        key = plan_key(plan1)
        if key not in stage1_cache:
            dist = stage_training_distribution(family, plan1)
            try:
                stage1_cache[key] = train(
                    init, dist, family.basis, plan1.train_config(), record_spectrum=False
                )[0]
            except TrainingDiverged as exc:
                stage1_cache[key] = exc
        return stage1_cache[key]

    todo = [
        (plan1, plan2, plan3)
        for plan1, plan2, plan3 in tasks
        if make_run_id(plan1, plan2, plan3) not in done
    ]
    for plan1, _, _ in todo:
        pretrained_for(plan1)  # fill the cache serially, it is shared below

    def execute(task) -> PipelineRun:
        plan1, plan2, plan3 = task
        run_id = make_run_id(plan1, plan2, plan3)
        pretrained = pretrained_for(plan1)
        if isinstance(pretrained, TrainingDiverged):
            return PipelineRun(
                run_id=run_id,
                plans=task,
                pretrained=None,
                posttrained=None,
                finetuned=None,
                metrics=None,
                failed_stage="pretrain",
                failure=str(pretrained),
            )
        return continue_from_pretrained(family, pretrained, task, run_id)

    if args.threads > 1 and todo:
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            new_runs = list(pool.map(execute, todo))
    else:
        new_runs = [execute(task) for task in todo]

    new_records = [pipeline_run_record(r, seed=args.seed, config_hash=config_hash) for r in new_runs]
    write_records(runs_path, new_records, append=True)

    # Regenerate the CSV from all records, in the sweep's enumeration order.
    by_id = {rec["run_id"]: rec for rec in read_records(runs_path)}
    with open(os.path.join(out, SWEEP_CSV), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for plan1, plan2, plan3 in tasks:
            rec = by_id.get(make_run_id(plan1, plan2, plan3))
            if rec is None or rec.get("L_im") is None:
                continue
            writer.writerow(
                [rec["run_id"]]
                + [format_float(float(rec[c])) for c in CSV_COLUMNS[1:6]]
                + [str(int(rec["steps3"]))]
                + [format_float(float(rec[c])) for c in CSV_COLUMNS[7:]]
            )
    completed = len(tasks) - len(todo)
    print(f"sweep: {len(new_runs)} new runs, {completed} already recorded, out={out}")
    failed = [r for r in new_runs if not r.succeeded]
    for r in failed:
        print(f"  diverged: {r.run_id} at stage {r.failed_stage}", file=sys.stderr)
    return 0


def cmd_verify(args: argparse.Namespace, cfg: ExperimentConfig) -> int:
    out = _out_dir(args)
    family = cfg.task_family()
    reports = run_all_checks(family, **cfg.verify_kwargs())
    table = []
    for report in reports:
        table.append(report.summary())
        if not report.passed:
            table.extend(f"    {note}" for note in report.notes)
    sys.stdout.write("\n".join(table) + "\n")
    with open(os.path.join(out, "verify.txt"), "w", encoding="utf-8") as fh:
        fh.write("\n\n".join(report.details() for report in reports) + "\n")
    return 0 if all(r.passed for r in reports) else 3


def _load_points(out: str, projection: str):
    runs_path = os.path.join(out, RUNS_FILE)
    if not os.path.exists(runs_path):
        raise ConfigError(f"no run records at {runs_path}; run 'sweep' or 'simulate' first")
    records = read_records(runs_path)
    by_method: dict[str, list] = {}
    for rec in records:
        pts = points_from_records([rec], projection)
        if pts:
            by_method.setdefault(_method_of(rec), []).extend(pts)
    if not by_method:
        raise ConfigError(f"no completed runs in {runs_path}")
    return by_method


def cmd_plot(args: argparse.Namespace, cfg: ExperimentConfig) -> int:
    out = _out_dir(args)
    projection = cfg.projection()
    by_method = _load_points(out, projection)
    svg = render_frontier_svg(by_method, projection=projection)
    path = os.path.join(out, FRONTIER_SVG)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(svg)
    print(f"wrote {path}")
    return 0


def cmd_frontier(args: argparse.Namespace, cfg: ExperimentConfig) -> int:
    out = _out_dir(args)
    projection = cfg.projection()
    by_method = _load_points(out, projection)
    path = os.path.join(out, FRONTIER_CSV)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["projection", "run_id", "x", "y", "on_front", "method"])
        for method in sorted(by_method):
            points = sorted(by_method[method], key=lambda p: (p.x, p.y, p.run_id))
            on_front = {(p.x, p.y, p.run_id) for p in pareto_front(points)}
            for p in points:
                flag = "true" if (p.x, p.y, p.run_id) in on_front else "false"
                writer.writerow(
                    [projection, p.run_id, format_float(p.x), format_float(p.y), flag, method]
                )
    print(f"wrote {path}")
    return 0


_COMMANDS = {
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "verify": cmd_verify,
    "plot": cmd_plot,
    "frontier": cmd_frontier,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        return _COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except StagelabError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
