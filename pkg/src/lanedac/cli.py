"""Command line entry point.

    lanedac fit-toy     --objective dac --hypotheses 8 --seed 0 1 2 --out runs/toy
    lanedac train-cpi   --config cpi.yaml --out runs/cpi
    lanedac train-lanes --lambda1 0.5 --out runs/lanes
    lanedac eval        runs/lanes [--filter-bad-anchors 3.0]
    lanedac plot        runs/cpi --metric emd

Every run directory gets ``metrics.csv``, ``report.json``, ``manifest.json``,
SVG figures and JSON checkpoints. ``metrics.csv`` and ``report.json`` depend
only on the config and seeds; wall-clock and git state go to the manifest.
Input errors (missing files, bad config, checkpoint mismatch) exit with 2.
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .alan import load_model, mlp_from_dict, mlp_to_dict, model_from_dict, model_to_dict
from .config import ConfigError, ExperimentConfig, config_from_dict, config_hash, config_to_dict, load_config
from .config import replace_path
from .experiments import (
    evaluate_cpi,
    evaluate_toy,
    lane_data,
    run_toy,
    train_cpi,
    train_lane_variant,
)
from .lanes import evaluate_lanes, predict_anchors
from .metrics import MetricReport, reports_to_csv, reports_to_json
from .svgplot import PALETTE, Figure, bar_chart

MANIFEST_FORMAT = "lanedac-manifest/1"
TOY_FORMAT = "lanedac-toy/1"
CPI_FORMAT = "lanedac-cpi/1"


class InputError(Exception):
    """Bad user input; reported on stderr with exit code 2."""


# ---------------------------------------------------------------- io


def write_atomic(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def git_describe() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=10,
        )
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return out.stdout.strip() if out.returncode == 0 and out.stdout.strip() else "unknown"


def _read_json(path: Path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise InputError(f"no such file: {path}") from None
    except json.JSONDecodeError as e:
        raise InputError(f"{path}: not valid JSON ({e})") from None


def _write_json(path: Path, doc) -> None:
    write_atomic(path, json.dumps(doc, sort_keys=True) + "\n")


def write_outputs(out: Path, command: str, cfg: ExperimentConfig, reports, checkpoints, started: float,
                  argv, extra_meta=None) -> None:
    meta = {"command": command, "config_hash": config_hash(cfg), "version": __version__}
    if extra_meta:
        meta.update(extra_meta)
    write_atomic(out / "metrics.csv", reports_to_csv(reports))
    write_atomic(out / "report.json", reports_to_json(reports, **meta))
    manifest = {
        "format": MANIFEST_FORMAT,
        "command": command,
        "argv": list(argv),
        "config": config_to_dict(cfg),
        "config_hash": config_hash(cfg),
        "seeds": list(cfg.seeds),
        "git_describe": git_describe(),
        "version": __version__,
        "wall_clock_s": round(time.time() - started, 3),
        "finished_at": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "results": [r.to_dict() for r in reports],
        "checkpoints": checkpoints,
    }
    if extra_meta:
        manifest.update(extra_meta)
    write_atomic(out / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _map(fn, jobs, n_jobs: int):
    """Ordered map, in worker processes when ``n_jobs > 1``."""
    if n_jobs <= 1 or len(jobs) <= 1:
        return [fn(*j) for j in jobs]
    with ProcessPoolExecutor(max_workers=n_jobs) as ex:
        return list(ex.map(fn, *zip(*jobs)))


# ---------------------------------------------------------------- config


def resolve_config(args) -> ExperimentConfig:
    """Config file (if any) with command line flags applied on top."""
    if getattr(args, "config", None):
        try:
            cfg = load_config(args.config)
        except FileNotFoundError:
            raise InputError(f"no such config file: {args.config}") from None
    else:
        cfg = ExperimentConfig()
    overrides = []
    if args.objective is not None:
        overrides += [("objective.name", args.objective), ("variants", (args.objective,))]
    flag_paths = {
        "hypotheses": "hypotheses",
        "split_interval": "objective.split_interval",
        "eps": "objective.eps",
        "lambda1": "lambda1",
        "lambda2": "lambda2",
        "out": "out",
    }
    for flag, path in flag_paths.items():
        v = getattr(args, flag, None)
        if v is not None:
            overrides.append((path, v))
    if args.seed is not None:
        overrides.append(("seeds", tuple(args.seed)))
    if getattr(args, "steps", None) is not None:
        overrides.append(("toy.steps", args.steps))
    if getattr(args, "iterations", None) is not None:
        key = "cpi.iterations" if args.command == "train-cpi" else "lanes.iterations"
        overrides.append((key, args.iterations))
    if getattr(args, "filter_bad_anchors", None) is not None:
        overrides.append(("lanes.filter_threshold", args.filter_bad_anchors))
    try:
        for path, v in overrides:
            cfg = replace_path(cfg, path, v)
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from None
    return cfg


# ---------------------------------------------------------------- figures


def toy_figure(run, title: str) -> str:
    fig = Figure(title=title)
    fig.scatter(run.eval_points[:1000], color="#bbbbbb", r=1.2, opacity=0.6, label="samples")
    fig.scatter(run.initial, color=PALETTE[0], r=3.0, opacity=0.7, label="initial")
    fig.scatter(run.fit.hypotheses, color=PALETTE[1], r=5.0, marker="cross", label="hypotheses")
    return fig.to_svg()


def lane_figure(model, sample, cfg: ExperimentConfig, title: str) -> str:
    fig = Figure(title=title)
    for lane in sample.lanes:
        fig.line(lane.points, color="#cccccc", width=6.0)
    fig.line(sample.to_world(sample.past), color="#000000", width=2.0, label="past")
    fig.line(sample.to_world(sample.future), color=PALETTE[2], width=2.0, label="ground truth")
    for i, (trajs, _) in enumerate(predict_anchors(model, sample, cfg.lanes.encoding)):
        color = PALETTE[(i + 3) % len(PALETTE)]
        for k, t in enumerate(trajs):
            fig.line(t, color=color, width=1.0, opacity=0.8, label=f"anchor {i}" if k == 0 else None)
    return fig.to_svg()


def metric_chart(reports, metric: str, title: str) -> str:
    groups: dict = {}
    for r in reports:
        v = getattr(r, metric)
        if v is not None:
            groups.setdefault(r.variant, []).append(v)
    labels = list(groups)
    return bar_chart(labels, [float(np.mean(groups[k])) for k in labels], title=title, ylabel=metric)


# ---------------------------------------------------------------- subcommands


def _toy_job(cfg: ExperimentConfig, variant: str, seed: int):
    return run_toy(cfg.objective_for(variant), cfg.hypotheses, seed, cfg.toy)


def cmd_fit_toy(args, argv) -> int:
    started = time.time()
    cfg = resolve_config(args)
    out = Path(cfg.out)
    jobs = [(cfg, v, s) for s in cfg.seeds for v in cfg.variants]
    runs = _map(_toy_job, jobs, args.jobs)
    reports, checkpoints = [], {}
    for (_, v, s), run in zip(jobs, runs):
        reports.append(run.report)
        name = f"toy_{v}_s{s}"
        _write_json(out / f"{name}.json", {
            "format": TOY_FORMAT,
            "variant": v,
            "seed": s,
            "initial": run.initial.tolist(),
            "hypotheses": run.fit.hypotheses.tolist(),
        })
        write_atomic(out / f"{name}.svg", toy_figure(run, f"{v}, M={cfg.hypotheses}, seed {s}"))
        checkpoints[f"{v}/{s}"] = f"{name}.json"
    write_outputs(out, "fit-toy", cfg, reports, checkpoints, started, argv)
    _summary(reports, ("oracle_fde", "emd", "spurious_count", "far_count"))
    return 0


def _cpi_job(cfg: ExperimentConfig, variant: str, seed: int):
    model, assign, sigma = train_cpi(cfg.objective_for(variant), cfg.hypotheses, seed, cfg.cpi)
    run = evaluate_cpi(model, assign, sigma, variant, seed, cfg.cpi)
    return run.report, model_to_dict(model), mlp_to_dict(assign), sigma


def cmd_train_cpi(args, argv) -> int:
    started = time.time()
    cfg = resolve_config(args)
    out = Path(cfg.out)
    jobs = [(cfg, v, s) for s in cfg.seeds for v in cfg.variants]
    reports, checkpoints = [], {}
    for (_, v, s), (rep, model, assign, sigma) in zip(jobs, _map(_cpi_job, jobs, args.jobs)):
        reports.append(rep)
        name = f"cpi_{v}_s{s}.json"
        _write_json(out / name, {"format": CPI_FORMAT, "model": model, "assign": assign, "sigma": sigma})
        checkpoints[f"{v}/{s}"] = name
    write_atomic(out / "cpi_fde.svg", metric_chart(reports, "oracle_fde", "oracle FDE"))
    write_atomic(out / "cpi_emd.svg", metric_chart(reports, "emd", "EMD"))
    write_outputs(out, "train-cpi", cfg, reports, checkpoints, started, argv)
    _summary(reports, ("oracle_fde", "emd", "nll"))
    return 0


def _lane_job(cfg: ExperimentConfig, seed: int):
    data = lane_data(seed, cfg.lanes)
    reports, models = [], {}
    for v in cfg.lane_variants:
        model = train_lane_variant(v, data, cfg.objective, cfg.hypotheses, seed, cfg.lanes, cfg.lambda1, cfg.lambda2)
        models[v] = model_to_dict(model)
        reports.extend(_lane_reports(model, data, cfg, v, seed))
    return reports, models


def _lane_reports(model, data, cfg: ExperimentConfig, variant: str, seed: int) -> list[MetricReport]:
    reps = evaluate_lanes(model, data.test, cfg.lanes.encoding, cfg.lanes.evaluation, "lanes", variant, seed)
    for r in reps.values():
        r.extra["n_before_filter"] = data.n_test_total
    return [reps[k] for k in ("top", "oracle", "bofa")]


def cmd_train_lanes(args, argv) -> int:
    started = time.time()
    cfg = resolve_config(args)
    out = Path(cfg.out)
    jobs = [(cfg, s) for s in cfg.seeds]
    reports, checkpoints = [], {}
    for (_, s), (reps, models) in zip(jobs, _map(_lane_job, jobs, args.jobs)):
        reports.extend(reps)
        for v, d in models.items():
            name = f"lanes_{v}_s{s}.json"
            _write_json(out / name, d)
            checkpoints[f"{v}/{s}"] = name
    write_atomic(out / "lanes_mfde.svg", metric_chart(reports, "mfde", "mFDE"))
    write_atomic(out / "lanes_offroad.svg", metric_chart(reports, "offroad_rate", "off-road rate"))
    s0 = cfg.seeds[0]
    data = lane_data(s0, cfg.lanes)
    if data.test:
        for v in cfg.lane_variants:
            model = model_from_dict(_read_json(out / checkpoints[f"{v}/{s0}"]))
            write_atomic(out / f"lanes_{v}_scene.svg", lane_figure(model, data.test[0], cfg, f"{v}, seed {s0}"))
    write_outputs(out, "train-lanes", cfg, reports, checkpoints, started, argv,
                  {"objective": cfg.objective.name})
    _summary(reports, ("made", "mfde", "miss_rate", "offroad_rate"))
    return 0


def _load_run(path: Path):
    path = Path(path)
    manifest_path = path / "manifest.json" if path.is_dir() else path
    manifest = _read_json(manifest_path)
    if manifest.get("format") != MANIFEST_FORMAT:
        raise InputError(f"{manifest_path}: unsupported manifest format {manifest.get('format')!r}")
    cfg = config_from_dict(manifest["config"])
    if config_hash(cfg) != manifest.get("config_hash"):
        raise InputError(f"{manifest_path}: config does not match its recorded hash")
    return manifest, cfg, manifest_path.parent


def _checkpoint(run_dir: Path, manifest: dict, key: str) -> dict:
    name = manifest["checkpoints"].get(key)
    if name is None:
        raise InputError(f"manifest has no checkpoint for {key}")
    return _read_json(run_dir / name)


def cmd_eval(args, argv) -> int:
    started = time.time()
    manifest, cfg, run_dir = _load_run(Path(args.run))
    command = manifest["command"]
    if args.filter_bad_anchors is not None:
        if command != "train-lanes":
            raise InputError("--filter-bad-anchors only applies to lane runs")
        try:
            cfg = replace_path(cfg, "lanes.filter_threshold", args.filter_bad_anchors)
        except ValueError as e:
            raise ConfigError(str(e)) from None
    out = Path(args.out) if args.out else run_dir / "eval"
    reports = []
    if command == "fit-toy":
        for s in cfg.seeds:
            for v in cfg.variants:
                ck = _checkpoint(run_dir, manifest, f"{v}/{s}")
                if ck.get("format") != TOY_FORMAT:
                    raise InputError(f"checkpoint for {v}/{s}: unsupported format {ck.get('format')!r}")
                h = np.asarray(ck["hypotheses"], dtype=float)
                if h.shape != (cfg.hypotheses, 2):
                    raise InputError(f"checkpoint for {v}/{s}: expected {cfg.hypotheses} 2-d hypotheses")
                reports.append(evaluate_toy(h, v, s, cfg.toy)[0])
    elif command == "train-cpi":
        for s in cfg.seeds:
            for v in cfg.variants:
                ck = _checkpoint(run_dir, manifest, f"{v}/{s}")
                if ck.get("format") != CPI_FORMAT:
                    raise InputError(f"checkpoint for {v}/{s}: unsupported format {ck.get('format')!r}")
                try:
                    model, assign = model_from_dict(ck["model"]), mlp_from_dict(ck["assign"])
                except (KeyError, ValueError) as e:
                    raise InputError(f"checkpoint for {v}/{s}: {e}") from None
                reports.append(evaluate_cpi(model, assign, float(ck["sigma"]), v, s, cfg.cpi).report)
    elif command == "train-lanes":
        for s in cfg.seeds:
            data = lane_data(s, cfg.lanes)
            for v in cfg.lane_variants:
                try:
                    model = load_model(run_dir / manifest["checkpoints"][f"{v}/{s}"])
                except (KeyError, ValueError) as e:
                    raise InputError(f"checkpoint for {v}/{s}: {e}") from None
                except FileNotFoundError as e:
                    raise InputError(f"no such file: {e.filename}") from None
                reports.extend(_lane_reports(model, data, cfg, v, s))
    else:
        raise InputError(f"cannot evaluate a {command!r} run")
    extra = {"objective": cfg.objective.name} if command == "train-lanes" else None
    write_outputs(out, command, cfg, reports, manifest["checkpoints"], started, argv, extra)
    _summary(reports, ("oracle_fde", "emd", "mfde", "offroad_rate"))
    return 0


def cmd_plot(args, argv) -> int:
    path = Path(args.run)
    report_path = path / "report.json" if path.is_dir() else path
    doc = _read_json(report_path)
    try:
        reports = [MetricReport(**r) for r in doc["reports"]]
    except (KeyError, TypeError) as e:
        raise InputError(f"{report_path}: not a report file ({e})") from None
    out = Path(args.out) if args.out else report_path.parent
    metrics = args.metric or [m for m in ("oracle_fde", "emd", "mfde", "offroad_rate", "spurious_count")
                              if any(getattr(r, m) is not None for r in reports)]
    for m in metrics:
        if m not in MetricReport.__dataclass_fields__:
            raise InputError(f"unknown metric {m!r}")
        write_atomic(out / f"plot_{m}.svg", metric_chart(reports, m, f"{doc.get('command', '')} {m}".strip()))
        print(out / f"plot_{m}.svg")
    return 0


def _summary(reports, metrics) -> None:
    for r in reports:
        cells = [f"{m}={getattr(r, m):.4g}" for m in metrics if getattr(r, m) is not None]
        print(f"{r.experiment:6s} {r.variant:18s} seed={r.seed}  " + "  ".join(cells))


# ---------------------------------------------------------------- parser


def _run_flags(p: argparse.ArgumentParser, lanes: bool = False) -> None:
    p.add_argument("--config", help="YAML config file; flags override its values")
    p.add_argument("--objective", choices=("wta", "rwta", "ewta", "dac"),
                   help="run only this objective variant")
    p.add_argument("--hypotheses", "-M", type=int, help="number of hypotheses M")
    p.add_argument("--split-interval", type=int, help="iterations per DAC level / EWTA halving")
    p.add_argument("--eps", type=float, help="RWTA residual weight")
    p.add_argument("--seed", type=int, nargs="+", help="one or more seeds")
    p.add_argument("--out", help="output directory")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    if lanes:
        p.add_argument("--lambda1", type=float)
        p.add_argument("--lambda2", type=float)
        p.add_argument("--filter-bad-anchors", type=float, metavar="METERS",
                       help="drop samples whose anchor is farther than this from the past")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lanedac", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit-toy", help="free hypotheses on the four-mode distribution")
    _run_flags(p)
    p.add_argument("--steps", type=int, help="optimizer steps")

    p = sub.add_parser("train-cpi", help="two-stage car/pedestrian experiment")
    _run_flags(p)
    p.add_argument("--iterations", type=int, help="stage-one iterations")

    p = sub.add_parser("train-lanes", help="lane-anchor ablation")
    _run_flags(p, lanes=True)
    p.add_argument("--iterations", type=int, help="training iterations per variant")

    p = sub.add_parser("eval", help="re-evaluate the checkpoints of a run")
    p.add_argument("run", help="run directory or its manifest.json")
    p.add_argument("--filter-bad-anchors", type=float, metavar="METERS")
    p.add_argument("--out", help="output directory (default RUN/eval)")

    p = sub.add_parser("plot", help="bar charts from a report.json")
    p.add_argument("run", help="run directory or report.json")
    p.add_argument("--metric", action="append", help="metric column, repeatable")
    p.add_argument("--out", help="output directory (default: next to the report)")
    return parser


COMMANDS = {
    "fit-toy": cmd_fit_toy,
    "train-cpi": cmd_train_cpi,
    "train-lanes": cmd_train_lanes,
    "eval": cmd_eval,
    "plot": cmd_plot,
}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    args = build_parser().parse_args(argv)
    for attr in ("objective", "hypotheses", "split_interval", "eps", "lambda1", "lambda2", "seed", "steps",
                 "iterations", "filter_bad_anchors", "config"):
        if not hasattr(args, attr):
            setattr(args, attr, None)
    try:
        return COMMANDS[args.command](args, argv)
    except (InputError, ConfigError) as e:
        print(f"lanedac: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
