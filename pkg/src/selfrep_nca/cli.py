"""Command-line entry point: ``selfrep-nca <subcommand> ...``.

Subcommands: ``train``, ``lineage``, ``analyze``, ``render``, ``gradcheck``.
Global flags ``--seed``, ``--mode`` and ``--out-dir`` may appear before or
after the subcommand. Every subcommand writes ``manifest.json`` holding the
resolved configuration so a run can be repeated from it.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

from . import __version__
from .analysis import summarize
from .errors import CheckpointFormatError, InvalidArgument, TrainingDiverged
from .gradcheck import gradcheck, random_instance
from .io import (CheckpointMeta, RunConfig, load_array, load_checkpoint, load_lineage, load_run_config,
                 save_checkpoint, save_lineage, write_csv)
from .experiments import lineage_stream, resolve_task, training_config, update_mode
from .lineage import run_lineage
from .render import render_frames, render_heatmap, render_strip
from .rng import RngStream
from .rule import rollout_states
from .training import train


# ---------------------------------------------------------------- config resolution

def _load_config(path: str | None, args) -> RunConfig:
    config = load_run_config(path) if path else RunConfig()
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    if args.mode is not None:
        config = replace(config, update_mode=args.mode)
    return config


def _write_manifest(out_dir: Path, command: str, config: RunConfig, **extra) -> Path:
    manifest = {"command": command, "version": __version__, "seed": config.seed,
                "config": config.to_dict(), **extra}
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")
    return path


def _out_dir(args, default: str) -> Path:
    out = Path(args.out_dir or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------- subcommands

def cmd_train(args) -> int:
    config = _load_config(args.config, args)
    task = resolve_task(config)
    out = _out_dir(args, "runs/train")
    cfg = training_config(config, task)
    shape = task.targets[0].initial.shape
    _write_manifest(out, "train", config, grid_shape=list(shape))

    def checkpoint(step, net, record):
        if config.checkpoint_every and (step + 1) % config.checkpoint_every == 0:
            save_checkpoint(net, CheckpointMeta(step + 1, config.seed, shape), out / f"step_{step + 1:06d}.ckpt")

    t0 = time.perf_counter()
    try:
        result = train(cfg, on_step=checkpoint)
    except TrainingDiverged as err:
        save_checkpoint(err.last_good, CheckpointMeta(err.step, config.seed, shape), out / "last_good.ckpt")
        raise
    save_checkpoint(result.network, CheckpointMeta(config.total_training_steps, config.seed, shape),
                    out / "final.ckpt")
    rows = [[r.training_step, r.target_index, r.mean] for r in result.records]
    write_csv(out / "losses.csv", ["step", "target", "loss"], rows)
    head = min(100, len(result.records))
    tail = min(1000, len(result.records))
    print(f"trained {len(result.records)} steps in {time.perf_counter() - t0:.1f}s; "
          f"loss ratio (last {tail} / first {head}) = {result.loss_ratio(head, tail):.4f}")
    print(f"checkpoint: {out / 'final.ckpt'}")
    return 0


def cmd_lineage(args) -> int:
    config = _load_config(args.config, args)
    task = resolve_task(config)
    if task.geometry is None:
        raise InvalidArgument(f"task {task.name!r} has no eggs, so it has no lineages")
    net, meta = load_checkpoint(args.checkpoint, config.hidden_size)
    out = _out_dir(args, "runs/lineage")
    settings = config.lineage
    _write_manifest(out, "lineage", config, checkpoint=str(args.checkpoint))
    mode = update_mode(config)
    dna0 = task.founder_dna[0]
    for k in range(settings.n_lineages):
        rng = lineage_stream(config.seed + settings.seed, k)
        records = run_lineage(net, dna0, task.geometry, settings.n_generations, settings.growth_steps,
                              settings.division_steps, mode, rng)
        where = out / f"lineage_{k:02d}"
        save_lineage(records, where, {"lineage": k, "seed": config.seed + settings.seed,
                                      "mode": config.update_mode})
        if settings.render:
            render_frames(records, where / "adults", prefix="gen")
        status = "extinct" if not records[-1].viable else "complete"
        print(f"lineage {k}: {len(records)} generations ({status}) -> {where}")
    return 0


def cmd_analyze(args) -> int:
    config = _load_config(args.config, args)
    records, manifest = load_lineage(args.lineage_dir)
    if len(records) < 3:
        raise InvalidArgument(f"{args.lineage_dir}: need at least 3 generations, found {len(records)}")
    out = _out_dir(args, str(Path(args.lineage_dir) / "analysis"))
    s = summarize(records, config.analysis.stall_window, config.analysis.stall_threshold)
    for name, matrix, curve in (("dna", s.dna, s.dna_curve), ("phenotype", s.phenotype, s.phenotype_curve)):
        write_csv(out / f"drift_{name}_matrix.csv", ["i", "j", "mse"], matrix.entries())
        write_csv(out / f"drift_{name}_curve.csv", ["lag", "mean", "count"],
                  zip(curve.lags.tolist(), curve.means.tolist(), curve.counts.tolist()))
        render_heatmap(matrix.values, out / f"drift_{name}_heatmap.png", f"{name} drift", "MSE")
    corr = s.correlation
    write_csv(out / "correlation.csv", ["i", "j", "dna_mse", "phenotype_mse"],
              ([i, j, x, y] for (i, j), x, y in zip(corr.pairs, corr.dna_distances, corr.phenotype_distances)))
    report = {
        "generations": s.n_generations,
        "extinct": not records[-1].viable,
        "stall_lag": s.stall,
        "rank_trend_spearman": s.rank_trend,
        "pearson_r": corr.r,
        "max_dna_mse": s.max_dna_mse,
        "max_phenotype_mse": s.max_phenotype_mse,
        "fits": {f.model: {"a": f.a, "b": f.b, "r2": f.r2, "fit_range": list(f.fit_range),
                           "excluded_lags": f.excluded_lags}
                 for f in (s.exponential, s.linear) if f is not None},
    }
    (out / "fit_report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    lines = [f"{k}: {v}" for k, v in report.items() if k != "fits"]
    for model, fit in report["fits"].items():
        lines.append(f"{model}: a={fit['a']:.6g} b={fit['b']:.6g} r2={fit['r2']:.6f} "
                     f"lags {fit['fit_range'][0]}..{fit['fit_range'][1]}")
    (out / "fit_report.txt").write_text("\n".join(lines) + "\n")
    _write_manifest(out, "analyze", config, lineage_dir=str(args.lineage_dir), lineage=manifest)
    print("\n".join(lines))
    return 0


def cmd_render(args) -> int:
    config = _load_config(args.config, args)
    src = Path(args.input)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if src.is_dir():
        records, _ = load_lineage(src)
        paths = render_frames(records, out, args.upscale, prefix="gen")
        render_strip([r.phenotype.cells for r in records], out / "strip.png", args.upscale)
    elif src.suffix == ".ckpt":
        net, _ = load_checkpoint(src, config.hidden_size)
        task = resolve_task(config)
        start = task.targets[args.target].initial
        _, traj = rollout_states(start.cells[None].astype(net.dtype), net, args.steps, update_mode(config),
                                 RngStream(config.seed), start.boundary, record=True)
        paths = render_frames(traj, out, args.upscale)
    else:
        paths = render_frames(load_array(src), out, args.upscale)
    _write_manifest(out, "render", config, input=str(src))
    print(f"wrote {len(paths)} frame(s) to {out}")
    return 0


def cmd_gradcheck(args) -> int:
    config = _load_config(args.config, args)
    g = config.gradcheck
    mode = update_mode(config)
    worst, lowest, ok = 0.0, 1.0, True
    for k in range(g.n_instances):
        inst = random_instance(config.seed + k, g.grid_size, g.n_steps, g.hidden_size, mode=mode)
        rep = gradcheck(inst, g.h, g.tolerance)
        passed = rep.pass_fraction >= g.pass_fraction
        ok &= passed
        worst, lowest = max(worst, rep.max_error), min(lowest, rep.pass_fraction)
        print(f"instance {k:2d}: max rel err {rep.max_error:.3e}, {100 * rep.pass_fraction:.2f}% "
              f"< {g.tolerance:g} {'PASS' if passed else 'FAIL'}")
    print(f"max relative error {worst:.3e}; worst pass fraction {100 * lowest:.2f}%; "
          f"{'PASS' if ok else 'FAIL'}")
    if args.out_dir:
        _write_manifest(_out_dir(args, args.out_dir), "gradcheck", config, passed=bool(ok))
    return 0 if ok else 1


# ---------------------------------------------------------------- parser

def _global_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--seed", type=int, default=default, help="override the config seed")
    parser.add_argument("--mode", choices=("sync", "async"), default=default, help="override the update mode")
    parser.add_argument("--out-dir", default=default, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="selfrep-nca", description=__doc__.splitlines()[0])
    _global_flags(parser, suppress=False)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)

    p = sub.add_parser("train", parents=[common], help="train an update rule")
    p.add_argument("config")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("lineage", parents=[common], help="run egg lineages from a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("config")
    p.set_defaults(func=cmd_lineage)

    p = sub.add_parser("analyze", parents=[common], help="drift statistics for a lineage directory")
    p.add_argument("lineage_dir")
    p.add_argument("--config", help="run config with analysis settings")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("render", parents=[common],
                       help="PNG frames from a lineage directory, a state array or a checkpoint")
    p.add_argument("input")
    p.add_argument("out")
    p.add_argument("--config", help="run config (needed to roll out a checkpoint)")
    p.add_argument("--upscale", type=int, default=1)
    p.add_argument("--steps", type=int, default=96)
    p.add_argument("--target", type=int, default=0, help="task phase whose initial state is rolled out")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("gradcheck", parents=[common], help="finite-difference gradient check")
    p.add_argument("config", nargs="?")
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s", stream=sys.stdout)
    try:
        return args.func(args)
    except (FileNotFoundError, InvalidArgument, CheckpointFormatError, TrainingDiverged, ValueError) as err:
        print(f"selfrep-nca {args.command}: error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
