"""Train the desk-scale bacteria and fish models, run the fish lineages, report.

Results land in the experiment cache (``$SELFREP_NCA_CACHE`` or ``.cache/``),
which is what ``tests/test_acceptance.py`` reads; figures go to ``--out``.

    python scripts/run_experiments.py              # everything, about 2-3 h on one core
    python scripts/run_experiments.py --only bacteria
"""
import argparse
import logging
from pathlib import Path

from selfrep_nca.analysis import summarize
from selfrep_nca.components import count_components
from selfrep_nca.experiments import BACTERIA, FISH, LINEAGE_SEEDS, lineage_for, trained_model
from selfrep_nca.render import render_heatmap, render_strip
from selfrep_nca.rng import RngStream
from selfrep_nca.rule import UpdateMode, rollout_states


def bacteria(out: Path, retrain: bool) -> None:
    model = trained_model(BACTERIA, retrain=retrain)
    print(f"bacteria: {len(model.losses)} steps in {model.seconds / 60:.1f} min, "
          f"loss ratio {model.loss_ratio():.4f}")
    start = model.task.targets[0].initial
    _, traj = rollout_states(start.cells[None], model.network, 96, UpdateMode(), RngStream(0), start.boundary,
                             record=True)
    final = traj.final[0]
    print(f"bacteria: {count_components(final[..., 3] > 0.1)} components after 96 steps")
    render_strip([s[0] for s in traj.states[::16]], out / "bacteria_rollout.png", upscale=4)


def fish(out: Path, retrain: bool) -> None:
    model = trained_model(FISH, retrain=retrain)
    print(f"fish: {len(model.losses)} steps in {model.seconds / 60:.1f} min, loss ratio {model.loss_ratio():.4f}")
    for seed in LINEAGE_SEEDS:
        records = lineage_for(model, seed, retrain=retrain)
        extinct = "" if records[-1].viable else " (extinct)"
        line = f"lineage {seed}: {len(records)} generations{extinct}"
        if len(records) >= 4:
            s = summarize(records)
            line += (f", stall {s.stall}, spearman {s.rank_trend:.3f}, R2 exp {s.exponential.r2:.3f} "
                     f"lin {s.linear.r2:.3f}, pearson {s.correlation.r:.3f}")
            render_heatmap(s.dna.values, out / f"lineage_{seed}_dna.png", f"lineage {seed} DNA drift")
            render_heatmap(s.phenotype.values, out / f"lineage_{seed}_phenotype.png",
                           f"lineage {seed} phenotype drift")
        render_strip([r.phenotype.cells for r in records[::10]], out / f"lineage_{seed}_adults.png", upscale=4)
        print(line)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--only", choices=("bacteria", "fish"))
    parser.add_argument("--out", default="results", type=Path)
    parser.add_argument("--retrain", action="store_true", help="ignore cached results")
    args = parser.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    args.out.mkdir(parents=True, exist_ok=True)
    if args.only in (None, "bacteria"):
        bacteria(args.out, args.retrain)
    if args.only in (None, "fish"):
        fish(args.out, args.retrain)


if __name__ == "__main__":
    main()
