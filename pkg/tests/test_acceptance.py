"""Acceptance criteria 1-10, each at its stated tolerance.

Criteria 3-7 need trained networks and 100-generation lineages. These are
produced by :mod:`selfrep_nca.experiments` and cached under ``.cache/``
(``scripts/run_experiments.py`` fills the cache); on a cold cache the tests
train from scratch, which takes about an hour per model on one core.
"""
import math
import time
from dataclasses import replace

import numpy as np
import pytest

from selfrep_nca.analysis import detect_stall, drift_curve, fit_drift, pairwise_mse, summarize, DriftCurve
from selfrep_nca.components import count_components
from selfrep_nca.experiments import (BACTERIA, FISH, LINEAGE_SEEDS, lineage_for, resolve_task, trained_model,
                                     training_config)
from selfrep_nca.gradcheck import gradcheck, random_instance
from selfrep_nca.io import RunConfig
from selfrep_nca.lineage import run_lineage
from selfrep_nca.rng import RngStream
from selfrep_nca.rule import UpdateMode, rollout_states
from selfrep_nca.training import train

import test_properties


@pytest.fixture(scope="module")
def bacteria():
    return trained_model(BACTERIA)


@pytest.fixture(scope="module")
def fish():
    return trained_model(FISH)


@pytest.fixture(scope="module")
def lineages(fish):
    return [lineage_for(fish, seed) for seed in LINEAGE_SEEDS]


def test_c01_gradient_correctness(criterion):
    t0 = time.perf_counter()
    reports = [gradcheck(random_instance(seed, size=8, n_steps=4, hidden=8), h=1e-4, tolerance=1e-3)
               for seed in range(20)]
    seconds = time.perf_counter() - t0
    worst = min(r.pass_fraction for r in reports)
    ok = all(r.pass_fraction >= 0.99 for r in reports) and seconds < 60
    assert criterion(1, ok, f"20 instances, worst share of parameters with rel. err < 1e-3: {100 * worst:.2f}%, "
                            f"max rel. err {max(r.max_error for r in reports):.2e}, {seconds:.1f}s")


def _oracle(vectors):
    n = len(vectors)
    mse = {}
    for i in range(n):
        for j in range(i + 1, n):
            # d * d, not d ** 2: libm pow is not always correctly rounded
            diffs = [(float(a) - float(b)) * (float(a) - float(b)) for a, b in zip(vectors[i], vectors[j])]
            mse[i, j] = math.fsum(diffs) / len(diffs)
    curve = [math.fsum(mse[i, i + k] for i in range(n - k)) / (n - k) for k in range(1, n)]
    return mse, curve


def test_c02_oracle_equivalence(criterion):
    rng = np.random.default_rng(2024)
    mismatches = 0
    for _ in range(50):
        vectors = list(rng.uniform(-1, 1, (20, int(rng.integers(1, 200)))).astype(np.float32))
        mse, curve = _oracle(vectors)
        matrix = pairwise_mse(vectors)
        mismatches += sum(matrix[i, j] != v for (i, j), v in mse.items())
        mismatches += sum(a != b for a, b in zip(drift_curve(matrix).means.tolist(), curve))
    assert criterion(2, mismatches == 0, f"50 random 20-generation inputs, {mismatches} inexact values")


def test_c03_training_convergence(criterion, bacteria):
    losses, n = bacteria.losses, len(bacteria.losses)
    spec = bacteria.task.targets[0]
    # early targets carry the fading membrane; remove its squared mass from the baseline so the ratio is
    # measured against what the bare two-copy target alone would give
    membrane = float(np.mean((spec.image_at(0) - spec.image_at(n)) ** 2))
    head = float(losses[:100].mean())
    tail = float(losses[-1000:].mean())
    ratio, strict = tail / head, tail / (head - membrane)
    ok = n <= 2000 and strict <= 0.1
    assert criterion(3, ok, f"bacteria A->2A, {n} steps, last-1000/first-100 mean loss = {ratio:.4f}, "
                            f"{strict:.4f} without the membrane term (<= 0.1), "
                            f"training time {bacteria.seconds / 60:.1f} min (target ~30)")


def test_c04_self_replication(criterion, bacteria):
    spec = bacteria.task.targets[0]
    # a copy must be a sizeable organism, not a stray live cell
    min_size = int(0.25 * (spec.initial.cells[..., 3] > 0.1).sum())
    counts = []
    for seed in range(5):
        final, _ = rollout_states(spec.initial.cells[None], bacteria.network, 96, UpdateMode(), RngStream(seed),
                                  spec.initial.boundary)
        counts.append(count_components(final[0, ..., 3] > 0.1, torus=True, min_size=min_size))
    ok = all(c >= 2 for c in counts)
    assert criterion(4, ok, f"components of >= {min_size} live cells after 96 steps from one organism, "
                            f"5 mask seeds: {counts}")


def test_c05_inheritable_mutation(criterion, lineages):
    details, ok = [], True
    for seed, records in zip(LINEAGE_SEEDS, lineages):
        viable = [r for r in records if r.viable]
        diffs = [float(np.mean((a.dna.astype(np.float64) - b.dna) ** 2)) for a, b in zip(records, records[1:])]
        extinct = not records[-1].viable
        ok &= all(d > 0 for d in diffs) and (extinct or len(records) == 101)
        ok &= all(r.viable for r in records[:-1])
        details.append(f"seed {seed}: {len(viable)} viable gens{' then extinct' if extinct else ''}, "
                       f"min parent-child MSE {min(diffs):.2e}" if diffs else f"seed {seed}: founder only")
    assert criterion(5, ok, "; ".join(details))


def test_c06_drift_shape(criterion, lineages):
    hits, details = 0, []
    for seed, records in zip(LINEAGE_SEEDS, lineages):
        if len(records) < 4:
            details.append(f"seed {seed}: too short")
            continue
        s = summarize(records)
        good = (s.exponential is not None and s.rank_trend > 0.8 and s.exponential.r2 > s.linear.r2)
        hits += good
        details.append(f"seed {seed}: stall {s.stall}, spearman {s.rank_trend:.3f}, "
                       f"R2 exp {s.exponential.r2 if s.exponential else float('nan'):.3f} vs "
                       f"lin {s.linear.r2 if s.linear else float('nan'):.3f}")
    assert criterion(6, hits >= 2, f"{hits}/3 lineages; " + "; ".join(details))


def test_c07_genotype_phenotype(criterion, lineages):
    rs = [summarize(r).correlation.r if len(r) >= 3 else float("nan") for r in lineages]
    hits = sum(r >= 0.3 for r in rs if not math.isnan(r))
    assert criterion(7, hits >= 2, f"Pearson r per lineage: {', '.join(f'{r:.3f}' for r in rs)} "
                                   f"({hits}/3 >= 0.3)")


def test_c08_determinism(criterion, fish):
    small = RunConfig(task="fish", hidden_size=16, total_training_steps=4, rollout_steps=12, update_mode="sync",
                      seed=11, log_every=0)
    task = resolve_task(small)
    a, b = train(training_config(small, task)), train(training_config(small, task))
    sync_train = a.network.flat().tobytes() == b.network.flat().tobytes() and np.array_equal(a.losses(), b.losses())

    geo = fish.task.geometry

    def lineage(mode):
        return run_lineage(fish.network, fish.task.founder_dna[0], geo, 3, 96, 96, mode, RngStream(5))

    la, lb = lineage(UpdateMode.sync()), lineage(UpdateMode.sync())
    sync_lineage = len(la) == len(lb) and all(
        x.dna.tobytes() == y.dna.tobytes() and x.phenotype.cells.tobytes() == y.phenotype.cells.tobytes()
        for x, y in zip(la, lb))

    start = fish.task.targets[0].initial.cells[None]
    _, ta = rollout_states(start, fish.network, 96, UpdateMode(), RngStream(7), geo.boundary, record=True)
    _, tb = rollout_states(start, fish.network, 96, UpdateMode(), RngStream(7), geo.boundary, record=True)
    async_masks = all(np.array_equal(x, y) for x, y in zip(ta.rows, tb.rows)) and all(
        x.tobytes() == y.tobytes() for x, y in zip(ta.states, tb.states))
    asy = training_config(replace(small, update_mode="async"), task)
    async_train = train(asy).network.flat().tobytes() == train(asy).network.flat().tobytes()
    ok = sync_train and sync_lineage and async_masks and async_train
    assert criterion(8, ok, f"sync training {sync_train}, sync lineage {sync_lineage}, async masks {async_masks}, "
                            f"async training {async_train} (bitwise)")


def test_c09_structural_invariants(criterion):
    t0 = time.perf_counter()
    names = ["test_bounds_and_dead_cells_after_every_step", "test_sync_step_commutes_with_torus_shift",
             "test_dead_grid_fixed_point", "test_dna_transplant_round_trip"]
    failures = []
    for name in names:
        try:
            getattr(test_properties, name)()
        except Exception as err:  # report every failing property, not only the first
            failures.append(f"{name}: {type(err).__name__}")
    seconds = time.perf_counter() - t0
    ok = not failures and seconds < 60
    assert criterion(9, ok, f"bounds, dead cells zero, torus shift equivariance, dead fixed point, DNA round trip "
                            f"as property tests in {seconds:.1f}s" + (f"; failed: {failures}" if failures else ""))


def test_c10_fit_recovery(criterion):
    k = np.arange(1, 81)
    curve = DriftCurve(k, 0.01 * np.exp(0.05 * k), 101 - k)
    b = fit_drift(curve)[0].b
    k = np.arange(1, 100)
    plateau = DriftCurve(k, np.minimum(np.exp(0.05 * k), np.exp(0.05 * 60)), 100 - k)
    stall = detect_stall(plateau)
    ok = abs(b - 0.05) < 1e-6 and stall is not None and abs(stall - 60) <= 5
    assert criterion(10, ok, f"recovered b = {b:.10f} (|err| {abs(b - 0.05):.1e}), stall at {stall} (true 60)")
