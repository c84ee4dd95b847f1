import math

import numpy as np
import pytest

from selfrep_nca.analysis import (DriftCurve, detect_stall, drift_curve, fit_drift, genotype_phenotype_correlation,
                                  pairwise_mse, spearman, summarize)
from selfrep_nca.errors import InvalidArgument
from selfrep_nca.grid import Grid
from selfrep_nca.lineage import LineageRecord


def brute_force(vectors):
    n = len(vectors)
    m = {}
    for i in range(n):
        for j in range(i + 1, n):
            d = [(float(a) - float(b)) ** 2 for a, b in zip(vectors[i], vectors[j])]
            m[i, j] = math.fsum(d) / len(d)
    curve = {k: math.fsum(m[i, i + k] for i in range(n - k)) / (n - k) for k in range(1, n)}
    return m, curve


def test_pairwise_examples():
    same = [np.ones(5)] * 4
    assert pairwise_mse(same).max() == 0.0
    v = np.zeros(8)
    w = v.copy()
    w[3] = 1.0
    assert pairwise_mse([v, w])[0, 1] == 1 / 8
    with pytest.raises(InvalidArgument):
        pairwise_mse([np.zeros(3), np.zeros(4)])
    with pytest.raises(InvalidArgument):
        pairwise_mse([np.zeros(3)])


def test_matrix_shape_symmetry_and_count():
    vecs = list(np.random.default_rng(0).normal(size=(6, 10)))
    m = pairwise_mse(vecs)
    assert len(list(m.entries())) == 15
    assert np.isnan(m.values[3, 1]) and m[3, 1] == m[1, 3] and m[2, 2] == 0.0


def test_matches_oracle_exactly():
    vecs = list(np.random.default_rng(1).normal(size=(10, 33)).astype(np.float32))
    m, c = brute_force(vecs)
    dm = pairwise_mse(vecs)
    for (i, j), v in m.items():
        assert dm[i, j] == v
    curve = drift_curve(dm)
    assert curve.means.tolist() == [c[k] for k in range(1, 10)]


def test_curve_examples():
    values = np.full((3, 3), np.nan)
    values[0, 1], values[1, 2], values[0, 2] = 1.0, 3.0, 5.0
    from selfrep_nca.analysis import DriftMatrix
    c = drift_curve(DriftMatrix(values))
    assert c.means.tolist() == [2.0, 5.0] and c.counts.tolist() == [2, 1]
    c100 = drift_curve(pairwise_mse([np.zeros(2)] * 100))
    assert c100.counts[0] == 99 and c100.counts[-1] == 1 and not c100.means.any()


def _curve(y):
    k = np.arange(1, len(y) + 1)
    return DriftCurve(k, np.asarray(y, float), len(y) + 1 - k)


def test_exponential_recovery():
    k = np.arange(1, 81)
    exp_fit, lin_fit = fit_drift(_curve(0.01 * np.exp(0.05 * k)))
    assert abs(exp_fit.b - 0.05) < 1e-6 and exp_fit.r2 > 0.999999
    assert exp_fit.r2 > lin_fit.r2


def test_linear_curve_prefers_linear():
    exp_fit, lin_fit = fit_drift(_curve(0.1 + 0.02 * np.arange(1, 61)))
    assert lin_fit.r2 > exp_fit.r2 and lin_fit.b == pytest.approx(0.02)


def test_constant_curve_zero_rates():
    exp_fit, lin_fit = fit_drift(_curve(np.full(20, 0.3)))
    assert abs(exp_fit.b) < 1e-12 and abs(lin_fit.b) < 1e-12


def test_rate_invariant_to_scaling():
    y = 0.02 * np.exp(0.03 * np.arange(1, 41)) * (1 + 0.05 * np.sin(np.arange(40)))
    assert fit_drift(_curve(y))[0].b == pytest.approx(fit_drift(_curve(7 * y))[0].b, abs=1e-12)


def test_nonpositive_lags_excluded_and_reported():
    y = 0.01 * np.exp(0.05 * np.arange(1, 31))
    y[4] = 0.0
    exp_fit, _ = fit_drift(_curve(y))
    assert exp_fit.excluded_lags == [5] and abs(exp_fit.b - 0.05) < 1e-9


def test_fit_needs_three_points():
    with pytest.raises(InvalidArgument):
        fit_drift(_curve([0.1, 0.2]))


def test_stall_examples():
    k = np.arange(1, 100)
    plateau = np.minimum(np.exp(0.05 * k), np.exp(0.05 * 60))
    s = detect_stall(_curve(plateau))
    assert s is not None and abs(s - 60) <= 5
    assert detect_stall(_curve(np.exp(0.05 * k))) is None
    assert detect_stall(_curve(np.zeros(99))) == 1


def _records(dna, phen):
    return [LineageRecord(i, d, Grid(p)) for i, (d, p) in enumerate(zip(dna, phen))]


def test_correlation_proportional_is_one():
    rng = np.random.default_rng(2)
    dna = rng.normal(size=(8, 4))
    phen = np.zeros((8, 2, 2, 16))
    phen[..., :4] = dna[:, None, None, :] * 3.0
    corr = genotype_phenotype_correlation(_records(dna, phen))
    assert corr.r == pytest.approx(1.0)
    assert len(corr.pairs) == 28


def test_correlation_zero_variance_undefined():
    corr = genotype_phenotype_correlation(_records(np.zeros((4, 3)), np.zeros((4, 2, 2, 16))))
    assert not corr.defined


def test_independent_pairs_near_zero():
    rng = np.random.default_rng(3)
    x, y = rng.random(1000), rng.random(1000)
    assert abs(np.corrcoef(x, y)[0, 1]) < 0.1
    assert abs(spearman(x, y)) < 0.1


def test_summarize_reports_magnitudes():
    rng = np.random.default_rng(4)
    walk = np.cumsum(rng.normal(size=(30, 12)), axis=0)
    phen = np.zeros((30, 3, 3, 16))
    phen[..., 0] = walk[:, :9].reshape(30, 3, 3)
    s = summarize(_records(walk, phen))
    assert s.n_generations == 30 and s.max_dna_mse > 0 and s.max_phenotype_mse > 0
    assert s.rank_trend > 0.8 and s.correlation.r > 0.3
