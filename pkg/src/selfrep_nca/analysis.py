"""Genetic and phenotypic drift statistics over a lineage.

Pairwise distances are mean squared errors summed with ``math.fsum``, so
every entry is correctly rounded and independent of summation order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from .errors import InvalidArgument


@dataclass
class DriftMatrix:
    """Upper-triangular ancestor x descendant MSE table (lower triangle NaN)."""
    values: np.ndarray

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def entries(self):
        for i in range(self.n):
            for j in range(i + 1, self.n):
                yield i, j, float(self.values[i, j])

    def __getitem__(self, ij: tuple[int, int]) -> float:
        i, j = ij
        if i == j:
            return 0.0
        return float(self.values[min(i, j), max(i, j)])

    def diagonal(self, lag: int) -> np.ndarray:
        return np.diagonal(self.values, offset=lag).copy()

    def max(self) -> float:
        return float(np.nanmax(self.values)) if self.n > 1 else 0.0


@dataclass
class DriftCurve:
    lags: np.ndarray
    means: np.ndarray
    counts: np.ndarray


@dataclass
class FitResult:
    model: str
    a: float
    b: float
    r2: float
    fit_range: tuple[int, int]
    excluded_lags: list[int] = field(default_factory=list)

    def predict(self, k):
        k = np.asarray(k, dtype=np.float64)
        if self.model == "exponential":
            return self.a * np.exp(self.b * k)
        return self.a + self.b * k


def _as_matrix(vectors: Sequence[np.ndarray]) -> np.ndarray:
    if len(vectors) < 2:
        raise InvalidArgument("at least two vectors are needed")
    lengths = {np.asarray(v).size for v in vectors}
    if len(lengths) != 1:
        raise InvalidArgument(f"vectors have different lengths: {sorted(lengths)}")
    return np.stack([np.asarray(v, dtype=np.float64).ravel() for v in vectors])


def pairwise_mse(vectors: Sequence[np.ndarray]) -> DriftMatrix:
    x = _as_matrix(vectors)
    n, d = x.shape
    values = np.full((n, n), np.nan)
    for i in range(n - 1):
        sq = x[i + 1:] - x[i]
        sq *= sq
        values[i, i + 1:] = [math.fsum(row) / d for row in sq]
    return DriftMatrix(values)


def drift_curve(matrix: DriftMatrix) -> DriftCurve:
    """Mean of each upper diagonal: average distance to the k-th descendant."""
    if matrix.n < 2:
        raise InvalidArgument("drift curve needs at least two generations")
    lags = np.arange(1, matrix.n)
    means = np.array([math.fsum(matrix.diagonal(k)) / (matrix.n - k) for k in lags])
    return DriftCurve(lags, means, matrix.n - lags)


def _weighted_r2(y: np.ndarray, pred: np.ndarray, w: np.ndarray) -> float:
    ybar = np.sum(w * y) / np.sum(w)
    ss_tot = np.sum(w * (y - ybar) ** 2)
    ss_res = np.sum(w * (y - pred) ** 2)
    if ss_tot == 0.0:
        return 1.0 if ss_res == 0.0 else -math.inf
    return float(1.0 - ss_res / ss_tot)


def _weighted_line(k: np.ndarray, y: np.ndarray, w: np.ndarray) -> tuple[float, float]:
    sw = np.sum(w)
    kbar, ybar = np.sum(w * k) / sw, np.sum(w * y) / sw
    var = np.sum(w * (k - kbar) ** 2)
    slope = np.sum(w * (k - kbar) * (y - ybar)) / var
    return float(ybar - slope * kbar), float(slope)


def fit_drift(curve: DriftCurve, max_lag: int | None = None) -> tuple[FitResult, FitResult]:
    """Count-weighted exponential (log-linear) and linear least-squares fits.

    Both R² values are measured in the original scale with the same weights,
    so they can be compared directly. Lags with non-positive means are left
    out of the exponential fit and listed in ``excluded_lags``.
    """
    sel = curve.lags <= (max_lag if max_lag is not None else curve.lags.max())
    k = curve.lags[sel].astype(np.float64)
    y = curve.means[sel]
    w = curve.counts[sel].astype(np.float64)
    if len(k) < 3:
        raise InvalidArgument("fitting needs at least 3 lags")
    fit_range = (int(k.min()), int(k.max()))
    a_lin, b_lin = _weighted_line(k, y, w)
    linear = FitResult("linear", a_lin, b_lin, _weighted_r2(y, a_lin + b_lin * k, w), fit_range)

    positive = y > 0
    excluded = [int(v) for v in k[~positive]]
    if positive.sum() < 3:
        exponential = FitResult("exponential", 0.0, 0.0, -math.inf, fit_range, excluded)
    else:
        log_a, b_exp = _weighted_line(k[positive], np.log(y[positive]), w[positive])
        a_exp = math.exp(log_a)
        r2 = _weighted_r2(y, a_exp * np.exp(b_exp * k), w)
        exponential = FitResult("exponential", a_exp, b_exp, r2, fit_range, excluded)
    return exponential, linear


def detect_stall(curve: DriftCurve, window: int = 10, threshold: float = 0.05) -> int | None:
    """Smallest lag from which the curve stops growing by ``threshold`` per window.

    Compares the mean over lags ``[k, k+window)`` with the mean over the next
    ``window`` lags; the stall is the first ``k`` from which every later
    comparison shows less than ``threshold`` relative growth.
    """
    y = curve.means
    n = len(y)
    testable = n - 2 * window + 1
    if testable <= 0:
        return None
    csum = np.concatenate([[0.0], np.cumsum(y)])
    ahead = (csum[window:] - csum[:-window]) / window  # ahead[i] = mean(y[i:i+window])
    flat = []
    for i in range(testable):
        earlier, later = ahead[i], ahead[i + window]
        flat.append(later <= earlier or later < (1.0 + threshold) * earlier)
    stall = None
    for i in range(testable - 1, -1, -1):
        if not flat[i]:
            break
        stall = i
    return None if stall is None else int(curve.lags[stall])


@dataclass
class Correlation:
    r: float
    dna_distances: np.ndarray
    phenotype_distances: np.ndarray
    pairs: list[tuple[int, int]]

    @property
    def defined(self) -> bool:
        return not math.isnan(self.r)


def genotype_phenotype_correlation(records) -> Correlation:
    """Pearson r between DNA and adult-phenotype distances over all ancestor/descendant pairs."""
    if len(records) < 3:
        raise InvalidArgument("correlation needs at least 3 generations")
    return correlation_from(pairwise_mse([r.dna for r in records]),
                            pairwise_mse([r.phenotype.cells for r in records]))


def correlation_from(dna: DriftMatrix, phen: DriftMatrix) -> Correlation:
    pairs = [(i, j) for i, j, _ in dna.entries()]
    x = np.array([dna[p] for p in pairs])
    y = np.array([phen[p] for p in pairs])
    if np.ptp(x) == 0.0 or np.ptp(y) == 0.0:
        r = math.nan
    else:
        r = float(stats.pearsonr(x, y)[0])
    return Correlation(r, x, y, pairs)


def spearman(x, y) -> float:
    return float(stats.spearmanr(x, y)[0])


@dataclass
class DriftSummary:
    """Everything the lineage analysis reports for one run."""
    n_generations: int
    dna: DriftMatrix
    phenotype: DriftMatrix
    dna_curve: DriftCurve
    phenotype_curve: DriftCurve
    stall: int | None
    exponential: FitResult | None
    linear: FitResult | None
    rank_trend: float
    correlation: Correlation | None

    @property
    def max_dna_mse(self) -> float:
        return self.dna.max()

    @property
    def max_phenotype_mse(self) -> float:
        return self.phenotype.max()


def summarize(records, stall_window: int = 10, stall_threshold: float = 0.05) -> DriftSummary:
    """Drift matrices, curves, fits up to the stall, rank trend and correlation."""
    dna = pairwise_mse([r.dna for r in records])
    phen = pairwise_mse([r.phenotype.cells for r in records])
    dcurve, pcurve = drift_curve(dna), drift_curve(phen)
    stall = detect_stall(dcurve, stall_window, stall_threshold)
    upto = stall if stall is not None else int(dcurve.lags.max())
    exp_fit = lin_fit = None
    if (dcurve.lags <= upto).sum() >= 3:
        exp_fit, lin_fit = fit_drift(dcurve, upto)
    sel = dcurve.lags <= upto
    trend = spearman(dcurve.lags[sel], dcurve.means[sel]) if sel.sum() >= 3 else math.nan
    corr = correlation_from(dna, phen) if len(records) >= 3 else None
    return DriftSummary(len(records), dna, phen, dcurve, pcurve, stall, exp_fit, lin_fit, trend, corr)
