# SPDX-License-Identifier: GPL-3.0-only
"""Statistical inference on multiview predictions.

Covers the englobement location test between correlation populations,
ensemble prediction bounds, per-month distribution diagnostics (density,
Gaussian fit, bootstrap KS, mixture likelihood ratio, view replication) with
Benjamini-Hochberg screening, and paired tests of one predictor against another.
"""

import itertools
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from numpy.linalg import LinAlgError
from scipy.special import logsumexp
from scipy.stats import gaussian_kde, ks_2samp, norm, rankdata, tiecorrect, ttest_ind

from embedding import View
from exceptions import DataError, NumericalError, PipelineError
from logutils import get_logger
from predictor import ForecastSettings, PredictionSet, forecast
from timeseries import SeriesPanel, format_month
from utils import derive_seed

logger = get_logger(__name__)

EXACT_RANK_SUM_LIMIT = 12
EXACT_SIGNED_RANK_LIMIT = 20


@dataclass(frozen=True)
class RankSumResult:
    statistic: float
    p_value: float
    exact: bool


def _rank_sum_exact_p(ranks: np.ndarray, n1: int) -> float:
    total = len(ranks)
    w = float(ranks[:n1].sum())
    expected = n1 * (total + 1) / 2.0
    groups = np.array(list(itertools.combinations(range(total), n1)))
    sums = ranks[groups].sum(axis=1)
    return float(np.mean(np.abs(sums - expected) >= abs(w - expected) - 1e-9))


def _rank_sum_normal_p(ranks: np.ndarray, n1: int) -> float:
    total = len(ranks)
    n2 = total - n1
    tie = tiecorrect(ranks)
    if tie == 0:
        return 1.0
    u = float(ranks[:n1].sum()) - n1 * (n1 + 1) / 2.0
    sd = math.sqrt(tie * n1 * n2 * (total + 1) / 12.0)
    z = max(abs(u - n1 * n2 / 2.0) - 0.5, 0.0) / sd
    return float(min(1.0, 2.0 * norm.sf(z)))


def rank_sum_test(a, b) -> RankSumResult:
    """Two-sided Wilcoxon rank-sum (Mann-Whitney) test.

    Exact over all rank assignments when the pooled size is at most 12, normal
    approximation with tie and continuity correction otherwise. The statistic
    is the Mann-Whitney U of ``a``.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n1, n2 = len(a), len(b)
    if n1 < 2 or n2 < 2:
        raise DataError(f"Rank-sum test needs two samples of at least 2, got {n1} and {n2}")

    ranks = rankdata(np.concatenate([a, b]))
    u = float(ranks[:n1].sum()) - n1 * (n1 + 1) / 2.0
    if n1 + n2 <= EXACT_RANK_SUM_LIMIT:
        return RankSumResult(u, _rank_sum_exact_p(ranks, n1), True)
    return RankSumResult(u, _rank_sum_normal_p(ranks, n1), False)


@dataclass(frozen=True)
class SignedRankResult:
    statistic: float
    p_value: float
    n_used: int
    n_zero: int
    exact: bool
    all_zero: bool = False


def _signed_rank_exact_p(ranks: np.ndarray, w_plus: float) -> float:
    # Midranks are multiples of 1/2, so doubled sums are exact integers.
    doubled = np.rint(2 * ranks).astype(np.int64)
    counts = np.zeros(int(doubled.sum()) + 1, dtype=np.int64)
    counts[0] = 1
    for r in doubled:
        shifted = counts.copy()
        shifted[r:] += counts[: len(counts) - r]
        counts = shifted
    sums = np.arange(len(counts))
    center = doubled.sum()  # 4 * E[W+]
    observed = abs(int(round(4 * w_plus)) - center)
    extreme = np.abs(2 * sums - center) >= observed
    return float(counts[extreme].sum() / counts.sum())


def _signed_rank_normal_p(ranks: np.ndarray, w_plus: float) -> float:
    n = len(ranks)
    _, tie_counts = np.unique(ranks, return_counts=True)
    variance = n * (n + 1) * (2 * n + 1) / 24.0 - np.sum(tie_counts**3 - tie_counts) / 48.0
    if variance <= 0:
        return 1.0
    z = max(abs(w_plus - ranks.sum() / 2.0) - 0.5, 0.0) / math.sqrt(variance)
    return float(min(1.0, 2.0 * norm.sf(z)))


def signed_rank_test(diffs) -> SignedRankResult:
    """Two-sided Wilcoxon signed-rank test on paired differences.

    Zero differences are dropped and counted. Up to 20 nonzero differences the
    null distribution over all sign patterns is computed exactly; beyond that
    a tie-corrected normal approximation is used.
    """
    diffs = np.asarray(diffs, dtype=np.float64)
    nonzero = diffs[diffs != 0]
    n_zero = len(diffs) - len(nonzero)
    if len(nonzero) == 0:
        logger.warning("All %d paired differences are zero", len(diffs))
        return SignedRankResult(0.0, 1.0, 0, n_zero, True, all_zero=True)
    if len(nonzero) < 3:
        logger.warning("Signed-rank test on only %d nonzero differences", len(nonzero))

    ranks = rankdata(np.abs(nonzero))
    w_plus = float(ranks[nonzero > 0].sum())
    if len(nonzero) <= EXACT_SIGNED_RANK_LIMIT:
        p_value = _signed_rank_exact_p(ranks, w_plus)
        return SignedRankResult(w_plus, p_value, len(nonzero), n_zero, True)
    p_value = _signed_rank_normal_p(ranks, w_plus)
    return SignedRankResult(w_plus, p_value, len(nonzero), n_zero, False)


def location_test(a, b, method: str = "rank_sum") -> float:
    """p-value for a shift in location between two correlation samples."""
    if method == "rank_sum":
        return rank_sum_test(a, b).p_value
    if method == "t_test":
        return float(ttest_ind(a, b, equal_var=False).pvalue)
    raise DataError(f"Unknown location test '{method}'")


@dataclass(frozen=True)
class ImprovementResult:
    p_value: float
    direction: str
    median_abs_error_a: float
    median_abs_error_b: float
    statistic: float
    n_times: int
    n_zero: int


def paired_improvement_test(
    preds_a: PredictionSet,
    preds_b: PredictionSet,
    obs: Optional[Sequence[float]] = None,
    labels: Tuple[str, str] = ("a", "b"),
) -> ImprovementResult:
    """Signed-rank test on ``|obs - a| - |obs - b|`` over shared prediction months.

    ``direction`` names the method with the smaller median absolute error.
    """
    if not np.array_equal(preds_a.times, preds_b.times):
        raise DataError("Prediction sets cover different months")
    observed = preds_a.observed if obs is None else np.asarray(obs, dtype=np.float64)
    if len(observed) != len(preds_a):
        raise DataError("Observations do not match the prediction months")

    keep = ~np.isnan(observed) & ~np.isnan(preds_a.multiview_mean) & ~np.isnan(preds_b.multiview_mean)
    if not keep.any():
        raise DataError("No months with observations to compare")
    error_a = np.abs(observed[keep] - preds_a.multiview_mean[keep])
    error_b = np.abs(observed[keep] - preds_b.multiview_mean[keep])
    result = signed_rank_test(error_a - error_b)

    median_a, median_b = float(np.median(error_a)), float(np.median(error_b))
    if median_a < median_b:
        direction = f"{labels[0]} better"
    elif median_b < median_a:
        direction = f"{labels[1]} better"
    else:
        direction = "no difference"
    return ImprovementResult(
        result.p_value, direction, median_a, median_b, result.statistic,
        int(keep.sum()), result.n_zero,
    )


@dataclass(frozen=True)
class Bounds:
    lo: np.ndarray
    hi: np.ndarray

    def covers(self, truth) -> np.ndarray:
        truth = np.asarray(truth, dtype=np.float64)
        return (self.lo <= truth) & (truth <= self.hi)


def prediction_bounds(
    ensemble,
    alpha: float,
    calibration: Optional[Tuple[Sequence[float], Sequence[float]]] = None,
) -> Bounds:
    """Empirical ``(alpha/2, 1 - alpha/2)`` quantiles of each month's ensemble.

    Quantiles use linear interpolation between order statistics (type 7).
    With ``calibration=(pred, obs)`` the ensemble is first passed through the
    least-squares line from predictions to observations.
    """
    if not 0 < alpha < 1:
        raise DataError(f"alpha must lie in (0, 1), got {alpha}")
    members = np.atleast_2d(np.asarray(ensemble, dtype=np.float64))
    required = math.ceil(2 / alpha - 1e-9)
    smallest = int(np.min(np.sum(~np.isnan(members), axis=1)))
    if smallest < required:
        raise DataError(
            f"Bounds at alpha={alpha} need at least {required} ensemble members, got {smallest}"
        )

    if calibration is not None:
        pred, obs = (np.asarray(c, dtype=np.float64) for c in calibration)
        keep = ~np.isnan(pred) & ~np.isnan(obs)
        if keep.sum() < 2 or np.ptp(pred[keep]) == 0:
            raise DataError("Calibration needs at least two distinct predictions")
        slope, intercept = np.polyfit(pred[keep], obs[keep], 1)
        members = intercept + slope * members

    lo, hi = np.nanquantile(members, [alpha / 2, 1 - alpha / 2], axis=1)
    return Bounds(lo, hi)


@dataclass(frozen=True)
class DensityCurve:
    grid: np.ndarray
    density: np.ndarray
    bandwidth: float


def kde(sample, bandwidth: Optional[float] = None, grid_points: int = 512, pad: float = 4.0) -> DensityCurve:
    """Gaussian kernel density on an even grid around the sample.

    The default bandwidth is Silverman's rule. The grid spans the sample range
    widened by ``pad`` bandwidths on each side (4 by default, which keeps
    the grid integral within 1e-3 of 1).
    """
    sample = np.asarray(sample, dtype=np.float64)
    if len(sample) < 2:
        raise DataError("Density estimation needs at least 2 values")
    if bandwidth is None:
        if np.ptp(sample) == 0:
            raise DataError("Zero-spread sample needs an explicit bandwidth")
        bandwidth = float(gaussian_kde(sample, bw_method="silverman").factor * np.std(sample, ddof=1))
    elif bandwidth <= 0:
        raise DataError(f"Bandwidth must be positive, got {bandwidth}")

    grid = np.linspace(sample.min() - pad * bandwidth, sample.max() + pad * bandwidth, grid_points)
    density = norm.pdf(grid[:, None], loc=sample[None, :], scale=bandwidth).mean(axis=1)
    return DensityCurve(grid, density, bandwidth)


def gaussian_fit(sample) -> Tuple[float, float]:
    """Maximum-likelihood mean and (divide-by-n) standard deviation."""
    sample = np.asarray(sample, dtype=np.float64)
    if len(sample) < 2 or np.ptp(sample) == 0:
        raise DataError("Gaussian fit needs at least 2 values with nonzero spread")
    mu, sigma = norm.fit(sample)
    return float(mu), float(sigma)


def _ks_normal_statistics(samples: np.ndarray) -> np.ndarray:
    """KS distance of each row to its own fitted Gaussian."""
    samples = np.sort(np.atleast_2d(samples), axis=1)
    n = samples.shape[1]
    mu = samples.mean(axis=1, keepdims=True)
    sigma = samples.std(axis=1, keepdims=True)
    cdf = norm.cdf((samples - mu) / sigma)
    steps = np.arange(1, n + 1) / n
    above = np.max(steps - cdf, axis=1)
    below = np.max(cdf - (steps - 1.0 / n), axis=1)
    return np.maximum(above, below)


@dataclass(frozen=True)
class BootstrapResult:
    statistic: float
    p_value: float
    n_boot: int


def durbin_ks_test(sample, n_boot: int = 999, seed: int = 0) -> BootstrapResult:
    """KS test of normality with estimated parameters.

    The null distribution of the statistic comes from a parametric bootstrap
    that refits mean and sd on every replicate; each replicate draws from its
    own sub-seed of ``seed``.
    """
    sample = np.asarray(sample, dtype=np.float64)
    if len(sample) < 5:
        raise DataError("Durbin-KS test needs at least 5 values")
    mu, sigma = gaussian_fit(sample)
    statistic = float(_ks_normal_statistics(sample)[0])

    replicates = np.stack(
        [
            np.random.default_rng(derive_seed(seed, "durbin-ks", b)).normal(mu, sigma, len(sample))
            for b in range(n_boot)
        ]
    )
    null = _ks_normal_statistics(replicates)
    p_value = (1 + int(np.sum(null >= statistic))) / (n_boot + 1)
    return BootstrapResult(statistic, p_value, n_boot)


@dataclass(frozen=True)
class MixtureFit:
    """Best of several EM runs for a 1-D Gaussian mixture."""

    weights: np.ndarray
    means: np.ndarray
    sds: np.ndarray
    loglik: float
    iterations: int
    monotone: bool
    converged: bool = True

    @property
    def n_components(self) -> int:
        return len(self.weights)


def _mixture_loglik(x, weights, means, variances) -> Tuple[np.ndarray, np.ndarray]:
    log_comp = (
        np.log(np.maximum(weights, 1e-300))[:, None, :]
        + norm.logpdf(x[None, :, None], means[:, None, :], np.sqrt(variances)[:, None, :])
    )
    point = logsumexp(log_comp, axis=2)
    return point.sum(axis=1), log_comp - point[..., None]


def fit_mixture(
    sample,
    n_components: int,
    restarts: int = 10,
    seed: int = 0,
    tol: float = 1e-8,
    max_iter: int = 500,
    strict: bool = True,
) -> MixtureFit:
    """EM fit of a Gaussian mixture, keeping the best converged restart.

    Restarts run side by side. Variances are floored at 1e-6 times the sample
    variance. Log-likelihood monotonicity is tracked for every restart.

    Raises:
        NumericalError: When no restart converges within ``max_iter`` and
            ``strict`` is set, or when no restart has a finite likelihood.
    """
    x = np.asarray(sample, dtype=np.float64)
    n = len(x)
    floor = 1e-6 * x.var()

    if n_components == 1:
        variance = max(x.var(), floor)
        loglik = float(np.sum(norm.logpdf(x, x.mean(), math.sqrt(variance))))
        return MixtureFit(
            np.ones(1), np.array([x.mean()]), np.array([math.sqrt(variance)]), loglik, 0, True, True
        )

    rng = np.random.default_rng(seed)
    means = np.stack([rng.choice(x, n_components, replace=False) for _ in range(restarts)])
    variances = np.full((restarts, n_components), x.var())
    weights = np.full((restarts, n_components), 1.0 / n_components)

    previous, _ = _mixture_loglik(x, weights, means, variances)
    monotone = np.ones(restarts, dtype=bool)
    converged = np.zeros(restarts, dtype=bool)
    iterations = np.zeros(restarts, dtype=np.int64)

    for _ in range(max_iter):
        _, log_resp = _mixture_loglik(x, weights, means, variances)
        resp = np.exp(log_resp)
        counts = np.maximum(resp.sum(axis=1), 1e-300)
        new_weights = counts / n
        new_means = (resp * x[None, :, None]).sum(axis=1) / counts
        spread = (resp * (x[None, :, None] - new_means[:, None, :]) ** 2).sum(axis=1) / counts
        new_variances = np.maximum(spread, floor)

        active = ~converged
        weights = np.where(active[:, None], new_weights, weights)
        means = np.where(active[:, None], new_means, means)
        variances = np.where(active[:, None], new_variances, variances)

        current, _ = _mixture_loglik(x, weights, means, variances)
        monotone &= ~active | (current >= previous - 1e-9 * np.abs(previous))
        iterations += active
        converged |= active & (np.abs(current - previous) < tol)
        previous = current
        if converged.all():
            break

    if not np.isfinite(previous).any():
        raise NumericalError(f"EM for {n_components} components has no finite likelihood")
    if not converged.any():
        message = f"EM for {n_components} components did not converge in {max_iter} iterations"
        if strict:
            logger.error(message)
            raise NumericalError(message)
        logger.warning("%s; keeping the best restart", message)
        candidates = np.isfinite(previous)
    else:
        candidates = converged
    if not monotone.all():
        logger.warning("EM log-likelihood decreased in a %d-component fit", n_components)

    best = int(np.argmax(np.where(candidates, previous, -np.inf)))
    return MixtureFit(
        weights[best], means[best], np.sqrt(variances[best]), float(previous[best]),
        int(iterations[best]), bool(monotone[best]), bool(converged[best]),
    )


def _mixture_statistic(
    x, max_components: int, restarts: int, seed: int, max_iter: int, strict: bool
) -> Tuple[float, List[MixtureFit]]:
    fits = [
        fit_mixture(
            x, m, restarts, derive_seed(seed, "em-restarts", m), max_iter=max_iter, strict=strict
        )
        for m in range(1, max_components + 1)
    ]
    best = max(fit.loglik for fit in fits[1:])
    return max(0.0, 2.0 * (best - fits[0].loglik)), fits


@dataclass(frozen=True)
class MixtureTestResult:
    statistic: float
    p_value: float
    fits: List[MixtureFit] = field(default_factory=list)


def mixture_lrt_test(
    sample,
    max_components: int = 2,
    n_boot: int = 199,
    restarts: int = 10,
    seed: int = 0,
    max_iter: int = 500,
) -> MixtureTestResult:
    """Likelihood ratio of the best 2..m component mixture against one Gaussian.

    The null distribution is a parametric bootstrap from the single-Gaussian
    fit, refitting every model on each replicate. Bootstrap fits that reach the
    iteration cap keep their best restart and are marked unconverged.

    Raises:
        NumericalError: When no restart of a mixture fit to ``sample`` itself
            converges within ``max_iter`` iterations.
    """
    x = np.asarray(sample, dtype=np.float64)
    if len(x) < 10:
        raise DataError("Mixture test needs at least 10 values")
    if not 2 <= max_components <= 3:
        raise DataError(f"max_components must be 2 or 3, got {max_components}")

    statistic, fits = _mixture_statistic(x, max_components, restarts, seed, max_iter, strict=True)
    mu, sigma = float(fits[0].means[0]), float(fits[0].sds[0])
    exceed = 0
    for b in range(n_boot):
        rng = np.random.default_rng(derive_seed(seed, "mixture-boot", b))
        replicate = rng.normal(mu, sigma, len(x))
        null, _ = _mixture_statistic(
            replicate, max_components, restarts, derive_seed(seed, "mixture-em", b), max_iter, strict=False
        )
        exceed += null >= statistic
    return MixtureTestResult(statistic, (1 + exceed) / (n_boot + 1), fits)


def _finite_rows(ensemble) -> List[np.ndarray]:
    members = np.atleast_2d(np.asarray(ensemble, dtype=np.float64))
    return [row[~np.isnan(row)] for row in members]


def replication_test(ensemble_a, ensemble_b) -> np.ndarray:
    """Asymptotic two-sample KS p-value per month between two view replicates."""
    rows_a, rows_b = _finite_rows(ensemble_a), _finite_rows(ensemble_b)
    if len(rows_a) != len(rows_b):
        raise DataError("Replicate ensembles cover different numbers of months")
    p_values = np.empty(len(rows_a))
    for i, (a, b) in enumerate(zip(rows_a, rows_b)):
        if len(a) < 10 or len(b) < 10:
            raise DataError(f"Replication test needs 10 values per month, got {len(a)} and {len(b)}")
        p_values[i] = ks_2samp(a, b, method="asymp").pvalue
    return p_values


def bh_fdr(pvals, q: float = 0.05) -> np.ndarray:
    """Benjamini-Hochberg step-up rejections at false discovery rate ``q``.

    NaN entries are untested: they are never flagged and do not count
    towards the number of hypotheses.
    """
    p = np.asarray(pvals, dtype=np.float64)
    if np.any((p < 0) | (p > 1)):
        raise DataError("p-values must lie in [0, 1]")
    if not 0 < q < 1:
        raise DataError(f"FDR level must lie in (0, 1), got {q}")
    tested = ~np.isnan(p)
    m = int(tested.sum())
    if m == 0:
        return np.zeros(len(p), dtype=bool)

    ranked = np.sort(p[tested])
    below = ranked <= np.arange(1, m + 1) * q / m
    if not below.any():
        return np.zeros(len(p), dtype=bool)
    cutoff = ranked[np.flatnonzero(below).max()]
    return tested & (p <= cutoff)


@dataclass(frozen=True)
class DiagnosticReport:
    times: np.ndarray
    rep_p: np.ndarray
    ks_p: np.ndarray
    mix_p: np.ndarray
    rep_flag: np.ndarray
    ks_flag: np.ndarray
    mix_flag: np.ndarray
    densities: List[Optional[DensityCurve]]
    gaussians: List[Optional[Tuple[float, float]]]
    q: float

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "time": [format_month(t) for t in self.times],
                "rep_p": self.rep_p,
                "ks_p": self.ks_p,
                "mix_p": self.mix_p,
                "rep_flag": self.rep_flag.astype(int),
                "ks_flag": self.ks_flag.astype(int),
                "mix_flag": self.mix_flag.astype(int),
            }
        )

    def density_frame(self, i: int) -> Optional[pd.DataFrame]:
        curve, params = self.densities[i], self.gaussians[i]
        if curve is None or params is None:
            return None
        return pd.DataFrame(
            {
                "x": curve.grid,
                "kde": curve.density,
                "gaussian": norm.pdf(curve.grid, params[0], params[1]),
            }
        )


def _diagnose_month(sample, seed, ks_boot, mix_boot, mix_components, restarts):
    if len(sample) < 10 or np.ptp(sample) == 0:
        logger.warning("Ensemble of %d values without spread; diagnostics skipped", len(sample))
        return 1.0, 1.0, None, None
    ks = durbin_ks_test(sample, ks_boot, derive_seed(seed, "durbin-ks"))
    try:
        mix_p = mixture_lrt_test(
            sample, mix_components, mix_boot, restarts, derive_seed(seed, "mixture")
        ).p_value
    except NumericalError as error:
        logger.warning("Mixture test left untested: %s", error)
        mix_p = float("nan")
    return ks.p_value, mix_p, kde(sample), gaussian_fit(sample)


def build_diagnostics(
    preds: PredictionSet,
    replicate: PredictionSet,
    q: float = 0.05,
    seed: int = 0,
    ks_boot: int = 999,
    mix_boot: int = 199,
    mix_components: int = 2,
    restarts: int = 10,
    n_jobs: int = 1,
) -> DiagnosticReport:
    """Replication, Durbin-KS and mixture p-values per month, screened by BH."""
    rep_p = replication_test(preds.ensemble, replicate.ensemble)
    samples = _finite_rows(preds.ensemble)
    results = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_diagnose_month)(
            sample, derive_seed(seed, "diagnostics", i), ks_boot, mix_boot, mix_components, restarts
        )
        for i, sample in enumerate(samples)
    )
    ks_p = np.array([r[0] for r in results])
    mix_p = np.array([r[1] for r in results])
    return DiagnosticReport(
        preds.times, rep_p, ks_p, mix_p,
        bh_fdr(rep_p, q), bh_fdr(ks_p, q), bh_fdr(mix_p, q),
        [r[2] for r in results], [r[3] for r in results], q,
    )


@dataclass
class CorrelationPopulations:
    """Predictive correlations grouped the way the englobement test compares them."""

    sim_sim: List[float] = field(default_factory=list)
    sim_real: List[float] = field(default_factory=list)
    real_real: Optional[float] = None
    augmented: Optional[float] = None
    sim_sim_pairs: List[Tuple[int, int]] = field(default_factory=list)
    sim_real_runs: List[int] = field(default_factory=list)

    def to_frame(self) -> pd.DataFrame:
        rows = [("sim_sim", c, i, j) for c, (i, j) in zip(self.sim_sim, self.sim_sim_pairs)]
        rows += [("sim_real", c, i, "real") for c, i in zip(self.sim_real, self.sim_real_runs)]
        if self.real_real is not None:
            rows.append(("real_real", self.real_real, "real", "real"))
        if self.augmented is not None:
            rows.append(("augmented", self.augmented, "real+proj", "real"))
        frame = pd.DataFrame(rows, columns=["population", "correlation", "train", "query"])
        return frame.astype({"train": str, "query": str})


@dataclass(frozen=True)
class EnglobementResult:
    populations: CorrelationPopulations
    p_value: float
    method: str
    failures: List[str]

    @property
    def medians(self) -> dict:
        return {
            "sim_sim": float(np.median(self.populations.sim_sim)),
            "sim_real": float(np.median(self.populations.sim_real)),
        }


def _correlation(train: SeriesPanel, query: SeriesPanel, views, settings, label, failures) -> Optional[float]:
    try:
        return forecast(train, query, views, settings).correlation()
    except (PipelineError, LinAlgError) as error:
        logger.warning("Englobement pair %s failed: %s", label, error)
        failures.append(f"{label}: {error}")
        return None


def englobement(
    model_runs: Sequence[SeriesPanel],
    real: SeriesPanel,
    views: Sequence[View],
    settings: ForecastSettings,
    method: str = "rank_sum",
    augmented: Optional[Tuple[SeriesPanel, Sequence[View]]] = None,
) -> EnglobementResult:
    """Compare model-predicts-model skill with model-predicts-reality skill.

    Every ordered pair of distinct model runs and every run against the real
    panel is forecast with the same views and settings; the two correlation
    populations are then compared with a location test. Failed pairs are
    logged, recorded and skipped.

    Args:
        model_runs (list[SeriesPanel]): At least three runs from the family.
        real (SeriesPanel): The observed system.
        views (list[View]): Shared views.
        settings (ForecastSettings): Shared neighbour/span settings.
        method (str): "rank_sum" or "t_test".
        augmented (tuple, optional): Real panel with projection variables and
            the views to use on it, for the augmented population.

    Returns:
        EnglobementResult: Populations, p-value and recorded failures.
    """
    if len(model_runs) < 3:
        raise DataError(f"Englobement needs at least 3 model runs, got {len(model_runs)}")

    populations = CorrelationPopulations()
    failures: List[str] = []
    for i, j in itertools.permutations(range(len(model_runs)), 2):
        value = _correlation(model_runs[i], model_runs[j], views, settings, f"run {i} -> run {j}", failures)
        if value is not None:
            populations.sim_sim.append(value)
            populations.sim_sim_pairs.append((i, j))
    for i, run in enumerate(model_runs):
        value = _correlation(run, real, views, settings, f"run {i} -> real", failures)
        if value is not None:
            populations.sim_real.append(value)
            populations.sim_real_runs.append(i)

    populations.real_real = _correlation(real, real, views, settings, "real -> real", failures)
    if augmented is not None:
        panel, augmented_views = augmented
        populations.augmented = _correlation(
            panel, panel, augmented_views, settings, "real+proj -> real", failures
        )

    if len(populations.sim_sim) < 2 or len(populations.sim_real) < 2:
        raise DataError(
            f"Too few usable correlations: {len(populations.sim_sim)} sim->sim, "
            f"{len(populations.sim_real)} sim->real"
        )
    p_value = location_test(populations.sim_sim, populations.sim_real, method)
    logger.info(
        "Englobement: %d sim->sim, %d sim->real, %s p=%.4g",
        len(populations.sim_sim), len(populations.sim_real), method, p_value,
    )
    return EnglobementResult(populations, p_value, method, failures)
