# SPDX-License-Identifier: GPL-3.0-only
"""Nearest-neighbour local linear prediction over many views.

Each view predicts with a LARS path fitted on its k nearest neighbours and cut
by Mallows' Cp; the multiview prediction averages those fits, and the single
nearest neighbours of all views form the predictive ensemble.
"""

import warnings
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy.spatial import cKDTree
from scipy.stats import pearsonr
from sklearn.exceptions import ConvergenceWarning
from sklearn.linear_model import lars_path as sklearn_lars_path

from embedding import Coordinate, DelayMatrix, View, build_delay_matrix, query_vectors
from exceptions import DataError
from logutils import get_logger
from timeseries import SeriesPanel, format_month, standardize

logger = get_logger(__name__)

# Residual sum of squares of the full model, relative to the total sum of
# squares, below which the fit counts as exact.
DEGENERATE_RTOL = 1e-20


@dataclass(frozen=True)
class NeighborSet:
    """Train-row indices and distances, nearest first."""

    indices: np.ndarray
    distances: np.ndarray


def _euclidean(points: np.ndarray, query_x: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum((points - query_x) ** 2, axis=1))


class NeighborIndex:
    """Exact k-nearest-neighbour search over one delay matrix.

    ``kind="brute"`` scans every row; ``kind="kdtree"`` prunes with a KD-tree
    and then ranks the candidates exactly like the scan does, so both return
    the same neighbours. Ties go to the earlier target month.
    """

    def __init__(self, train: DelayMatrix, kind: str = "brute"):
        if kind not in ("brute", "kdtree"):
            raise DataError(f"Unknown neighbour index '{kind}'")
        self.train = train
        self.kind = kind
        self._tree = cKDTree(train.X) if kind == "kdtree" and len(train) else None

    def query(self, query_x, k: int, exclude: Optional[np.ndarray] = None) -> NeighborSet:
        query_x = np.asarray(query_x, dtype=np.float64)
        if query_x.shape != (self.train.view.dim,):
            raise DataError(
                f"Query has {query_x.size} components, view has {self.train.view.dim}"
            )
        allowed = np.ones(len(self.train), dtype=bool) if exclude is None else ~exclude
        available = int(allowed.sum())
        if k < 1 or k > available:
            raise DataError(f"k={k} neighbours requested from {available} training rows")

        if self._tree is None:
            candidates = np.flatnonzero(allowed)
        else:
            reach = min(k + len(self.train) - available, len(self.train))
            distances, indices = self._tree.query(query_x, k=reach)
            indices = np.atleast_1d(indices)
            distances = np.atleast_1d(distances)
            radius = distances[allowed[indices]][k - 1]
            ball = self._tree.query_ball_point(query_x, r=radius * (1 + 1e-9) + 1e-300)
            candidates = np.array(sorted(i for i in ball if allowed[i]), dtype=np.int64)

        distances = _euclidean(self.train.X[candidates], query_x)
        order = np.argsort(distances, kind="stable")[:k]
        return NeighborSet(candidates[order], distances[order])


def knn(
    train: DelayMatrix,
    query_x,
    k: int,
    exclude: Optional[np.ndarray] = None,
    index: str = "brute",
) -> NeighborSet:
    """The ``k`` training rows closest to ``query_x`` in Euclidean distance."""
    return NeighborIndex(train, index).query(query_x, k, exclude)


@dataclass(frozen=True)
class LarsPath:
    """Coefficients after each LARS step, in the caller's units.

    Row ``j`` of ``coefs`` holds the model after ``j`` steps; row 0 is the
    intercept-only model.
    """

    coefs: np.ndarray
    intercepts: np.ndarray
    alphas: np.ndarray
    active: Tuple[int, ...]
    truncated: bool

    @property
    def n_steps(self) -> int:
        return len(self.coefs) - 1


def lars_path(X, y) -> LarsPath:
    """Plain least angle regression path (no lasso modification).

    Columns are centred and scaled to unit norm before the path is computed and
    the intercept is restored afterwards. The path runs at most
    ``min(p, n - 2)`` steps and stops early, with ``truncated`` set, when the
    active set loses rank.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, p = X.shape
    if n < 2:
        raise DataError("LARS needs at least two rows")

    x_mean = X.mean(axis=0)
    y_mean = float(y.mean())
    centered = X - x_mean
    norms = np.linalg.norm(centered, axis=0)
    usable = np.flatnonzero(norms > 1e-12 * max(float(norms.max(initial=0.0)), 1.0))
    truncated = len(usable) < p
    scaled = centered[:, usable] / norms[usable]
    residual = y - y_mean

    max_steps = min(len(usable), n - 2)
    if max_steps <= 0 or not np.any(residual):
        path = np.zeros((1, len(usable)))
        alphas = np.zeros(1)
        order: List[int] = []
    else:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            alphas, order, coefs = sklearn_lars_path(
                scaled, residual, method="lar", max_iter=max_steps
            )
        path = coefs.T
        order = list(order)

    cut = len(path)
    for step in range(1, len(path)):
        active = np.flatnonzero(path[step])
        if np.linalg.matrix_rank(scaled[:, active]) < len(active):
            cut = step
            truncated = True
            logger.debug("LARS path truncated at step %d: active set lost rank", step)
            break
    path = path[:cut]

    coefs = np.zeros((len(path), p))
    coefs[:, usable] = path / norms[usable]
    intercepts = y_mean - coefs @ x_mean
    active = tuple(int(usable[j]) for j in order[: cut - 1])
    return LarsPath(coefs, intercepts, np.asarray(alphas[:cut]), active, truncated)


@dataclass(frozen=True)
class CpSelection:
    """The LARS step chosen by Mallows' Cp."""

    step: int
    coef: np.ndarray
    intercept: float
    cp: np.ndarray
    sigma2: float
    degenerate: bool

    def predict(self, x) -> float:
        return float(self.intercept + np.asarray(x, dtype=np.float64) @ self.coef)


def cp_select(path: LarsPath, X, y) -> CpSelection:
    """Pick the path step minimizing ``RSS/σ̂² - n + 2(d + 1)``.

    ``σ̂²`` comes from the full least-squares model. Ties go to the earlier
    (smaller) step. An exact full fit has no variance estimate; the path's last
    step is returned with ``degenerate`` set.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, p = X.shape
    if n <= p + 1:
        raise DataError(f"Mallows' Cp needs more than {p + 1} rows, got {n}")

    design = np.column_stack([np.ones(n), X])
    beta, *_ = np.linalg.lstsq(design, y, rcond=None)
    rss_full = float(np.sum((y - design @ beta) ** 2))
    tss = float(np.sum((y - y.mean()) ** 2))

    fitted = path.intercepts[:, None] + path.coefs @ X.T
    rss = np.sum((y[None, :] - fitted) ** 2, axis=1)
    sizes = np.count_nonzero(path.coefs, axis=1)

    if tss == 0.0 or rss_full <= DEGENERATE_RTOL * tss:
        step = path.n_steps
        return CpSelection(
            step, path.coefs[step], float(path.intercepts[step]),
            np.full(len(rss), np.nan), 0.0, True,
        )

    sigma2 = rss_full / (n - p - 1)
    cp = rss / sigma2 - n + 2 * (sizes + 1)
    step = int(np.argmin(cp))
    return CpSelection(step, path.coefs[step], float(path.intercepts[step]), cp, sigma2, False)


def _fit_neighbors(train: DelayMatrix, neighbors: NeighborSet, query_x) -> float:
    X = train.X[neighbors.indices]
    y = train.Y[neighbors.indices]
    selection = cp_select(lars_path(X, y), X, y)
    return selection.predict(query_x)


def local_linear_predict(
    train: DelayMatrix,
    query_x,
    k: int,
    exclude: Optional[np.ndarray] = None,
    index: str = "brute",
) -> float:
    """LARS + Cp linear model on the k nearest neighbours, evaluated at ``query_x``."""
    if k < train.view.dim + 2:
        raise DataError(f"k={k} is below dim + 2 = {train.view.dim + 2}")
    neighbors = knn(train, query_x, k, exclude, index)
    return _fit_neighbors(train, neighbors, query_x)


def single_nn_predict(
    train: DelayMatrix, query_x, exclude: Optional[np.ndarray] = None, index: str = "brute"
) -> float:
    """Target value of the single nearest training row."""
    if len(train) == 0:
        raise DataError("Cannot predict from an empty training matrix")
    neighbors = knn(train, query_x, 1, exclude, index)
    return float(train.Y[neighbors.indices[0]])


@dataclass(frozen=True, eq=False)
class PredictionSet:
    """Multiview predictions for a run of target months.

    ``ensemble`` and ``per_view_fit`` have one column per view; NaN marks a
    view skipped at that month.
    """

    times: np.ndarray
    multiview_mean: np.ndarray
    ensemble: np.ndarray
    per_view_fit: np.ndarray
    observed: np.ndarray
    view_labels: Tuple[str, ...] = ()

    def __len__(self) -> int:
        return len(self.times)

    @property
    def n_views(self) -> int:
        return self.ensemble.shape[1]

    @property
    def n_views_used(self) -> np.ndarray:
        return np.sum(~np.isnan(self.per_view_fit), axis=1)

    def scored(self) -> Tuple[np.ndarray, np.ndarray]:
        """Prediction/observation pairs where both are available."""
        keep = ~np.isnan(self.observed) & ~np.isnan(self.multiview_mean)
        return self.multiview_mean[keep], self.observed[keep]

    def correlation(self) -> float:
        return predictive_correlation(*self.scored())

    def rescale(self, mean: float, sd: float) -> "PredictionSet":
        """Map every prediction and observation through ``x * sd + mean``."""
        return replace(
            self,
            multiview_mean=self.multiview_mean * sd + mean,
            ensemble=self.ensemble * sd + mean,
            per_view_fit=self.per_view_fit * sd + mean,
            observed=self.observed * sd + mean,
        )

    def predictions_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "time": [format_month(t) for t in self.times],
                "multiview_mean": self.multiview_mean,
                "observed": self.observed,
                "n_views_used": self.n_views_used,
            }
        )

    def ensemble_frame(self) -> pd.DataFrame:
        m, v = self.ensemble.shape
        return pd.DataFrame(
            {
                "time": np.repeat([format_month(t) for t in self.times], v),
                "view_id": np.tile(np.arange(v), m),
                "single_nn": self.ensemble.reshape(-1),
                "local_linear": self.per_view_fit.reshape(-1),
            }
        )


def _predict_view(
    train_panel: SeriesPanel,
    query_panel: SeriesPanel,
    view: View,
    k: int,
    origin: Optional[int],
    query_times: np.ndarray,
    index: str,
) -> Tuple[np.ndarray, np.ndarray]:
    fits = np.full(len(query_times), np.nan)
    singles = np.full(len(query_times), np.nan)
    try:
        train = build_delay_matrix(train_panel, view)
    except DataError as error:
        logger.warning("Skipping view [%s]: %s", view.label, error)
        return fits, singles
    if origin is not None:
        train = train.subset(train.times <= origin)
    if len(train) < k:
        logger.warning("Skipping view [%s]: %d training rows for k=%d", view.label, len(train), k)
        return fits, singles

    same_panel = train_panel is query_panel
    finder = NeighborIndex(train, index)
    queries = query_vectors(query_panel, view, query_times)
    for i, target_time in enumerate(query_times):
        if np.isnan(queries[i]).any():
            continue
        exclude = None
        if same_panel:
            exclude = np.abs(train.times - target_time) <= view.depth
            if len(train) - int(exclude.sum()) < k:
                continue
        neighbors = finder.query(queries[i], k, exclude)
        fits[i] = _fit_neighbors(train, neighbors, queries[i])
        singles[i] = train.Y[neighbors.indices[0]]
    return fits, singles


def multiview_predict(
    train_panel: SeriesPanel,
    query_panel: SeriesPanel,
    views: Sequence[View],
    k: int,
    origin: Optional[int] = None,
    query_times: Optional[Sequence[int]] = None,
    index: str = "brute",
    n_jobs: int = 1,
    require_all: bool = True,
) -> PredictionSet:
    """Average the per-view local linear predictions for each query month.

    Args:
        train_panel (SeriesPanel): Library panel.
        query_panel (SeriesPanel): Panel the query coordinates are read from.
            When it is the same object as ``train_panel``, library rows within
            one lag window of the query month are excluded.
        views (list[View]): Views sharing target and lead.
        k (int): Neighbours per local fit.
        origin (int, optional): Library rows must have target month ≤ origin.
        query_times (list[int], optional): Target months to predict; defaults
            to the query panel's months after ``origin``.
        index (str): "brute" or "kdtree" neighbour search.
        n_jobs (int): Worker threads; results do not depend on it.
        require_all (bool): Raise when some month has no usable view.

    Returns:
        PredictionSet: Predictions, ensembles and observations.
    """
    views = list(views)
    if not views:
        raise DataError("No views to predict with")
    target, lead = views[0].target, views[0].lead
    if any(v.target != target or v.lead != lead for v in views):
        raise DataError("All views must share target and lead")
    if k < max(v.dim for v in views) + 2:
        raise DataError(f"k={k} is below view dimension + 2")

    if query_times is None:
        if origin is None:
            raise DataError("Either origin or query_times is required")
        query_times = query_panel.times[query_panel.times > origin]
    query_times = np.asarray(query_times, dtype=np.int64)
    if len(query_times) == 0:
        raise DataError("No query months to predict")

    results = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_predict_view)(train_panel, query_panel, view, k, origin, query_times, index)
        for view in views
    )
    per_view_fit = np.column_stack([fits for fits, _ in results])
    ensemble = np.column_stack([singles for _, singles in results])

    used = np.sum(~np.isnan(per_view_fit), axis=1)
    if require_all and np.any(used == 0):
        missing = ", ".join(format_month(t) for t in query_times[used == 0])
        raise DataError(f"No usable view for target month(s) {missing}")
    skipped = int(np.sum(used < len(views)))
    if skipped:
        logger.warning("%d of %d months were predicted with fewer than %d views",
                       skipped, len(query_times), len(views))

    with np.errstate(invalid="ignore", divide="ignore"):
        mean = np.nansum(per_view_fit, axis=1) / used
    mean[used == 0] = np.nan

    observed = np.array([query_panel.value_at(target, t) for t in query_times])
    return PredictionSet(
        query_times, mean, ensemble, per_view_fit, observed, tuple(v.label for v in views)
    )


def predictive_correlation(pred, obs) -> float:
    """Pearson correlation between predictions and observations."""
    pred = np.asarray(pred, dtype=np.float64)
    obs = np.asarray(obs, dtype=np.float64)
    if pred.shape != obs.shape:
        raise DataError(f"Length mismatch: {pred.size} predictions, {obs.size} observations")
    if pred.size < 3:
        raise DataError("Predictive correlation needs at least 3 pairs")
    if np.ptp(pred) == 0 or np.ptp(obs) == 0:
        raise DataError("undefined correlation: constant input")
    return float(np.clip(pearsonr(pred, obs)[0], -1.0, 1.0))


def augment_pool(
    pool: Sequence[Coordinate], projection: str, lags: Sequence[int]
) -> List[Coordinate]:
    """Extend the coordinate pool with lagged copies of a projection series."""
    augmented = list(pool)
    for lag in lags:
        coord = Coordinate(projection, lag)
        if coord in augmented:
            raise DataError(f"Duplicate coordinate {coord.label} in pool")
        augmented.append(coord)
    return augmented


@dataclass(frozen=True)
class ForecastSettings:
    """Neighbour and span settings shared by every forecast of a run."""

    k: int
    test_span: int
    standardize: bool = True
    index: str = "brute"
    n_jobs: int = 1


def library_origin(panel: SeriesPanel, test_span: int) -> int:
    """Last target month a panel contributes to libraries."""
    origin = panel.end - test_span
    if origin < panel.start:
        raise DataError(
            f"Test span of {test_span} months exceeds panel '{panel.name}' ({len(panel)} months)"
        )
    return origin


def _view_variables(views: Sequence[View]) -> List[str]:
    names: List[str] = []
    for view in views:
        names.extend(view.variables)
    return list(dict.fromkeys(names))


def forecast(
    train_panel: SeriesPanel,
    query_panel: SeriesPanel,
    views: Sequence[View],
    settings: ForecastSettings,
) -> PredictionSet:
    """Predict the last ``test_span`` months of ``query_panel`` from ``train_panel``.

    Both panels are standardized with their own library-span statistics, and
    the predictions are returned in the query panel's target units.
    """
    same = train_panel is query_panel
    query_origin = library_origin(query_panel, settings.test_span)
    train_origin = query_origin if same else library_origin(train_panel, settings.test_span)
    query_times = query_panel.times[query_panel.times > query_origin]
    target = views[0].target

    if not settings.standardize:
        return multiview_predict(
            train_panel, query_panel, views, settings.k, train_origin, query_times,
            settings.index, settings.n_jobs,
        )

    variables = _view_variables(views)
    train_std, train_stats = standardize(train_panel, variables=variables, until=train_origin)
    if same:
        query_std, query_stats = train_std, train_stats
    else:
        query_std, query_stats = standardize(query_panel, variables=variables, until=query_origin)

    preds = multiview_predict(
        train_std, query_std, views, settings.k, train_origin, query_times,
        settings.index, settings.n_jobs,
    )
    return preds.rescale(query_stats.means[target], query_stats.sds[target])


def project_onto_run(
    model_run: SeriesPanel,
    real: SeriesPanel,
    views: Sequence[View],
    settings: ForecastSettings,
) -> np.ndarray:
    """Forecast the real target from a model-run library, month by month.

    The value at month ``s`` is the model-library forecast of the target at
    ``s + lead`` from real coordinates available at ``s``, in the real
    target's units. Months whose coordinates are unavailable are NaN.
    """
    target, lead = views[0].target, views[0].lead
    variables = _view_variables(views)
    real_origin = library_origin(real, settings.test_span)

    model_std, _ = standardize(model_run, variables=variables)
    real_std, real_stats = standardize(real, variables=variables, until=real_origin)
    preds = multiview_predict(
        model_std, real_std, views, settings.k, None, real.times + lead,
        settings.index, settings.n_jobs, require_all=False,
    )
    return real_stats.unscale(target, preds.multiview_mean)


def add_projections(
    real: SeriesPanel,
    model_runs: Sequence[SeriesPanel],
    views: Sequence[View],
    settings: ForecastSettings,
) -> Tuple[SeriesPanel, List[str]]:
    """Register one projection variable per model run on the real panel."""
    panel = real
    names = []
    for i, run in enumerate(model_runs):
        name = f"proj_{i + 1:02d}"
        if name in panel.variables:
            raise DataError(f"Panel '{real.name}' already has a variable '{name}'")
        panel = panel.with_variable(name, project_onto_run(run, real, views, settings))
        names.append(name)
        logger.info("Projected %s onto model run %s as %s", real.name, run.name, name)
    return panel, names
