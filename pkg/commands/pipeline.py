# SPDX-License-Identifier: GPL-3.0-only

import json
import math
from dataclasses import dataclass, replace
from typing import Any, Dict, List, Optional

import numpy as np

from embedding import View, sample_views, split_views
from exceptions import ConfigError
from inference import (
    EnglobementResult,
    ImprovementResult,
    build_diagnostics,
    englobement,
    paired_improvement_test,
    prediction_bounds,
)
from logutils import get_logger
from predictor import (
    ForecastSettings,
    PredictionSet,
    add_projections,
    augment_pool,
    forecast,
)
from reporting import ReportManager
from schemas.v1.models import CommandResult, RunConfig, SurrogateSpec
from surrogate import make_experiment, noise_runs, sample_theta_ball
from timeseries import SeriesPanel, format_month, load_csv, month_index
from utils import derive_seed

logger = get_logger(__name__)


def load_config(path: str, overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """Read a JSON run configuration and apply CLI overrides of scalar keys.

    Raises:
        ConfigError: Unreadable file or malformed JSON.
        pydantic.ValidationError: Schema violations, with key paths.
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = json.load(f)
    except FileNotFoundError:
        logger.error("Config file not found: %s", path)
        raise ConfigError(f"Config file not found: {path}") from None
    except json.JSONDecodeError as e:
        logger.error("Invalid JSON in config file %s: %s", path, e)
        raise ConfigError(f"Invalid JSON in {path}: {e}") from None

    if not isinstance(raw, dict):
        raise ConfigError("Config must be a JSON object")
    for key, value in (overrides or {}).items():
        if value is not None:
            raw[key] = value
    return RunConfig.model_validate(raw)


@dataclass
class ExperimentData:
    model_runs: List[SeriesPanel]
    real: SeriesPanel
    manifest: Optional[Dict[str, Any]] = None


def run_surrogate(spec: SurrogateSpec, seed: int, threads: int = 1) -> ExperimentData:
    family = sample_theta_ball(spec.base_params(), spec.radius, spec.n_runs, derive_seed(seed, "theta-ball"))
    experiment = make_experiment(
        family,
        spec.real_params(),
        spec.obs_noise_sd,
        derive_seed(seed, "experiment"),
        x0=spec.x0,
        start=month_index(spec.start),
        n_jobs=threads,
    )
    runs = experiment.model_runs
    manifest = dict(experiment.manifest)
    if spec.noise_runs:
        runs = noise_runs(runs[0], spec.n_runs, derive_seed(seed, "noise-runs"))
        manifest["noise_runs"] = True
    return ExperimentData(runs, experiment.real, manifest)


def _check_variables(cfg: RunConfig, panels: List[SeriesPanel]) -> None:
    for panel in panels:
        for variable in cfg.embedding.variables:
            if variable not in panel.variables:
                raise ConfigError(
                    f"variable '{variable}' not found in panel '{panel.name}'", key="embedding"
                )


def load_data(cfg: RunConfig) -> ExperimentData:
    """Build the surrogate experiment or read the CSV panels named by the config."""
    data = cfg.data
    if data.surrogate is not None:
        loaded = run_surrogate(data.surrogate, cfg.seed, cfg.threads)
    else:
        real = load_csv(data.real.path, data.real.columns, name="real")
        runs = [
            load_csv(source.path, source.columns, name=f"model_{i + 1:02d}")
            for i, source in enumerate(data.model_runs)
        ]
        loaded = ExperimentData(runs, real)
    _check_variables(cfg, [loaded.real] + loaded.model_runs)
    return loaded


def forecast_settings(cfg: RunConfig, panel: SeriesPanel) -> ForecastSettings:
    return ForecastSettings(
        k=cfg.embedding.neighbors,
        test_span=cfg.test_span.months_after_origin(panel.end),
        standardize=cfg.embedding.standardize,
        index=cfg.embedding.neighbor_index,
        n_jobs=cfg.threads,
    )


def sample_run_views(cfg: RunConfig) -> List[View]:
    emb = cfg.embedding
    return sample_views(
        emb.coordinates(), emb.target, emb.lead, emb.dim, emb.n_views, derive_seed(cfg.seed, "views")
    )


def augmented_setup(cfg: RunConfig, data: ExperimentData, views: List[View], settings: ForecastSettings):
    """Real panel with one projection variable per model run, and views over the augmented pool."""
    if not data.model_runs:
        raise ConfigError("augmentation needs model runs to project onto", key="data model_runs")
    panel, names = add_projections(data.real, data.model_runs, views, settings)
    pool = cfg.embedding.coordinates()
    for name in names:
        pool = augment_pool(pool, name, cfg.inference.projection_lags)
    emb = cfg.embedding
    augmented_views = sample_views(
        pool, emb.target, emb.lead, emb.dim, emb.n_views, derive_seed(cfg.seed, "augmented-views")
    )
    return panel, augmented_views, names


def run_englobement(cfg: RunConfig, data: ExperimentData) -> EnglobementResult:
    """Englobement test of ``data`` under the config's views and settings."""
    views = sample_run_views(cfg)
    settings = forecast_settings(cfg, data.real)
    augmented = None
    if cfg.inference.augmentation and data.model_runs:
        panel, augmented_views, _ = augmented_setup(cfg, data, views, settings)
        augmented = (panel, augmented_views)
    return englobement(
        data.model_runs, data.real, views, settings, cfg.inference.location_test, augmented
    )


@dataclass
class Comparison:
    empirical: PredictionSet
    augmented: PredictionSet
    projections: List[str]
    result: ImprovementResult


def run_compare(cfg: RunConfig, data: ExperimentData) -> Comparison:
    """Empirical and projection-augmented forecasts of the real test span, paired."""
    views = sample_run_views(cfg)
    settings = forecast_settings(cfg, data.real)
    empirical = forecast(data.real, data.real, views, settings)

    if cfg.inference.augmentation:
        panel, augmented_views, names = augmented_setup(cfg, data, views, settings)
        augmented = forecast(panel, panel, augmented_views, settings)
    else:
        logger.warning("Augmentation disabled; comparing the empirical pool with itself")
        augmented, names = empirical, []

    result = paired_improvement_test(augmented, empirical, labels=("augmented", "empirical"))
    return Comparison(empirical, augmented, names, result)


def cmd_simulate(cfg: RunConfig) -> CommandResult:
    """Integrate the surrogate family and the real system; write panels and manifest."""
    spec = cfg.data.surrogate
    if spec is None:
        raise ConfigError("simulate needs a surrogate data source", key="data surrogate")
    data = run_surrogate(spec, cfg.seed, cfg.threads)

    report = ReportManager(cfg.output_dir)
    for run in data.model_runs:
        report.write_panel(run, f"{run.name}.csv")
    report.write_panel(data.real, "real.csv")

    manifest = dict(data.manifest)
    manifest["files"] = list(report.written)
    manifest["config"] = cfg.model_dump(mode="json", exclude={"output_dir", "threads"})
    report.write_json(manifest, "manifest.json")
    report.write_summary(
        "simulate",
        {
            "system": spec.system,
            "n_runs": len(data.model_runs),
            "noise_runs": spec.noise_runs,
            "months": len(data.real),
            "start": spec.start,
            "radius": spec.radius,
            "real_theta": list(spec.real_params().theta),
            "obs_noise_sd": spec.obs_noise_sd,
            "seed": cfg.seed,
            "files": manifest["files"],
        },
    )
    return CommandResult(
        success=True,
        message=f"wrote {len(data.model_runs)} model runs and the real panel to {cfg.output_dir}",
        files=list(report.written),
    )


def cmd_predict(cfg: RunConfig) -> CommandResult:
    """Multiview prediction of the real panel's test span from its own library."""
    data = load_data(cfg)
    views = sample_run_views(cfg)
    settings = forecast_settings(cfg, data.real)
    preds = forecast(data.real, data.real, views, settings)
    correlation = preds.correlation()

    report = ReportManager(cfg.output_dir)
    report.write_frame(preds.predictions_frame(), "predictions.csv")
    report.write_frame(preds.ensemble_frame(), "ensemble.csv")
    report.write_summary(
        "predict",
        {
            "target": cfg.embedding.target,
            "lead": cfg.embedding.lead,
            "dim": cfg.embedding.dim,
            "n_views": len(views),
            "k": settings.k,
            "n_times": len(preds),
            "first": format_month(preds.times[0]),
            "last": format_month(preds.times[-1]),
            "n_scored": len(preds.scored()[0]),
            "correlation": correlation,
        },
    )
    logger.info("Predictive correlation %.6f over %d months", correlation, len(preds))
    return CommandResult(
        success=True, message=f"predictive correlation: {correlation:.10f}", files=list(report.written)
    )


def cmd_englobe(cfg: RunConfig) -> CommandResult:
    """Englobement: sim->sim against sim->real predictive correlations."""
    result = run_englobement(cfg, load_data(cfg))
    populations = result.populations
    medians = result.medians

    report = ReportManager(cfg.output_dir)
    report.write_frame(populations.to_frame(), "populations.csv")
    report.write_json(
        {
            "method": result.method,
            "p_value": result.p_value,
            "medians": medians,
            "n_sim_sim": len(populations.sim_sim),
            "n_sim_real": len(populations.sim_real),
            "real_real": populations.real_real,
            "augmented": populations.augmented,
            "failures": result.failures,
        },
        "englobe.json",
    )
    report.write_summary(
        "englobe",
        {
            "method": result.method,
            "n_sim_sim": len(populations.sim_sim),
            "n_sim_real": len(populations.sim_real),
            "median_sim_sim": medians["sim_sim"],
            "median_sim_real": medians["sim_real"],
            "real_real": populations.real_real,
            "augmented": populations.augmented,
            "p_value": result.p_value,
            "failures": result.failures,
        },
    )
    return CommandResult(
        success=True, message=f"englobement p-value: {result.p_value:.6g}", files=list(report.written)
    )


def cmd_bounds(cfg: RunConfig) -> CommandResult:
    """Ensemble prediction bounds plus the FDR-screened distribution diagnostics."""
    inference = cfg.inference
    required = math.ceil(2 / inference.alpha - 1e-9)
    if cfg.embedding.n_views < required:
        raise ConfigError(
            f"alpha={inference.alpha} needs at least {required} views per ensemble",
            key="embedding n_views",
        )

    data = load_data(cfg)
    emb = cfg.embedding
    views, replicate_views = split_views(
        emb.coordinates(), emb.target, emb.lead, emb.dim, emb.n_views, derive_seed(cfg.seed, "views")
    )
    settings = forecast_settings(cfg, data.real)
    preds = forecast(data.real, data.real, views, settings)
    replicate = forecast(data.real, data.real, replicate_views, settings)

    calibration = None
    if inference.calibration_months > 0:
        wider = replace(settings, test_span=settings.test_span + inference.calibration_months)
        earlier = forecast(data.real, data.real, views, wider)
        keep = earlier.times < preds.times[0]
        calibration = (earlier.multiview_mean[keep], earlier.observed[keep])
    bounds = prediction_bounds(preds.ensemble, inference.alpha, calibration)

    diagnostics = build_diagnostics(
        preds,
        replicate,
        q=inference.fdr_q,
        seed=derive_seed(cfg.seed, "diagnostics"),
        ks_boot=inference.ks_bootstrap,
        mix_boot=inference.mixture_bootstrap,
        mix_components=inference.mixture_components,
        restarts=inference.mixture_restarts,
        n_jobs=cfg.threads,
    )

    report = ReportManager(cfg.output_dir)
    report.write_frame(preds.predictions_frame(), "predictions.csv")
    report.write_frame(preds.ensemble_frame(), "ensemble.csv")
    frame = preds.predictions_frame()[["time", "multiview_mean", "observed"]]
    frame.insert(1, "lo", bounds.lo)
    frame.insert(2, "hi", bounds.hi)
    report.write_frame(frame, "bounds.csv")
    report.write_frame(diagnostics.to_frame(), "diagnostics.csv")

    recent = len(preds) if inference.density_times is None else min(inference.density_times, len(preds))
    for i in range(len(preds) - recent, len(preds)):
        density = diagnostics.density_frame(i)
        if density is not None:
            report.write_frame(density, f"density_{format_month(preds.times[i])}.csv")

    observed = ~np.isnan(preds.observed)
    coverage = float(bounds.covers(preds.observed)[observed].mean()) if observed.any() else None
    report.write_summary(
        "bounds",
        {
            "alpha": inference.alpha,
            "calibrated": calibration is not None,
            "calibration_months": inference.calibration_months,
            "n_times": len(preds),
            "coverage": coverage,
            "q": inference.fdr_q,
            "n_rep_flags": int(diagnostics.rep_flag.sum()),
            "n_ks_flags": int(diagnostics.ks_flag.sum()),
            "n_mix_flags": int(diagnostics.mix_flag.sum()),
        },
    )
    message = "bounds written"
    if coverage is not None:
        message = f"bounds coverage: {coverage:.4f}"
    return CommandResult(success=True, message=message, files=list(report.written))


def cmd_compare(cfg: RunConfig) -> CommandResult:
    """Paired test of the projection-augmented pool against the empirical pool."""
    comparison = run_compare(cfg, load_data(cfg))
    empirical, augmented = comparison.empirical, comparison.augmented
    names, result = comparison.projections, comparison.result

    report = ReportManager(cfg.output_dir)
    report.write_frame(empirical.predictions_frame(), "predictions_empirical.csv")
    report.write_frame(augmented.predictions_frame(), "predictions_augmented.csv")
    report.write_json(
        {
            "p_value": result.p_value,
            "direction": result.direction,
            "median_abs_error_empirical": result.median_abs_error_b,
            "median_abs_error_augmented": result.median_abs_error_a,
            "statistic": result.statistic,
            "n_times": result.n_times,
            "n_zero": result.n_zero,
            "projections": names,
        },
        "compare.json",
    )
    report.write_summary(
        "compare",
        {
            "target": cfg.embedding.target,
            "lead": cfg.embedding.lead,
            "projections": names,
            "n_times": result.n_times,
            "n_zero": result.n_zero,
            "median_empirical": result.median_abs_error_b,
            "median_augmented": result.median_abs_error_a,
            "p_value": result.p_value,
            "direction": result.direction,
        },
    )
    return CommandResult(
        success=True,
        message=f"{result.direction} (signed-rank p-value {result.p_value:.6g})",
        files=list(report.written),
    )


def cmd_validate(cfg: RunConfig) -> CommandResult:
    """Config lint: schema already passed; check that every variable resolves."""
    if cfg.data.surrogate is not None:
        available = cfg.data.surrogate.base_params().variables
        missing = [v for v in cfg.embedding.variables if v not in available]
        if missing:
            raise ConfigError(
                f"variable(s) {', '.join(missing)} not produced by {cfg.data.surrogate.system}",
                key="embedding",
            )
    else:
        load_data(cfg)
    sample_run_views(cfg)
    return CommandResult(success=True, message="config OK")
