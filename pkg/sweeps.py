# SPDX-License-Identifier: GPL-3.0-only
"""Seeded repetitions of whole experiments.

A trial rebuilds the data for one master seed and runs the same code path as
the matching CLI command, without writing any files. Trials run in worker
processes; each one is single-threaded, so outcomes do not depend on
``n_jobs``.
"""

import copy
from dataclasses import dataclass
from typing import Any, Callable, Dict, Iterable, List, Optional

import numpy as np
from joblib import Parallel, delayed

from commands.pipeline import load_data, run_compare, run_englobement
from logutils import get_logger
from schemas.v1.models import RunConfig

logger = get_logger(__name__)


@dataclass(frozen=True)
class TrialOutcome:
    seed: int
    p_value: float
    direction: str = ""


def englobement_trial(cfg: RunConfig) -> TrialOutcome:
    result = run_englobement(cfg, load_data(cfg))
    return TrialOutcome(cfg.seed, result.p_value)


def compare_trial(cfg: RunConfig) -> TrialOutcome:
    result = run_compare(cfg, load_data(cfg)).result
    return TrialOutcome(cfg.seed, result.p_value, result.direction)


def sweep_configs(
    cfg: RunConfig, seeds: Iterable[int], surrogate: Optional[Dict[str, Any]] = None
) -> List[RunConfig]:
    """One validated config per seed, with optional surrogate-block overrides."""
    raw = cfg.model_dump(mode="json", exclude_none=True)
    if surrogate:
        raw["data"]["surrogate"].update(surrogate)
    configs = []
    for seed in seeds:
        item = copy.deepcopy(raw)
        item.update(seed=int(seed), threads=1)
        configs.append(RunConfig.model_validate(item))
    return configs


def seed_sweep(
    trial: Callable[[RunConfig], TrialOutcome],
    cfg: RunConfig,
    seeds: Iterable[int],
    surrogate: Optional[Dict[str, Any]] = None,
    n_jobs: int = 1,
) -> List[TrialOutcome]:
    """Run ``trial`` once per seed.

    Args:
        trial (callable): :func:`englobement_trial`, :func:`compare_trial` or
            any picklable function of a config.
        cfg (RunConfig): Base experiment.
        seeds (iterable): Master seeds, one trial each.
        surrogate (dict, optional): Overrides of the surrogate block, e.g.
            ``{"real_theta": [...]}`` or ``{"noise_runs": True}``.
        n_jobs (int): Worker processes; -1 uses every core.

    Returns:
        list[TrialOutcome]: In seed order.
    """
    configs = sweep_configs(cfg, seeds, surrogate)
    outcomes = Parallel(n_jobs=n_jobs)(delayed(trial)(c) for c in configs)
    p_values = np.array([o.p_value for o in outcomes], dtype=np.float64)
    logger.info(
        "Sweep of %d seeds: median p %.4g, %d below 0.05",
        len(outcomes), float(np.nanmedian(p_values)) if len(outcomes) else float("nan"),
        int(np.sum(p_values < 0.05)),
    )
    return list(outcomes)


def count_significant(
    outcomes: List[TrialOutcome], alpha: float, direction: Optional[str] = None
) -> int:
    """Outcomes with p < ``alpha``, optionally only those pointing one way."""
    return sum(
        1 for o in outcomes
        if o.p_value < alpha and (direction is None or o.direction == direction)
    )
