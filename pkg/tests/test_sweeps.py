# SPDX-License-Identifier: GPL-3.0-only

import os

import pytest

from commands.pipeline import load_config
from schemas.v1.models import RunConfig
from sweeps import (
    TrialOutcome,
    compare_trial,
    count_significant,
    englobement_trial,
    seed_sweep,
    sweep_configs,
)

CONFIGS = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "configs")

LORENZ_THETA = [10.0, 28.0, 2.6666666666666665]


def _small_config(**surrogate) -> RunConfig:
    return RunConfig.model_validate(
        {
            "data": {
                "surrogate": {"system": "lorenz63", "radius": 0.01, "n_runs": 3, "months": 150, **surrogate}
            },
            "embedding": {
                "pool": [{"variable": v, "lag": lag} for v in ("x", "y", "z") for lag in (0, -1)],
                "target": "x",
                "lead": 1,
                "dim": 3,
                "n_views": 3,
            },
            "test_span": {"last_months": 20},
            "inference": {"augmentation": False},
            "threads": 2,
        }
    )


def test_sweep_configs_set_seed_threads_and_overrides():
    base = _small_config()
    configs = sweep_configs(base, [4, 9], surrogate={"real_theta": [10.0, 30.0, 2.5]})

    assert [c.seed for c in configs] == [4, 9]
    assert all(c.threads == 1 for c in configs)
    assert all(c.data.surrogate.real_theta == [10.0, 30.0, 2.5] for c in configs)
    assert base.data.surrogate.real_theta is None
    assert base.threads == 2
    assert configs[0].embedding == base.embedding


def test_sweep_configs_revalidate_overrides():
    with pytest.raises(ValueError, match="real_theta"):
        sweep_configs(_small_config(), [0], surrogate={"real_theta": [1.0, 2.0]})


def test_englobement_sweep_is_seeded_and_worker_independent():
    cfg = _small_config()
    serial = seed_sweep(englobement_trial, cfg, [1, 2], n_jobs=1)
    parallel = seed_sweep(englobement_trial, cfg, [1, 2], n_jobs=2)

    assert [o.seed for o in serial] == [1, 2]
    assert all(0.0 < o.p_value <= 1.0 for o in serial)
    assert serial == parallel


def test_compare_trial_reports_a_direction():
    cfg = sweep_configs(_small_config(run_months=200), [3])[0]
    cfg = cfg.model_copy(update={"inference": cfg.inference.model_copy(update={"augmentation": True})})
    outcome = compare_trial(cfg)
    assert outcome.seed == 3
    assert outcome.direction in {"augmented better", "empirical better", "no difference"}
    assert 0.0 < outcome.p_value <= 1.0


def test_count_significant_filters_on_direction():
    outcomes = [
        TrialOutcome(0, 0.01, "augmented better"),
        TrialOutcome(1, 0.01, "empirical better"),
        TrialOutcome(2, 0.2, "augmented better"),
        TrialOutcome(3, 0.049, "augmented better"),
    ]
    assert count_significant(outcomes, 0.05) == 3
    assert count_significant(outcomes, 0.05, "augmented better") == 2
    assert count_significant(outcomes, 0.01) == 0


@pytest.fixture(scope="module")
def englobe_config() -> RunConfig:
    return load_config(os.path.join(CONFIGS, "englobe_sweep.json"))


@pytest.fixture(scope="module")
def compare_config() -> RunConfig:
    return load_config(os.path.join(CONFIGS, "compare_sweep.json"))


@pytest.mark.slow
def test_englobement_accepts_a_reality_inside_the_ball(englobe_config):
    outcomes = seed_sweep(englobement_trial, englobe_config, range(50), n_jobs=-1)
    accepted = sum(1 for o in outcomes if o.p_value > 0.05)
    assert accepted >= 40, [round(o.p_value, 4) for o in outcomes]


@pytest.mark.slow
def test_englobement_rejects_a_reality_far_outside_the_ball(englobe_config):
    far = [LORENZ_THETA[0], LORENZ_THETA[1] * 1.3, LORENZ_THETA[2]]
    outcomes = seed_sweep(englobement_trial, englobe_config, range(50), surrogate={"real_theta": far}, n_jobs=-1)
    assert count_significant(outcomes, 0.01) >= 45, [round(o.p_value, 4) for o in outcomes]


@pytest.mark.slow
def test_projections_from_an_informative_family_improve_forecasts(compare_config):
    outcomes = seed_sweep(compare_trial, compare_config, range(25), n_jobs=-1)
    assert count_significant(outcomes, 0.05, "augmented better") >= 18, outcomes


@pytest.mark.slow
def test_projections_from_noise_runs_rarely_claim_an_improvement(compare_config):
    outcomes = seed_sweep(compare_trial, compare_config, range(25), surrogate={"noise_runs": True}, n_jobs=-1)
    assert count_significant(outcomes, 0.05, "augmented better") <= 2, outcomes
