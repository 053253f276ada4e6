# SPDX-License-Identifier: GPL-3.0-only
"""Surrogate dynamics standing in for model runs and for reality.

Lorenz-63 and Lorenz-96 systems are integrated with fixed-step RK4, the
post-burn-in trajectory is averaged over blocks of ``aggregate`` samples (one
output row per block, the analogue of a monthly mean), and each state
component becomes a panel variable.
"""

from dataclasses import asdict, dataclass, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed

from exceptions import DataError, NumericalError
from logutils import get_logger
from timeseries import SeriesPanel, format_month, inject_noise
from utils import derive_seed

logger = get_logger(__name__)

SYSTEMS = ("lorenz63", "lorenz96")
DEFAULT_THETA = {"lorenz63": (10.0, 28.0, 8.0 / 3.0), "lorenz96": (8.0, 5.0)}
DEFAULT_START = 1960 * 12


def lorenz63_rhs(state: np.ndarray, theta: Sequence[float]) -> np.ndarray:
    sigma, rho, beta = theta
    x, y, z = state
    return np.array([sigma * (y - x), x * (rho - z) - y, x * y - beta * z])


def lorenz96_rhs(state: np.ndarray, theta: Sequence[float]) -> np.ndarray:
    forcing = theta[0]
    return (np.roll(state, -1) - np.roll(state, 2)) * np.roll(state, 1) - state + forcing


def rk4_step(f: Callable[[np.ndarray], np.ndarray], state: np.ndarray, dt: float) -> np.ndarray:
    """One classical fourth-order Runge-Kutta step of ``dx/dt = f(x)``."""
    k1 = f(state)
    k2 = f(state + 0.5 * dt * k1)
    k3 = f(state + 0.5 * dt * k2)
    k4 = f(state + dt * k3)
    return state + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def aggregate_blocks(samples: np.ndarray, aggregate: int) -> np.ndarray:
    """Average consecutive blocks of ``aggregate`` rows; a trailing partial block is dropped."""
    rows = len(samples) // aggregate
    trimmed = samples[: rows * aggregate]
    return trimmed.reshape(rows, aggregate, -1).mean(axis=1)


@dataclass(frozen=True)
class DynamicsParams:
    """One member of a dynamics family.

    ``theta`` is (sigma, rho, beta) for lorenz63 and (forcing, sites) for
    lorenz96. ``steps`` counts every RK4 step including ``burn_in``.
    """

    system: str = "lorenz63"
    theta: Tuple[float, ...] = DEFAULT_THETA["lorenz63"]
    dt: float = 0.01
    steps: int = 26_000
    burn_in: int = 1_000
    aggregate: int = 25

    def __post_init__(self):
        if self.system not in SYSTEMS:
            raise DataError(f"Unknown system '{self.system}', expected one of {', '.join(SYSTEMS)}")
        theta = tuple(float(t) for t in self.theta)
        if self.system == "lorenz63" and len(theta) != 3:
            raise DataError("lorenz63 theta must be (sigma, rho, beta)")
        if self.system == "lorenz96" and (len(theta) != 2 or theta[1] != int(theta[1]) or theta[1] < 4):
            raise DataError("lorenz96 theta must be (forcing, sites) with at least 4 sites")
        if not self.dt > 0:
            raise DataError(f"dt must be positive, got {self.dt}")
        if self.burn_in < 0 or self.steps <= self.burn_in:
            raise DataError(f"steps ({self.steps}) must exceed burn_in ({self.burn_in})")
        if self.aggregate < 1:
            raise DataError(f"aggregate must be at least 1, got {self.aggregate}")
        object.__setattr__(self, "theta", theta)

    @classmethod
    def for_months(cls, months: int, **kwargs) -> "DynamicsParams":
        """Params whose post-burn-in trajectory yields exactly ``months`` rows."""
        params = cls(**kwargs)
        return replace(params, steps=params.burn_in + months * params.aggregate)

    @property
    def state_dim(self) -> int:
        return 3 if self.system == "lorenz63" else int(self.theta[1])

    @property
    def variables(self) -> List[str]:
        if self.system == "lorenz63":
            return ["x", "y", "z"]
        return [f"x{i:02d}" for i in range(self.state_dim)]

    @property
    def n_rows(self) -> int:
        return (self.steps - self.burn_in) // self.aggregate

    def rhs(self) -> Callable[[np.ndarray], np.ndarray]:
        theta = self.theta
        if self.system == "lorenz63":
            return lambda state: lorenz63_rhs(state, theta)
        return lambda state: lorenz96_rhs(state, theta)

    def default_state(self, seed: int) -> np.ndarray:
        """A seeded starting point near the attractor's usual basin."""
        rng = np.random.default_rng(seed)
        if self.system == "lorenz63":
            return np.array([1.0, 1.0, 1.0]) + rng.normal(0.0, 0.1, 3)
        state = np.full(self.state_dim, self.theta[0])
        state[0] += 0.01
        return state + rng.normal(0.0, 0.01, self.state_dim)

    def to_dict(self) -> Dict:
        return asdict(self)


def integrate(
    params: DynamicsParams,
    x0: Optional[Sequence[float]] = None,
    seed: int = 0,
    start: int = DEFAULT_START,
    name: str = "run",
) -> SeriesPanel:
    """Integrate one trajectory into a panel of block means.

    Args:
        params (DynamicsParams): System, theta and step settings.
        x0 (list, optional): Initial state; drawn from ``seed`` when omitted.
        seed (int): Seed for the default initial state.
        start (int): Month index of the first output row.
        name (str): Panel name.

    Returns:
        SeriesPanel: ``params.n_rows`` consecutive months.

    Raises:
        NumericalError: When the state becomes non-finite.
    """
    state = params.default_state(seed) if x0 is None else np.asarray(x0, dtype=np.float64)
    if state.shape != (params.state_dim,) or not np.all(np.isfinite(state)):
        raise DataError(f"Initial state must be {params.state_dim} finite values")

    f = params.rhs()
    kept = params.n_rows * params.aggregate
    samples = np.empty((kept, params.state_dim))
    for step in range(params.burn_in + kept):
        state = rk4_step(f, state, params.dt)
        if not np.all(np.isfinite(state)):
            logger.error("Run %s diverged at step %d", name, step + 1)
            raise NumericalError(f"Non-finite state at step {step + 1} of run '{name}'")
        if step >= params.burn_in:
            samples[step - params.burn_in] = state

    values = aggregate_blocks(samples, params.aggregate)
    times = start + np.arange(len(values))
    logger.debug("Integrated %s: %d rows from %s", name, len(values), format_month(start))
    return SeriesPanel(params.variables, times, values, name)


def _relative_scale(theta0: np.ndarray) -> np.ndarray:
    return np.where(theta0 == 0, 1.0, np.abs(theta0))


def scaled_distance(theta: Sequence[float], theta0: Sequence[float]) -> float:
    """L2 distance after dividing each component by ``|theta0|``."""
    theta0 = np.asarray(theta0, dtype=np.float64)
    return float(np.linalg.norm((np.asarray(theta, dtype=np.float64) - theta0) / _relative_scale(theta0)))


def sample_theta_ball(base: DynamicsParams, radius: float, n: int, seed: int) -> List[DynamicsParams]:
    """Draw ``n`` parameter sets uniformly from the closed ball about ``base.theta``.

    The ball is taken in relative units: component ``i`` moves by at most
    ``radius * |theta0_i|``. For lorenz96 only the forcing is perturbed.
    """
    if radius < 0:
        raise DataError(f"Ball radius must be non-negative, got {radius}")
    if n < 1:
        raise DataError("At least one family member is required")

    theta0 = np.asarray(base.theta, dtype=np.float64)
    free = 3 if base.system == "lorenz63" else 1
    rng = np.random.default_rng(seed)
    directions = rng.standard_normal((n, free))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    radii = radius * rng.uniform(size=(n, 1)) ** (1.0 / free)

    family = []
    for step in directions * radii:
        theta = theta0.copy()
        theta[:free] += step * _relative_scale(theta0[:free])
        family.append(replace(base, theta=tuple(theta)))
    return family


@dataclass(frozen=True)
class Experiment:
    model_runs: List[SeriesPanel]
    real: SeriesPanel
    manifest: Dict


def make_experiment(
    family: Sequence[DynamicsParams],
    real_params: DynamicsParams,
    obs_noise_sd: float,
    seed: int,
    x0: Optional[Sequence[float]] = None,
    start: int = DEFAULT_START,
    n_jobs: int = 1,
) -> Experiment:
    """Integrate a model family and a "real" system from a common initial state.

    Observation noise is added to the real panel only, after aggregation.
    """
    if not family:
        raise DataError("Model family is empty")
    if obs_noise_sd < 0:
        raise DataError("Observation noise sd must be non-negative")
    if any(p.variables != real_params.variables for p in family):
        raise DataError("Family members and the real system must share one state schema")

    if x0 is None:
        x0 = real_params.default_state(derive_seed(seed, "initial-state"))
    x0 = [float(v) for v in x0]
    names = [f"model_{i + 1:02d}" for i in range(len(family))]

    def run(params: DynamicsParams, name: str) -> SeriesPanel:
        try:
            return integrate(params, x0, start=start, name=name)
        except NumericalError as error:
            raise NumericalError(f"{name} (theta={params.theta}): {error}") from error

    panels = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(run)(params, name) for params, name in zip(list(family) + [real_params], names + ["real"])
    )
    noise_seed = derive_seed(seed, "observation-noise")
    real = panels[-1]
    if obs_noise_sd > 0:
        real = inject_noise(real, obs_noise_sd, noise_seed)

    manifest = {
        "seed": seed,
        "x0": x0,
        "start": format_month(start),
        "obs_noise_sd": obs_noise_sd,
        "noise_seed": noise_seed,
        "family": [dict(name=name, **params.to_dict()) for name, params in zip(names, family)],
        "real": dict(name="real", **real_params.to_dict()),
    }
    logger.info(
        "Experiment: %d model runs of %s, %d months of real record",
        len(family), real_params.system, len(real),
    )
    return Experiment(panels[:-1], real, manifest)


def noise_runs(like: SeriesPanel, n: int, seed: int) -> List[SeriesPanel]:
    """Standard Gaussian panels shaped like ``like``: a family with no dynamics to share."""
    panels = []
    for i in range(n):
        rng = np.random.default_rng(derive_seed(seed, "noise-run", i))
        values = rng.standard_normal(like.values.shape)
        panels.append(SeriesPanel(like.variables, like.times, values, f"model_{i + 1:02d}"))
    return panels
