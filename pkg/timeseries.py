# SPDX-License-Identifier: GPL-3.0-only
"""Aligned monthly series: the panel type, CSV ingestion, standardization and
measurement-noise injection.

Months are integer indices counted from year 0 (``year * 12 + month - 1``), so
lags and leads are plain integer arithmetic.
"""

import re
from dataclasses import dataclass, field
from typing import Dict, Iterable, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from exceptions import DataError
from logutils import get_logger

logger = get_logger(__name__)

MONTH_PATTERN = re.compile(r"^(\d{4})-(\d{2})$")

ColumnSchema = Union[Sequence[str], Mapping[str, str]]


def month_index(label: str) -> int:
    """Convert a ``YYYY-MM`` label into a month index."""
    match = MONTH_PATTERN.match(label.strip())
    if not match:
        raise DataError(f"Invalid month label '{label}', expected YYYY-MM")
    year, month = int(match.group(1)), int(match.group(2))
    if not 1 <= month <= 12:
        raise DataError(f"Invalid month label '{label}', month out of range")
    return year * 12 + month - 1


def format_month(index: int) -> str:
    """Convert a month index back into its ``YYYY-MM`` label."""
    year, month = divmod(int(index), 12)
    return f"{year:04d}-{month + 1:02d}"


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, copy=True)
    array.flags.writeable = False
    return array


@dataclass(frozen=True, eq=False)
class SeriesPanel:
    """Multivariate monthly series on a shared unit-step month axis.

    ``values`` holds one column per variable; absent cells are NaN and the
    presence mask is derived from them. Panels are immutable.
    """

    variables: Tuple[str, ...]
    times: np.ndarray
    values: np.ndarray
    name: str = "panel"
    mask: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        variables = tuple(str(v) for v in self.variables)
        times = np.asarray(self.times, dtype=np.int64)
        values = np.asarray(self.values, dtype=np.float64)

        if values.ndim == 1 and len(variables) == 1:
            values = values.reshape(-1, 1)
        if len(set(variables)) != len(variables):
            raise DataError(f"Duplicate variable identifiers in panel '{self.name}'")
        if values.shape != (len(times), len(variables)):
            raise DataError(
                f"Panel '{self.name}' has {values.shape} values for "
                f"{len(times)} times and {len(variables)} variables"
            )
        if len(times) > 1 and np.any(np.diff(times) != 1):
            raise DataError(f"Panel '{self.name}' times are not consecutive months")

        object.__setattr__(self, "variables", variables)
        object.__setattr__(self, "times", _frozen(times))
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "mask", _frozen(~np.isnan(values)))

    def __len__(self) -> int:
        return len(self.times)

    @property
    def start(self) -> int:
        return int(self.times[0])

    @property
    def end(self) -> int:
        return int(self.times[-1])

    def index_of(self, variable: str) -> int:
        try:
            return self.variables.index(variable)
        except ValueError:
            raise DataError(
                f"Unknown variable '{variable}' in panel '{self.name}'"
            ) from None

    def column(self, variable: str) -> np.ndarray:
        return self.values[:, self.index_of(variable)]

    def position(self, month: int) -> int:
        """Row position of ``month``, or -1 when it lies outside the panel."""
        offset = int(month) - self.start
        return offset if 0 <= offset < len(self) else -1

    def value_at(self, variable: str, month: int) -> float:
        row = self.position(month)
        if row < 0:
            return float("nan")
        return float(self.values[row, self.index_of(variable)])

    def span(self, until: int) -> "SeriesPanel":
        """Rows with month index ≤ ``until``."""
        keep = self.times <= until
        return SeriesPanel(self.variables, self.times[keep], self.values[keep], self.name)

    def shift(self, months: int) -> "SeriesPanel":
        return SeriesPanel(self.variables, self.times + int(months), self.values, self.name)

    def with_variable(self, variable: str, values: Sequence[float]) -> "SeriesPanel":
        """Return a copy with one extra variable appended (e.g. a projection)."""
        column = np.asarray(values, dtype=np.float64).reshape(-1, 1)
        if len(column) != len(self):
            raise DataError(
                f"Variable '{variable}' has {len(column)} values, panel has {len(self)}"
            )
        return SeriesPanel(
            self.variables + (variable,),
            self.times,
            np.hstack([self.values, column]),
            self.name,
        )

    def equals(self, other: "SeriesPanel") -> bool:
        return (
            self.variables == other.variables
            and np.array_equal(self.times, other.times)
            and np.array_equal(self.values, other.values, equal_nan=True)
        )

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.values, columns=list(self.variables))
        frame.insert(0, "time", [format_month(t) for t in self.times])
        return frame


@dataclass(frozen=True)
class StandardizationStats:
    """Per-variable mean and population standard deviation."""

    means: Dict[str, float]
    sds: Dict[str, float]

    def scale(self, variable: str, values):
        return (np.asarray(values, dtype=np.float64) - self.means[variable]) / self.sds[variable]

    def unscale(self, variable: str, values):
        return np.asarray(values, dtype=np.float64) * self.sds[variable] + self.means[variable]


def load_csv(path: str, schema: Optional[ColumnSchema] = None, name: Optional[str] = None) -> SeriesPanel:
    """Load a panel from ``time,<var1>,<var2>,...`` CSV.

    Args:
        path (str): CSV file path.
        schema (list | dict, optional): Columns to keep, or a mapping from CSV
            column to variable identifier. All value columns when omitted.
        name (str, optional): Panel name, defaults to the path.

    Returns:
        SeriesPanel: Panel with empty cells marked absent.

    Raises:
        DataError: On unreadable files, bad or non-consecutive months, and
            unparseable numeric cells (reported with row and column).
    """
    try:
        raw = pd.read_csv(path, header=None, dtype=str, keep_default_na=False)
    except FileNotFoundError:
        logger.error("Panel file not found: %s", path)
        raise DataError(f"File not found: {path}") from None
    except pd.errors.EmptyDataError:
        raise DataError(f"Empty CSV file: {path}") from None

    header = [str(h).strip() for h in raw.iloc[0].tolist()]
    body = raw.iloc[1:].reset_index(drop=True)
    if len(header) < 2:
        raise DataError(f"{path}: expected a time column and at least one variable")
    if len(set(header[1:])) != len(header) - 1:
        raise DataError(f"{path}: duplicate variable identifiers in header")
    if body.empty:
        raise DataError(f"{path}: no data rows")

    times = []
    for row, label in enumerate(body.iloc[:, 0].tolist()):
        try:
            times.append(month_index(label))
        except DataError:
            raise DataError(f"{path}: row {row + 2}, column '{header[0]}': bad month '{label}'") from None

    steps = np.diff(np.asarray(times, dtype=np.int64))
    if np.any(steps == 0):
        row = int(np.argmax(steps == 0)) + 3
        raise DataError(f"{path}: duplicate months at row {row}")
    if np.any(steps < 0):
        row = int(np.argmax(steps < 0)) + 3
        raise DataError(f"{path}: non-monotone dates at row {row}")
    if np.any(steps > 1):
        row = int(np.argmax(steps > 1)) + 3
        raise DataError(f"{path}: non-consecutive months at row {row}")

    if schema is None:
        mapping = {column: column for column in header[1:]}
    elif isinstance(schema, Mapping):
        mapping = dict(schema)
    else:
        mapping = {column: column for column in schema}

    columns = []
    for source in mapping:
        if source not in header[1:]:
            raise DataError(f"{path}: column '{source}' not found")
        cells = body.iloc[:, header.index(source)].str.strip()
        parsed = pd.to_numeric(cells.mask(cells == ""), errors="coerce")
        bad = parsed.isna() & (cells != "")
        if bad.any():
            row = int(np.argmax(bad.to_numpy()))
            raise DataError(
                f"{path}: unparseable numeric cell at row {row + 2}, "
                f"column '{source}': '{cells.iloc[row]}'"
            )
        columns.append(parsed.to_numpy(dtype=np.float64))

    panel = SeriesPanel(
        list(mapping.values()), times, np.column_stack(columns), name or str(path)
    )
    logger.info(
        "Loaded panel %s: %d months, %d variables, %d absent cells",
        panel.name,
        len(panel),
        len(panel.variables),
        int((~panel.mask).sum()),
    )
    return panel


def write_csv(panel: SeriesPanel, path: str) -> None:
    """Write a panel with 12 significant digits; absent cells are left empty."""
    panel.to_frame().to_csv(
        path, index=False, float_format="%.12g", na_rep="", lineterminator="\n"
    )


def compute_stats(
    panel: SeriesPanel,
    variables: Optional[Iterable[str]] = None,
    until: Optional[int] = None,
) -> StandardizationStats:
    """Training-span mean and population sd for each variable.

    Raises:
        DataError: When a variable has zero variance over the span.
    """
    source = panel.span(until) if until is not None else panel
    means, sds = {}, {}
    for variable in variables or panel.variables:
        column = source.column(variable)
        present = column[~np.isnan(column)]
        if len(np.unique(present)) < 2:
            logger.error("Variable '%s' has zero variance in panel %s", variable, panel.name)
            raise DataError(f"Zero-variance variable '{variable}' cannot be standardized")
        means[variable] = float(np.mean(present))
        sds[variable] = float(np.std(present))
    return StandardizationStats(means, sds)


def standardize(
    panel: SeriesPanel,
    stats: Optional[StandardizationStats] = None,
    variables: Optional[Iterable[str]] = None,
    until: Optional[int] = None,
) -> Tuple[SeriesPanel, StandardizationStats]:
    """Map present cells to ``(x - mean) / sd``.

    When ``stats`` is given (test data), it is applied unchanged; otherwise it is
    computed from rows up to ``until``. Variables outside the stats are copied
    through untouched.
    """
    if stats is None:
        stats = compute_stats(panel, variables, until)
    elif variables is not None:
        missing = [v for v in variables if v not in stats.means]
        if missing:
            raise DataError(f"No standardization stats for {', '.join(missing)}")

    values = np.array(panel.values, copy=True)
    for variable in stats.means:
        if variable in panel.variables:
            j = panel.index_of(variable)
            values[:, j] = stats.scale(variable, values[:, j])
    return SeriesPanel(panel.variables, panel.times, values, panel.name), stats


def destandardize(panel: SeriesPanel, stats: StandardizationStats) -> SeriesPanel:
    values = np.array(panel.values, copy=True)
    for variable in stats.means:
        if variable in panel.variables:
            j = panel.index_of(variable)
            values[:, j] = stats.unscale(variable, values[:, j])
    return SeriesPanel(panel.variables, panel.times, values, panel.name)


def inject_noise(
    panel: SeriesPanel, sd: Union[float, Mapping[str, float]], seed: int
) -> SeriesPanel:
    """Add independent zero-mean Gaussian measurement noise.

    Args:
        panel (SeriesPanel): Source panel.
        sd (float | dict): One sd for every variable, or per-variable values
            (unlisted variables get none).
        seed (int): Seed of the noise stream.

    Returns:
        SeriesPanel: Noisy copy with the same mask.
    """
    if isinstance(sd, Mapping):
        scales = np.array([float(sd.get(v, 0.0)) for v in panel.variables])
    else:
        scales = np.full(len(panel.variables), float(sd))
    if np.any(scales < 0):
        raise DataError("Noise standard deviation must be non-negative")

    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(panel.values.shape) * scales
    return SeriesPanel(panel.variables, panel.times, panel.values + noise, panel.name)
