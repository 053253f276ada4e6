# SPDX-License-Identifier: GPL-3.0-only
"""Views (lagged coordinate sets with a future target) and delay matrices.

A coordinate's ``lag`` counts months back from the issue time ``t - lead`` of a
forecast for target month ``t``; the coordinate is read at ``t - lead + lag``.
Offsets relative to the target month, as in "temperature at -18 and -24", are
``lag - lead``.
"""

import itertools
import math
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np
import pandas as pd

from exceptions import DataError
from logutils import get_logger
from timeseries import SeriesPanel, format_month

logger = get_logger(__name__)

# Above this many combinations views are drawn by rejection instead of by
# indexing the full enumeration.
ENUMERATION_LIMIT = 200_000


@dataclass(frozen=True, order=True)
class Coordinate:
    """One embedding axis: a variable read ``-lag`` months before issue time."""

    variable: str
    lag: int

    def __post_init__(self):
        if int(self.lag) != self.lag or self.lag > 0:
            raise DataError(f"Coordinate lag must be a non-positive integer, got {self.lag}")
        object.__setattr__(self, "lag", int(self.lag))

    @classmethod
    def from_offset(cls, variable: str, offset: int, lead: int) -> "Coordinate":
        """Build from an offset relative to the target month (offset ≤ -lead)."""
        if offset > -lead:
            raise DataError(
                f"Offset {offset} for '{variable}' is less than {lead} months before the target"
            )
        return cls(variable, offset + lead)

    def offset(self, lead: int) -> int:
        return self.lag - lead

    @property
    def label(self) -> str:
        return f"{self.variable}@{self.lag}"


@dataclass(frozen=True)
class View:
    """The recipe of one embedding: X coordinates plus the target ``lead`` months ahead."""

    coords: Tuple[Coordinate, ...]
    target: str
    lead: int

    def __post_init__(self):
        coords = tuple(self.coords)
        if not coords:
            raise DataError("A view needs at least one coordinate")
        if len(set(coords)) != len(coords):
            raise DataError("View coordinates must be pairwise distinct")
        if int(self.lead) != self.lead or self.lead < 1:
            raise DataError(f"Lead must be a positive integer, got {self.lead}")
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "lead", int(self.lead))

    @property
    def dim(self) -> int:
        return len(self.coords)

    @property
    def depth(self) -> int:
        """Months between the deepest coordinate and the target."""
        return self.lead + max(-c.lag for c in self.coords)

    @property
    def variables(self) -> Tuple[str, ...]:
        names = [c.variable for c in self.coords] + [self.target]
        return tuple(dict.fromkeys(names))

    def offsets(self) -> List[int]:
        return [c.offset(self.lead) for c in self.coords]

    @property
    def label(self) -> str:
        return " ".join(c.label for c in self.coords)


@dataclass(frozen=True, eq=False)
class DelayMatrix:
    """Complete rows of ``(target time, X, Y)`` for one view, in time order."""

    view: View
    times: np.ndarray
    X: np.ndarray
    Y: np.ndarray
    panel_name: str = field(default="panel")

    def __len__(self) -> int:
        return len(self.times)

    def subset(self, keep: np.ndarray) -> "DelayMatrix":
        return DelayMatrix(self.view, self.times[keep], self.X[keep], self.Y[keep], self.panel_name)

    def coordinate_times(self) -> np.ndarray:
        """Month of every X component, shape ``(rows, dim)``."""
        lags = np.array([c.lag for c in self.view.coords], dtype=np.int64)
        return self.times[:, None] - self.view.lead + lags[None, :]

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.X, columns=[f"x{j + 1}" for j in range(self.view.dim)])
        frame.insert(0, "target_time", [format_month(t) for t in self.times])
        frame["y"] = self.Y
        return frame


def _coordinate_values(panel: SeriesPanel, view: View, target_times: np.ndarray) -> np.ndarray:
    """X components for each target month; NaN where the panel has no value."""
    X = np.full((len(target_times), view.dim), np.nan)
    for j, coord in enumerate(view.coords):
        column = panel.column(coord.variable)
        rows = target_times - view.lead + coord.lag - panel.start
        inside = (rows >= 0) & (rows < len(panel))
        X[inside, j] = column[rows[inside]]
    return X


def build_delay_matrix(panel: SeriesPanel, view: View) -> DelayMatrix:
    """Shift ``(X, Y)`` through the panel, keeping only complete rows.

    Raises:
        DataError: Unknown variables, or no complete row at all.
    """
    for variable in view.variables:
        panel.index_of(variable)

    depth = view.depth
    if len(panel) <= depth:
        raise DataError(
            f"empty delay matrix: panel '{panel.name}' has {len(panel)} months, view needs more than {depth}"
        )

    times = panel.times[depth:]
    Y = panel.column(view.target)[depth:]
    X = _coordinate_values(panel, view, times)
    keep = ~np.isnan(Y) & ~np.isnan(X).any(axis=1)
    if not keep.any():
        raise DataError(f"empty delay matrix for view [{view.label}] on '{panel.name}'")

    dropped = int((~keep).sum())
    if dropped:
        logger.debug("Dropped %d incomplete rows for view [%s]", dropped, view.label)
    return DelayMatrix(view, times[keep], X[keep], Y[keep], panel.name)


def query_vectors(panel: SeriesPanel, view: View, target_times: Sequence[int]) -> np.ndarray:
    """X vectors for forecasting the given target months from ``panel``.

    Rows are NaN-padded where a coordinate is absent or outside the panel; the
    target itself does not need to exist.
    """
    for coord in view.coords:
        panel.index_of(coord.variable)
    return _coordinate_values(panel, view, np.asarray(target_times, dtype=np.int64))


def sample_views(
    pool: Sequence[Coordinate],
    target: str,
    lead: int,
    dim: int,
    n_views: int,
    seed: int,
) -> List[View]:
    """Draw distinct random ``dim``-subsets of the coordinate pool.

    Args:
        pool (list[Coordinate]): Candidate coordinates.
        target (str): Target variable.
        lead (int): Months ahead.
        dim (int): Coordinates per view (E).
        n_views (int): How many views.
        seed (int): Sampling seed.

    Returns:
        list[View]: ``n_views`` pairwise distinct views, coordinates kept in pool order.
    """
    pool = list(pool)
    if len(set(pool)) != len(pool):
        raise DataError("Coordinate pool contains duplicates")
    if not 1 <= dim <= len(pool):
        raise DataError(f"View dimension {dim} must lie in [1, {len(pool)}]")
    if n_views < 1:
        raise DataError("At least one view is required")

    total = math.comb(len(pool), dim)
    if n_views > total:
        raise DataError(
            f"Requested {n_views} views but only {total} distinct {dim}-subsets "
            f"exist in a pool of {len(pool)}"
        )

    rng = np.random.default_rng(seed)
    if total <= ENUMERATION_LIMIT:
        combos = list(itertools.combinations(range(len(pool)), dim))
        picks = [combos[i] for i in rng.choice(total, size=n_views, replace=False)]
    else:
        seen = set()
        picks = []
        while len(picks) < n_views:
            subset = tuple(sorted(rng.choice(len(pool), size=dim, replace=False).tolist()))
            if subset not in seen:
                seen.add(subset)
                picks.append(subset)

    views = [View(tuple(pool[i] for i in subset), target, lead) for subset in picks]
    logger.info("Sampled %d views of dimension %d from a pool of %d", len(views), dim, len(pool))
    return views


def split_views(
    pool: Sequence[Coordinate],
    target: str,
    lead: int,
    dim: int,
    n_views: int,
    seed: int,
) -> Tuple[List[View], List[View]]:
    """Two disjoint random view sets of ``n_views`` each (for replication)."""
    views = sample_views(pool, target, lead, dim, 2 * n_views, seed)
    return views[:n_views], views[n_views:]


def split_by_origin(matrix: DelayMatrix, origin: int) -> Tuple[DelayMatrix, DelayMatrix]:
    """Split rows at ``origin``: train rows end by it, test targets lie after it.

    The target is the latest component of a row, so a row whose target is at
    or before ``origin`` has every component at or before it.
    """
    train = matrix.subset(matrix.times <= origin)
    test = matrix.subset(matrix.times > origin)
    if len(train) == 0:
        raise DataError(f"Empty training matrix at origin {format_month(origin)}")
    if len(test) == 0:
        raise DataError(f"Empty test matrix at origin {format_month(origin)}")
    return train, test
