# Copyright (c) Dispatch Emulator Authors.
# Licensed under the MIT License.
"""
Per-interval origin-destination demand and the predictors that stand in for
a learned forecaster. Concrete predictors are registered in predictors.py.
"""
import enum
import math
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Sequence, Union

import numpy as np
import pandas as pd

from dispatch_emulator.errors import DataError

logger = logging.getLogger(__name__)

MINUTES_PER_DAY = 1440

RATE_TABLE_COLUMNS = ["origin_cell", "dest_cell", "base_rate_per_interval"]


class MissingHistoryError(DataError):
    pass


class MissingRatesError(DataError):
    pass


class NegativeDemandError(DataError):
    pass


class UnknownPredictorError(DataError):
    pass


@dataclass(frozen=True, order=True)
class TimeInterval:
    index: int
    length_minutes: int = 15

    def __post_init__(self):
        if self.index < 0:
            raise DataError(f"Interval index must be non-negative, got {self.index}")
        if self.length_minutes <= 0 or MINUTES_PER_DAY % self.length_minutes:
            raise DataError(
                f"Interval length must divide {MINUTES_PER_DAY}, got {self.length_minutes}"
            )

    @property
    def start_minute(self) -> int:
        return self.index * self.length_minutes

    @property
    def end_minute(self) -> int:
        return self.start_minute + self.length_minutes

    @property
    def hour_of_day(self) -> float:
        return (self.start_minute % MINUTES_PER_DAY) / 60.0

    def shifted(self, steps: int) -> "TimeInterval":
        return TimeInterval(self.index + steps, self.length_minutes)


@dataclass(frozen=True, eq=False)
class DemandMatrix:
    interval: TimeInterval
    counts: np.ndarray

    def __post_init__(self):
        counts = np.array(self.counts, dtype=float)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
            raise DataError(f"Demand counts must be a square matrix, got shape {counts.shape}")
        if (counts < 0).any():
            raise NegativeDemandError("Demand counts must be non-negative")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @classmethod
    def zeros(cls, interval: TimeInterval, n_cells: int) -> "DemandMatrix":
        return cls(interval, np.zeros((n_cells, n_cells)))

    @property
    def n_cells(self) -> int:
        return self.counts.shape[0]

    def total(self) -> float:
        return float(self.counts.sum())

    def outgoing(self, cell: int) -> float:
        return float(self.counts[cell].sum())

    def __eq__(self, other):
        if not isinstance(other, DemandMatrix):
            return NotImplemented
        return self.interval == other.interval and np.array_equal(self.counts, other.counts)

    def __add__(self, other: "DemandMatrix") -> "DemandMatrix":
        return DemandMatrix(self.interval, self.counts + other.counts)


class PredictorKind(str, enum.Enum):
    REPLAY_PREVIOUS = "replay_previous"
    REPLAY_ORACLE = "replay_oracle"
    SYNTHETIC_POISSON = "synthetic_poisson"


@dataclass(frozen=True)
class PredictorSpec:
    kind: str = PredictorKind.REPLAY_PREVIOUS.value
    parameters: Mapping[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class DailyProfile:
    """Two-peak multiplier applied to base rates by hour of day."""

    lunch_hour: float = 12.0
    lunch_multiplier: float = 3.0
    dinner_hour: float = 20.0
    dinner_multiplier: float = 3.5
    width_hours: float = 1.5
    base_multiplier: float = 0.4

    def multiplier(self, hour: float) -> float:
        def bump(center):
            offset = (hour - center + 12.0) % 24.0 - 12.0
            return math.exp(-(offset ** 2) / (2 * self.width_hours ** 2))

        return (
            self.base_multiplier
            + self.lunch_multiplier * bump(self.lunch_hour)
            + self.dinner_multiplier * bump(self.dinner_hour)
        )

    def daily_mass(self, interval_minutes: int) -> float:
        per_day = MINUTES_PER_DAY // interval_minutes
        return sum(
            self.multiplier(TimeInterval(k, interval_minutes).hour_of_day)
            for k in range(per_day)
        )


def _history_by_index(history: Sequence[DemandMatrix]) -> Dict[int, DemandMatrix]:
    return {m.interval.index: m for m in history}


def _infer_cells(history: Sequence[DemandMatrix], n_cells: Optional[int]) -> int:
    if n_cells is not None:
        return n_cells
    if history:
        return history[0].n_cells
    raise MissingHistoryError("Cannot size a prediction without history or n_cells")


class DemandPredictor(ABC):
    kind: str = ""

    def __init__(self, parameters: Optional[Mapping[str, Any]] = None):
        self.parameters = dict(parameters or {})

    @abstractmethod
    def predict(
        self,
        history: Sequence[DemandMatrix],
        target: TimeInterval,
        n_cells: Optional[int] = None,
    ) -> DemandMatrix:
        raise NotImplementedError

    def forecast(
        self,
        history: Sequence[DemandMatrix],
        target: TimeInterval,
        horizon: int = 1,
        n_cells: Optional[int] = None,
    ) -> DemandMatrix:
        """Demand summed over ``horizon`` intervals starting at ``target``."""
        if horizon < 1:
            raise DataError(f"Prediction horizon must be at least 1, got {horizon}")
        total = self.predict(history, target, n_cells)
        for step in range(1, horizon):
            total = total + self.predict(history, target.shifted(step), n_cells)
        return DemandMatrix(target, total.counts)


class ReplayPreviousPredictor(DemandPredictor):
    kind = PredictorKind.REPLAY_PREVIOUS.value

    def predict(self, history, target, n_cells=None):
        previous = _history_by_index(history).get(target.index - 1)
        if previous is None:
            return DemandMatrix.zeros(target, _infer_cells(history, n_cells))
        return DemandMatrix(target, previous.counts)

    def forecast(self, history, target, horizon=1, n_cells=None):
        if horizon < 1:
            raise DataError(f"Prediction horizon must be at least 1, got {horizon}")
        last = self.predict(history, target, n_cells)
        return DemandMatrix(target, last.counts * horizon)


class ReplayOraclePredictor(DemandPredictor):
    kind = PredictorKind.REPLAY_ORACLE.value

    def predict(self, history, target, n_cells=None):
        realized = _history_by_index(history).get(target.index)
        if realized is None:
            raise MissingHistoryError(f"No realized demand for interval {target.index}")
        return DemandMatrix(target, realized.counts)


class SyntheticPoissonPredictor(DemandPredictor):
    """
    Seeded Poisson draws around per-OD base rates scaled by the daily
    profile. ``mode="expected"`` returns the scaled rates themselves.
    """

    kind = PredictorKind.SYNTHETIC_POISSON.value

    def __init__(self, parameters=None):
        super().__init__(parameters)
        if self.parameters.get("rates") is None:
            raise MissingRatesError("synthetic_poisson requires per-OD 'rates'")
        if self.parameters.get("peaks") is None:
            raise MissingRatesError("synthetic_poisson requires 'peaks' multipliers")
        rates = np.asarray(self.parameters["rates"], dtype=float)
        if rates.ndim != 2 or (rates < 0).any():
            raise MissingRatesError("Rates must be a non-negative square matrix")
        peaks = self.parameters["peaks"]
        self.rates = rates
        self.profile = peaks if isinstance(peaks, DailyProfile) else DailyProfile(**peaks)
        self.seed = int(self.parameters.get("seed", 0))
        self.mode = self.parameters.get("mode", "sample")

    def expected(self, target: TimeInterval) -> np.ndarray:
        return self.rates * self.profile.multiplier(target.hour_of_day)

    def predict(self, history, target, n_cells=None):
        expected = self.expected(target)
        if self.mode == "expected":
            return DemandMatrix(target, expected)
        rng = np.random.default_rng([self.seed, target.index])
        return DemandMatrix(target, rng.poisson(expected).astype(float))


def predict(
    spec: PredictorSpec,
    history: Sequence[DemandMatrix],
    target: TimeInterval,
    n_cells: Optional[int] = None,
) -> DemandMatrix:
    from dispatch_emulator.predictors import create_predictor

    return create_predictor(spec).predict(history, target, n_cells)


def load_rate_table(path: Union[str, Path], n_cells: int) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise MissingRatesError(f"Rate table not found: {path}")
    frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    if list(frame.columns) != RATE_TABLE_COLUMNS:
        raise MissingRatesError(f"{path}:1: expected header {','.join(RATE_TABLE_COLUMNS)}")
    rates = np.zeros((n_cells, n_cells))
    for offset, record in enumerate(frame.itertuples(index=False)):
        line = offset + 2
        try:
            origin, dest = int(record.origin_cell), int(record.dest_cell)
            rate = float(record.base_rate_per_interval)
        except ValueError as error:
            raise MissingRatesError(f"{path}:{line}: {error}") from error
        if not (0 <= origin < n_cells and 0 <= dest < n_cells) or rate < 0:
            raise MissingRatesError(f"{path}:{line}: invalid cell or negative rate")
        rates[origin, dest] += rate
    return rates


def write_rate_table(rates: np.ndarray, path: Union[str, Path]):
    origins, dests = np.nonzero(rates)
    frame = pd.DataFrame(
        {
            "origin_cell": origins,
            "dest_cell": dests,
            "base_rate_per_interval": rates[origins, dests],
        }
    )
    frame.to_csv(path, index=False)
