"""
Ingestion of regional hospitalization series.

Input CSV has the header ``date,region,hospitalized`` with ISO-8601 dates.
Each region needs a bed capacity V; the detector works with the free-capacity
fraction X_n = (V - H_n) / V.
"""

import json
import logging
import math
from datetime import date, timedelta
from pathlib import Path
from typing import Dict, List, NamedTuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, ValidationError, field_validator, model_validator

from ..errors import DataIngestError

logger = logging.getLogger(__name__)

REQUIRED_COLUMNS = ("date", "region", "hospitalized")
P_STAR_FLOOR = 1e-6


class RegionSeries(BaseModel):
    """Daily hospitalizations H_n for one region with capacity V."""

    model_config = ConfigDict(frozen=True)

    region: str
    dates: List[date]
    hospitalized: List[float]
    capacity: float

    @field_validator("capacity")
    @classmethod
    def _positive_capacity(cls, value: float) -> float:
        if not value > 0:
            raise ValueError(f"capacity must be positive, got {value}")
        return value

    @model_validator(mode="after")
    def _check(self) -> "RegionSeries":
        if len(self.dates) != len(self.hospitalized):
            raise ValueError("dates and hospitalized differ in length")
        if not self.dates:
            raise ValueError("series is empty")
        for prev, cur in zip(self.dates, self.dates[1:]):
            if cur - prev != timedelta(days=1):
                raise ValueError(f"{self.region}: dates must be consecutive days ({prev} -> {cur})")
        if any(h < 0 or not math.isfinite(h) for h in self.hospitalized):
            raise ValueError(f"{self.region}: hospitalized counts must be finite and nonnegative")
        return self

    @property
    def x(self) -> np.ndarray:
        """Free-capacity fractions (V - H_n) / V."""
        return (self.capacity - np.asarray(self.hospitalized, dtype=float)) / self.capacity

    @property
    def start(self) -> date:
        return self.dates[0]

    def __len__(self) -> int:
        return len(self.dates)

    def slice_dates(self, first: date, last: date) -> "RegionSeries":
        keep = [i for i, d in enumerate(self.dates) if first <= d <= last]
        return RegionSeries(
            region=self.region,
            dates=[self.dates[i] for i in keep],
            hospitalized=[self.hospitalized[i] for i in keep],
            capacity=self.capacity,
        )

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "date": [d.isoformat() for d in self.dates],
                "region": self.region,
                "hospitalized": self.hospitalized,
            }
        )


def load_capacity_map(path: Union[str, Path]) -> Dict[str, float]:
    """JSON object mapping region name to bed capacity V."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise DataIngestError(f"cannot read capacity map {path}: {e}") from e
    if not isinstance(raw, dict):
        raise DataIngestError(f"capacity map {path} must be a JSON object")
    problems = [f"{k}: capacity {v!r} is not a positive number" for k, v in raw.items()
                if not isinstance(v, (int, float)) or v <= 0]
    if problems:
        raise DataIngestError("invalid capacity map", problems)
    return {str(k): float(v) for k, v in raw.items()}


def ingest_csv(path: Union[str, Path], capacities: Dict[str, float]) -> List[RegionSeries]:
    """
    Read the CSV and return one series per region over the common date range.

    Problems are collected and raised together as a ``DataIngestError``.
    """
    path = Path(path)
    try:
        frame = pd.read_csv(path, dtype={"region": str}, encoding="utf-8")
    except (OSError, pd.errors.EmptyDataError, pd.errors.ParserError, UnicodeDecodeError) as e:
        raise DataIngestError(f"cannot read {path}: {e}") from e

    missing = [c for c in REQUIRED_COLUMNS if c not in frame.columns]
    if missing:
        raise DataIngestError(f"{path} is missing columns", [f"column '{c}'" for c in missing])

    problems: List[str] = []
    parsed = pd.to_datetime(frame["date"], format="%Y-%m-%d", errors="coerce")
    for row in np.flatnonzero(parsed.isna().to_numpy()):
        problems.append(f"row {row + 2}: unparseable date {frame['date'].iloc[row]!r}")
    counts = pd.to_numeric(frame["hospitalized"], errors="coerce")
    for row in np.flatnonzero(counts.isna().to_numpy()):
        problems.append(f"row {row + 2}: unparseable count {frame['hospitalized'].iloc[row]!r}")
    for region in sorted(set(frame["region"]) - set(capacities)):
        problems.append(f"region {region!r} has no capacity")
    if problems:
        raise DataIngestError(f"cannot ingest {path}", problems)

    frame = frame.assign(date=parsed.dt.date, hospitalized=counts)
    series: List[RegionSeries] = []
    for region, group in frame.groupby("region", sort=False):
        group = group.sort_values("date")
        if group["date"].duplicated().any():
            problems.append(f"region {region!r}: duplicated dates")
            continue
        try:
            series.append(
                RegionSeries(
                    region=region,
                    dates=list(group["date"]),
                    hospitalized=[float(h) for h in group["hospitalized"]],
                    capacity=capacities[region],
                )
            )
        except ValidationError as e:
            problems.extend(f"region {region!r}: {err['msg']}" for err in e.errors())
    if problems:
        raise DataIngestError(f"cannot ingest {path}", problems)

    aligned = align_series(series)
    logger.info("Ingested %d regions over %d days from %s", len(aligned), len(aligned[0]), path)
    return aligned


def align_series(series: List[RegionSeries]) -> List[RegionSeries]:
    """Trim every series to the common date range."""
    if not series:
        raise DataIngestError("no regions to align")
    first = max(s.dates[0] for s in series)
    last = min(s.dates[-1] for s in series)
    if first > last:
        raise DataIngestError(
            "regions share no common dates",
            [f"{s.region}: {s.dates[0]} .. {s.dates[-1]}" for s in series],
        )
    trimmed = []
    for s in series:
        if s.dates[0] != first or s.dates[-1] != last:
            logger.warning("%s trimmed to %s .. %s", s.region, first, last)
            s = s.slice_dates(first, last)
        trimmed.append(s)
    return trimmed


class Calibration(NamedTuple):
    p_star: float
    stderr: float
    clamped: bool


def calibrate_pre_change(series: RegionSeries, window: int) -> Calibration:
    """
    Least-squares drift over the first ``window`` days:
    p* = 1 - sum X_n X_{n-1} / sum X_{n-1}^2, clamped to (1e-6, 1 - 1e-6).
    """
    if window < 2:
        raise DataIngestError(f"calibration window must be at least 2 days, got {window}")
    if window > len(series):
        raise DataIngestError(f"{series.region}: window {window} exceeds {len(series)} days")
    x = series.x[:window]
    prev, cur = x[:-1], x[1:]
    denom = float(np.dot(prev, prev))
    if denom == 0.0:
        raise DataIngestError(f"{series.region}: free capacity is zero over the whole window")
    if np.any(x <= 0.0):
        logger.warning("%s: nonpositive free capacity inside the calibration window", series.region)

    slope = float(np.dot(cur, prev)) / denom
    p_star = 1.0 - slope
    resid = cur - slope * prev
    dof = max(prev.size - 1, 1)
    stderr = math.sqrt(float(np.dot(resid, resid)) / dof / denom)

    clamped = not (P_STAR_FLOOR < p_star < 1.0 - P_STAR_FLOOR)
    if clamped:
        logger.warning("%s: p* estimate %.3g clamped into (1e-6, 1 - 1e-6)", series.region, p_star)
        p_star = min(max(p_star, P_STAR_FLOOR), 1.0 - P_STAR_FLOOR)
    return Calibration(p_star=p_star, stderr=stderr, clamped=clamped)
