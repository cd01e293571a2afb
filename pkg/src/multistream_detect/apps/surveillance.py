"""
Offline outbreak detection over regional free-capacity series.

Each region is a stream following the scaled Gaussian epidemic model with a
pre-change rate p*_i, either given or calibrated on the first days. The
detector runs over the historical record and reports the first alarm, the
identified region and the per-day statistics.
"""

import logging
from dataclasses import dataclass, field
from datetime import date, timedelta
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..core import (
    DecisionOutcome,
    ErrorMatrix,
    GeometricPrior,
    ParameterGrid,
    ThresholdMatrix,
    hyperparams_from_beta,
)
from ..detector import DetectorState, decision_step
from ..errors import ConfigurationError
from ..models import EpidemicGaussianModel
from ..thresholds import thresholds_from_beta
from .ingest import RegionSeries, calibrate_pre_change

logger = logging.getLogger(__name__)

DEFAULT_MULTIPLIERS = [round(1.05 + 0.05 * k, 2) for k in range(10)]


class SurveillanceOptions(BaseModel):
    """
    Detection settings for a surveillance run.

    Thresholds come from ``thresholds`` (with ``rho``), from ``beta_matrix``,
    or from the epsilon/(i + j) pattern; the last two use the optimal rho.
    """

    model_config = ConfigDict(frozen=True)

    epsilon: float = Field(default=0.3, gt=0.0)
    beta_matrix: Optional[List[List[float]]] = None
    thresholds: Optional[List[List[float]]] = None
    rho: Optional[float] = None
    k_check: float = Field(default=2.0, gt=1.0)
    multipliers: List[float] = Field(default_factory=lambda: list(DEFAULT_MULTIPLIERS))
    p_star: Optional[Dict[str, float]] = None
    calibration_window: int = Field(default=14, ge=2)
    scale_by_capacity: bool = True
    window: Optional[int] = Field(default=None, ge=1)
    reference_date: Optional[date] = None

    @model_validator(mode="after")
    def _check(self) -> "SurveillanceOptions":
        if self.thresholds is not None and self.rho is None:
            raise ValueError("manual thresholds need rho")
        if any(m <= 1.0 for m in self.multipliers):
            raise ValueError("grid multipliers must exceed 1 (theta above p*)")
        return self


@dataclass
class SurveillanceResult:
    outcome: DecisionOutcome
    regions: List[str]
    start: date
    p_star: Dict[str, float]
    trace: pd.DataFrame
    thresholds: ThresholdMatrix
    series: List[RegionSeries] = field(default_factory=list)
    guard_hits: List[int] = field(default_factory=list)
    reference_date: Optional[date] = None

    @property
    def detection_date(self) -> Optional[date]:
        if not self.outcome.stopped:
            return None
        return self.start + timedelta(days=self.outcome.time)

    @property
    def detected_region(self) -> Optional[str]:
        if not self.outcome.stopped:
            return None
        return self.regions[self.outcome.stream - 1]

    def to_record(self) -> dict:
        record = self.outcome.to_record()
        record.update(
            {
                "detection_date": self.detection_date.isoformat() if self.detection_date else None,
                "region": self.detected_region,
                "reference_date": self.reference_date.isoformat() if self.reference_date else None,
                "start_date": self.start.isoformat(),
                "regions": self.regions,
                "p_star": self.p_star,
                "thresholds": self.thresholds.entries,
                "threshold_provenance": self.thresholds.provenance,
                "rho": self.thresholds.rho,
                "guard_hits": self.guard_hits,
            }
        )
        return record


def _thresholds(options: SurveillanceOptions, n: int) -> ThresholdMatrix:
    if options.thresholds is not None:
        return ThresholdMatrix(entries=options.thresholds, provenance="manual", rho=options.rho)
    if options.beta_matrix is not None:
        beta = ErrorMatrix(entries=options.beta_matrix)
    else:
        beta = ErrorMatrix.from_pattern(n, options.epsilon)
    if beta.n != n:
        raise ConfigurationError(f"beta matrix is {beta.n}x{beta.n} for {n} regions")
    hp = hyperparams_from_beta(beta, options.k_check)
    return thresholds_from_beta(beta, hp, optimal=True)


def detect_offline(
    series: Sequence[RegionSeries], options: Optional[SurveillanceOptions] = None
) -> SurveillanceResult:
    """Run the detector over aligned regional series, day 0 being the initial state."""
    options = options or SurveillanceOptions()
    if not series:
        raise ConfigurationError("no regions to monitor")
    lengths = {len(s) for s in series}
    starts = {s.start for s in series}
    if len(lengths) != 1 or len(starts) != 1:
        raise ConfigurationError("regional series must be aligned on the same dates")
    days = lengths.pop()
    if days < 2:
        raise ConfigurationError("at least two days are needed")

    p_star: Dict[str, float] = {}
    for s in series:
        if options.p_star is not None and s.region in options.p_star:
            p_star[s.region] = options.p_star[s.region]
        else:
            p_star[s.region] = calibrate_pre_change(s, options.calibration_window).p_star
            logger.info("%s: calibrated p* = %.5g", s.region, p_star[s.region])

    models = [
        EpidemicGaussianModel(
            p_star[s.region],
            scale=s.capacity if options.scale_by_capacity else 1.0,
            strict=False,
        )
        for s in series
    ]
    grids = []
    for s in series:
        points = [m * p_star[s.region] for m in options.multipliers if m * p_star[s.region] < 1.0]
        if not points:
            raise ConfigurationError(f"{s.region}: no grid point inside (p*, 1)")
        grids.append(ParameterGrid.uniform(points))

    thresholds = _thresholds(options, len(series))
    detector = DetectorState(
        models,
        grids,
        GeometricPrior(rho=thresholds.rho),
        initial_states=[s.x[0] for s in series],
        window=options.window,
        record_trace=True,
    )

    columns = np.column_stack([s.x for s in series])
    outcome: Optional[DecisionOutcome] = None
    for n in range(1, days):
        detector.update(list(columns[n]))
        outcome = decision_step(detector, thresholds)
        if outcome is not None:
            break
    if outcome is None:
        outcome = DecisionOutcome(stopped=False, time=detector.n)

    start = series[0].start
    regions = [s.region for s in series]
    trace = pd.DataFrame(
        {
            "date": [(start + timedelta(days=row.n)).isoformat() for row in detector.trace],
            "region": [regions[row.stream - 1] for row in detector.trace],
            "x": [columns[row.n, row.stream - 1] for row in detector.trace],
            "log_L": [row.log_L for row in detector.trace],
            "log_Lhat": [row.log_Lhat for row in detector.trace],
            "log_U_diag": [row.log_U_row[row.stream - 1] for row in detector.trace],
        }
    )
    if any(detector.guard_hits):
        logger.warning("state guard triggered: %s", dict(zip(regions, detector.guard_hits)))

    result = SurveillanceResult(
        outcome=outcome,
        regions=regions,
        start=start,
        p_star=p_star,
        trace=trace,
        thresholds=thresholds,
        series=list(series),
        guard_hits=detector.guard_hits,
        reference_date=options.reference_date,
    )
    if outcome.stopped:
        logger.info("Alarm on %s in %s (T=%d)", result.detection_date, result.detected_region, outcome.time)
    else:
        logger.info("No alarm over %d days", days - 1)
    return result


def synthesize_regions(
    regions: Sequence[str],
    capacities: Sequence[float],
    p_stars: Sequence[float],
    days: int,
    start: date = date(2020, 2, 1),
    outbreak_region: Optional[int] = None,
    outbreak_day: int = 0,
    q: float = 1.2,
    seed: int = 0,
    x0: float = 1.0,
) -> List[RegionSeries]:
    """
    Synthetic regional series from the scaled Gaussian epidemic model.

    ``outbreak_region`` (1-based) switches to rate q p* after ``outbreak_day``.
    Hospitalizations are recovered as V (1 - X) and floored at 0.
    """
    if not (len(regions) == len(capacities) == len(p_stars)):
        raise ConfigurationError("regions, capacities and p_stars differ in length")
    rng = np.random.default_rng(seed)
    paths = np.empty((len(regions), days))
    models = [EpidemicGaussianModel(p, scale=v) for p, v in zip(p_stars, capacities)]
    states = [np.array([x0]) for _ in regions]
    paths[:, 0] = x0
    for n in range(1, days):
        for i, model in enumerate(models):
            hit = outbreak_region is not None and i == outbreak_region - 1 and n > outbreak_day
            theta = [q * p_stars[i]] if hit else None
            y, states[i] = model.simulate_step(theta, states[i], rng)
            paths[i, n] = y
    dates = [start + timedelta(days=n) for n in range(days)]
    return [
        RegionSeries(
            region=name,
            dates=dates,
            hospitalized=np.maximum(cap * (1.0 - paths[i]), 0.0).tolist(),
            capacity=cap,
        )
        for i, (name, cap) in enumerate(zip(regions, capacities))
    ]


DEMO_REGIONS = ["Sicilia", "Lazio", "Toscana", "Veneto", "Lombardia"]


def demo_capacities() -> List[float]:
    return [0.5e4 * (i + 1) for i in range(1, len(DEMO_REGIONS) + 1)]


def demo_p_stars() -> Dict[str, float]:
    return {name: 1.0 / (100 + i) for i, name in enumerate(DEMO_REGIONS, start=1)}


def demo_regions(
    days: int,
    outbreak_region: Optional[int] = 5,
    outbreak_day: int = 20,
    q: float = 1.2,
    seed: int = 0,
    start: date = date(2020, 2, 1),
) -> List[RegionSeries]:
    """
    Five regions matching the default TableConfig rows: V_i = 0.5e4 (i + 1) and
    p*_i = 1/(100 + i), with an outbreak of rate q p* in ``outbreak_region``.
    """
    return synthesize_regions(
        DEMO_REGIONS,
        demo_capacities(),
        list(demo_p_stars().values()),
        days=days,
        start=start,
        outbreak_region=outbreak_region,
        outbreak_day=outbreak_day,
        q=q,
        seed=seed,
    )
