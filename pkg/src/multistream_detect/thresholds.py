"""
Threshold calibration and delay bounds.

Thresholds come either from a matrix alpha of error levels for the weighted
false-alarm and misidentification probabilities, or from a constraint matrix
beta through the hyperparameter schedules. The bound functionals turn KL
information numbers into lower and upper approximations of the detection delay.
Stream indices in this module's public functions are 1-based.
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Literal, Optional, Sequence, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict

from .core import ErrorMatrix, Hyperparams, ParameterGrid, ThresholdMatrix
from .errors import ConfigurationError, NumericalError
from .models.base import KLPair, StreamModel

logger = logging.getLogger(__name__)

UNDERFLOW_LIMIT = 1e-300

KLSource = Literal["closed-form", "MC-estimated"]


def thresholds_from_alpha(alpha: ErrorMatrix, rho: Optional[float] = None) -> ThresholdMatrix:
    """A_ii = 1/alpha_ii - 1 and A_ij = 1/alpha_ji (transposed index)."""
    a = alpha.array
    if alpha.degenerate or np.any(np.diag(a) >= 1.0):
        raise ConfigurationError("alpha diagonal entries must be below 1")
    entries = 1.0 / a.T
    np.fill_diagonal(entries, 1.0 / np.diag(a) - 1.0)
    return ThresholdMatrix(entries=entries.tolist(), provenance="from_alpha", rho=rho)


def thresholds_from_beta(
    beta: ErrorMatrix,
    hp: Hyperparams,
    rho: Optional[float] = None,
    optimal: bool = False,
) -> ThresholdMatrix:
    """
    Thresholds guaranteeing the beta constraints.

    A_ii = (1 + tr beta) / (beta_ii (1 - rho)^k*) - 1 and
    A_ij = (1 + tr beta) / (beta_ji rho (1 - rho)^k*). ``optimal=True`` uses
    rho = hp.rho_opt; otherwise ``rho`` defaults to hp.rho_beta.
    """
    if optimal:
        rho = hp.rho_opt
    elif rho is None:
        rho = hp.rho_beta
    if not (0.0 < rho < 1.0):
        raise ConfigurationError(f"rho must lie in (0, 1), got {rho}")

    decay = (1.0 - rho) ** hp.k_star
    if decay < UNDERFLOW_LIMIT:
        raise NumericalError(
            f"(1 - rho)^k* = {decay:.3g} underflows for rho={rho:.6g}, k*={hp.k_star}; "
            "use a smaller k_check"
        )

    b = beta.array
    numerator = 1.0 + beta.trace
    entries = numerator / (b.T * rho * decay)
    np.fill_diagonal(entries, numerator / (np.diag(b) * decay) - 1.0)
    provenance = "optimal" if optimal else "from_beta"
    logger.debug("Thresholds (%s, rho=%.6g): %s", provenance, rho, entries)
    return ThresholdMatrix(entries=entries.tolist(), provenance=provenance, rho=rho)


def pfa_bound(thresholds: ThresholdMatrix) -> np.ndarray:
    """Weighted false-alarm bounds 1 / (1 + A_ii)."""
    return 1.0 / (1.0 + np.diag(thresholds.array))


def pmi_bound(thresholds: ThresholdMatrix) -> np.ndarray:
    """Misidentification bounds: entry [i, j] = 1 / A_ji; NaN on the diagonal."""
    bounds = 1.0 / thresholds.array.T
    np.fill_diagonal(bounds, np.nan)
    return bounds


@dataclass
class KLTable:
    """
    Ergodic information numbers on each stream's grid.

    ``j_bar[i][m]`` and ``j_star_bar[i][m]`` belong to grid point m of stream
    i + 1; standard errors are present for Monte Carlo tables.
    """

    j_bar: List[np.ndarray]
    j_star_bar: List[np.ndarray]
    source: KLSource = "closed-form"
    j_bar_se: Optional[List[np.ndarray]] = None
    j_star_bar_se: Optional[List[np.ndarray]] = None
    metadata: dict = field(default_factory=dict)

    @property
    def n_streams(self) -> int:
        return len(self.j_bar)

    def min_positive(self) -> float:
        values = np.concatenate([np.asarray(v, dtype=float) for v in self.j_bar])
        positive = values[values > 0.0]
        if positive.size == 0:
            raise NumericalError("KL table has no positive information number")
        return float(positive.min())

    def to_frame(self) -> pd.DataFrame:
        records = []
        for i, (post, pre) in enumerate(zip(self.j_bar, self.j_star_bar)):
            for m in range(len(post)):
                record = {"stream": i + 1, "theta_index": m, "J_bar": post[m], "J_star_bar": pre[m]}
                if self.j_bar_se is not None and self.j_star_bar_se is not None:
                    record["J_bar_se"] = self.j_bar_se[i][m]
                    record["J_star_bar_se"] = self.j_star_bar_se[i][m]
                record["source"] = self.source
                records.append(record)
        return pd.DataFrame.from_records(records)


def kl_table_closed_form(
    models: Sequence[StreamModel], grids: Sequence[ParameterGrid]
) -> KLTable:
    """Closed-form KL numbers on every grid; fails for models without one."""
    j_bar, j_star = [], []
    for i, (model, grid) in enumerate(zip(models, grids), start=1):
        post, pre = [], []
        for point in grid.points:
            pair = model.closed_form_kl(point)
            if not isinstance(pair, KLPair):
                raise NumericalError(
                    f"stream {i}: {model.kind} has no closed-form ergodic KL; "
                    "estimate it by Monte Carlo"
                )
            post.append(pair.j_bar)
            pre.append(pair.j_star_bar)
        j_bar.append(np.asarray(post))
        j_star.append(np.asarray(pre))
    return KLTable(j_bar=j_bar, j_star_bar=j_star, source="closed-form")


def iota(kl_table: KLTable, stream: int, theta_index: int) -> np.ndarray:
    """
    Information vector for stream ``stream`` at its grid point ``theta_index``.

    iota_i = J_bar_i(theta); iota_j = J_bar_i(theta) - max over grid_j of
    J*_bar_j for j != i. Non-positive entries are an error.
    """
    n = kl_table.n_streams
    if not 1 <= stream <= n:
        raise ConfigurationError(f"stream must lie in 1..{n}, got {stream}")
    own = float(kl_table.j_bar[stream - 1][theta_index])
    values = np.empty(n)
    for j in range(1, n + 1):
        if j == stream:
            values[j - 1] = own
        else:
            values[j - 1] = own - float(np.max(kl_table.j_star_bar[j - 1]))
    if np.any(values <= 0.0) or not np.all(np.isfinite(values)):
        raise NumericalError(
            f"information numbers for stream {stream}, grid point {theta_index} "
            f"must be positive, got {values.tolist()}"
        )
    return values


def lower_bound_delay(
    beta: ErrorMatrix, iota_vec: Sequence[float], stream: int, r: float = 1.0
) -> float:
    """b^r with b = max_j |log beta_ji| / iota_j."""
    column = beta.array[:, stream - 1]
    b = max(abs(math.log(column[j])) / iota_vec[j] for j in range(len(iota_vec)))
    return b**r


def upper_bound_delay(
    thresholds: ThresholdMatrix, iota_vec: Sequence[float], stream: int, r: float = 1.0
) -> float:
    """B^r with B = max_j log A_ij / iota_j."""
    row = thresholds.log_entries[stream - 1]
    big_b = max(row[j] / iota_vec[j] for j in range(len(iota_vec)))
    return big_b**r


def theoretic_add(beta: ErrorMatrix, kl_table: KLTable, stream: int, theta_index: int) -> float:
    """First-order delay approximation max_j |log beta_ji| / iota_j."""
    return lower_bound_delay(beta, iota(kl_table, stream, theta_index), stream, r=1.0)


class BoundRow(BaseModel):
    model_config = ConfigDict(frozen=True)

    stream: int
    theta_index: int
    iota: List[float]
    b_r: float
    B_r: float
    kl_source: KLSource


class BoundReport(BaseModel):
    """Lower and upper delay bounds per (stream, grid point)."""

    model_config = ConfigDict(frozen=True)

    r: float
    threshold_provenance: str
    rows: List[BoundRow]

    def to_frame(self) -> pd.DataFrame:
        records = []
        for row in self.rows:
            record = {"i": row.stream, "theta_index": row.theta_index}
            record.update({f"iota_{j}": v for j, v in enumerate(row.iota, start=1)})
            record.update({"b_r": row.b_r, "B_r": row.B_r, "kl_source": row.kl_source})
            records.append(record)
        return pd.DataFrame.from_records(records)

    def export_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        self.to_frame().to_csv(path, index=False, float_format="%.17g")
        logger.info("Wrote bound report with %d rows to %s", len(self.rows), path)
        return path


def bound_report(
    beta: ErrorMatrix, thresholds: ThresholdMatrix, kl_table: KLTable, r: float = 1.0
) -> BoundReport:
    """Bounds for every stream and grid point, using the active thresholds."""
    if beta.n != thresholds.n or kl_table.n_streams != beta.n:
        raise ConfigurationError("beta, thresholds and KL table disagree on the stream count")
    rows = []
    for stream in range(1, beta.n + 1):
        for theta_index in range(len(kl_table.j_bar[stream - 1])):
            vec = iota(kl_table, stream, theta_index)
            rows.append(
                BoundRow(
                    stream=stream,
                    theta_index=theta_index,
                    iota=vec.tolist(),
                    b_r=lower_bound_delay(beta, vec, stream, r),
                    B_r=upper_bound_delay(thresholds, vec, stream, r),
                    kl_source=kl_table.source,
                )
            )
    return BoundReport(r=r, threshold_provenance=thresholds.provenance, rows=rows)
