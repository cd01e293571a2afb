"""
Online mixture statistics and the detection-identification stopping rule.

For each stream i the detector keeps the cumulative LLR C_{i,n}(theta) on the
stream's grid and the history of C_{i,k} for every retained change-point
hypothesis k. After each observation vector it recomputes, in the log domain,

    L_{i,n}    = sum_{k<n} pi_k sum_theta w(theta) exp(C_{i,n} - C_{i,k})
    Lhat_{i,n} = sum_{k<n} pi_k max_theta   exp(C_{i,n} - C_{i,k})

and the decision matrix log U_{i,j} = log L_i - log Lhat_j (i != j),
log U_{i,i} = log L_i - n log(1 - rho). The rule stops at the first n where
some row i satisfies min_j (log U_{i,j} - log A_{i,j}) >= 0, choosing the
smallest such i.
"""

import logging
import math
from dataclasses import dataclass, field
from itertools import islice
from pathlib import Path
from typing import Callable, Iterable, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from scipy.special import logsumexp

from .core import DecisionOutcome, GeometricPrior, ParameterGrid, ThresholdMatrix
from .errors import ConfigurationError, ModelDomainError, NumericalError, ObservationError
from .models.base import Observation, StreamModel

logger = logging.getLogger(__name__)


class _History:
    """Cumulative-LLR rows for the retained change-point hypotheses."""

    def __init__(self, width: int, window: Optional[int] = None):
        self.window = window
        capacity = window if window is not None else 64
        self.values = np.empty((capacity, width))
        self.ks = np.empty(capacity, dtype=np.int64)
        self.size = 0
        self._next = 0

    def append(self, k: int, row: np.ndarray) -> None:
        if self.window is None:
            if self.size == len(self.ks):
                self.values = np.concatenate([self.values, np.empty_like(self.values)])
                self.ks = np.concatenate([self.ks, np.empty_like(self.ks)])
            slot = self.size
            self.size += 1
        else:
            slot = self._next
            self._next = (self._next + 1) % self.window
            self.size = min(self.size + 1, self.window)
        self.values[slot] = row
        self.ks[slot] = k

    def view(self):
        return self.ks[: self.size], self.values[: self.size]


@dataclass
class StreamTrack:
    """Per-stream part of the detector state."""

    model: StreamModel
    grid: ParameterGrid
    state: np.ndarray
    thetas: np.ndarray = field(init=False)
    log_weights: np.ndarray = field(init=False)
    cumulative: np.ndarray = field(init=False)
    history: _History = field(init=False)
    guard_hits: int = 0
    window: Optional[int] = None

    def __post_init__(self) -> None:
        self.thetas = self.grid.array
        self.log_weights = self.grid.log_weights
        self.cumulative = np.zeros(self.grid.size)
        self.history = _History(self.grid.size, self.window)


@dataclass
class TraceRow:
    n: int
    stream: int
    log_L: float
    log_Lhat: float
    log_U_row: List[float]


class DetectorState:
    """
    Mutable detector for N streams; one writer at a time.

    ``window=None`` keeps every change-point hypothesis; an integer keeps only
    the trailing ``window`` hypotheses, which lower-bounds L.
    """

    def __init__(
        self,
        models: Sequence[StreamModel],
        grids: Sequence[ParameterGrid],
        prior: GeometricPrior,
        initial_states: Optional[Sequence] = None,
        window: Optional[int] = None,
        record_trace: bool = False,
    ):
        if not models:
            raise ConfigurationError("detector needs at least one stream")
        if len(grids) != len(models):
            raise ConfigurationError(f"{len(models)} models but {len(grids)} grids")
        if window is not None and window < 1:
            raise ConfigurationError(f"window must retain at least one hypothesis, got {window}")
        if initial_states is None:
            initial_states = [None] * len(models)
        if len(initial_states) != len(models):
            raise ConfigurationError("one initial state per stream is required")

        problems = []
        for i, (model, grid) in enumerate(zip(models, grids), start=1):
            if grid.dim != model.dim:
                problems.append(f"stream {i}: grid dimension {grid.dim} != model dimension {model.dim}")
                continue
            bad = [p for p in grid.points if not model.stationarity_check(p)]
            if bad:
                problems.append(f"stream {i}: grid points outside the admissible set: {bad}")
        if problems:
            raise ConfigurationError("invalid detector configuration", problems)

        self.prior = prior
        self.window = window
        self.record_trace = record_trace
        self.tracks = [
            StreamTrack(model=m, grid=g, state=m.initial_state(s), window=window)
            for m, g, s in zip(models, grids, initial_states)
        ]
        self.n = 0
        size = len(self.tracks)
        self.log_L = np.full(size, -np.inf)
        self.log_Lhat = np.full(size, -np.inf)
        self.log_U = np.full((size, size), -np.inf)
        self.trace: List[TraceRow] = []

    @property
    def n_streams(self) -> int:
        return len(self.tracks)

    @property
    def guard_hits(self) -> List[int]:
        return [track.guard_hits for track in self.tracks]

    def _increments(self, index: int, y: Observation) -> np.ndarray:
        track = self.tracks[index]
        try:
            increments = track.model.llr_batch(track.thetas, y, track.state)
        except ModelDomainError as e:
            raise e.with_stream(index + 1) from e
        if np.any(np.isnan(increments)):
            raise NumericalError(f"stream {index + 1}: LLR increment is NaN at n={self.n + 1}")
        return np.asarray(increments, dtype=float)

    def _commit_stream(self, index: int, y: Observation, increments: np.ndarray) -> None:
        track = self.tracks[index]
        if track.model.state_guarded(track.state):
            track.guard_hits += 1
            logger.warning(
                "stream %d: state %s below the LLR guard at n=%d",
                index + 1,
                np.array2string(track.state),
                self.n + 1,
            )
        track.history.append(self.n, track.cumulative)
        track.cumulative = track.cumulative + increments
        track.state = track.model.advance(y, track.state)

        ks, rows = track.history.view()
        excess = track.cumulative[None, :] - rows
        log_pi = self.prior.log_mass(ks)
        self.log_L[index] = logsumexp(log_pi + logsumexp(excess + track.log_weights, axis=1))
        self.log_Lhat[index] = logsumexp(log_pi + excess.max(axis=1))

    def update(self, observations: Sequence[Observation]) -> "DetectorState":
        """Consume one observation per stream and refresh the statistics."""
        if len(observations) != self.n_streams:
            raise ObservationError(
                f"expected {self.n_streams} observations, got {len(observations)}"
            )
        checked = []
        for i, (track, y) in enumerate(zip(self.tracks, observations), start=1):
            try:
                checked.append(track.model.check_observation(y))
            except ObservationError as e:
                raise ObservationError(f"stream {i}: {e}") from e

        # Evaluate every stream before mutating any.
        increments = [self._increments(i, y) for i, y in enumerate(checked)]
        for i, (y, inc) in enumerate(zip(checked, increments)):
            self._commit_stream(i, y, inc)
        self.n += 1

        self.log_U = self.log_L[:, None] - self.log_Lhat[None, :]
        np.fill_diagonal(self.log_U, self.log_L - self.prior.log_tail(self.n))

        if self.record_trace:
            for i in range(self.n_streams):
                self.trace.append(
                    TraceRow(
                        n=self.n,
                        stream=i + 1,
                        log_L=float(self.log_L[i]),
                        log_Lhat=float(self.log_Lhat[i]),
                        log_U_row=self.log_U[i].tolist(),
                    )
                )
        if logger.isEnabledFor(logging.DEBUG):
            logger.debug("n=%d log L=%s log Lhat=%s", self.n, self.log_L, self.log_Lhat)
        return self

    def decide(self, thresholds: ThresholdMatrix) -> Optional[DecisionOutcome]:
        return decision_step(self, thresholds)


def init(
    models: Sequence[StreamModel],
    grids: Sequence[ParameterGrid],
    prior: GeometricPrior,
    initial_states: Optional[Sequence] = None,
    window: Optional[int] = None,
    record_trace: bool = False,
) -> DetectorState:
    """Fresh detector at n = 0."""
    return DetectorState(models, grids, prior, initial_states, window, record_trace)


def update(state: DetectorState, observations: Sequence[Observation]) -> DetectorState:
    return state.update(observations)


def decision_step(state: DetectorState, thresholds: ThresholdMatrix) -> Optional[DecisionOutcome]:
    """Apply the stopping rule at the current time; None means continue."""
    if state.n < 1:
        raise ConfigurationError("decision_step needs at least one observation")
    if thresholds.n != state.n_streams:
        raise ConfigurationError(
            f"threshold matrix is {thresholds.n}x{thresholds.n} for {state.n_streams} streams"
        )
    margin = state.log_U - thresholds.log_entries
    crossed = np.min(margin, axis=1) >= 0.0
    if not crossed.any():
        return None
    stream = int(np.argmax(crossed)) + 1
    return DecisionOutcome(
        stopped=True, time=state.n, stream=stream, statistic_snapshot=state.log_U.tolist()
    )


ObservationSource = Union[Iterable[Sequence[Observation]], Callable[[int], Sequence[Observation]]]


def run_to_decision(
    state: DetectorState,
    thresholds: ThresholdMatrix,
    source: ObservationSource,
    horizon: int,
) -> DecisionOutcome:
    """
    Feed observations until the rule stops or ``horizon`` samples were consumed.

    ``source`` is an iterable of observation vectors or a callable mapping the
    1-based step index to one. A no-decision outcome reports the samples consumed.
    """
    if horizon < 1:
        raise ConfigurationError(f"horizon must be at least 1, got {horizon}")
    if callable(source):
        start = state.n
        stream = (source(start + step) for step in range(1, horizon + 1))
    else:
        stream = islice(iter(source), horizon)

    consumed = 0
    for observations in stream:
        state.update(observations)
        consumed += 1
        outcome = decision_step(state, thresholds)
        if outcome is not None:
            return outcome
    if consumed < horizon:
        logger.info("source exhausted after %d samples without a decision", consumed)
    return DecisionOutcome(stopped=False, time=state.n)


@dataclass
class BruteForceStatistics:
    log_L: np.ndarray
    log_Lhat: np.ndarray
    log_U: np.ndarray


def _log_fsum_exp(values: Sequence[float]) -> float:
    top = max(values)
    if top == -math.inf:
        return -math.inf
    return top + math.log(math.fsum(math.exp(v - top) for v in values))


def brute_force_statistics(
    observations: Sequence[Sequence[Observation]],
    models: Sequence[StreamModel],
    grids: Sequence[ParameterGrid],
    prior: GeometricPrior,
    initial_states: Optional[Sequence] = None,
    window: Optional[int] = None,
) -> BruteForceStatistics:
    """
    Statistics at the last time, by explicit loops over k and theta.

    ``observations[i][t]`` is stream i at time t + 1. Every Z^k is summed from
    its own increments with compensated summation; no recursion is shared with
    ``DetectorState``.
    """
    size = len(models)
    if initial_states is None:
        initial_states = [None] * size
    n = len(observations[0])
    if n < 1 or any(len(series) != n for series in observations):
        raise ConfigurationError("brute force needs n >= 1 observations for every stream")

    log_rho = math.log(prior.rho)
    log_survival = math.log(1.0 - prior.rho)
    first_k = 0 if window is None else max(0, n - window)

    log_L = np.empty(size)
    log_Lhat = np.empty(size)
    for i, (model, grid) in enumerate(zip(models, grids)):
        increments = []
        state = model.initial_state(initial_states[i])
        for y in observations[i]:
            increments.append([model.llr_increment(theta, y, state) for theta in grid.points])
            state = model.advance(y, state)

        mixture_terms = []
        sup_terms = []
        for k in range(first_k, n):
            log_pi = log_rho + k * log_survival
            excess = [math.fsum(increments[t][m] for t in range(k, n)) for m in range(grid.size)]
            for m, weight in enumerate(grid.weights):
                mixture_terms.append(log_pi + math.log(weight) + excess[m])
            sup_terms.append(log_pi + max(excess))
        log_L[i] = _log_fsum_exp(mixture_terms)
        log_Lhat[i] = _log_fsum_exp(sup_terms)

    log_U = np.empty((size, size))
    for i in range(size):
        for j in range(size):
            log_U[i, j] = log_L[i] - (n * log_survival if i == j else log_Lhat[j])
    return BruteForceStatistics(log_L=log_L, log_Lhat=log_Lhat, log_U=log_U)


def default_window(thresholds: ThresholdMatrix, min_information: float) -> int:
    """Window heuristic 4 * ceil(max log A / smallest positive information)."""
    if not min_information > 0.0:
        raise NumericalError("window heuristic needs a positive information number")
    top = float(np.max(thresholds.log_entries))
    return max(1, 4 * math.ceil(max(top, 0.0) / min_information))


def trace_frame(rows: Sequence[TraceRow]) -> pd.DataFrame:
    """Trace rows as a frame with columns n, stream, log_L, log_Lhat, log_U_1..N."""
    records = []
    for row in rows:
        record = {"n": row.n, "stream": row.stream, "log_L": row.log_L, "log_Lhat": row.log_Lhat}
        record.update({f"log_U_{j}": v for j, v in enumerate(row.log_U_row, start=1)})
        records.append(record)
    return pd.DataFrame.from_records(records)


def export_trace_csv(rows: Sequence[TraceRow], path: Union[str, Path]) -> Path:
    path = Path(path)
    trace_frame(rows).to_csv(path, index=False, float_format="%.17g")
    logger.info("Wrote %d trace rows to %s", len(rows), path)
    return path
