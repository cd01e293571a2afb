"""
Monte Carlo harness for operating characteristics.

Trials are independent: trial t draws every random number from a generator
seeded by (base seed, t), so record lists do not depend on how trials are
spread over worker processes. Estimators follow the windowed ratio forms used
for the detection-identification tables, plus the prior-weighted false-alarm
and misidentification estimates used to check the threshold error bounds.
"""

import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, Iterator, List, Literal, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import psutil
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .config import DetectionSetup
from .core import ErrorMatrix, GeometricPrior, Hyperparams, ParameterGrid, hyperparams_from_beta
from .detector import run_to_decision
from .errors import ConfigurationError, EstimationError, NumericalError
from .models import EpidemicGaussianModel, StreamModel
from .thresholds import (
    KLTable,
    iota,
    kl_table_closed_form,
    lower_bound_delay,
    theoretic_add,
    thresholds_from_beta,
)

logger = logging.getLogger(__name__)

Regime = Literal["pre", "post"]
SeedLike = Union[int, Sequence[int]]


class TrialPlan(BaseModel):
    """
    One battery of trials.

    ``nu=None`` with ``random_change=False`` simulates no change at all;
    ``random_change=True`` draws each trial's change point from the geometric prior.
    A no-change plan that feeds the windowed false-alarm estimate carries
    ``k_star`` and must run past it.
    """

    model_config = ConfigDict(frozen=True)

    trials: int = Field(ge=1)
    horizon: int = Field(ge=1)
    nu: Optional[int] = Field(default=None, ge=0)
    stream: int = Field(default=1, ge=1)
    theta: Optional[List[float]] = None
    seed: int = 0
    parallel: bool = False
    workers: Optional[int] = Field(default=None, ge=1)
    random_change: bool = False
    k_star: Optional[int] = Field(default=None, ge=1)

    @model_validator(mode="after")
    def _check(self) -> "TrialPlan":
        if (self.nu is not None or self.random_change) and self.theta is None:
            raise ValueError("a change plan needs a post-change theta")
        if self.nu is not None and self.random_change:
            raise ValueError("give a fixed nu or random_change, not both")
        if self.k_star is not None and self.horizon <= self.k_star:
            raise ValueError(f"horizon {self.horizon} must exceed k*={self.k_star}")
        return self

    @property
    def has_change(self) -> bool:
        return self.nu is not None or self.random_change


@dataclass(frozen=True)
class TrialRecord:
    index: int
    time: int
    stream: Optional[int]
    nu: Optional[int]
    censored: bool


class Estimate(BaseModel):
    """Point estimate with its standard error and effective count."""

    model_config = ConfigDict(frozen=True)

    value: float
    stderr: float
    count: int
    undefined_windows: List[int] = []


def trial_rng(seed: SeedLike, index: int) -> np.random.Generator:
    entropy = [seed] if isinstance(seed, int) else list(seed)
    return np.random.default_rng(entropy + [index])


def default_workers() -> int:
    return psutil.cpu_count(logical=False) or psutil.cpu_count() or 1


def _observation_source(
    setup: DetectionSetup, plan: TrialPlan, nu: Optional[int], rng: np.random.Generator
) -> Iterator[list]:
    states = [m.initial_state(s) for m, s in zip(setup.models, setup.initial_states)]
    affected = plan.stream - 1
    n = 0
    while True:
        n += 1
        observations = []
        for i, model in enumerate(setup.models):
            theta = plan.theta if nu is not None and i == affected and n > nu else None
            y, states[i] = model.simulate_step(theta, states[i], rng)
            observations.append(y)
        yield observations


def simulate_trial(setup: DetectionSetup, plan: TrialPlan, index: int) -> TrialRecord:
    rng = trial_rng(plan.seed, index)
    nu = plan.nu
    if plan.random_change:
        nu = int(rng.geometric(setup.prior.rho)) - 1
    detector = setup.new_detector()
    source = _observation_source(setup, plan, nu, rng)
    outcome = run_to_decision(detector, setup.thresholds, source, plan.horizon)
    if outcome.stopped:
        return TrialRecord(index, outcome.time, outcome.stream, nu, False)
    return TrialRecord(index, plan.horizon, None, nu, True)


def _run_chunk(setup: DetectionSetup, plan: TrialPlan, indices: Sequence[int]) -> List[TrialRecord]:
    return [simulate_trial(setup, plan, t) for t in indices]


def run_trials(plan: TrialPlan, setup: DetectionSetup) -> List[TrialRecord]:
    """Run ``plan.trials`` independent replications, sorted by trial index."""
    if plan.stream > setup.n_streams:
        raise ConfigurationError(f"affected stream {plan.stream} exceeds {setup.n_streams}")
    if plan.theta is not None and not setup.models[plan.stream - 1].stationarity_check(plan.theta):
        raise ConfigurationError(f"post-change theta {plan.theta} is not admissible")

    workers = plan.workers or default_workers()
    indices = list(range(plan.trials))
    logger.info(
        "Running %d trials (nu=%s, stream=%d, horizon=%d, workers=%d)",
        plan.trials,
        "prior" if plan.random_change else (plan.nu if plan.has_change else "none"),
        plan.stream,
        plan.horizon,
        workers if plan.parallel else 1,
    )

    if plan.parallel and workers > 1 and plan.trials > 1:
        size = max(1, math.ceil(plan.trials / (4 * workers)))
        chunks = [indices[i : i + size] for i in range(0, plan.trials, size)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_chunk, setup, plan, chunk) for chunk in chunks]
            records = [record for future in futures for record in future.result()]
    else:
        records = _run_chunk(setup, plan, indices)

    records.sort(key=lambda r: r.index)
    censored = sum(r.censored for r in records)
    if censored:
        logger.warning("%d of %d trials reached the horizon without a decision", censored, plan.trials)
    return records


def _mean_and_se(values: np.ndarray) -> Tuple[float, float]:
    count = values.size
    mean = float(values.mean())
    if count < 2:
        return mean, math.nan
    return mean, float(values.std(ddof=1) / math.sqrt(count))


def estimate_add(
    records: Sequence[TrialRecord],
    nu: Optional[int] = None,
    stream: Optional[int] = None,
    order: float = 1.0,
) -> Estimate:
    """
    Expected detection delay (or its moment of order ``order``).

    R = sum (T - nu)^order 1{T > nu} 1{d = stream} / sum 1{T > nu}. Censored
    trials contribute (horizon - nu) whatever their identity. ``nu=None`` uses
    each record's own change point; ``stream=None`` counts every decision.
    """
    late = []
    for r in records:
        change = r.nu if nu is None else nu
        if change is None:
            raise ConfigurationError("delay estimation needs change-point records")
        if r.time > change:
            hit = r.censored or stream is None or r.stream == stream
            late.append((r.time - change) ** order if hit else 0.0)
    if not late:
        raise EstimationError("no trial ran past the change point")
    mean, se = _mean_and_se(np.asarray(late, dtype=float))
    if math.isnan(se):
        logger.warning("delay estimate from a single trial has no standard error")
    return Estimate(value=mean, stderr=se, count=len(late))


def _arrays(records: Sequence[TrialRecord]):
    times = np.array([r.time for r in records], dtype=np.int64)
    streams = np.array([r.stream if r.stream is not None else 0 for r in records])
    censored = np.array([r.censored for r in records], dtype=bool)
    return times, streams, censored


def estimate_pfa(records: Sequence[TrialRecord], hp: Hyperparams, stream: int) -> Estimate:
    """
    False-alarm estimate from no-change trials: the maximum over
    l in [1, k* - m*] of #{l <= T < l + m*, d = stream} / #{T >= l}.
    """
    times, streams, censored = _arrays(records)
    if censored.any() and times[censored].min() <= hp.k_star:
        logger.warning("no-change horizon %d does not exceed k*=%d", times[censored].min(), hp.k_star)

    best: Optional[Tuple[float, int]] = None
    undefined = []
    for ell in range(1, hp.k_star - hp.m_star + 1):
        at_risk = int(np.sum(times >= ell))
        if at_risk == 0:
            undefined.append(ell)
            continue
        alarms = int(
            np.sum((times >= ell) & (times < ell + hp.m_star) & (streams == stream) & ~censored)
        )
        ratio = alarms / at_risk
        if best is None or ratio > best[0]:
            best = (ratio, at_risk)
    if undefined:
        logger.warning("false-alarm ratio undefined at windows %s", undefined)
    if best is None:
        raise EstimationError("false-alarm ratio is undefined at every window")
    value, count = best
    return Estimate(
        value=value,
        stderr=math.sqrt(value * (1.0 - value) / count),
        count=count,
        undefined_windows=undefined,
    )


def estimate_pmi(
    records: Sequence[TrialRecord], hp: Hyperparams, stream: int, nu: int
) -> Estimate:
    """
    Misidentification estimate toward ``stream``: the maximum over
    l in (nu, nu + k*] of #{T > l, d = stream} / #{T > l}.
    """
    times, streams, censored = _arrays(records)
    best: Optional[Tuple[float, int]] = None
    undefined = []
    for ell in range(nu + 1, nu + hp.k_star + 1):
        alive = times > ell
        at_risk = int(alive.sum())
        if at_risk == 0:
            undefined.append(ell)
            continue
        ratio = int(np.sum(alive & (streams == stream) & ~censored)) / at_risk
        if best is None or ratio > best[0]:
            best = (ratio, at_risk)
    if best is None:
        return Estimate(value=0.0, stderr=0.0, count=0, undefined_windows=undefined)
    value, count = best
    return Estimate(
        value=value,
        stderr=math.sqrt(value * (1.0 - value) / count),
        count=count,
        undefined_windows=undefined,
    )


def estimate_bayes_pfa(records: Sequence[TrialRecord], rho: float, stream: int) -> Estimate:
    """Prior-weighted false alarms sum_k pi_k P*(T <= k, d = stream) from no-change trials."""
    values = np.array(
        [
            (1.0 - rho) ** r.time if (not r.censored and r.stream == stream) else 0.0
            for r in records
        ]
    )
    mean, se = _mean_and_se(values)
    return Estimate(value=mean, stderr=se, count=values.size)


def estimate_bayes_pmi(records: Sequence[TrialRecord], stream: int) -> Estimate:
    """Share of prior-drawn change trials stopping after the change with d = stream."""
    if any(r.nu is None for r in records):
        raise ConfigurationError("prior-weighted misidentification needs change-point records")
    values = np.array(
        [
            1.0 if (not r.censored and r.time > r.nu and r.stream == stream) else 0.0
            for r in records
        ]
    )
    mean, se = _mean_and_se(values)
    return Estimate(value=mean, stderr=se, count=values.size)


def _batch_se(values: np.ndarray, batches: int = 20) -> float:
    batches = min(batches, values.size)
    if batches < 2:
        return math.nan
    size = values.size // batches
    means = values[: size * batches].reshape(batches, size).mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(batches))


def estimate_kl(
    model: StreamModel,
    theta,
    steps: int,
    regime: Regime,
    seed: SeedLike = 0,
    burn_in: int = 1000,
    x0=None,
) -> Estimate:
    """
    Path average of the one-step information along a simulated path.

    ``regime="post"`` averages J(theta, X_n) along a post-change path;
    ``regime="pre"`` averages J*(theta, X_n) along a pre-change path. The first
    ``burn_in`` transitions are discarded; ``burn_in=0`` averages from X_1.
    Standard errors use batch means.
    """
    if steps < 1:
        raise ConfigurationError(f"steps must be at least 1, got {steps}")
    if regime not in ("pre", "post"):
        raise ConfigurationError(f"regime must be 'pre' or 'post', got {regime!r}")
    theta = model.as_theta(theta)
    if not model.stationarity_check(theta) or not model.stationarity_check(model.theta_star):
        raise NumericalError(f"{model.kind}: theta={theta.tolist()} is not ergodic")

    rng = np.random.default_rng(seed)
    driver = theta if regime == "post" else None
    pick = 0 if regime == "post" else 1
    state = model.initial_state(x0)
    for _ in range(burn_in):
        _, state = model.simulate_step(driver, state, rng)

    values = np.empty(steps)
    for n in range(steps):
        _, state = model.simulate_step(driver, state, rng)
        values[n] = model.conditional_information(theta, state)[pick]
    return Estimate(value=float(values.mean()), stderr=_batch_se(values), count=steps)


def _path_length(model: StreamModel, theta, steps: Optional[int]) -> int:
    if steps is not None:
        return steps
    horizon = getattr(model, "decay_horizon", None)
    if horizon is None:
        raise ConfigurationError(f"{model.kind} has no decay horizon; give the path length")
    return horizon(theta)


def kl_table_monte_carlo(
    models: Sequence[StreamModel],
    grids: Sequence[ParameterGrid],
    steps: Optional[int],
    seed: int = 0,
    burn_in: int = 1000,
    initial_states: Optional[Sequence] = None,
) -> KLTable:
    """
    Monte Carlo J_bar / J*_bar on every grid point with independent seeds.

    ``steps=None`` averages each point over its model's decay horizon: the
    post-change path uses the grid point's rate and the pre-change path p*.
    """
    if initial_states is None:
        initial_states = [None] * len(models)
    j_bar, j_star, j_se, j_star_se = [], [], [], []
    for i, (model, grid, x0) in enumerate(zip(models, grids, initial_states)):
        post = [
            estimate_kl(model, p, _path_length(model, p, steps), "post", [seed, i, m, 0], burn_in, x0)
            for m, p in enumerate(grid.points)
        ]
        pre_steps = _path_length(model, None, steps)
        pre = [
            estimate_kl(model, p, pre_steps, "pre", [seed, i, m, 1], burn_in, x0)
            for m, p in enumerate(grid.points)
        ]
        j_bar.append(np.array([e.value for e in post]))
        j_star.append(np.array([e.value for e in pre]))
        j_se.append(np.array([e.stderr for e in post]))
        j_star_se.append(np.array([e.stderr for e in pre]))
    return KLTable(
        j_bar=j_bar,
        j_star_bar=j_star,
        source="MC-estimated",
        j_bar_se=j_se,
        j_star_bar_se=j_star_se,
        metadata={"steps": steps, "seed": seed, "burn_in": burn_in},
    )


def robust_risk_estimate(
    cells: Mapping[Tuple[int, int, int], Sequence[TrialRecord]],
    beta: ErrorMatrix,
    kl_table: KLTable,
    r: float = 1.0,
) -> float:
    """
    Worst normalized delay: max over cells (stream, nu, theta_index) of the
    delay moment of order r divided by the lower bound b^r.
    """
    ratios = []
    for (stream, nu, theta_index), records in cells.items():
        if not records:
            logger.warning("empty cell (stream=%d, nu=%d, theta=%d) excluded", stream, nu, theta_index)
            continue
        delay = estimate_add(records, nu=nu, stream=stream, order=r)
        bound = lower_bound_delay(beta, iota(kl_table, stream, theta_index), stream, r)
        ratios.append(delay.value / bound)
    if not ratios:
        raise EstimationError("every robust-risk cell is empty")
    return max(ratios)


def second_moment_profile(
    model: EpidemicGaussianModel,
    x0: float,
    theta: Optional[float],
    paths: int,
    steps: int,
    seed: SeedLike = 0,
) -> Tuple[np.ndarray, np.ndarray]:
    """Mean of X_n^2 and its standard error for n = 1..steps."""
    rng = np.random.default_rng(seed)
    squares = model.simulate_paths(theta, x0, steps, paths, rng)[:, 1:] ** 2
    mean = squares.mean(axis=0)
    se = squares.std(axis=0, ddof=1) / math.sqrt(paths) if paths > 1 else np.full(steps, np.nan)
    return mean, se


class TableConfig(BaseModel):
    """
    One row of the epidemic operating-characteristics table.

    Stream i (1-based) has p*_i = 1/(p_star_offset + i) and capacity
    V_i = scale_base (i + 1); the change hits stream N at nu = 0 with
    theta = q p*_N; beta_ij = epsilon / (i + j).
    """

    model_config = ConfigDict(frozen=True)

    epsilon: float = Field(gt=0.0)
    k_check: float = Field(gt=1.0)
    q: float = Field(gt=1.0)
    p_star_offset: int = 100
    n_streams: int = Field(default=5, ge=2)
    scale_base: float = 0.5e4
    x0: float = 1.0
    grid_multipliers: Optional[List[float]] = None

    def p_star(self, stream: int) -> float:
        return 1.0 / (self.p_star_offset + stream)

    def scale(self, stream: int) -> float:
        return self.scale_base * (stream + 1)

    def multipliers(self) -> List[float]:
        values = list(self.grid_multipliers or [self.q])
        if self.q not in values:
            values.append(self.q)
        return sorted(values)

    def beta(self) -> ErrorMatrix:
        return ErrorMatrix.from_pattern(self.n_streams, self.epsilon)


class OperatingCharacteristics(BaseModel):
    """One table row: misidentification, false alarm and delay estimates."""

    model_config = ConfigDict(frozen=True)

    epsilon: float
    k_check: float
    q: float
    p_check: List[float]
    p_check_se: List[float]
    p_hat: float
    p_hat_se: float
    r_hat: float
    r_hat_se: float
    theory_r: float
    trials: int
    seed: int
    censored_post: int
    censored_no_change: int
    flagged: bool = False

    def to_row(self) -> Dict[str, float]:
        row: Dict[str, float] = {"epsilon": self.epsilon, "k_check": self.k_check, "q": self.q}
        n = len(self.p_check) + 1
        for j, (value, se) in enumerate(zip(self.p_check, self.p_check_se), start=1):
            row[f"P_check_{j}_{n}"] = value
            row[f"P_check_{j}_{n}_se"] = se
        row.update(
            {
                "P_hat_N": self.p_hat,
                "P_hat_N_se": self.p_hat_se,
                "R_hat": self.r_hat,
                "R_hat_se": self.r_hat_se,
                "theory_R": self.theory_r,
            }
        )
        return row


def table_setup(table: TableConfig) -> Tuple[DetectionSetup, Hyperparams]:
    beta = table.beta()
    hp = hyperparams_from_beta(beta, table.k_check)
    thresholds = thresholds_from_beta(beta, hp, optimal=True)
    streams = range(1, table.n_streams + 1)
    models: List[StreamModel] = [
        EpidemicGaussianModel(table.p_star(i), scale=table.scale(i)) for i in streams
    ]
    grids = [
        ParameterGrid.uniform([m * table.p_star(i) for m in table.multipliers()]) for i in streams
    ]
    setup = DetectionSetup(
        models=models,
        grids=grids,
        prior=GeometricPrior(rho=thresholds.rho),
        thresholds=thresholds,
        initial_states=[table.x0] * table.n_streams,
        beta=beta,
        hyperparams=hp,
    )
    return setup, hp


def table_theory(
    table: TableConfig,
    seed: int = 0,
    kl_steps: Optional[int] = None,
    kl_burn_in: int = 0,
) -> float:
    """
    Theoretical delay for the change in stream N from Monte Carlo information
    numbers on paths started at x0. ``kl_steps=None`` uses each path's decay horizon.
    """
    setup, _ = table_setup(table)
    n = table.n_streams
    kl_table = kl_table_monte_carlo(
        setup.models,
        setup.grids,
        kl_steps,
        seed=seed,
        burn_in=kl_burn_in,
        initial_states=setup.initial_states,
    )
    return theoretic_add(setup.beta, kl_table, n, table.multipliers().index(table.q))


def operating_characteristics(
    table: TableConfig,
    trials: int,
    seed: int = 0,
    parallel: bool = False,
    horizon: Optional[int] = None,
    kl_steps: Optional[int] = None,
    kl_burn_in: int = 0,
) -> OperatingCharacteristics:
    """
    Full table row: optimal thresholds, a post-change battery at nu = 0 in
    stream N, a no-change battery, and the theoretical delay from Monte Carlo
    information numbers.
    """
    setup, hp = table_setup(table)
    n = table.n_streams
    theta = table.q * table.p_star(n)

    theory = table_theory(table, seed=seed, kl_steps=kl_steps, kl_burn_in=kl_burn_in)
    if horizon is None:
        horizon = max(hp.k_star + 1, math.ceil(50 * theory))

    post_plan = TrialPlan(
        trials=trials, horizon=horizon, nu=0, stream=n, theta=[theta], seed=seed, parallel=parallel
    )
    post = run_trials(post_plan, setup)
    quiet_plan = TrialPlan(
        trials=trials,
        horizon=hp.k_star + 1,
        seed=seed + 1,
        parallel=parallel,
        k_star=hp.k_star,
    )
    quiet = run_trials(quiet_plan, setup)

    delay = estimate_add(post, nu=0, stream=n)
    pfa = estimate_pfa(quiet, hp, n)
    pmi = [estimate_pmi(post, hp, j, nu=0) for j in range(1, n)]
    flagged = trials == 1
    if flagged:
        logger.warning("single-trial characteristics carry no standard errors")

    result = OperatingCharacteristics(
        epsilon=table.epsilon,
        k_check=table.k_check,
        q=table.q,
        p_check=[e.value for e in pmi],
        p_check_se=[e.stderr for e in pmi],
        p_hat=pfa.value,
        p_hat_se=pfa.stderr,
        r_hat=delay.value,
        r_hat_se=delay.stderr,
        theory_r=theory,
        trials=trials,
        seed=seed,
        censored_post=sum(r.censored for r in post),
        censored_no_change=sum(r.censored for r in quiet),
        flagged=flagged,
    )
    logger.info("Characteristics: R_hat=%.4g theory=%.4g P_hat=%.4g", result.r_hat, theory, result.p_hat)
    return result


def write_characteristics(
    rows: Sequence[OperatingCharacteristics], path: Union[str, Path], fmt: str = "csv"
) -> Path:
    path = Path(path)
    if fmt == "csv":
        pd.DataFrame([row.to_row() for row in rows]).to_csv(path, index=False, float_format="%.6g")
    elif fmt == "json":
        path.write_text(json.dumps([row.model_dump() for row in rows], indent=2), encoding="utf-8")
    else:
        raise ConfigurationError(f"unknown output format {fmt!r}")
    return path


@dataclass
class TrendPoint:
    factor: float
    r_hat: float
    r_hat_se: float
    lower_bound: float
    ratio: float


def optimality_trend(
    models: Sequence[StreamModel],
    grids: Sequence[ParameterGrid],
    beta: ErrorMatrix,
    factors: Sequence[float],
    theta: Sequence[float],
    stream: int = 1,
    theta_index: int = 0,
    k_check: float = 2.0,
    trials: int = 1000,
    seed: int = 0,
    parallel: bool = False,
) -> List[TrendPoint]:
    """
    Normalized delay R_hat / b as the constraints shrink by ``factors``.

    Uses optimal thresholds and closed-form information numbers, so every
    model must provide a closed-form KL pair.
    """
    kl_table = kl_table_closed_form(models, grids)
    points = []
    for factor in factors:
        scaled = ErrorMatrix(entries=(beta.array * factor).tolist())
        hp = hyperparams_from_beta(scaled, k_check)
        thresholds = thresholds_from_beta(scaled, hp, optimal=True)
        setup = DetectionSetup(
            models=list(models),
            grids=list(grids),
            prior=GeometricPrior(rho=thresholds.rho),
            thresholds=thresholds,
            initial_states=[None] * len(models),
            beta=scaled,
            hyperparams=hp,
        )
        bound = lower_bound_delay(scaled, iota(kl_table, stream, theta_index), stream)
        horizon = max(hp.k_star + 1, math.ceil(50 * bound))
        plan = TrialPlan(
            trials=trials,
            horizon=horizon,
            nu=0,
            stream=stream,
            theta=list(theta),
            seed=seed,
            parallel=parallel,
        )
        records = run_trials(plan, setup)
        delay = estimate_add(records, nu=0, stream=stream)
        points.append(TrendPoint(factor, delay.value, delay.stderr, bound, delay.value / bound))
        logger.info("factor=%g R_hat=%.4g b=%.4g ratio=%.4g", factor, delay.value, bound, points[-1].ratio)
    return points


def records_frame(records: Sequence[TrialRecord]) -> pd.DataFrame:
    return pd.DataFrame([asdict(r) for r in records])
