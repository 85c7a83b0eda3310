#!/usr/bin/env python3
"""
Experiment harness.
Runs each learner variant for K episodes over independent seeded runs,
measures per-episode regret (PER) against exact values, aggregates runs
into means with 95% confidence intervals, and reads/writes result CSVs.
"""

import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from datetime import datetime
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from envs import build_env
from exact_solver import ValueTables, evaluate_policy, solve_optimal
from learners import (TIE_RULES, TIE_SMALLEST_INDEX, Transition, Variant, create_learner, dump_tables,
                      greedy_policy, observe, optimism_gap, select_action)
from mdp_core import (PURPOSE_INIT_STATE, PURPOSE_TIE_BREAK, PURPOSE_TRANSITIONS, InvariantViolation, MdpSpec,
                      RngStream, require_valid, sample_initial_state, stable_hash, step, with_initial_dist)

logger = logging.getLogger(__name__)

CI_Z = 1.96
PER_TOLERANCE = 1e-12
DEFAULT_PER_THRESHOLD = 0.05

AGGREGATE_COLUMNS = ['variant', 'episode', 'mean_per', 'ci_half_width', 'mean_cum_regret']
RAW_COLUMNS = ['variant', 'run', 'episode', 'per', 'cum_regret']


class ConfigError(ValueError):
    pass


def _is_int(value) -> bool:
    return isinstance(value, (int, np.integer)) and not isinstance(value, bool)


def _is_number(value) -> bool:
    return isinstance(value, (int, float, np.integer, np.floating)) and not isinstance(value, bool)


@dataclass
class ExperimentConfig:
    """
    Experiment settings. `special` is the 0-based (x1, a1) pair used by the
    Max-Optimal variants. `initial_dist_override` is None (keep the
    environment's distribution), "uniform", "x1", or an explicit list.
    """
    env: Union[str, Dict] = "gridworld3"
    variants: List[str] = field(default_factory=lambda: [v.value for v in Variant])
    K: int = 500
    num_runs: int = 50
    p: float = 0.05
    c: float = 0.1
    base_seed: int = 0
    initial_dist_override: Optional[Union[str, List[float]]] = None
    tie_rule: str = TIE_SMALLEST_INDEX
    special: List[int] = field(default_factory=lambda: [0, 0])
    use_iota_prime: bool = False
    per_threshold: float = DEFAULT_PER_THRESHOLD
    record_traces: bool = False

    def validate(self) -> "ExperimentConfig":
        for name in ('K', 'num_runs', 'base_seed'):
            if not _is_int(getattr(self, name)):
                raise ConfigError(f"{name} must be an integer, got {getattr(self, name)!r}")
        for name in ('p', 'c', 'per_threshold'):
            if not _is_number(getattr(self, name)):
                raise ConfigError(f"{name} must be a number, got {getattr(self, name)!r}")
        for name in ('use_iota_prime', 'record_traces'):
            if not isinstance(getattr(self, name), bool):
                raise ConfigError(f"{name} must be true or false, got {getattr(self, name)!r}")
        if not isinstance(self.env, (str, dict)):
            raise ConfigError(f"env must be a recipe string, a recipe object or a file path, got {self.env!r}")

        if self.K < 1:
            raise ConfigError(f"K must be a positive integer, got {self.K}")
        if self.num_runs < 1:
            raise ConfigError(f"num_runs must be a positive integer, got {self.num_runs}")
        if not 0.0 < self.p < 1.0:
            raise ConfigError(f"p must lie in (0, 1), got {self.p}")
        if self.c < 0:
            raise ConfigError(f"c must be non-negative, got {self.c}")

        if not isinstance(self.variants, list) or not self.variants:
            raise ConfigError(f"variants must be a non-empty list, got {self.variants!r}")
        known = [v.value for v in Variant]
        for name in self.variants:
            if name not in known:
                raise ConfigError(f"Unknown variant {name!r}, expected one of {known}")
        if len(set(self.variants)) != len(self.variants):
            raise ConfigError(f"variants listed twice: {self.variants}")
        if self.tie_rule not in TIE_RULES:
            raise ConfigError(f"Unknown tie rule {self.tie_rule!r}, expected one of {TIE_RULES}")
        if not isinstance(self.special, (list, tuple)) or len(self.special) != 2 \
                or not all(_is_int(i) for i in self.special):
            raise ConfigError(f"special must be a 0-based [x1, a1] pair of integers, got {self.special!r}")

        override = self.initial_dist_override
        if override is not None and not isinstance(override, str):
            if not isinstance(override, list) or not all(_is_number(v) for v in override):
                raise ConfigError(f"initial_dist_override must be \"uniform\", \"x1\" or a list of numbers, "
                                  f"got {override!r}")
        return self

    @classmethod
    def from_dict(cls, data: Dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError(f"config must be a JSON object, got {type(data).__name__}")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"Unknown config field(s): {', '.join(unknown)}")
        return cls(**data).validate()

    @classmethod
    def from_json(cls, path: str) -> "ExperimentConfig":
        with open(path, 'r', encoding='utf-8') as f:
            try:
                data = json.load(f)
            except json.JSONDecodeError as e:
                raise ConfigError(f"Config {path} is not valid JSON: {e}")
        return cls.from_dict(data)


@dataclass
class EpisodeTrace:
    initial_state: int
    actions: List[int]
    rewards: List[float]
    policy_id: int


@dataclass
class RunResult:
    variant: str
    run_index: int
    seed: int
    stream_id: int
    per_episode_regret: np.ndarray
    cumulative_regret: np.ndarray
    initial_states: np.ndarray
    final_tables: Optional[ValueTables] = None
    optimism_gap: Optional[np.ndarray] = None
    optimism_upper: Optional[np.ndarray] = None
    traces: Optional[List[EpisodeTrace]] = None

    @property
    def total_regret(self) -> float:
        return float(self.cumulative_regret[-1])


@dataclass
class AggregateResult:
    variant: str
    num_runs: int
    mean_per: np.ndarray
    ci_half_width: np.ndarray
    mean_cum_regret: np.ndarray
    total_regret_mean: float
    total_regret_ci: float

    @property
    def K(self) -> int:
        return len(self.mean_per)


@dataclass
class RegretSummary:
    total_regret_mean: Dict[str, float]
    total_regret_ci: Dict[str, float]
    ordering: List[str]
    first_converged_episode: Dict[str, Optional[int]]
    threshold: float


def resolve_spec(config: ExperimentConfig, spec: Optional[MdpSpec] = None) -> MdpSpec:
    """Environment for a config, with the initial-distribution override applied"""
    spec = spec if spec is not None else build_env(config.env)
    override = config.initial_dist_override
    if override is not None:
        S = spec.num_states
        if override == "uniform":
            rho = np.full(S, 1.0 / S)
        elif override == "x1":
            rho = np.zeros(S)
            rho[0] = 1.0
        elif isinstance(override, str):
            raise ConfigError(f"Unknown initial_dist_override '{override}'")
        else:
            rho = np.asarray(override, dtype=float)
        spec = with_initial_dist(spec, rho)
    return require_valid(spec)


def run_stream_id(variant: Union[str, Variant], run_index: int) -> int:
    # Per-variant offset so adding a variant never perturbs the others
    name = variant.value if isinstance(variant, Variant) else str(variant)
    return stable_hash(name) ^ int(run_index)


def run_single(spec: MdpSpec, variant: str, config: ExperimentConfig, run_index: int,
               q_star: Optional[ValueTables] = None) -> RunResult:
    """
    One seeded run of K episodes. Per episode: snapshot the greedy policy,
    score it exactly at the realized initial state, then roll the episode
    out along that same snapshot with an update after every step.
    """
    variant = Variant(variant)
    q_star = q_star if q_star is not None else solve_optimal(spec)
    S, A, H = spec.dims
    K = config.K

    stream_id = run_stream_id(variant.value, run_index)
    init_rng = RngStream.for_purpose(config.base_seed, stream_id, PURPOSE_INIT_STATE)
    transition_rng = RngStream.for_purpose(config.base_seed, stream_id, PURPOSE_TRANSITIONS)
    tie_rng = RngStream.for_purpose(config.base_seed, stream_id, PURPOSE_TIE_BREAK)

    learner = create_learner(
        variant, (S, A, H), K=K, p=config.p, c=config.c,
        q_star=q_star if variant.max_optimal else None,
        special=tuple(config.special) if variant.max_optimal else None,
        tie_rule=config.tie_rule, use_iota_prime=config.use_iota_prime,
    )

    v_star = q_star.V[0]
    per = np.zeros(K)
    initial_states = np.zeros(K, dtype=int)
    gaps = np.zeros(K) if variant.max_optimal else None
    uppers = np.zeros(K) if variant.max_optimal else None
    traces = [] if config.record_traces else None

    last_actions, last_values, policy_id = None, None, -1
    for k in range(K):
        x = sample_initial_state(spec, init_rng)
        initial_states[k] = x

        policy = greedy_policy(learner, tie_rng)
        if last_actions is None or not np.array_equal(policy.actions, last_actions):
            last_actions = policy.actions
            last_values = evaluate_policy(spec, policy).V[0]
            policy_id += 1
        per[k] = v_star[x] - last_values[x]
        if per[k] < -PER_TOLERANCE:
            raise InvariantViolation(f"{variant.value} run {run_index} episode {k + 1}: negative PER {per[k]!r}")

        if gaps is not None:
            gaps[k], uppers[k] = optimism_gap(learner)

        actions, rewards = [], []
        for h in range(H):
            a = select_action(learner, x, h, snapshot=policy)
            x_next, r = step(spec, x, a, h, transition_rng)
            observe(learner, Transition(x=x, a=a, h=h, r=r, x_next=x_next))
            actions.append(a)
            rewards.append(r)
            x = x_next
        if traces is not None:
            traces.append(EpisodeTrace(int(initial_states[k]), actions, rewards, policy_id))

    logger.debug(f"{variant.value} run {run_index}: total regret {per.sum():.4f}")
    return RunResult(
        variant=variant.value,
        run_index=int(run_index),
        seed=int(config.base_seed),
        stream_id=stream_id,
        per_episode_regret=per,
        cumulative_regret=np.cumsum(per),
        initial_states=initial_states,
        final_tables=dump_tables(learner),
        optimism_gap=gaps,
        optimism_upper=uppers,
        traces=traces,
    )


def _run_job(job):
    spec, variant, config, run_index, q_star = job
    return run_single(spec, variant, config, run_index, q_star)


def run_experiment(config: ExperimentConfig, spec: Optional[MdpSpec] = None,
                   jobs: int = 1) -> Dict[str, List[RunResult]]:
    """num_runs independent runs per variant, returned in (variant, run index) order"""
    config.validate()
    spec = resolve_spec(config, spec)
    q_star = solve_optimal(spec)
    start_time = datetime.now()

    job_list = [(spec, variant, config, i, q_star) for variant in config.variants for i in range(config.num_runs)]
    logger.info(f"Running {len(config.variants)} variant(s) x {config.num_runs} run(s), K={config.K}, "
                f"jobs={jobs}")
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as executor:
            # map() yields in submission order whatever the completion order
            flat = list(executor.map(_run_job, job_list, chunksize=max(1, len(job_list) // (4 * jobs))))
    else:
        flat = [_run_job(job) for job in job_list]

    results = {variant: [] for variant in config.variants}
    for result in flat:
        results[result.variant].append(result)
    for variant, runs in results.items():
        logger.info(f"{variant}: mean total regret {np.mean([r.total_regret for r in runs]):.4f}")
    logger.info(f"Experiment finished in {datetime.now() - start_time}")
    return results


def _ci(samples: np.ndarray) -> np.ndarray:
    """1.96 * sample std / sqrt(n) along axis 0; a single sample has width 0"""
    n = samples.shape[0]
    if n < 2:
        return np.zeros(samples.shape[1:])
    return CI_Z * samples.std(axis=0, ddof=1) / math.sqrt(n)


def aggregate(runs: Sequence[RunResult]) -> AggregateResult:
    if not runs:
        raise ValueError("cannot aggregate an empty list of runs")
    lengths = {len(r.per_episode_regret) for r in runs}
    if len(lengths) != 1:
        raise ValueError(f"runs have different episode counts: {sorted(lengths)}")
    variants = {r.variant for r in runs}
    if len(variants) != 1:
        raise ValueError(f"runs mix variants: {sorted(variants)}")

    per = np.vstack([r.per_episode_regret for r in runs])
    cum = np.vstack([r.cumulative_regret for r in runs])
    totals = cum[:, -1]
    return AggregateResult(
        variant=runs[0].variant,
        num_runs=len(runs),
        mean_per=per.mean(axis=0),
        ci_half_width=_ci(per),
        mean_cum_regret=cum.mean(axis=0),
        total_regret_mean=float(totals.mean()),
        total_regret_ci=float(_ci(totals)),
    )


def aggregate_by_variant(results: Dict[str, List[RunResult]]) -> Dict[str, AggregateResult]:
    return {variant: aggregate(runs) for variant, runs in results.items()}


def first_converged_episode(mean_per: np.ndarray, threshold: float = DEFAULT_PER_THRESHOLD) -> Optional[int]:
    """1-based episode from which mean PER stays below threshold to the end; None if it never settles"""
    above = np.flatnonzero(~(np.asarray(mean_per) < threshold))
    if len(above) == 0:
        return 1
    if above[-1] == len(mean_per) - 1:
        return None
    return int(above[-1]) + 2


def regret_summary(aggregates: Dict[str, AggregateResult],
                   threshold: float = DEFAULT_PER_THRESHOLD) -> RegretSummary:
    if not aggregates:
        raise ValueError("no results to summarize")
    totals = {v: float(agg.mean_cum_regret[-1]) for v, agg in aggregates.items()}
    return RegretSummary(
        total_regret_mean=totals,
        total_regret_ci={v: agg.total_regret_ci for v, agg in aggregates.items()},
        ordering=sorted(totals, key=lambda v: (totals[v], v)),
        first_converged_episode={v: first_converged_episode(agg.mean_per, threshold)
                                 for v, agg in aggregates.items()},
        threshold=threshold,
    )


def theoretical_bounds(spec: MdpSpec, config: ExperimentConfig) -> Dict[str, float]:
    """Regret-bound scales without constants: sqrt(H^2 T iota') vs sqrt(H^4 S A T iota)"""
    S, A, H = spec.dims
    T = config.K * H
    iota_prime = math.log(config.K / config.p)
    iota = math.log(S * A * T / config.p)
    return {
        Variant.MAXOPT.value: math.sqrt(H ** 2 * T * iota_prime),
        Variant.UCBH.value: math.sqrt(H ** 4 * S * A * T * iota),
    }


def raw_frame(results: Dict[str, List[RunResult]]) -> pd.DataFrame:
    frames = []
    for variant, runs in results.items():
        for run in runs:
            K = len(run.per_episode_regret)
            frames.append(pd.DataFrame({
                'variant': variant,
                'run': run.run_index,
                'episode': np.arange(1, K + 1),
                'per': run.per_episode_regret,
                'cum_regret': run.cumulative_regret,
            }))
    return pd.concat(frames, ignore_index=True)[RAW_COLUMNS]


def aggregate_frame(aggregates: Dict[str, AggregateResult]) -> pd.DataFrame:
    frames = [pd.DataFrame({
        'variant': variant,
        'episode': np.arange(1, agg.K + 1),
        'mean_per': agg.mean_per,
        'ci_half_width': agg.ci_half_width,
        'mean_cum_regret': agg.mean_cum_regret,
    }) for variant, agg in aggregates.items()]
    return pd.concat(frames, ignore_index=True)[AGGREGATE_COLUMNS]


def export_csv(results, path: str, kind: str = "aggregate"):
    """
    Write results as CSV. kind="raw" expects {variant: [RunResult]},
    kind="aggregate" accepts either that or {variant: AggregateResult}.
    Floats are written with shortest round-trip repr.
    """
    if not results:
        raise ValueError("no results to export")
    if kind == "raw":
        frame = raw_frame(results)
    elif kind == "aggregate":
        first = next(iter(results.values()))
        aggregates = results if isinstance(first, AggregateResult) else aggregate_by_variant(results)
        frame = aggregate_frame(aggregates)
    else:
        raise ValueError(f"Unknown CSV kind '{kind}'")
    frame.to_csv(path, index=False, float_format=None, lineterminator='\n')
    logger.info(f"Wrote {len(frame)} {kind} rows to {path}")
    return path


def _read_csv(path: str, columns: List[str]) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path, float_precision='round_trip')
    except pd.errors.EmptyDataError:
        raise ConfigError(f"{path} is empty")
    if list(frame.columns) != columns:
        raise ConfigError(f"{path} has columns {list(frame.columns)}, expected {columns}")
    if frame.empty:
        raise ConfigError(f"{path} has no data rows")
    return frame


def read_aggregate_csv(path: str) -> Dict[str, AggregateResult]:
    frame = _read_csv(path, AGGREGATE_COLUMNS)
    aggregates = {}
    for variant, group in frame.groupby('variant', sort=False):
        group = group.sort_values('episode')
        mean_cum = group['mean_cum_regret'].to_numpy(dtype=float)
        aggregates[str(variant)] = AggregateResult(
            variant=str(variant),
            num_runs=0,  # not recorded in the aggregate schema
            mean_per=group['mean_per'].to_numpy(dtype=float),
            ci_half_width=group['ci_half_width'].to_numpy(dtype=float),
            mean_cum_regret=mean_cum,
            total_regret_mean=float(mean_cum[-1]),
            total_regret_ci=float('nan'),
        )
    return aggregates


def read_raw_csv(path: str) -> Dict[str, List[RunResult]]:
    frame = _read_csv(path, RAW_COLUMNS)
    results = {}
    for (variant, run), group in frame.groupby(['variant', 'run'], sort=False):
        group = group.sort_values('episode')
        results.setdefault(str(variant), []).append(RunResult(
            variant=str(variant),
            run_index=int(run),
            seed=0,
            stream_id=run_stream_id(str(variant), int(run)),
            per_episode_regret=group['per'].to_numpy(dtype=float),
            cumulative_regret=group['cum_regret'].to_numpy(dtype=float),
            initial_states=np.zeros(len(group), dtype=int),
        ))
    return results
