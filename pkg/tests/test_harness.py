import math

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from envs import gridworld_1d
from harness import (AGGREGATE_COLUMNS, RAW_COLUMNS, ConfigError, ExperimentConfig, RunResult, aggregate,
                     aggregate_by_variant, export_csv, first_converged_episode, read_aggregate_csv, read_raw_csv,
                     regret_summary, resolve_spec, run_experiment, run_single, run_stream_id, theoretical_bounds)


def small_config(**overrides):
    settings = dict(env="gridworld3", K=60, num_runs=3, p=0.05, c=0.1, base_seed=7)
    settings.update(overrides)
    return ExperimentConfig(**settings).validate()


def fake_run(variant, per, run_index=0):
    per = np.asarray(per, dtype=float)
    return RunResult(variant=variant, run_index=run_index, seed=0, stream_id=0, per_episode_regret=per,
                     cumulative_regret=np.cumsum(per), initial_states=np.zeros(len(per), dtype=int))


def test_gridworld_config_loads(gridworld_config):
    assert gridworld_config.K == 500
    assert gridworld_config.num_runs == 50
    assert gridworld_config.p == 0.05
    assert gridworld_config.c == 0.1
    assert gridworld_config.variants == ["MAXOPT", "MAXOPT_NO_A2", "UCBH"]


@pytest.mark.parametrize("field,value", [("K", 0), ("num_runs", 0), ("p", 0.0), ("p", 1.0), ("c", -0.1),
                                         ("variants", ["SARSA"]), ("tie_rule", "coin"), ("variants", []),
                                         ("p", "0.05"), ("c", None), ("K", 2.5), ("K", True), ("base_seed", "7"),
                                         ("variants", "UCBH"), ("tie_rule", ["coin"]), ("special", [0]),
                                         ("special", [0, "1"]), ("use_iota_prime", "yes"), ("env", 3),
                                         ("initial_dist_override", {"x1": 1})])
def test_invalid_configs(field, value):
    with pytest.raises(ConfigError):
        small_config(**{field: value})


def test_unknown_config_field():
    with pytest.raises(ConfigError, match="episodes"):
        ExperimentConfig.from_dict({"episodes": 10})


def test_config_must_be_an_object():
    with pytest.raises(ConfigError, match="JSON object"):
        ExperimentConfig.from_dict([1, 2])


def test_initial_dist_overrides():
    assert_array_equal(resolve_spec(small_config(initial_dist_override="x1")).initial_dist, [1.0, 0.0, 0.0])
    assert_array_equal(resolve_spec(small_config(initial_dist_override=[0, 0.5, 0.5])).initial_dist,
                       [0.0, 0.5, 0.5])
    with pytest.raises(ConfigError):
        resolve_spec(small_config(initial_dist_override="rightmost"))


def test_maxopt_from_x1_pays_exactly_four_episodes(gridworld_q_star):
    config = small_config(K=100, initial_dist_override="x1")
    spec = resolve_spec(config)
    result = run_single(spec, "MAXOPT", config, 0, gridworld_q_star)
    # Q1(x1, a1) stays >= Q1*(x1, a2) = 2 for four visits, then the greedy policy is optimal
    assert_array_equal(result.per_episode_regret[:4], 1.0)
    assert_array_equal(result.per_episode_regret[4:], 0.0)
    assert result.total_regret == 4.0


def test_maxopt_has_no_regret_away_from_x1(gridworld_q_star):
    config = small_config(K=200)
    spec = resolve_spec(config)
    for run_index in range(5):
        result = run_single(spec, "MAXOPT", config, run_index, gridworld_q_star)
        off_x1 = result.initial_states != 0
        assert np.all(result.per_episode_regret[off_x1] == 0.0)


def test_ucbh_first_episode_regret_is_full_value(gridworld, gridworld_q_star):
    config = small_config(K=5)
    for run_index in range(4):
        result = run_single(resolve_spec(config), "UCBH", config, run_index, gridworld_q_star)
        x = result.initial_states[0]
        assert result.per_episode_regret[0] == gridworld_q_star.V[0, x]


def test_run_single_is_reproducible():
    config = small_config(K=80)
    spec = resolve_spec(config)
    first = run_single(spec, "MAXOPT_NO_A2", config, 2)
    second = run_single(spec, "MAXOPT_NO_A2", config, 2)
    assert_array_equal(first.per_episode_regret, second.per_episode_regret)
    assert_array_equal(first.initial_states, second.initial_states)
    assert_array_equal(first.final_tables.Q, second.final_tables.Q)


def test_run_results_are_consistent():
    config = small_config(K=120)
    results = run_experiment(config)
    assert list(results) == config.variants
    for variant, runs in results.items():
        assert [r.run_index for r in runs] == list(range(config.num_runs))
        for run in runs:
            assert len(run.per_episode_regret) == config.K
            assert np.all(run.per_episode_regret >= -1e-12)
            assert np.all(np.diff(run.cumulative_regret) >= -1e-12)
            assert run.stream_id == run_stream_id(variant, run.run_index)


def test_traces_are_recorded_on_request():
    config = small_config(K=10, record_traces=True)
    result = run_single(resolve_spec(config), "UCBH", config, 0)
    assert len(result.traces) == 10
    trace = result.traces[0]
    assert trace.initial_state == result.initial_states[0]
    assert len(trace.actions) == len(trace.rewards) == 3
    assert trace.policy_id == 0


@pytest.mark.parametrize("tie_rule", ["smallest_index", "seeded_random"])
@pytest.mark.parametrize("variant", ["UCBH", "MAXOPT_NO_A2"])
def test_scored_policy_is_the_executed_policy(gridworld_q_star, variant, tie_rule):
    # Gridworld moves are deterministic, so an episode's return is the snapshot's value at its start
    config = small_config(K=40, record_traces=True, tie_rule=tie_rule)
    spec = resolve_spec(config)
    for run_index in range(20):
        result = run_single(spec, variant, config, run_index, gridworld_q_star)
        for k, trace in enumerate(result.traces):
            earned = sum(trace.rewards)
            assert result.per_episode_regret[k] == pytest.approx(gridworld_q_star.V[0, trace.initial_state] - earned)


def test_adding_a_variant_keeps_other_streams():
    only_ucbh = run_experiment(small_config(variants=["UCBH"]))
    both = run_experiment(small_config(variants=["MAXOPT", "UCBH"]))
    for a, b in zip(only_ucbh["UCBH"], both["UCBH"]):
        assert_array_equal(a.per_episode_regret, b.per_episode_regret)


def test_parallel_runs_match_serial():
    config = small_config(K=40, num_runs=4)
    serial = run_experiment(config, jobs=1)
    parallel = run_experiment(config, jobs=2)
    for variant in config.variants:
        for a, b in zip(serial[variant], parallel[variant]):
            assert_array_equal(a.per_episode_regret, b.per_episode_regret)


def test_aggregate_two_runs():
    agg = aggregate([fake_run("UCBH", [0.0, 2.0]), fake_run("UCBH", [2.0, 0.0], 1)])
    assert_array_equal(agg.mean_per, [1.0, 1.0])
    assert agg.ci_half_width == pytest.approx([1.96, 1.96])
    assert agg.total_regret_mean == 2.0
    assert agg.total_regret_ci == 0.0


def test_aggregate_identical_and_single_runs():
    same = aggregate([fake_run("UCBH", [0.5, 0.25]), fake_run("UCBH", [0.5, 0.25], 1)])
    assert_array_equal(same.ci_half_width, 0.0)
    single = aggregate([fake_run("UCBH", [0.5, 0.25])])
    assert_array_equal(single.mean_per, [0.5, 0.25])
    assert_array_equal(single.ci_half_width, 0.0)
    assert_array_equal(single.mean_cum_regret, [0.5, 0.75])


def test_aggregate_errors():
    with pytest.raises(ValueError):
        aggregate([])
    with pytest.raises(ValueError):
        aggregate([fake_run("UCBH", [0.0]), fake_run("UCBH", [0.0, 1.0])])


def test_mean_lies_between_run_extremes():
    results = run_experiment(small_config(K=50, num_runs=4, variants=["UCBH"]))
    per = np.vstack([r.per_episode_regret for r in results["UCBH"]])
    agg = aggregate(results["UCBH"])
    assert np.all(agg.mean_per >= per.min(axis=0) - 1e-12)
    assert np.all(agg.mean_per <= per.max(axis=0) + 1e-12)
    assert np.all(agg.ci_half_width >= 0.0)


def test_first_converged_episode():
    assert first_converged_episode(np.zeros(10)) == 1
    assert first_converged_episode(np.array([1.0, 0.5, 0.0, 0.06, 0.01, 0.0])) == 5
    assert first_converged_episode(np.array([0.0, 0.0, 1.0])) is None


def test_regret_summary():
    aggregates = {
        "UCBH": aggregate([fake_run("UCBH", [1.0, 1.0, 0.5])]),
        "MAXOPT": aggregate([fake_run("MAXOPT", [0.0, 0.0, 0.0])]),
        "MAXOPT_NO_A2": aggregate([fake_run("MAXOPT_NO_A2", [1.0, 0.0, 0.0])]),
    }
    summary = regret_summary(aggregates)
    assert summary.ordering == ["MAXOPT", "MAXOPT_NO_A2", "UCBH"]
    assert summary.total_regret_mean["MAXOPT"] == 0.0
    assert summary.total_regret_mean["UCBH"] == 2.5
    assert summary.first_converged_episode == {"UCBH": None, "MAXOPT": 1, "MAXOPT_NO_A2": 2}

    single = regret_summary({"UCBH": aggregates["UCBH"]})
    assert single.ordering == ["UCBH"]


def test_theoretical_bounds(gridworld_config, gridworld):
    bounds = theoretical_bounds(gridworld, gridworld_config)
    T = 500 * 3
    assert bounds["MAXOPT"] == pytest.approx(math.sqrt(9 * T * math.log(500 / 0.05)))
    assert bounds["UCBH"] == pytest.approx(math.sqrt(81 * 6 * T * math.log(6 * T / 0.05)))
    assert bounds["MAXOPT"] < bounds["UCBH"]


def test_raw_csv_roundtrip(tmp_path):
    results = run_experiment(small_config(K=30, num_runs=2))
    path = tmp_path / "raw.csv"
    export_csv(results, str(path), kind="raw")

    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(RAW_COLUMNS)
    assert len(lines) == 1 + 3 * 2 * 30

    loaded = read_raw_csv(str(path))
    for variant, runs in results.items():
        for original, reread in zip(runs, loaded[variant]):
            assert_array_equal(original.per_episode_regret, reread.per_episode_regret)
            assert_array_equal(original.cumulative_regret, reread.cumulative_regret)


def test_aggregate_csv_roundtrip(tmp_path):
    results = run_experiment(small_config(K=25, num_runs=3))
    aggregates = aggregate_by_variant(results)
    path = tmp_path / "agg.csv"
    export_csv(results, str(path), kind="aggregate")

    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(AGGREGATE_COLUMNS)
    assert len(lines) == 1 + 3 * 25

    loaded = read_aggregate_csv(str(path))
    assert list(loaded) == list(aggregates)
    for variant, agg in aggregates.items():
        assert_array_equal(loaded[variant].mean_per, agg.mean_per)
        assert_array_equal(loaded[variant].ci_half_width, agg.ci_half_width)
        assert_array_equal(loaded[variant].mean_cum_regret, agg.mean_cum_regret)


def test_read_empty_csv(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text("")
    with pytest.raises(ConfigError):
        read_aggregate_csv(str(path))
    path.write_text(",".join(AGGREGATE_COLUMNS) + "\n")
    with pytest.raises(ConfigError):
        read_aggregate_csv(str(path))


def test_export_to_unwritable_path(tmp_path):
    results = run_experiment(small_config(K=5, num_runs=1, variants=["UCBH"]))
    with pytest.raises(OSError):
        export_csv(results, str(tmp_path / "missing_dir" / "out.csv"), kind="raw")


def test_maxopt_moves_only_the_special_entry(gridworld_q_star):
    config = small_config(K=150, num_runs=2, variants=["MAXOPT"])
    results = run_experiment(config, gridworld_1d())
    for run in results["MAXOPT"]:
        Q = run.final_tables.Q
        mask = np.ones_like(Q, dtype=bool)
        mask[0, 0, 0] = False
        assert_array_equal(Q[mask], gridworld_q_star.Q[mask])
        assert Q[0, 0, 0] < 2.0
        assert_array_equal(run.final_tables.V[1:], gridworld_q_star.V[1:])
        # Optimism holds at every episode
        assert np.all(run.optimism_gap >= -1e-12)
        assert np.all(run.optimism_gap <= run.optimism_upper + 1e-12)
