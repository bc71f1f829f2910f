import os

import numpy as np
import pandas as pd
import pytest
import yaml

from pacnav.pacnav_bench import build_parser, main
from pacnav.src.bench.benchmark import (
    derived_seed, generate_environments, summarize_trials, clopper_pearson, calibration_table, read_jsonl,
    cmd_train, cmd_benchmark, cmd_validate_bounds, cmd_replay, TRIALS_FILE, SUMMARY_FILE, INTERVALS_FILE,
    CALIBRATION_FILE, BOUNDS_PLOT_FILE, REPLAY_FILE, SUMMARY_COLUMNS,
)
from pacnav.src.world.world_sim import is_blocked, load_environment
from pacnav.src.inference.navigation_inference import (
    TrialResult, classify_state, run_trial, QUADRATIC, LEARNED_VF, RAW_ACTOR, GOAL, TIMEOUT,
    OBSTACLE_VIOLATION, VELOCITY_VIOLATION, OUTCOMES,
)
from pacnav.src.dynamics.vehicle_dynamics import vehicle_state
from pacnav.src.utils.config_utils import merge_config
from pacnav.src.world.world_sim import Obstacle, Environment

from conftest import make_value_function, FAST_OVERRIDES


def _parse(*argv):
    return build_parser().parse_args(list(argv))


@pytest.fixture
def checkpoint(tmp_path, fast_config_file):
    out = str(tmp_path / "ckpt")
    cmd_train(_parse("train", "--config", fast_config_file, "--out", out, "--max-steps", "0"))
    return out


def test_parser():
    args = _parse("train", "--out", "o", "--max_steps", "5", "--wheelbase", "0.4")
    assert args.command == "train"
    assert args.max_steps == 5 and args.wheelbase == pytest.approx(0.4)
    args = _parse("benchmark", "--out", "o", "--modes", "QUADRATIC", "RAW_ACTOR", "--num-environments", "3")
    assert args.modes == ["QUADRATIC", "RAW_ACTOR"] and args.num_environments == 3
    assert _parse("validate-bounds", "--out", "o").mode == LEARNED_VF
    with pytest.raises(SystemExit):
        _parse("benchmark", "--out", "o", "--modes", "MPPI")
    with pytest.raises(SystemExit):
        _parse("replay", "--out", "o")


def test_derived_seed():
    assert derived_seed(0, 1) == derived_seed(0, 1)
    assert len({derived_seed(0, i) for i in range(100)}) == 100
    assert derived_seed(0, 1, 1) != derived_seed(0, 1, 2)


def test_generate_environments(fast_config):
    environments = generate_environments(fast_config, 0, 3)
    assert len(environments) == 3
    for env in environments:
        assert is_blocked(env)
        heading = np.arctan2(env.goal[1] - env.start[1], env.goal[0] - env.start[0])
        assert env.start[2] == pytest.approx(heading)
        assert env.start[3] == 0.0 and env.start[4] == 0.0
    again = generate_environments(fast_config, 0, 3)
    assert [e.seed for e in again] == [e.seed for e in environments]


def test_classify_state():
    env = Environment((Obstacle(5.0, 5.0, 1.0),), vehicle_state(), vehicle_state(10.0, 0.0))
    config = {"dynamics": {"v_min": -1.0, "v_max": 3.0}, "environment": {"robot_radius": 0.2, "goal_radius": 1.0}}
    assert classify_state(vehicle_state(5.0, 4.0), env, config) == OBSTACLE_VIOLATION
    assert classify_state(vehicle_state(9.5, 0.0, v=3.2), env, config) == VELOCITY_VIOLATION
    assert classify_state(vehicle_state(9.5, 0.0), env, config) == GOAL
    assert classify_state(vehicle_state(2.0, 0.0), env, config) is None


def test_trial_requires_value_function(fast_config):
    env = Environment((), vehicle_state(), vehicle_state(10.0, 0.0))
    with pytest.raises(ValueError):
        run_trial(env, LEARNED_VF, None, fast_config, 0)
    with pytest.raises(ValueError):
        run_trial(env, "MPPI", None, fast_config, 0)


def test_raw_actor_trial(fast_config, config_info):
    env = Environment((), vehicle_state(2.0, 2.0), vehicle_state(20.0, 20.0))
    trial = run_trial(env, RAW_ACTOR, make_value_function(config_info), fast_config, 3, record_states=True)
    assert trial.outcome in OUTCOMES
    assert trial.sim_time == pytest.approx(0.02 * (len(trial.states) - 1))
    assert trial.intervals == []
    assert "states" not in trial.to_dict()


def test_trial_outcome_at_goal(zero_noise_config):
    env = Environment((), vehicle_state(5.0, 5.0), vehicle_state(5.2, 5.0))
    trial = run_trial(env, QUADRATIC, None, zero_noise_config, 0)
    assert trial.outcome == GOAL
    assert trial.sim_time == 0.0


def test_quadratic_trial_times_out(zero_noise_config):
    env = Environment((), vehicle_state(2.0, 2.0), vehicle_state(20.0, 20.0))
    trial = run_trial(env, QUADRATIC, None, zero_noise_config, 1)
    assert trial.outcome == TIMEOUT
    assert trial.sim_time == pytest.approx(0.4)
    assert len(trial.intervals) == 2
    assert len(trial.timing["replan_wall_times"]) == 2


def test_summarize_trials():
    rows = [
        TrialResult(1, "h", QUADRATIC, 0, "c", GOAL, 3.0,
                    intervals=[{"jplus": 2.0, "mc_cost": 1.0}, {"jplus": 1.0, "mc_cost": 1.5}],
                    timing={"replan_wall_times": [0.1, 0.3]}).to_dict(),
        TrialResult(2, "h", QUADRATIC, 0, "c", OBSTACLE_VIOLATION, 1.0).to_dict(),
        TrialResult(1, "h", RAW_ACTOR, 0, "c", TIMEOUT, 60.0).to_dict(),
    ]
    summary = summarize_trials(rows, [QUADRATIC, RAW_ACTOR])
    assert list(summary.columns) == SUMMARY_COLUMNS
    quad = summary[summary["mode"] == QUADRATIC].iloc[0]
    assert quad["num_trials"] == 2
    assert quad["rate_GOAL"] == pytest.approx(0.5)
    assert quad["count_OBSTACLE_VIOLATION"] == 1
    assert quad["mean_replan_wall_time"] == pytest.approx(0.2)
    assert quad["cost_calibration_fraction"] == pytest.approx(0.5)
    raw = summary[summary["mode"] == RAW_ACTOR].iloc[0]
    assert raw["rate_TIMEOUT"] == 1.0
    assert np.isnan(raw["mean_replan_wall_time"])


def test_clopper_pearson():
    low, high = clopper_pearson(20, 20)
    assert high == 1.0 and 0.8 < low < 0.9
    low, high = clopper_pearson(0, 20)
    assert low == 0.0 and 0.1 < high < 0.2
    assert all(np.isnan(clopper_pearson(0, 0)))


def test_calibration_table():
    intervals = [{"jplus": 2.0, "cplus": 0.1, "mc_cost": 1.0, "mc_violation": 0.0},
                 {"jplus": 2.0, "cplus": 0.1, "mc_cost": 3.0, "mc_violation": 0.0},
                 {"jplus": 2.0, "cplus": 0.3, "mc_cost": 1.0, "mc_violation": 0.5}]
    table = calibration_table(intervals).set_index("metric")
    assert table.loc["cost", "num_within_bound"] == 2
    assert table.loc["cost", "fraction"] == pytest.approx(2 / 3)
    assert table.loc["constraint", "num_within_bound"] == 2
    assert table.loc["mean_cplus_zero_violation", "fraction"] == pytest.approx(0.1)


def test_benchmark_needs_checkpoint(tmp_path, fast_config_file):
    with pytest.raises(FileNotFoundError):
        cmd_benchmark(_parse("benchmark", "--config", fast_config_file, "--out", str(tmp_path),
                             "--modes", LEARNED_VF))


def test_benchmark_and_replay(tmp_path, fast_config_file, checkpoint):
    out = str(tmp_path / "bench")
    summary = main(["benchmark", "--config", fast_config_file, "--out", out, "--checkpoint", checkpoint,
                    "--seed", "4"])
    assert list(summary["mode"]) == [QUADRATIC, LEARNED_VF, RAW_ACTOR]
    assert (summary["num_trials"] == 2).all()
    assert os.path.isfile(os.path.join(out, "environments", "env_0000.json"))
    assert os.path.isfile(os.path.join(out, "environments", "env_0001.json"))
    pd.testing.assert_frame_equal(pd.read_csv(os.path.join(out, SUMMARY_FILE)), summary, check_dtype=False)

    rows = read_jsonl(os.path.join(out, TRIALS_FILE))
    assert len(rows) == 6
    for row in rows:
        assert row["outcome"] in OUTCOMES
        assert row["sim_time"] <= 0.4 + 1e-9
    env_path = os.path.join(out, "environments", "env_0000.json")
    assert rows[0]["env_hash"] == rows[1]["env_hash"] == rows[2]["env_hash"]
    assert rows[0]["env_seed"] == load_environment(env_path).seed

    replay_out = str(tmp_path / "replay")
    result, path = cmd_replay(_parse("replay", "--config", fast_config_file, "--out", replay_out,
                                     "--trial", os.path.join(out, TRIALS_FILE), "--index", "1",
                                     "--environment", env_path, "--checkpoint", checkpoint))
    assert result.outcome == rows[1]["outcome"]
    assert result.sim_time == pytest.approx(rows[1]["sim_time"])
    table = pd.read_csv(path)
    assert path.endswith(REPLAY_FILE)
    assert list(table.columns[:6]) == ["t", "x", "y", "theta", "v", "steer"]
    assert table.shape[1] == 6 + 64
    assert len(table) == int(round(rows[1]["sim_time"] / 0.02))
    if len(table):
        assert table["t"].iloc[0] == pytest.approx(0.02)

    with pytest.raises(ValueError):
        cmd_replay(_parse("replay", "--config", fast_config_file, "--out", replay_out,
                          "--trial", os.path.join(out, TRIALS_FILE), "--index", "0",
                          "--environment", os.path.join(out, "environments", "env_0001.json")))
    with pytest.raises(ValueError):
        cmd_replay(_parse("replay", "--config", fast_config_file, "--out", replay_out,
                          "--trial", os.path.join(out, TRIALS_FILE), "--index", "0",
                          "--environment", env_path, "--seed", "12345"))
    with pytest.raises(ValueError):
        cmd_replay(_parse("replay", "--out", replay_out, "--trial", os.path.join(out, TRIALS_FILE),
                          "--index", "0", "--environment", env_path))


def test_validate_bounds(tmp_path, fast_config_file):
    out = str(tmp_path / "calibration")
    table = cmd_validate_bounds(_parse("validate-bounds", "--config", fast_config_file, "--out", out,
                                       "--mode", QUADRATIC))
    assert set(table["metric"]) == {"cost", "constraint", "mean_cplus_zero_violation"}
    intervals = read_jsonl(os.path.join(out, INTERVALS_FILE))
    for record in intervals:
        assert record["mc_cost"] is not None
        assert 0.0 <= record["cplus"] <= 1.0
    plot = pd.read_csv(os.path.join(out, BOUNDS_PLOT_FILE), sep=" ")
    assert list(plot.columns) == ["interval", "jplus", "mc_cost", "cplus", "mc_violation"]
    assert len(plot) == len(intervals)
    assert os.path.isfile(os.path.join(out, CALIBRATION_FILE))


def test_output_folder_and_message_from_config(tmp_path, capsys):
    path = tmp_path / "config.yml"
    overrides = merge_config(FAST_OVERRIDES, {"output": {"out_dir": str(tmp_path / "results")},
                                              "log": {"message": "calibration smoke run"}})
    path.write_text(yaml.dump(overrides))
    cmd_validate_bounds(_parse("validate-bounds", "--config", str(path), "--mode", QUADRATIC))
    assert os.path.isfile(os.path.join(str(tmp_path), "results", "validate-bounds", CALIBRATION_FILE))
    assert "*** calibration smoke run" in capsys.readouterr().out
