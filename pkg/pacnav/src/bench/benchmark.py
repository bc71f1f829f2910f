# Copyright 2026 PACnav contributors
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#     http://www.apache.org/licenses/LICENSE-2.0
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

##
# \file       benchmark.py
# \brief      contains the experiment commands behind pacnav_bench.py: value function training, benchmark
#               sweeps over the terminal cost modes, bound calibration studies and trial replay.
#               Output files:
#                   trials.jsonl      one JSON object per trial, wall-clock data under "timing"
#                   summary.csv       per-mode outcome counts and rates
#                   intervals.jsonl   one JSON object per planning interval of the calibration runs
#                   calibration.csv   fraction of intervals with Monte Carlo estimate <= bound
#                   bounds_plot.txt   whitespace separated columns: interval jplus mc_cost cplus mc_violation
#                   replay.csv        states and scans of a replayed trial at the control rate
#
# \author     PACnav contributors
# \date       2026
#

import os
import json
import logging
from concurrent.futures import ProcessPoolExecutor

import yaml
import numpy as np
import pandas as pd
import torch
from scipy.stats import binomtest

from pacnav.src.world.world_sim import (
    Environment, sample_environment, is_blocked, point_toward_goal, save_environment, load_environment,
    environment_hash, raycast_scan
)
from pacnav.src.train.td3_training import run_training, load_value_function
from pacnav.src.inference.navigation_inference import (
    run_trial, MODES, MODES_WITH_CHECKPOINT, OUTCOMES, LEARNED_VF
)
from pacnav.src.control.pac_nmpc import execution_substeps
from pacnav.src.utils.config_utils import load_config, config_hash, num_workers

logger = logging.getLogger(__name__)

TRIALS_FILE = "trials.jsonl"
SUMMARY_FILE = "summary.csv"
INTERVALS_FILE = "intervals.jsonl"
CALIBRATION_FILE = "calibration.csv"
BOUNDS_PLOT_FILE = "bounds_plot.txt"
REPLAY_FILE = "replay.csv"
SUMMARY_COLUMNS = ["mode", "num_trials"] + \
    ["count_" + o for o in OUTCOMES] + ["rate_" + o for o in OUTCOMES] + \
    ["mean_replan_wall_time", "cost_calibration_fraction"]


def derived_seed(*entropy):
    """Deterministic 32-bit seed from a tuple of integers."""
    return int(np.random.SeedSequence([int(e) for e in entropy]).generate_state(1)[0])


def _config_from_args(args):
    config_info = load_config(getattr(args, 'config_file', None))
    print("*** Config")
    print(yaml.dump(config_info))
    torch.set_num_threads(int(config_info['device'].get('torch_threads', 1)))
    print("*** {}".format(config_info['log']['message']))
    return config_info


def _out_dir(args, config_info):
    if getattr(args, 'out', None):
        return args.out
    return os.path.join(config_info['output']['out_dir'], getattr(args, 'command', None) or "run")


def _seed(args, config_info):
    return int(args.seed if getattr(args, 'seed', None) is not None else config_info['benchmark']['seed'])


def _write_jsonl(path, rows):
    with open(path, "w") as f:
        for row in rows:
            f.write(json.dumps(row, sort_keys=True) + "\n")


def read_jsonl(path):
    if not os.path.isfile(path):
        raise FileNotFoundError('Expected JSON lines file: {} not found'.format(path))
    with open(path) as f:
        return [json.loads(line) for line in f if line.strip()]


def generate_environments(config_info, seed, num_environments, blocked_only=True):
    """
    Seeded benchmark environments. Candidate i is sampled from derived_seed(seed, i); unblocked candidates are
    discarded when `blocked_only` and the start heading is pointed at the goal. Counts are post-discard.
    """
    max_attempts = int(config_info['benchmark']['max_generation_attempts'])
    robot_radius = float(config_info['environment']['robot_radius'])
    environments = []
    for index in range(max_attempts):
        if len(environments) >= num_environments:
            break
        env_seed = derived_seed(seed, index)
        env = sample_environment(np.random.default_rng(env_seed), config_info['environment'], seed=env_seed)
        if blocked_only and not is_blocked(env, robot_radius):
            continue
        environments.append(point_toward_goal(env))
    if len(environments) < num_environments:
        logger.warning("Only %d of %d environments generated in %d attempts", len(environments),
                       num_environments, max_attempts)
    return environments


def _trial_job(job):
    env_dict, mode, checkpoint, config_info, trial_seed = job
    torch.set_num_threads(int(config_info['device'].get('torch_threads', 1)))
    vf = load_value_function(checkpoint, config_info) if mode in MODES_WITH_CHECKPOINT else None
    return run_trial(Environment.from_dict(env_dict), mode, vf, config_info, trial_seed).to_dict()


def run_trials(jobs, config_info):
    workers = num_workers(config_info)
    if workers == 1 or len(jobs) <= 1:
        return [_trial_job(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(_trial_job, jobs))


def summarize_trials(rows, modes=MODES):
    """
    Per-mode outcome counts and rates from trial rows.
    The cost calibration fraction counts intervals with mc_cost <= jplus.
    """
    summary = []
    df = pd.DataFrame(rows, columns=["mode", "outcome", "intervals", "timing"])
    for mode in modes:
        trials = df[df["mode"] == mode]
        n = len(trials)
        entry = {"mode": mode, "num_trials": n}
        for outcome in OUTCOMES:
            count = int((trials["outcome"] == outcome).sum())
            entry["count_" + outcome] = count
            entry["rate_" + outcome] = count / n if n else 0.0
        times = [t for timing in trials["timing"] for t in (timing or {}).get("replan_wall_times", [])]
        entry["mean_replan_wall_time"] = float(np.mean(times)) if times else float("nan")
        intervals = [r for records in trials["intervals"] for r in records if r.get("mc_cost") is not None]
        entry["cost_calibration_fraction"] = \
            float(np.mean([r["mc_cost"] <= r["jplus"] for r in intervals])) if intervals else float("nan")
        summary.append(entry)
    return pd.DataFrame(summary, columns=SUMMARY_COLUMNS)


def cmd_train(args):
    """
    Train the value function into args.out (or the configured output folder). Returns the checkpoint directory.
    """
    config_info = _config_from_args(args)
    out_dir = _out_dir(args, config_info)
    run_training(config_info, out_dir, max_steps=args.max_steps, seed=args.seed, wheelbase=args.wheelbase)
    return out_dir


def cmd_benchmark(args):
    """
    Run every mode on the same seeded blocked environments. Returns the summary DataFrame.
    Raises:
        FileNotFoundError: a mode needs the value function and no checkpoint was given
    """
    config_info = _config_from_args(args)
    out_dir = _out_dir(args, config_info)
    bench = config_info['benchmark']
    seed = _seed(args, config_info)
    modes = list(getattr(args, 'modes', None) or bench['modes'])
    num_environments = int(args.num_environments if getattr(args, 'num_environments', None) is not None
                           else bench['num_environments'])
    checkpoint = getattr(args, 'checkpoint', None)
    for mode in modes:
        if mode not in MODES:
            raise ValueError("Unrecognized mode: {}. Expected one of {}".format(mode, MODES))
        if mode in MODES_WITH_CHECKPOINT and (checkpoint is None or not os.path.isdir(checkpoint)):
            raise FileNotFoundError('Mode {} requires a checkpoint directory, got: {}'.format(mode, checkpoint))

    env_dir = os.path.join(out_dir, "environments")
    os.makedirs(env_dir, exist_ok=True)
    print("*** Generating {} blocked environments with seed {}".format(num_environments, seed))
    environments = generate_environments(config_info, seed, num_environments)
    for index, env in enumerate(environments):
        save_environment(env, os.path.join(env_dir, "env_{:04d}.json".format(index)))

    jobs = [(env.to_dict(), mode, checkpoint, config_info, derived_seed(seed, index, 1))
            for index, env in enumerate(environments) for mode in modes]
    print("*** Running {} trials on {} workers".format(len(jobs), num_workers(config_info)))
    rows = run_trials(jobs, config_info)
    _write_jsonl(os.path.join(out_dir, TRIALS_FILE), rows)

    summary = summarize_trials(rows, modes)
    summary.to_csv(os.path.join(out_dir, SUMMARY_FILE), index=False)
    print(summary.to_string(index=False))
    print("Done!")
    return summary


def clopper_pearson(successes, trials, confidence=0.95):
    if trials == 0:
        return float("nan"), float("nan")
    ci = binomtest(int(successes), int(trials)).proportion_ci(confidence_level=confidence, method="exact")
    return float(ci.low), float(ci.high)


def calibration_table(intervals):
    """Fractions of intervals with Monte Carlo estimate <= bound, with 95% Clopper-Pearson intervals."""
    df = pd.DataFrame(intervals, columns=["jplus", "cplus", "mc_cost", "mc_violation"])
    rows = []
    for metric, mc, bound in (("cost", "mc_cost", "jplus"), ("constraint", "mc_violation", "cplus")):
        n = len(df)
        k = int((df[mc] <= df[bound]).sum())
        low, high = clopper_pearson(k, n)
        rows.append({"metric": metric, "num_intervals": n, "num_within_bound": k,
                     "fraction": k / n if n else float("nan"), "ci_low": low, "ci_high": high})
    zero_violation = df[df["mc_violation"] == 0]
    mean_cplus = float(zero_violation["cplus"].mean()) if len(zero_violation) else float("nan")
    rows.append({"metric": "mean_cplus_zero_violation", "num_intervals": len(zero_violation),
                 "num_within_bound": None, "fraction": mean_cplus, "ci_low": None, "ci_high": None})
    return pd.DataFrame(rows)


def cmd_validate_bounds(args):
    """
    Closed-loop episodes on seeded environments; every planning interval records its bounds and fresh
    Monte Carlo estimates. Returns the calibration DataFrame.
    """
    config_info = _config_from_args(args)
    out_dir = _out_dir(args, config_info)
    config_info['pac']['monte_carlo_validation'] = True
    seed = _seed(args, config_info)
    mode = getattr(args, 'mode', None) or LEARNED_VF
    checkpoint = getattr(args, 'checkpoint', None)
    vf = None
    if mode in MODES_WITH_CHECKPOINT:
        if checkpoint is None:
            raise FileNotFoundError('Mode {} requires a checkpoint directory'.format(mode))
        vf = load_value_function(checkpoint, config_info)
    num_environments = int(config_info['benchmark']['calibration_environments'])
    os.makedirs(out_dir, exist_ok=True)

    intervals = []
    for index, env in enumerate(generate_environments(config_info, seed, num_environments, blocked_only=False)):
        print("*** Calibration episode {} / {}".format(index + 1, num_environments))
        trial = run_trial(env, mode, vf, config_info, derived_seed(seed, index, 2))
        for record in trial.intervals:
            intervals.append(dict(record, episode=index, env_seed=env.seed))

    _write_jsonl(os.path.join(out_dir, INTERVALS_FILE), intervals)
    plot = pd.DataFrame(intervals, columns=["jplus", "mc_cost", "cplus", "mc_violation"])
    plot.insert(0, "interval", np.arange(len(plot)))
    plot.to_csv(os.path.join(out_dir, BOUNDS_PLOT_FILE), sep=" ", index=False)
    table = calibration_table(intervals)
    table.to_csv(os.path.join(out_dir, CALIBRATION_FILE), index=False)
    print(table.to_string(index=False))
    print("Done!")
    return table


def cmd_replay(args):
    """
    Re-execute one logged trial and dump its states and scans at the control rate.
    Raises:
        ValueError: environment hash, config hash or seed differ from the logged trial
    """
    config_info = _config_from_args(args)
    out_dir = _out_dir(args, config_info)
    rows = read_jsonl(args.trial)
    index = int(getattr(args, 'index', 0) or 0)
    if not 0 <= index < len(rows):
        raise ValueError("Trial index {} out of range, {} contains {} trials".format(index, args.trial, len(rows)))
    trial = rows[index]
    env = load_environment(args.environment)

    if environment_hash(env) != trial["env_hash"]:
        raise ValueError("Environment hash mismatch: {} has {}, trial logged {}".format(
            args.environment, environment_hash(env), trial["env_hash"]))
    if config_hash(config_info) != trial["config_hash"]:
        raise ValueError("Config hash mismatch: {} vs logged {}".format(config_hash(config_info), trial["config_hash"]))
    seed = trial["seed"] if getattr(args, 'seed', None) is None else int(args.seed)
    if seed != trial["seed"]:
        raise ValueError("Seed mismatch: {} vs logged {}".format(seed, trial["seed"]))

    vf = None
    if trial["mode"] in MODES_WITH_CHECKPOINT:
        vf = load_value_function(args.checkpoint, config_info)
    result = run_trial(env, trial["mode"], vf, config_info, seed, record_states=True)
    if result.outcome != trial["outcome"]:
        logger.warning("Replay outcome %s differs from logged outcome %s", result.outcome, trial["outcome"])

    lidar = config_info['lidar']
    h = float(config_info['dynamics']['dt']) / execution_substeps(config_info)
    states = result.states[1:]
    scans = raycast_scan(env, states, int(lidar['num_beams']), float(lidar['range_min']), float(lidar['range_max']))
    table = pd.DataFrame(states, columns=["x", "y", "theta", "v", "steer"])
    table.insert(0, "t", np.round(h * np.arange(1, len(states) + 1), 10))
    table = pd.concat([table, pd.DataFrame(scans, columns=["scan_{}".format(k) for k in range(scans.shape[-1])])],
                      axis=1)
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, REPLAY_FILE)
    table.to_csv(path, index=False)
    print("Replayed {} trial: {} after {:.2f} s, {} rows written to {}".format(
        trial["mode"], result.outcome, result.sim_time, len(table), path))
    return result, path
