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
# \file       navigation_inference.py
# \brief      Script to run one closed-loop navigation trial in a given environment, either with the
#               sampling-based controller (QUADRATIC or LEARNED_VF terminal cost) or with the raw TD3 actor.
#               Example config file required by the main function is shown in
#               pacnav/config/pacnav_config.yml
#
# \author     PACnav contributors
# \date       2026
#

import sys
import json
import logging
import argparse
from dataclasses import dataclass, field
from typing import List, Optional

import yaml
import numpy as np
import torch

from pacnav.src.dynamics.vehicle_dynamics import V, NoiseModel, step_stochastic
from pacnav.src.world.world_sim import (
    Environment, environment_hash, load_environment, raycast_scan, check_true_collision, goal_reached
)
from pacnav.src.control.pac_nmpc import (
    ControllerState, receding_horizon_step, execution_substeps, QUADRATIC, LEARNED_VF
)
from pacnav.src.train.td3_training import load_value_function
from pacnav.src.utils.config_utils import load_config, config_hash

logger = logging.getLogger(__name__)

RAW_ACTOR = "RAW_ACTOR"
MODES = (QUADRATIC, LEARNED_VF, RAW_ACTOR)
MODES_WITH_CHECKPOINT = (LEARNED_VF, RAW_ACTOR)

GOAL = "GOAL"
TIMEOUT = "TIMEOUT"
OBSTACLE_VIOLATION = "OBSTACLE_VIOLATION"
VELOCITY_VIOLATION = "VELOCITY_VIOLATION"
OUTCOMES = (GOAL, TIMEOUT, OBSTACLE_VIOLATION, VELOCITY_VIOLATION)


@dataclass
class TrialResult:
    env_seed: Optional[int]
    env_hash: str
    mode: str
    seed: int
    config_hash: str
    outcome: str
    sim_time: float
    intervals: List[dict] = field(default_factory=list)
    timing: dict = field(default_factory=dict)
    states: Optional[np.ndarray] = None

    def to_dict(self):
        return {"env_seed": self.env_seed, "env_hash": self.env_hash, "mode": self.mode, "seed": self.seed,
                "config_hash": self.config_hash, "outcome": self.outcome, "sim_time": self.sim_time,
                "intervals": self.intervals, "timing": self.timing}


def classify_state(state, env: Environment, config_info) -> Optional[str]:
    """Outcome reached at `state`, or None. Violations take precedence over reaching the goal."""
    dyn, env_config = config_info['dynamics'], config_info['environment']
    if check_true_collision(state, env, float(env_config['robot_radius'])):
        return OBSTACLE_VIOLATION
    if not float(dyn['v_min']) <= state[V] <= float(dyn['v_max']):
        return VELOCITY_VIOLATION
    if goal_reached(state, env.goal, float(env_config['goal_radius'])):
        return GOAL
    return None


def _first_outcome(states, env, config_info):
    for k, state in enumerate(states):
        outcome = classify_state(state, env, config_info)
        if outcome is not None:
            return k, outcome
    return None, None


def run_trial(env: Environment, mode, vf, config_info, seed, record_states=False) -> TrialResult:
    """
    Closed-loop trial from env.start until an outcome or the timeout (benchmark.timeout simulated seconds).
    The simulation advances at the control rate; every executed state is checked against the obstacle
    circles, the velocity bounds and the goal region.
    Args:
        env: Environment
        mode: QUADRATIC, LEARNED_VF or RAW_ACTOR
        vf: ValueFunction or None (QUADRATIC)
        config_info: dict, full configuration
        seed: int, seeds every random draw of the trial
        record_states: bool, keep the executed states at the control rate in the result
    Returns:
        TrialResult
    """
    if mode not in MODES:
        raise ValueError("Unrecognized mode: {}. Expected one of {}".format(mode, MODES))
    if mode in MODES_WITH_CHECKPOINT and vf is None:
        raise ValueError("Mode {} requires a trained value function".format(mode))

    dyn, lidar = config_info['dynamics'], config_info['lidar']
    rng = np.random.default_rng(seed)
    dt = float(dyn['dt'])
    substeps = execution_substeps(config_info)
    h = dt / substeps
    max_fine_steps = int(round(float(config_info['benchmark']['timeout']) / h))

    result = TrialResult(env_seed=env.seed, env_hash=environment_hash(env), mode=mode, seed=int(seed),
                         config_hash=config_hash(config_info), outcome=TIMEOUT, sim_time=0.0)
    states = [np.array(env.start, dtype=np.float64)]
    outcome = classify_state(states[0], env, config_info)
    wall_times = []

    if mode == RAW_ACTOR:
        noise = NoiseModel.from_config(dyn)
        x = states[0]
        while outcome is None and len(states) - 1 < max_fine_steps:
            scan = raycast_scan(env, x, int(lidar['num_beams']), float(lidar['range_min']),
                                float(lidar['range_max']))
            u = vf.controls(vf.transform(x, scan, env.goal))
            for _ in range(substeps):
                x = step_stochastic(x, u, noise, rng, h, float(dyn['wheelbase']), reference_dt=dt,
                                    steer_limit=float(dyn['steer_limit']))
                states.append(x)
                outcome = classify_state(x, env, config_info)
                if outcome is not None or len(states) - 1 >= max_fine_steps:
                    break
    else:
        controller = ControllerState(state=states[0])
        while outcome is None and len(states) - 1 < max_fine_steps:
            executed, report, record = receding_horizon_step(controller, env, vf, rng, config_info, mode)
            wall_times.append(record.pop("timing")["replan_wall_time"])
            result.intervals.append(record)
            segment = executed.states[1:]
            k, outcome = _first_outcome(segment, env, config_info)
            segment = segment if k is None else segment[:k + 1]
            segment = segment[:max_fine_steps - (len(states) - 1)]
            states.extend(segment)

    result.outcome = outcome if outcome is not None else TIMEOUT
    result.sim_time = round((len(states) - 1) * h, 10)
    if wall_times:
        result.timing = {"mean_replan_wall_time": float(np.mean(wall_times)), "replan_wall_times": wall_times}
    if record_states:
        result.states = np.stack(states)
    logger.info("Trial env %s mode %s: %s after %.2f s", env.seed, mode, result.outcome, result.sim_time)
    return result


if __name__ == '__main__':

    parser = argparse.ArgumentParser(description='Run one closed-loop navigation trial.')
    parser.add_argument('--environment',
                        dest='environment',
                        metavar='/path/to/environment.json',
                        type=str,
                        help='environment file as written by the benchmark',
                        required=True)
    parser.add_argument('--mode',
                        dest='mode',
                        choices=MODES,
                        default=LEARNED_VF)
    parser.add_argument('--checkpoint',
                        dest='checkpoint',
                        metavar='/path/to/checkpoint_dir',
                        type=str,
                        help='directory with actor.mlp and critic1.mlp, required by LEARNED_VF and RAW_ACTOR',
                        default=None)
    parser.add_argument('--config_file',
                        dest='config_file',
                        metavar='/path/to/config_file.yml',
                        type=str,
                        help='config file merged over the packaged pacnav/config/pacnav_config.yml',
                        default=None)
    parser.add_argument('--seed',
                        dest='seed',
                        type=int,
                        default=0)
    args = parser.parse_args()

    logging.basicConfig(stream=sys.stdout, level=logging.INFO)
    config = load_config(args.config_file)
    print("*** Trial config: ")
    print(yaml.dump(config))
    torch.set_num_threads(int(config['device'].get('torch_threads', 1)))

    value_function = None
    if args.mode in MODES_WITH_CHECKPOINT:
        if args.checkpoint is None:
            raise ValueError("Mode {} requires --checkpoint".format(args.mode))
        value_function = load_value_function(args.checkpoint, config)

    print("***  Running trial ... ")
    trial = run_trial(load_environment(args.environment), args.mode, value_function, config, args.seed)
    print(json.dumps(trial.to_dict(), sort_keys=True))
    print("Done!")
