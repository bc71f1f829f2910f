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
# \file       pac_nmpc.py
# \brief      Sampling-based stochastic NMPC. Candidate nominal control sequences are drawn from a diagonal
#               Gaussian surrogate, stabilized with TVLQR, rolled out on the stochastic model and scored.
#               The surrogate is then moved by gradient steps on the combined bound J+ + gamma C+.
#
# \author     PACnav contributors
# \date       2026
#

import time
import logging
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np
import torch

from pacnav.src.dynamics.vehicle_dynamics import (
    CONTROL_DIM, NoiseModel, FeedbackPolicy, Trajectory, rollout_nominal, tvlqr_gains, rollout_policy,
    execute_policy
)
from pacnav.src.world.world_sim import Environment, raycast_scan, extract_obstacle_points, check_constraint
from pacnav.src.control.value_terminal import project_scan, value_improvement_violated
from pacnav.src.control.pac_bounds import (
    SurrogateHyperparams, SampleArchive, PacBound, PacBoundReport, DTYPE
)

logger = logging.getLogger(__name__)

QUADRATIC = "QUADRATIC"
LEARNED_VF = "LEARNED_VF"
TERMINAL_MODES = (QUADRATIC, LEARNED_VF)


def _terminal_mode(config_info, mode):
    mode = config_info['pac']['terminal_mode'] if mode is None else mode
    if mode not in TERMINAL_MODES:
        raise ValueError("Unrecognized terminal mode: {}. Expected one of {}".format(mode, TERMINAL_MODES))
    return mode


def _quadratic(states, goal, diag):
    d = states - np.asarray(goal, dtype=np.float64)
    return np.sum(np.asarray(diag, dtype=np.float64) * d * d, axis=-1)


def feedback_policies(xi, initial_state, config_info, substeps=1) -> FeedbackPolicy:
    """
    Nominal trajectories for the flattened control sequences xi [..., 2 N] and their TVLQR gains.
    """
    dyn = config_info['dynamics']
    xi = np.asarray(xi, dtype=np.float64)
    controls = xi.reshape(xi.shape[:-1] + (-1, CONTROL_DIM))
    nominal = rollout_nominal(initial_state, controls, float(dyn['dt']), float(dyn['wheelbase']))
    gains = tvlqr_gains(nominal, np.diag(dyn['lqr_q']), np.diag(dyn['lqr_r']), np.diag(dyn['lqr_qf']),
                        float(dyn['wheelbase']))
    return FeedbackPolicy(nominal, gains, substeps)


def evaluate_trajectories(xi, initial_state, current_scan, points, goal, vf, rng: np.random.Generator,
                          config_info, mode=None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Roll out each parameter vector once under one noise realization and one dropout mask.
    Args:
        xi: [M, 2 N] flattened nominal controls
        initial_state: [5] current state
        current_scan: [num_beams] current scan
        points: [K, 2] obstacle points extracted from the current scan
        goal: [5]
        vf: ValueFunction, required in LEARNED_VF mode
        mode: QUADRATIC or LEARNED_VF (default pac.terminal_mode)
    Returns:
        J: [M] raw costs (running quadratic cost plus terminal cost, not shifted)
        C: [M] bool, state or obstacle constraint violated anywhere, or value improvement violated
    """
    mode = _terminal_mode(config_info, mode)
    dyn, lidar, cost = config_info['dynamics'], config_info['lidar'], config_info['cost']
    xi = np.atleast_2d(np.asarray(xi, dtype=np.float64))
    num_samples = xi.shape[0]

    policy = feedback_policies(xi, initial_state, config_info)
    traj = rollout_policy(policy, initial_state, NoiseModel.from_config(dyn), rng, float(dyn['wheelbase']))
    states = traj.states
    terminal = states[:, -1, :]

    J = np.sum(_quadratic(states[:, :-1, :], goal, cost['q_diag']), axis=-1)
    C = np.any(check_constraint(states, points, float(config_info['environment']['robot_radius']),
                                float(dyn['v_min']), float(dyn['v_max'])), axis=-1)

    if mode == QUADRATIC:
        J = J + _quadratic(terminal, goal, cost['qf_diag'])
    else:
        if vf is None:
            raise ValueError("LEARNED_VF mode requires a value function")
        masks = vf.sample_masks(rng, (num_samples,)) if config_info['pac'].get('sample_dropout', True) else None
        projected = project_scan(points, terminal, int(lidar['num_beams']), float(lidar['range_min']),
                                 float(lidar['range_max']))
        terminal_value = vf.evaluate(terminal, projected, goal, masks)
        J = J - terminal_value
        C = C | value_improvement_violated(vf, initial_state, current_scan, terminal, projected, goal, masks,
                                           terminal_value=terminal_value)
    return J, C


def evaluate_trajectory(xi, initial_state, current_scan, points, goal, vf, rng, config_info, mode=None):
    J, C = evaluate_trajectories(np.asarray(xi)[None], initial_state, current_scan, points, goal, vf, rng,
                                 config_info, mode)
    return float(J[0]), bool(C[0])


def _log_var_limits(bound: PacBound, min_variance, margin):
    """Per-dimension log-variance box keeping D2 finite against every archived surrogate."""
    upper = torch.log((2.0 - margin) * torch.exp(bound.old_log_var).min(dim=0).values)
    lower = torch.full_like(upper, float(np.log(min_variance)))
    return lower, upper


def optimize_surrogate(nu_init: SurrogateHyperparams, evaluate_fn: Callable, rng: np.random.Generator,
                       pac_config) -> Tuple[SurrogateHyperparams, PacBoundReport, SampleArchive]:
    """
    L iterations of: sample M parameter vectors from the current surrogate, evaluate them, archive them,
    then take G Adam steps on J+ + gamma C+ (alpha re-optimized in closed form at every step, log-variances
    projected into the feasible region of the divergence).
    Args:
        nu_init: starting surrogate
        evaluate_fn: callable, (xi [M, D], rng) -> (raw costs [M], violations [M])
        pac_config: dict, the `pac` section of the configuration
    Returns:
        nu_star, report, archive
    """
    L, M = int(pac_config['num_iterations']), int(pac_config['num_samples'])
    delta, gamma = float(pac_config['delta']), float(pac_config['gamma'])
    alpha_range = [float(a) for a in pac_config['alpha_range']] if pac_config.get('alpha_range') else None
    normalize = pac_config.get('normalize_costs', True)
    margin = float(pac_config['feasibility_margin'])
    min_variance = float(pac_config['min_variance'])

    mean = torch.tensor(nu_init.mean, dtype=DTYPE, requires_grad=True)
    log_var = torch.tensor(nu_init.log_var, dtype=DTYPE, requires_grad=True)
    optimizer = torch.optim.Adam([{"params": [mean], "lr": float(pac_config['lr_mean'])},
                                  {"params": [log_var], "lr": float(pac_config['lr_log_var'])}])
    archive = SampleArchive(float(pac_config['cost_shift_eps']))

    bound = None
    for i in range(L):
        nu_i = SurrogateHyperparams(mean.detach().numpy().copy(), log_var.detach().numpy().copy())
        xi = nu_i.sample(rng, M)
        costs, violations = evaluate_fn(xi, rng)
        archive.append(nu_i, xi, costs, violations)
        bound = PacBound(archive, delta, archive.mean_cost() if normalize else None, alpha_range)
        lower, upper = _log_var_limits(bound, min_variance, margin)
        mean_only = bool(torch.any(upper < lower))
        if mean_only:
            logger.warning("No feasible variance at iteration %d, updating the mean only", i)

        for _ in range(int(pac_config['gradient_steps'])):
            optimizer.zero_grad()
            objective = bound.cost_bound(mean, log_var)[0] + gamma * bound.constraint_bound(mean, log_var)[0]
            objective.backward()
            torch.nn.utils.clip_grad_norm_([mean, log_var], float(pac_config['grad_clip']))
            if mean_only:
                log_var.grad = None
            optimizer.step()
            if not mean_only:
                with torch.no_grad():
                    log_var.copy_(torch.minimum(torch.maximum(log_var, lower), upper))

    nu_star = SurrogateHyperparams(mean.detach().numpy().copy(), log_var.detach().numpy().copy())
    with torch.no_grad():
        jplus, alpha_cost = bound.cost_bound(*nu_star.tensors())
        cplus, alpha_constraint = bound.constraint_bound(*nu_star.tensors())
    report = PacBoundReport(jplus=float(jplus), cplus=min(max(float(cplus), 0.0), 1.0),
                            alpha_cost=alpha_cost, alpha_constraint=alpha_constraint, w=bound.w,
                            shift=archive.shift, delta=delta, surrogate=nu_star.summary())

    if pac_config.get('monte_carlo_validation', True):
        mc_costs, mc_violations = evaluate_fn(nu_star.sample(rng, M), rng)
        report.mc_cost = float(np.mean(np.asarray(mc_costs) + archive.shift))
        report.mc_violation = float(np.mean(mc_violations))
    return nu_star, report, archive


def optimize_policy(nu_init: SurrogateHyperparams, initial_state, scan, goal, vf, rng, config_info, mode=None):
    """
    Bound-optimal surrogate for the current state and scan.
    Returns:
        nu_star, PacBoundReport, SampleArchive
    """
    lidar = config_info['lidar']
    points = extract_obstacle_points(scan, initial_state, float(lidar['range_max']))

    def _evaluate(xi, sample_rng):
        return evaluate_trajectories(xi, initial_state, scan, points, goal, vf, sample_rng, config_info, mode)

    return optimize_surrogate(nu_init, _evaluate, rng, config_info['pac'])


def initial_surrogate(config_info) -> SurrogateHyperparams:
    pac = config_info['pac']
    return SurrogateHyperparams.isotropic(np.zeros(int(pac['horizon']) * CONTROL_DIM), float(pac['init_variance']))


def warm_start(nu_prev: Optional[SurrogateHyperparams], config_info) -> SurrogateHyperparams:
    """
    Previous mean advanced by `replan_steps` control steps with the last control repeated, variance reset.
    """
    if nu_prev is None:
        return initial_surrogate(config_info)
    pac = config_info['pac']
    shift = int(pac['replan_steps'])
    controls = nu_prev.mean.reshape(-1, CONTROL_DIM)
    shifted = np.concatenate([controls[shift:], np.repeat(controls[-1:], min(shift, len(controls)), axis=0)])
    return SurrogateHyperparams.isotropic(shifted.reshape(-1), float(pac['init_variance']))


@dataclass
class ControllerState:
    state: np.ndarray
    nu: Optional[SurrogateHyperparams] = None
    interval: int = 0
    sim_time: float = 0.0


def execution_substeps(config_info):
    dyn = config_info['dynamics']
    return max(1, int(round(float(dyn['control_rate_hz']) * float(dyn['dt']))))


def receding_horizon_step(controller: ControllerState, env: Environment, vf, rng: np.random.Generator,
                          config_info, mode=None) -> Tuple[Trajectory, PacBoundReport, dict]:
    """
    One replanning interval: scan, warm start, optimize, then execute one sampled feedback policy for
    `replan_steps` planning steps at the control rate on the stochastic world. Simulated time is frozen
    during the optimization.
    Returns:
        executed fine-resolution trajectory, report, interval record (JSON serializable)
    """
    dyn, lidar, pac = config_info['dynamics'], config_info['lidar'], config_info['pac']
    scan = raycast_scan(env, controller.state, int(lidar['num_beams']), float(lidar['range_min']),
                        float(lidar['range_max']))
    nu_init = warm_start(controller.nu, config_info)

    start = time.perf_counter()
    nu_star, report, _ = optimize_policy(nu_init, controller.state, scan, env.goal, vf, rng, config_info, mode)
    replan_time = time.perf_counter() - start

    xi = nu_star.sample(rng, 1)[0]
    policy = feedback_policies(xi, controller.state, config_info, execution_substeps(config_info))
    executed = execute_policy(policy, controller.state, NoiseModel.from_config(dyn), rng,
                              float(dyn['wheelbase']), num_steps=int(pac['replan_steps']))

    record = {"interval": controller.interval, "sim_time": controller.sim_time}
    record.update(report.to_dict())
    record["timing"] = {"replan_wall_time": replan_time}
    logger.info("Interval %d: J+ %.4f C+ %.4f mc_cost %s mc_violation %s (%.3f s)", controller.interval,
                report.jplus, report.cplus, report.mc_cost, report.mc_violation, replan_time)

    controller.state = executed.states[-1].copy()
    controller.nu = nu_star
    controller.interval += 1
    controller.sim_time += int(pac['replan_steps']) * float(dyn['dt'])
    return executed, report, record
