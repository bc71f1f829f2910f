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
# \file       td3_training.py
# \brief      Script to train the lidar-conditioned actor and twin critics with TD3 on randomly sampled
#               navigation environments. The trained actor / first critic pair is the value function
#               used as terminal cost by the controller.
#               Example config file required by the main function is shown in
#               pacnav/config/pacnav_config.yml (sections dynamics, lidar, environment, cost, td3)
#
# \author     PACnav contributors
# \date       2026
#

import os
import sys
import copy
import json
import logging
import argparse
import itertools
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import yaml
import numpy as np
import torch
import torch.nn as nn
from torch.utils.tensorboard import SummaryWriter
from ignite.engine import Engine, Events

from pacnav.src.dynamics.vehicle_dynamics import NoiseModel, V, step_stochastic
from pacnav.src.world.world_sim import (
    Environment, sample_environment, raycast_scan, check_true_collision, goal_reached
)
from pacnav.src.networks.mlp import DropoutMLP, DTYPE, make_optimizer, sample_masks, save_weights, load_weights
from pacnav.src.train.replay_buffer import ReplayBuffer, TransitionSample
from pacnav.src.utils.config_utils import load_config, config_hash
from pacnav.src.utils.custom_transform import MdpStateTransform, ActionScaler, ACTION_DIM, NUM_VEHICLE_FEATURES
from pacnav.src.utils.custom_losses import TwinCriticLoss, DeterministicPolicyLoss, td3_target
from pacnav.src.utils.custom_inferer import ValueFunction

logger = logging.getLogger(__name__)

TERMINATION_GOAL = "goal"
TERMINATION_VIOLATION = "violation"
TERMINATION_TIME_LIMIT = "time_limit"

CHECKPOINT_FILES = ("actor", "critic1", "critic2", "actor_target", "critic1_target", "critic2_target")
META_FILE = "training_meta.json"


def reward(x, u, goal, constraint_violated, config_info):
    """
    r = -(x - x_G)^T Q (x - x_G) - gamma_r [violated]
    Args:
        x: [5] state the transition lands in
        u: [2] applied control, unused by the quadratic running cost
        goal: [5] goal state
        constraint_violated: bool
        config_info: dict with sections cost (q_diag) and td3 (violation_penalty)
    """
    q_diag = np.asarray(config_info['cost']['q_diag'], dtype=np.float64)
    d = np.asarray(x, dtype=np.float64) - np.asarray(goal, dtype=np.float64)
    r = -float(np.sum(q_diag * d * d))
    if constraint_violated:
        r -= float(config_info['td3']['violation_penalty'])
    return r


class EpisodeStepper:
    """
    MDP view of one environment: the stochastic vehicle stepped at the planning dt with the raycast scan
    recomputed after every step.

    Args:
        env: Environment
        rng: numpy Generator for the process noise
        config_info: dict, full configuration
        wheelbase: float or None, overrides dynamics.wheelbase for the training dynamics
    """

    def __init__(self, env: Environment, rng: np.random.Generator, config_info, wheelbase=None):
        dyn, lidar, env_config = config_info['dynamics'], config_info['lidar'], config_info['environment']
        self.env = env
        self.rng = rng
        self.config_info = config_info
        self.noise = NoiseModel.from_config(dyn)
        self.dt = float(dyn['dt'])
        self.wheelbase = float(dyn['wheelbase'] if wheelbase is None else wheelbase)
        self.steer_limit = float(dyn['steer_limit'])
        self.v_min, self.v_max = float(dyn['v_min']), float(dyn['v_max'])
        self.lidar = dict(num_beams=int(lidar['num_beams']), range_min=float(lidar['range_min']),
                          range_max=float(lidar['range_max']))
        self.robot_radius = float(env_config['robot_radius'])
        self.goal_radius = float(env_config['goal_radius'])
        self.max_episode_steps = int(config_info['td3']['max_episode_steps'])
        self.transform = MdpStateTransform.from_config(config_info)
        self.scaler = ActionScaler.from_config(config_info)
        self.x = None
        self.scan = None
        self.steps = 0

    def observation(self):
        return self.transform(self.x, self.scan, self.env.goal)

    def reset(self):
        self.x = np.array(self.env.start, dtype=np.float64)
        self.scan = raycast_scan(self.env, self.x, **self.lidar)
        self.steps = 0
        return self.observation()

    def step(self, action) -> Tuple[TransitionSample, Optional[str]]:
        """
        Args:
            action: [2] normalized action in [-1, 1]^2
        Returns:
            transition, termination reason (None while the episode continues)
        """
        action = np.clip(np.asarray(action, dtype=np.float64), -1.0, 1.0)
        s = self.observation()
        u = self.scaler.to_control(action)
        x_next = step_stochastic(self.x, u, self.noise, self.rng, self.dt, self.wheelbase,
                                 steer_limit=self.steer_limit)
        self.x = x_next
        self.scan = raycast_scan(self.env, x_next, **self.lidar)
        self.steps += 1

        violated = bool(check_true_collision(x_next, self.env, self.robot_radius)) or \
            not self.v_min <= x_next[V] <= self.v_max
        r = reward(x_next, u, self.env.goal, violated, self.config_info)

        termination, done = None, False
        if violated:
            termination, done = TERMINATION_VIOLATION, True
        elif goal_reached(x_next, self.env.goal, self.goal_radius):
            termination, done = TERMINATION_GOAL, True
        elif self.steps >= self.max_episode_steps:
            # time limit ends the episode but is not an MDP terminal state
            termination = TERMINATION_TIME_LIMIT
        return TransitionSample(s, action, r, self.observation(), done), termination


def run_episode(env: Environment, policy_fn: Callable, rng: np.random.Generator, config_info,
                exploration_std=0.0, wheelbase=None) -> Tuple[List[TransitionSample], str]:
    """
    Roll out `policy_fn` (MDP state -> normalized action) until goal, violation or the step limit.
    Gaussian exploration noise with std `exploration_std` is added to the actions and clipped to [-1, 1].
    """
    stepper = EpisodeStepper(env, rng, config_info, wheelbase)
    s = stepper.reset()
    transitions = []
    while True:
        action = np.asarray(policy_fn(s), dtype=np.float64)
        if exploration_std > 0:
            action = np.clip(action + exploration_std * rng.standard_normal(ACTION_DIM), -1.0, 1.0)
        transition, termination = stepper.step(action)
        transitions.append(transition)
        s = transition.s_next
        if termination is not None:
            return transitions, termination


def soft_update(target: nn.Module, source: nn.Module, tau: float) -> None:
    with torch.no_grad():
        for t_param, param in zip(target.parameters(), source.parameters()):
            t_param.mul_(1.0 - tau).add_(tau * param)


class TD3Agent:
    """
    Actor, twin critics, their target copies and optimizers.
    """

    def __init__(self, config_info):
        td3 = config_info['td3']
        state_dim = NUM_VEHICLE_FEATURES + int(config_info['lidar']['num_beams'])
        hidden = [int(h) for h in td3['hidden_dims']]
        dropout_rate = float(td3['dropout_rate'])
        self.config_info = config_info
        self.actor = DropoutMLP([state_dim] + hidden + [ACTION_DIM], dropout_rate)
        self.critic1 = DropoutMLP([state_dim + ACTION_DIM] + hidden + [1], dropout_rate)
        self.critic2 = DropoutMLP([state_dim + ACTION_DIM] + hidden + [1], dropout_rate)
        self.actor_target = copy.deepcopy(self.actor)
        self.critic1_target = copy.deepcopy(self.critic1)
        self.critic2_target = copy.deepcopy(self.critic2)
        self.actor_optimizer = make_optimizer(self.actor, float(td3['lr_actor']))
        self.critic_optimizer = make_optimizer(nn.ModuleList([self.critic1, self.critic2]), float(td3['lr_critic']))
        self.critic_loss = TwinCriticLoss()
        self.policy_loss = DeterministicPolicyLoss()
        self.transform = MdpStateTransform.from_config(config_info)
        self.scaler = ActionScaler.from_config(config_info)

    def networks(self):
        return {name: getattr(self, name) for name in CHECKPOINT_FILES}

    def act(self, s, rng=None, noise_std=0.0):
        with torch.no_grad():
            a = torch.tanh(self.actor(torch.as_tensor(s, dtype=DTYPE))).numpy()
        if noise_std > 0 and rng is not None:
            a = a + noise_std * rng.standard_normal(a.shape)
        return np.clip(a, -1.0, 1.0)

    def value_function(self):
        return ValueFunction(self.actor, self.critic1, self.transform, self.scaler)


def td3_update(buffer: ReplayBuffer, agent: TD3Agent, step_index: int, config_info, rng: np.random.Generator):
    """
    One TD3 update: clipped double-Q critic regression, delayed actor ascent on Q_1 and soft target updates.
    Live networks are trained with sampled dropout masks, targets are evaluated in expectation mode.
    Returns:
        dict with critic_loss and actor_loss (None when the actor update is delayed)
    Raises:
        FloatingPointError: non-finite loss
    """
    td3 = config_info['td3']
    batch_size = int(td3['batch_size'])
    batch = buffer.sample(rng, batch_size)
    s = torch.as_tensor(batch["s"], dtype=DTYPE)
    a = torch.as_tensor(batch["a"], dtype=DTYPE)
    r = torch.as_tensor(batch["r"], dtype=DTYPE)
    s_next = torch.as_tensor(batch["s_next"], dtype=DTYPE)
    done = torch.as_tensor(batch["done"], dtype=DTYPE)

    with torch.no_grad():
        noise = np.clip(float(td3['target_noise_std']) * rng.standard_normal((batch_size, ACTION_DIM)),
                        -float(td3['target_noise_clip']), float(td3['target_noise_clip']))
        a_next = (torch.tanh(agent.actor_target(s_next)) + torch.as_tensor(noise)).clamp(-1.0, 1.0)
        sa_next = torch.cat([s_next, a_next], dim=-1)
        y = td3_target(r, done, agent.critic1_target(sa_next).squeeze(-1),
                       agent.critic2_target(sa_next).squeeze(-1), float(td3['gamma_d']))

    sa = torch.cat([s, a], dim=-1)
    q1 = agent.critic1(sa, sample_masks(agent.critic1, rng, (batch_size,))).squeeze(-1)
    q2 = agent.critic2(sa, sample_masks(agent.critic2, rng, (batch_size,))).squeeze(-1)
    critic_loss = agent.critic_loss(q1, q2, y)
    if not torch.isfinite(critic_loss):
        raise FloatingPointError("Non-finite critic loss {} at step {}".format(critic_loss.item(), step_index))
    agent.critic_optimizer.zero_grad()
    critic_loss.backward()
    agent.critic_optimizer.step()

    losses = {"critic_loss": critic_loss.item(), "actor_loss": None}
    if step_index % int(td3['policy_delay']) == 0:
        a_pi = torch.tanh(agent.actor(s, sample_masks(agent.actor, rng, (batch_size,))))
        q_pi = agent.critic1(torch.cat([s, a_pi], dim=-1),
                             sample_masks(agent.critic1, rng, (batch_size,))).squeeze(-1)
        actor_loss = agent.policy_loss(q_pi)
        if not torch.isfinite(actor_loss):
            raise FloatingPointError("Non-finite actor loss {} at step {} (last critic loss {})".format(
                actor_loss.item(), step_index, losses["critic_loss"]))
        agent.actor_optimizer.zero_grad()
        actor_loss.backward()
        agent.actor_optimizer.step()
        losses["actor_loss"] = actor_loss.item()

        tau = float(td3['tau'])
        soft_update(agent.actor_target, agent.actor, tau)
        soft_update(agent.critic1_target, agent.critic1, tau)
        soft_update(agent.critic2_target, agent.critic2, tau)
    return losses


class PlateauTracker:
    """
    Mean actor loss over consecutive windows of `window` updates. Training has plateaued when
    `patience` windows in a row fail to improve on the best window mean by `tolerance * |best|`.
    """

    def __init__(self, window=100, patience=10, tolerance=0.01):
        self.window = int(window)
        self.patience = int(patience)
        self.tolerance = float(tolerance)
        self._losses = []
        self.best = None
        self.last_mean = None
        self.stale_windows = 0
        self.window_closed = False

    def update(self, actor_loss) -> bool:
        self._losses.append(float(actor_loss))
        self.window_closed = len(self._losses) >= self.window
        if not self.window_closed:
            return False
        self.last_mean = float(np.mean(self._losses))
        self._losses = []
        if self.best is None or self.last_mean < self.best - self.tolerance * abs(self.best):
            self.best = self.last_mean
            self.stale_windows = 0
        else:
            self.stale_windows += 1
        return self.stale_windows >= self.patience

    def state_dict(self):
        return {"best_window_mean": self.best, "last_window_mean": self.last_mean,
                "stale_windows": self.stale_windows}


def save_checkpoint(agent: TD3Agent, checkpoint_dir, step, config_info, wheelbase, plateau=None):
    os.makedirs(checkpoint_dir, exist_ok=True)
    for name, net in agent.networks().items():
        save_weights(net, os.path.join(checkpoint_dir, name + ".mlp"))
    meta = {
        "step": int(step),
        "config_hash": config_hash(config_info),
        "wheelbase": float(wheelbase),
        "plateau": plateau.state_dict() if plateau is not None else None,
    }
    with open(os.path.join(checkpoint_dir, META_FILE), "w") as f:
        json.dump(meta, f, sort_keys=True, indent=2)
    logger.info("Saved checkpoint at step %d to %s", step, checkpoint_dir)


def load_value_function(checkpoint_dir, config_info) -> ValueFunction:
    """
    Rebuild the deployable value function from actor.mlp and critic1.mlp.
    Raises:
        FileNotFoundError: missing checkpoint directory or weight file
    """
    paths = {name: os.path.join(checkpoint_dir, name + ".mlp") for name in ("actor", "critic1")}
    for path in paths.values():
        if not os.path.isfile(path):
            raise FileNotFoundError('Expected checkpoint file: {} not found'.format(path))
    dropout_rate = float(config_info['td3']['dropout_rate'])
    actor = load_weights(paths["actor"], dropout_rate=dropout_rate)
    critic = load_weights(paths["critic1"], dropout_rate=dropout_rate)
    return ValueFunction(actor, critic, MdpStateTransform.from_config(config_info),
                         ActionScaler.from_config(config_info))


def read_training_meta(checkpoint_dir):
    path = os.path.join(checkpoint_dir, META_FILE)
    if not os.path.isfile(path):
        raise FileNotFoundError('Expected checkpoint metadata: {} not found'.format(path))
    with open(path) as f:
        return json.load(f)


@dataclass
class _EpisodeState:
    stepper: Optional[EpisodeStepper] = None
    s: Optional[np.ndarray] = None
    episode_return: float = 0.0
    episode_index: int = 0
    num_updates: int = 0
    last_losses: dict = field(default_factory=dict)


def run_training(config_info, out_dir, max_steps=None, seed=None, wheelbase=None) -> ValueFunction:
    """
    Pipeline to train the TD3 actor and critics. It is composed of the following main blocks:
        * Setup: seeds, networks, replay memory, TensorBoard writer
        * Trainer engine: one engine iteration per environment step. A new environment is sampled whenever an
            episode ends; the first `warmup_steps` actions are uniform random, later ones come from the actor with
            Gaussian exploration noise. One td3_update follows every step once the warmup is over.
        * Handlers: periodic checkpoints, plateau termination on the mean actor loss, final checkpoint.
    Args:
        config_info: dict, full configuration. See pacnav/config/pacnav_config.yml
        out_dir: directory for the checkpoint files and the TensorBoard logs
        max_steps: int or None, hard cap on environment steps (default td3.max_steps). 0 saves the random init.
        seed: int or None, default td3.manual_seed
        wheelbase: float or None, wheelbase of the training dynamics (default dynamics.wheelbase)
    Returns:
        value function of the final networks
    Raises:
        FloatingPointError: the TD3 losses diverged
    """

    """
    Read input and configuration parameters
    """
    logging.basicConfig(stream=sys.stdout, level=logging.INFO)
    print(yaml.dump(config_info))

    td3 = config_info['td3']
    max_steps = int(td3['max_steps'] if max_steps is None else max_steps)
    seed = int(td3['manual_seed'] if seed is None else seed)
    wheelbase = float(config_info['dynamics']['wheelbase'] if wheelbase is None else wheelbase)
    warmup_steps = int(td3['warmup_steps'])
    batch_size = int(td3['batch_size'])
    print("Using determinism with seed = {}".format(seed))
    print("Training dynamics wheelbase = {}".format(wheelbase))
    rng = np.random.default_rng(seed)
    torch.manual_seed(seed)
    torch.set_num_threads(int(config_info['device'].get('torch_threads', 1)))

    os.makedirs(out_dir, exist_ok=True)
    print("Saving to directory {}\n".format(out_dir))

    """
    Network preparation
    """
    print("*** Preparing the actor and critics ...")
    agent = TD3Agent(config_info)
    print(agent.actor)
    print(agent.critic1)
    buffer = ReplayBuffer(min(int(td3['buffer_capacity']), max(max_steps, 1)),
                          agent.actor.layer_dims[0], ACTION_DIM)
    plateau = PlateauTracker(td3['plateau_window'], td3['plateau_patience'], td3['plateau_tolerance'])

    if max_steps == 0:
        print("*** max_steps = 0, saving the initial networks")
        save_checkpoint(agent, out_dir, 0, config_info, wheelbase)
        return agent.value_function()

    """
    Trainer engine
    """
    print("*** Preparing the TD3 trainer engine...\n")
    writer = SummaryWriter(log_dir=os.path.join(out_dir, "tensorboard"))
    state = _EpisodeState()

    def _iteration(engine, _):
        step = engine.state.iteration
        if state.stepper is None:
            env = sample_environment(rng, config_info['environment'])
            state.stepper = EpisodeStepper(env, rng, config_info, wheelbase)
            state.s = state.stepper.reset()
            state.episode_return = 0.0

        if step <= warmup_steps:
            action = rng.uniform(-1.0, 1.0, ACTION_DIM)
        else:
            action = agent.act(state.s, rng, float(td3['exploration_std']))
        transition, termination = state.stepper.step(action)
        buffer.add(transition)
        state.s = transition.s_next
        state.episode_return += transition.r

        output = {"termination": termination, "critic_loss": None, "actor_loss": None}
        if termination is not None:
            writer.add_scalar("episode/return", state.episode_return, step)
            writer.add_scalar("episode/length", state.stepper.steps, step)
            output["episode_return"] = state.episode_return
            state.episode_index += 1
            state.stepper = None

        if step > warmup_steps and len(buffer) >= batch_size:
            state.num_updates += 1
            output.update(td3_update(buffer, agent, state.num_updates, config_info, rng))
            state.last_losses = output
        return output

    trainer = Engine(_iteration)

    @trainer.on(Events.ITERATION_COMPLETED)
    def _track_plateau(engine):
        critic_loss, actor_loss = engine.state.output["critic_loss"], engine.state.output["actor_loss"]
        if critic_loss is not None:
            writer.add_scalar("loss/critic", critic_loss, engine.state.iteration)
        if actor_loss is None:
            return
        writer.add_scalar("loss/actor", actor_loss, engine.state.iteration)
        if plateau.update(actor_loss):
            writer.add_scalar("loss/actor_window_mean", plateau.last_mean, engine.state.iteration)
            logger.info("Mean actor loss plateaued at %.4f after %d steps", plateau.best, engine.state.iteration)
            engine.terminate()
        elif plateau.window_closed:
            writer.add_scalar("loss/actor_window_mean", plateau.last_mean, engine.state.iteration)

    @trainer.on(Events.ITERATION_COMPLETED(every=int(td3['checkpoint_every'])))
    def _save(engine):
        save_checkpoint(agent, out_dir, engine.state.iteration, config_info, wheelbase, plateau)

    """
    Run training
    """
    print("*** Run training...")
    try:
        trainer.run(itertools.repeat(None), max_epochs=1, epoch_length=max_steps)
    except FloatingPointError:
        logger.error("Training diverged after %d episodes, last losses %s", state.episode_index, state.last_losses)
        raise
    finally:
        writer.close()
    save_checkpoint(agent, out_dir, trainer.state.iteration, config_info, wheelbase, plateau)
    print("Done!")
    return agent.value_function()


if __name__ == "__main__":

    parser = argparse.ArgumentParser(description='Train the TD3 actor and critics used as learned terminal value.')
    parser.add_argument('--out_folder',
                        dest='out_folder',
                        metavar='/path/to/out_folder',
                        type=str,
                        help='directory where to store the checkpoint and the TensorBoard logs',
                        required=True)
    parser.add_argument('--config_file',
                        dest='config_file',
                        metavar='/path/to/config_file.yml',
                        type=str,
                        help='config file merged over the packaged pacnav/config/pacnav_config.yml',
                        default=None)
    parser.add_argument('--max_steps',
                        dest='max_steps',
                        metavar='N',
                        type=int,
                        help='hard cap on the number of environment steps (default td3.max_steps)',
                        default=None)
    parser.add_argument('--seed',
                        dest='seed',
                        metavar='SEED',
                        type=int,
                        default=None)
    parser.add_argument('--wheelbase',
                        dest='wheelbase',
                        metavar='L',
                        type=float,
                        help='wheelbase of the training dynamics, for the model mismatch ablation',
                        default=None)
    args = parser.parse_args()

    config = load_config(args.config_file)
    run_training(config, args.out_folder, args.max_steps, args.seed, args.wheelbase)
