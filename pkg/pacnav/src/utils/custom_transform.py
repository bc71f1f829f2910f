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
# \file       custom_transform.py
# \brief      contains the transforms between the vehicle / lidar representation and the MDP used to train
#               the actor and critics: the normalized MDP state s = h(x, l) and the action scaling
#               between the network output box [-1, 1]^2 and the control bounds.
#
# \author     PACnav contributors
# \date       2026
#

import numpy as np

from pacnav.src.dynamics.vehicle_dynamics import (
    THETA, V, STEER, STEER_LIMIT, ACCEL_LIMIT, STEER_RATE_LIMIT
)
from pacnav.src.world.world_sim import NUM_BEAMS, RANGE_MIN, RANGE_MAX

NUM_VEHICLE_FEATURES = 5
MDP_STATE_DIM = NUM_VEHICLE_FEATURES + NUM_BEAMS
ACTION_DIM = 2


class MdpStateTransform:
    """
    Map a vehicle state, a lidar scan and the goal to the normalized MDP state
        [ (v - v_min) / (v_max - v_min),
          (tan(steer) - tan(-steer_limit)) / (tan(steer_limit) - tan(-steer_limit)),
          |goal - p| / |p_max - p_min|,
          cos(beta_G - theta), sin(beta_G - theta),
          (l - l_min) / (l_max - l_min) ]
    with beta_G = atan2(goal_y - y, goal_x - x).
    The first three entries and the lidar block are clipped to [0, 1] so that states outside the
    velocity bounds (terminal violations) still give bounded network inputs.
    """

    def __init__(self, v_min=-1.0, v_max=3.0, steer_limit=STEER_LIMIT, range_min=RANGE_MIN, range_max=RANGE_MAX,
                 workspace_diagonal=float(np.hypot(25.0, 25.0))):
        self.v_min = v_min
        self.v_max = v_max
        self.steer_limit = steer_limit
        self.range_min = range_min
        self.range_max = range_max
        self.workspace_diagonal = workspace_diagonal

    @classmethod
    def from_config(cls, config_info):
        dyn, lidar, env = config_info['dynamics'], config_info['lidar'], config_info['environment']
        diagonal = float(np.linalg.norm(np.subtract(env['p_max'], env['p_min'])))
        return cls(v_min=dyn['v_min'], v_max=dyn['v_max'], steer_limit=dyn['steer_limit'],
                   range_min=lidar['range_min'], range_max=lidar['range_max'], workspace_diagonal=diagonal)

    def __call__(self, states, scans, goal):
        """
        Args:
            states: [..., 5] vehicle states
            scans: [..., num_beams] ranges
            goal: [5] or [..., 5] goal state
        Returns:
            s: [..., 5 + num_beams]
        """
        states = np.asarray(states, dtype=np.float64)
        scans = np.asarray(scans, dtype=np.float64)
        d = np.asarray(goal, dtype=np.float64)[..., :2] - states[..., :2]
        bearing = np.arctan2(d[..., 1], d[..., 0]) - states[..., THETA]
        tan_limit = np.tan(self.steer_limit)
        features = np.stack([
            np.clip((states[..., V] - self.v_min) / (self.v_max - self.v_min), 0.0, 1.0),
            np.clip((np.tan(states[..., STEER]) + tan_limit) / (2.0 * tan_limit), 0.0, 1.0),
            np.clip(np.linalg.norm(d, axis=-1) / self.workspace_diagonal, 0.0, 1.0),
            np.cos(bearing),
            np.sin(bearing),
        ], axis=-1)
        lidar = np.clip((scans - self.range_min) / (self.range_max - self.range_min), 0.0, 1.0)
        batch_shape = np.broadcast_shapes(features.shape[:-1], lidar.shape[:-1])
        return np.concatenate([np.broadcast_to(features, batch_shape + features.shape[-1:]),
                               np.broadcast_to(lidar, batch_shape + lidar.shape[-1:])], axis=-1)


def mdp_state(states, scans, goal, config_info):
    return MdpStateTransform.from_config(config_info)(states, scans, goal)


class ActionScaler:
    """
    Affine map between normalized actions a in [-1, 1]^2 and controls u = a * bound.
    """

    def __init__(self, accel_limit=ACCEL_LIMIT, steer_rate_limit=STEER_RATE_LIMIT):
        self.bound = np.array([accel_limit, steer_rate_limit], dtype=np.float64)

    @classmethod
    def from_config(cls, config_info):
        dyn = config_info['dynamics']
        return cls(dyn['accel_limit'], dyn['steer_rate_limit'])

    def to_control(self, action):
        return np.clip(np.asarray(action, dtype=np.float64), -1.0, 1.0) * self.bound

    def to_action(self, control):
        return np.clip(np.asarray(control, dtype=np.float64) / self.bound, -1.0, 1.0)
