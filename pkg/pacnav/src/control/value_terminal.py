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
# \file       value_terminal.py
# \brief      Learned terminal cost: the current lidar returns are re-expressed as the scan expected from the
#               terminal pose of a candidate trajectory, and the value function is evaluated there.
#
# \author     PACnav contributors
# \date       2026
#

import numpy as np

from pacnav.src.dynamics.vehicle_dynamics import THETA, wrap_angle
from pacnav.src.world.world_sim import NUM_BEAMS, RANGE_MIN, RANGE_MAX


def project_scan(points, terminal_poses, num_beams=NUM_BEAMS, range_min=RANGE_MIN, range_max=RANGE_MAX):
    """
    Estimated scan at each terminal pose from the world-frame obstacle points of the current scan.
    Each point is assigned to the beam whose bearing is closest to the point's bearing from the pose
    (circular over the +-pi seam); a beam keeps the minimum range assigned to it and beams without points
    read range_max. No occlusion check is done and points behind the pose are kept.
    Args:
        points: [K, 2] obstacle points
        terminal_poses: [..., >=3] x, y, theta
    Returns:
        ranges: [..., num_beams] in [range_min, range_max]
    """
    poses = np.asarray(terminal_poses, dtype=np.float64)
    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    batch_shape = poses.shape[:-1]
    ranges = np.full(batch_shape + (num_beams,), float(range_max))
    if len(points) == 0:
        return ranges

    rel = points - poses[..., None, :2]                                   # [..., K, 2]
    dist = np.linalg.norm(rel, axis=-1)
    bearing = wrap_angle(np.arctan2(rel[..., 1], rel[..., 0]) - poses[..., THETA, None])
    spacing = 2.0 * np.pi / num_beams
    beam = np.mod(np.rint((bearing + np.pi) / spacing).astype(np.int64), num_beams)

    flat = ranges.reshape(-1, num_beams)
    rows = np.broadcast_to(np.arange(flat.shape[0])[:, None], (flat.shape[0], len(points)))
    np.minimum.at(flat, (rows.ravel(), beam.reshape(-1)), dist.reshape(-1))
    return np.clip(flat.reshape(ranges.shape), range_min, range_max)


def terminal_cost(vf, terminal_state, projected, goal, masks=None):
    """q_f = -V(x_T, l_hat) under the supplied dropout masks."""
    return -vf.evaluate(terminal_state, projected, goal, masks)


def value_improvement_violated(vf, current_state, current_scan, terminal_state, projected, goal, masks=None,
                               terminal_value=None):
    """
    True where the value at the terminal state is lower than at the current state, both evaluated with
    the same masks. `terminal_value` can be passed when it was already computed for the terminal cost.
    """
    if terminal_value is None:
        terminal_value = vf.evaluate(terminal_state, projected, goal, masks)
    current_value = vf.evaluate(current_state, current_scan, goal, masks)
    return np.asarray(terminal_value) < np.asarray(current_value)
