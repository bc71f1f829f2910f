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
# \file       world_sim.py
# \brief      Circular obstacle fields, an ideal 360 deg 2D lidar and the collision / goal predicates.
#               Lidar scans are arrays of ranges [..., num_beams] at the fixed bearings
#               beta_k = -pi + 2 pi k / num_beams; obstacle points are arrays [K, 2] in the world frame.
#
# \author     PACnav contributors
# \date       2026
#

import json
import hashlib
import logging
import dataclasses
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from pacnav.src.dynamics.vehicle_dynamics import STATE_DIM, STEER_LIMIT, X, Y, THETA, V, vehicle_state

logger = logging.getLogger(__name__)

NUM_BEAMS = 64
RANGE_MIN = 0.1
RANGE_MAX = 10.0
ROBOT_RADIUS = 0.2
GOAL_RADIUS = 1.0


def beam_bearings(num_beams=NUM_BEAMS):
    return -np.pi + 2.0 * np.pi * np.arange(num_beams) / num_beams


@dataclass(frozen=True)
class Obstacle:
    cx: float
    cy: float
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("Obstacle radius must be > 0, got {}".format(self.radius))


@dataclass(frozen=True)
class Environment:
    obstacles: Tuple[Obstacle, ...]
    start: np.ndarray
    goal: np.ndarray
    p_min: Tuple[float, float] = (0.0, 0.0)
    p_max: Tuple[float, float] = (25.0, 25.0)
    seed: Optional[int] = None

    @property
    def centers(self):
        return np.array([[o.cx, o.cy] for o in self.obstacles], dtype=np.float64).reshape(-1, 2)

    @property
    def radii(self):
        return np.array([o.radius for o in self.obstacles], dtype=np.float64)

    @property
    def diagonal(self):
        return float(np.linalg.norm(np.subtract(self.p_max, self.p_min)))

    def with_start(self, start):
        return dataclasses.replace(self, start=np.asarray(start, dtype=np.float64))

    def to_dict(self):
        return {
            "obstacles": [[o.cx, o.cy, o.radius] for o in self.obstacles],
            "start": [float(v) for v in self.start],
            "goal": [float(v) for v in self.goal],
            "workspace": {"p_min": list(self.p_min), "p_max": list(self.p_max)},
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data):
        try:
            obstacles = tuple(Obstacle(float(cx), float(cy), float(r)) for cx, cy, r in data["obstacles"])
            start = np.array(data["start"], dtype=np.float64)
            goal = np.array(data["goal"], dtype=np.float64)
            p_min = tuple(float(v) for v in data["workspace"]["p_min"])
            p_max = tuple(float(v) for v in data["workspace"]["p_max"])
        except (KeyError, TypeError, ValueError) as e:
            raise ValueError("Malformed environment document: {}".format(e))
        if start.shape != (STATE_DIM,) or goal.shape != (STATE_DIM,):
            raise ValueError("Environment start and goal must have {} entries".format(STATE_DIM))
        return cls(obstacles, start, goal, p_min, p_max, data.get("seed"))


def environment_hash(env):
    canonical = json.dumps(env.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def save_environment(env, path):
    with open(path, "w") as f:
        json.dump(env.to_dict(), f, sort_keys=True, indent=2)


def load_environment(path):
    try:
        with open(path) as f:
            data = json.load(f)
    except FileNotFoundError:
        raise FileNotFoundError('Expected environment file: {} not found'.format(path))
    return Environment.from_dict(data)


def _collides(points, centers, radii, inflate):
    if len(radii) == 0:
        return np.zeros(np.shape(points)[:-1], dtype=bool)
    diff = np.asarray(points)[..., None, :] - centers
    return np.any(np.linalg.norm(diff, axis=-1) <= radii + inflate, axis=-1)


def _sample_state(rng, p_min, p_max):
    return vehicle_state(x=rng.uniform(p_min[0], p_max[0]),
                         y=rng.uniform(p_min[1], p_max[1]),
                         theta=rng.uniform(-np.pi, np.pi),
                         v=0.0,
                         steer=rng.uniform(-STEER_LIMIT, STEER_LIMIT))


def sample_environment(rng, env_config, seed=None):
    """
    Sample obstacles, start and goal uniformly in the workspace. Environments where the start or the goal
    collides with an obstacle inflated by the robot radius are discarded and resampled.
    Args:
        rng: numpy Generator
        env_config: dict, the `environment` section of the configuration
        seed: int or None, recorded in the environment for replay
    Returns:
        env: Environment
    Raises:
        RuntimeError: no valid environment within `max_attempts` draws
    """
    p_min, p_max = env_config['p_min'], env_config['p_max']
    n_min, n_max = env_config['num_obstacles']
    r_min, r_max = env_config['obstacle_radius']
    robot_radius = env_config['robot_radius']
    max_attempts = env_config.get('max_attempts', 1000)

    for attempt in range(max_attempts):
        n = int(rng.integers(n_min, n_max + 1))
        centers = rng.uniform(p_min, p_max, size=(n, 2))
        radii = rng.uniform(r_min, r_max, size=n)
        if env_config.get('no_overlap', False) and n > 1:
            gaps = np.linalg.norm(centers[:, None, :] - centers[None, :, :], axis=-1) - (radii[:, None] + radii)
            if np.any(gaps[np.triu_indices(n, k=1)] <= 0):
                continue
        start = _sample_state(rng, p_min, p_max)
        goal = _sample_state(rng, p_min, p_max)
        if _collides(start[:2], centers, radii, robot_radius) or _collides(goal[:2], centers, radii, robot_radius):
            continue
        obstacles = tuple(Obstacle(float(c[0]), float(c[1]), float(r)) for c, r in zip(centers, radii))
        return Environment(obstacles, start, goal, tuple(p_min), tuple(p_max), seed)
    raise RuntimeError("Could not sample a collision-free environment in {} attempts".format(max_attempts))


def is_blocked(env, robot_radius=ROBOT_RADIUS):
    """True iff the straight segment start -> goal intersects an obstacle inflated by the robot radius."""
    if len(env.obstacles) == 0:
        return False
    a, b = env.start[:2], env.goal[:2]
    seg = b - a
    seg_len2 = float(seg @ seg)
    rel = env.centers - a
    t = np.zeros(len(rel)) if seg_len2 == 0.0 else np.clip(rel @ seg / seg_len2, 0.0, 1.0)
    closest = a + t[:, None] * seg
    return bool(np.any(np.linalg.norm(env.centers - closest, axis=-1) <= env.radii + robot_radius))


def point_toward_goal(env):
    """Copy of `env` whose start heads straight at the goal with zero speed and steering."""
    d = env.goal[:2] - env.start[:2]
    start = vehicle_state(env.start[X], env.start[Y], np.arctan2(d[1], d[0]), 0.0, 0.0)
    return env.with_start(start)


def raycast_scan(env, pose, num_beams=NUM_BEAMS, range_min=RANGE_MIN, range_max=RANGE_MAX):
    """
    Ideal lidar: distance along each beam to the nearest ray-circle intersection.
    Args:
        env: Environment
        pose: [..., >=3] array, x, y, theta (a full vehicle state is accepted)
    Returns:
        ranges: [..., num_beams] clamped to [range_min, range_max], non-detections at range_max
    """
    pose = np.asarray(pose, dtype=np.float64)
    batch_shape = pose.shape[:-1]
    if len(env.obstacles) == 0:
        return np.full(batch_shape + (num_beams,), range_max)

    angles = pose[..., THETA, None] + beam_bearings(num_beams)
    dirs = np.stack([np.cos(angles), np.sin(angles)], axis=-1)           # [..., N, 2]
    rel = env.centers - pose[..., None, :2]                              # [..., K, 2]
    proj = np.einsum('...nd,...kd->...nk', dirs, rel)                    # [..., N, K]
    c = (np.sum(rel ** 2, axis=-1) - env.radii ** 2)[..., None, :]       # [..., 1, K]
    disc = proj ** 2 - c
    root = np.sqrt(np.maximum(disc, 0.0))
    near, far = proj - root, proj + root
    # sensor inside a circle reads zero, circles behind the sensor are missed
    t = np.where(near >= 0.0, near, np.where(far >= 0.0, 0.0, np.inf))
    t = np.where(disc >= 0.0, t, np.inf)
    ranges = np.min(t, axis=-1)
    ranges = np.where(np.isfinite(ranges), ranges, range_max)
    return np.clip(ranges, range_min, range_max)


def extract_obstacle_points(scan, pose, range_max=RANGE_MAX, return_beams=False):
    """
    World-frame obstacle points O_j = p + l_j [cos(theta + beta_j), sin(theta + beta_j)] for every l_j < range_max.
    Args:
        scan: [num_beams] ranges
        pose: [>=3] array, x, y, theta
        return_beams: bool, also return the indices of the originating beams
    Returns:
        points: [K, 2]
    """
    scan = np.asarray(scan, dtype=np.float64)
    pose = np.asarray(pose, dtype=np.float64)
    beams = np.flatnonzero(scan < range_max)
    angles = pose[THETA] + beam_bearings(scan.shape[-1])[beams]
    points = pose[:2] + scan[beams, None] * np.stack([np.cos(angles), np.sin(angles)], axis=-1)
    if return_beams:
        return points, beams
    return points


def check_constraint(state, points, robot_radius=ROBOT_RADIUS, v_min=-1.0, v_max=3.0):
    """
    State bound and observed-obstacle constraint.
    Returns:
        violated: bool array [...], true iff an obstacle point lies within robot_radius or v is outside [v_min, v_max]
    """
    state = np.asarray(state, dtype=np.float64)
    v = state[..., V]
    violated = (v < v_min) | (v > v_max)
    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if len(points):
        diff = state[..., None, :2] - points
        violated |= np.any(np.sum(diff ** 2, axis=-1) <= robot_radius ** 2, axis=-1)
    return violated


def check_true_collision(state, env, robot_radius=ROBOT_RADIUS):
    """Ground-truth collision against the obstacle circles."""
    return _collides(np.asarray(state, dtype=np.float64)[..., :2], env.centers, env.radii, robot_radius)


def goal_reached(state, goal, goal_radius=GOAL_RADIUS):
    state = np.asarray(state, dtype=np.float64)
    return np.linalg.norm(state[..., :2] - np.asarray(goal)[:2], axis=-1) <= goal_radius
