import numpy as np
import pytest

from pacnav.src.dynamics.vehicle_dynamics import vehicle_state
from pacnav.src.world.world_sim import (
    Obstacle, Environment, beam_bearings, environment_hash, save_environment, load_environment,
    sample_environment, is_blocked, point_toward_goal, raycast_scan, extract_obstacle_points,
    check_constraint, check_true_collision, goal_reached,
)


def _env(obstacles, start=(0.0, 0.0, 0.0), goal=(10.0, 0.0, 0.0)):
    return Environment(tuple(Obstacle(*o) for o in obstacles),
                       vehicle_state(*start), vehicle_state(*goal), seed=3)


def test_obstacle_rejects_non_positive_radius():
    with pytest.raises(ValueError):
        Obstacle(1.0, 1.0, 0.0)


def test_bearings_start_at_minus_pi():
    bearings = beam_bearings(64)
    assert bearings[0] == pytest.approx(-np.pi)
    assert bearings[32] == pytest.approx(0.0)
    assert np.diff(bearings) == pytest.approx(np.full(63, 2 * np.pi / 64))


def test_empty_environment_reads_max_range():
    scan = raycast_scan(_env([]), vehicle_state())
    np.testing.assert_array_equal(scan, np.full(64, 10.0))
    assert extract_obstacle_points(scan, vehicle_state()).shape == (0, 2)


def test_raycast_hits_circle_ahead():
    env = _env([(5.0, 0.0, 1.0)])
    scan = raycast_scan(env, vehicle_state())
    assert scan[32] == pytest.approx(4.0)
    # the beam pointing backwards misses
    assert scan[0] == pytest.approx(10.0)


def test_raycast_follows_heading():
    env = _env([(0.0, 5.0, 1.0)])
    scan = raycast_scan(env, vehicle_state(theta=np.pi / 2))
    assert scan[32] == pytest.approx(4.0)


def test_raycast_inside_obstacle_reads_range_min():
    scan = raycast_scan(_env([(0.0, 0.0, 1.0)]), vehicle_state())
    np.testing.assert_allclose(scan, 0.1)


def test_raycast_is_batched():
    env = _env([(5.0, 0.0, 1.0), (2.0, 3.0, 0.5)])
    poses = np.array([vehicle_state(), vehicle_state(1.0, 1.0, 0.3), vehicle_state(-2.0, 0.5, 2.0)])
    batched = raycast_scan(env, poses)
    for pose, scan in zip(poses, batched):
        np.testing.assert_allclose(scan, raycast_scan(env, pose))


def test_extracted_points_lie_on_obstacle():
    env = _env([(5.0, 1.0, 1.0), (-3.0, -2.0, 0.7)])
    pose = vehicle_state(theta=0.4)
    points, beams = extract_obstacle_points(raycast_scan(env, pose), pose, return_beams=True)
    assert len(points) == len(beams) > 0
    dist = np.min(np.linalg.norm(points[:, None, :] - env.centers, axis=-1) - env.radii, axis=-1)
    np.testing.assert_allclose(dist, 0.0, atol=1e-9)


def test_check_constraint():
    points = np.array([[1.0, 0.0]])
    assert check_constraint(vehicle_state(0.85, 0.0), points)
    assert not check_constraint(vehicle_state(0.5, 0.0), points)
    assert check_constraint(vehicle_state(v=3.5), np.zeros((0, 2)))
    assert check_constraint(vehicle_state(v=-1.5), np.zeros((0, 2)))
    batch = np.array([vehicle_state(0.85, 0.0), vehicle_state(0.5, 0.0)])
    np.testing.assert_array_equal(check_constraint(batch, points), [True, False])


def test_true_collision_and_goal():
    env = _env([(5.0, 0.0, 1.0)])
    assert check_true_collision(vehicle_state(3.85, 0.0), env)
    assert not check_true_collision(vehicle_state(3.7, 0.0), env)
    assert goal_reached(vehicle_state(9.2, 0.0), env.goal)
    assert not goal_reached(vehicle_state(8.9, 0.0), env.goal)


def test_is_blocked():
    assert is_blocked(_env([(5.0, 0.5, 1.0)]))
    assert not is_blocked(_env([(5.0, 3.0, 1.0)]))
    assert not is_blocked(_env([]))


def test_point_toward_goal():
    env = point_toward_goal(_env([], start=(0.0, 0.0, 2.0), goal=(0.0, 5.0, 0.0)))
    np.testing.assert_allclose(env.start, [0.0, 0.0, np.pi / 2, 0.0, 0.0])


def test_sample_environment_is_collision_free(config_info):
    rng = np.random.default_rng(0)
    for _ in range(20):
        env = sample_environment(rng, config_info['environment'], seed=0)
        assert not check_true_collision(env.start, env)
        assert not check_true_collision(env.goal, env)
        assert 0 <= len(env.obstacles) <= 50
        assert np.all((env.radii >= 0.25) & (env.radii <= 1.5))
        assert np.all((env.centers >= 0.0) & (env.centers <= 25.0))


def test_sample_environment_is_reproducible(config_info):
    a = sample_environment(np.random.default_rng(5), config_info['environment'], seed=5)
    b = sample_environment(np.random.default_rng(5), config_info['environment'], seed=5)
    assert environment_hash(a) == environment_hash(b)


def test_sample_environment_gives_up(config_info):
    env_config = dict(config_info['environment'], num_obstacles=[500, 500], obstacle_radius=[5.0, 5.0],
                      max_attempts=3)
    with pytest.raises(RuntimeError):
        sample_environment(np.random.default_rng(0), env_config)


def test_environment_file(tmp_path):
    env = _env([(5.0, 0.5, 1.0)])
    path = str(tmp_path / "env.json")
    save_environment(env, path)
    loaded = load_environment(path)
    assert environment_hash(loaded) == environment_hash(env)
    assert loaded.seed == 3
    with pytest.raises(FileNotFoundError):
        load_environment(str(tmp_path / "missing.json"))


def test_malformed_environment_document():
    with pytest.raises(ValueError):
        Environment.from_dict({"obstacles": [[1.0, 2.0]], "start": [0] * 5, "goal": [0] * 5,
                               "workspace": {"p_min": [0, 0], "p_max": [1, 1]}})
    with pytest.raises(ValueError):
        Environment.from_dict({"obstacles": [], "start": [0] * 3, "goal": [0] * 5,
                               "workspace": {"p_min": [0, 0], "p_max": [1, 1]}})


def _rotate_about(points, pivot, angle):
    rotation = np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]])
    return (np.asarray(points) - pivot) @ rotation.T + pivot


def test_is_blocked_agrees_with_dense_segment_sampling():
    rng = np.random.default_rng(11)
    resolution = 0.01
    checked = 0
    for _ in range(10000):
        centers, radii = rng.uniform(0.0, 10.0, (3, 2)), rng.uniform(0.2, 1.5, 3)
        start, goal = rng.uniform(0.0, 10.0, 2), rng.uniform(0.0, 10.0, 2)
        env = _env([(cx, cy, r) for (cx, cy), r in zip(centers, radii)], (*start, 0.0), (*goal, 0.0))
        num = int(np.ceil(np.linalg.norm(goal - start) / resolution)) + 2
        samples = np.linspace(start, goal, num)
        gaps = np.min(np.linalg.norm(samples[:, None] - centers, axis=-1), axis=0) - (radii + 0.2)
        # sampled distances overestimate the segment distance by at most half a sample spacing
        if np.any(np.abs(gaps) < resolution):
            continue
        checked += 1
        assert is_blocked(env) == bool(np.any(gaps < 0.0))
    assert checked > 9000


def test_scan_rotates_with_obstacles():
    rng = np.random.default_rng(12)
    spacing = 2.0 * np.pi / 64
    for _ in range(200):
        pose = vehicle_state(*rng.uniform(-5.0, 5.0, 2), rng.uniform(-np.pi, np.pi))
        centers = pose[:2] + rng.uniform(-8.0, 8.0, (4, 2))
        radii = rng.uniform(0.3, 1.5, 4)
        scan = raycast_scan(_env([(cx, cy, r) for (cx, cy), r in zip(centers, radii)]), pose)
        k = int(rng.integers(1, 64))
        moved = _rotate_about(centers, pose[:2], k * spacing)
        rotated = raycast_scan(_env([(cx, cy, r) for (cx, cy), r in zip(moved, radii)]), pose)
        np.testing.assert_allclose(rotated, np.roll(scan, k), atol=1e-6)
        np.testing.assert_allclose(np.sort(rotated), np.sort(scan), atol=1e-6)


def test_scan_is_invariant_to_rotating_world_and_heading():
    rng = np.random.default_rng(13)
    for _ in range(200):
        pose = vehicle_state(*rng.uniform(-5.0, 5.0, 2), rng.uniform(-np.pi, np.pi))
        centers = pose[:2] + rng.uniform(-8.0, 8.0, (4, 2))
        radii = rng.uniform(0.3, 1.5, 4)
        scan = raycast_scan(_env([(cx, cy, r) for (cx, cy), r in zip(centers, radii)]), pose)
        angle = rng.uniform(-np.pi, np.pi)
        moved = _rotate_about(centers, pose[:2], angle)
        turned = pose.copy()
        turned[2] += angle
        np.testing.assert_allclose(raycast_scan(_env([(cx, cy, r) for (cx, cy), r in zip(moved, radii)]), turned),
                                   scan, atol=1e-6)


def test_check_constraint_is_monotone_in_radius():
    rng = np.random.default_rng(14)
    states = np.column_stack([rng.uniform(0.0, 5.0, (2000, 2)), np.zeros(2000), rng.uniform(0.0, 2.0, 2000),
                              np.zeros(2000)])
    points = rng.uniform(0.0, 5.0, (15, 2))
    radii = np.sort(rng.uniform(0.01, 1.0, 10))
    flags = np.stack([check_constraint(states, points, robot_radius=r) for r in radii])
    assert np.any(flags[0] != flags[-1])
    assert np.all(flags[1:] >= flags[:-1])
