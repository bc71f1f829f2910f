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
# \file       vehicle_dynamics.py
# \brief      Stochastic and nominal kinematic bicycle model with acceleration and steering rate inputs,
#               analytic linearization and time-varying LQR gains used to track nominal trajectories.
#               All functions accept arrays with arbitrary leading batch dimensions: a state is
#               [..., 5] = [x, y, theta, v, steer] and a control is [..., 2] = [accel, steer_rate].
#
# \author     PACnav contributors
# \date       2026
#

import logging
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)

STATE_DIM = 5
CONTROL_DIM = 2
X, Y, THETA, V, STEER = range(STATE_DIM)
ACCEL, STEER_RATE = range(CONTROL_DIM)

WHEELBASE = 0.33
STEER_LIMIT = 0.4
ACCEL_LIMIT = 1.0
STEER_RATE_LIMIT = 1.0

SIMULATION_GAMMA = (0.0004, 0.0004, 0.0116, 0.1004, 0.0056)
HARDWARE_GAMMA = (0.001, 0.001, 0.014, 0.079, 0.006)

# condition number above which the Riccati input Hessian is reported as singular
MAX_CONDITION = 1e12


def vehicle_state(x=0.0, y=0.0, theta=0.0, v=0.0, steer=0.0):
    return np.array([x, y, theta, v, steer], dtype=np.float64)


def control_input(accel=0.0, steer_rate=0.0):
    return np.array([accel, steer_rate], dtype=np.float64)


def wrap_angle(angle):
    """Wrap angles to (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(angle, dtype=np.float64), 2.0 * np.pi)


@dataclass(frozen=True)
class NoiseModel:
    """
    Additive Gaussian noise on the state derivative, omega ~ N(0, diag(gamma_diag)).
    """
    gamma_diag: np.ndarray

    def __post_init__(self):
        gamma = np.asarray(self.gamma_diag, dtype=np.float64).reshape(-1)
        if gamma.shape != (STATE_DIM,):
            raise ValueError("gamma_diag must have {} entries, got {}".format(STATE_DIM, gamma.shape))
        if np.any(gamma < 0) or not np.all(np.isfinite(gamma)):
            raise ValueError("gamma_diag entries must be finite and >= 0, got {}".format(gamma))
        object.__setattr__(self, "gamma_diag", gamma)

    @classmethod
    def simulation(cls):
        return cls(np.array(SIMULATION_GAMMA))

    @classmethod
    def hardware(cls):
        return cls(np.array(HARDWARE_GAMMA))

    @classmethod
    def zero(cls):
        return cls(np.zeros(STATE_DIM))

    @classmethod
    def from_config(cls, dynamics_config):
        if dynamics_config.get('gamma_diag') is not None:
            return cls(np.array(dynamics_config['gamma_diag'], dtype=np.float64))
        presets = {"simulation": cls.simulation, "hardware": cls.hardware, "zero": cls.zero}
        name = dynamics_config.get('noise_model', 'simulation')
        if name not in presets:
            raise ValueError("Unrecognized noise model: {}".format(name))
        return presets[name]()

    def sample(self, rng, batch_shape, variance_scale=1.0):
        std = np.sqrt(self.gamma_diag * variance_scale)
        return rng.standard_normal(tuple(batch_shape) + (STATE_DIM,)) * std


@dataclass
class Trajectory:
    """
    states: [..., N + 1, 5], controls: [..., N, 2], dt: spacing of the samples in s.
    """
    states: np.ndarray
    controls: np.ndarray
    dt: float

    def __post_init__(self):
        if self.states.shape[-2] != self.controls.shape[-2] + 1:
            raise ValueError("Trajectory needs len(states) == len(controls) + 1, got {} and {}".format(
                self.states.shape[-2], self.controls.shape[-2]))

    @property
    def num_steps(self):
        return self.controls.shape[-2]


@dataclass
class FeedbackPolicy:
    """
    u_t = K_t (x_t^d - x_t) + u_t^d, tracked at `substeps` closed-loop updates per planning step.
    gains: [..., N, 2, 5]
    """
    nominal: Trajectory
    gains: np.ndarray
    substeps: int = 1

    def __post_init__(self):
        if self.gains.shape[-3] != self.nominal.num_steps:
            raise ValueError("One gain matrix per control step is required, got {} gains for {} steps".format(
                self.gains.shape[-3], self.nominal.num_steps))
        if not np.all(np.isfinite(self.gains)):
            raise ValueError("Feedback gains must be finite")
        if self.substeps < 1:
            raise ValueError("substeps must be >= 1")


def clamp_controls(control, accel_limit=ACCEL_LIMIT, steer_rate_limit=STEER_RATE_LIMIT):
    bound = np.array([accel_limit, steer_rate_limit])
    return np.clip(control, -bound, bound)


def dynamics_deriv(state, control, wheelbase=WHEELBASE):
    """
    Continuous-time bicycle model f(x, u) = [v cos(theta), v sin(theta), v tan(steer) / L, accel, steer_rate].
    """
    if wheelbase <= 0:
        raise ValueError("wheelbase must be > 0, got {}".format(wheelbase))
    state = np.asarray(state, dtype=np.float64)
    control = np.asarray(control, dtype=np.float64)
    theta, v, steer = state[..., THETA], state[..., V], state[..., STEER]
    theta, v, steer, accel, steer_rate = np.broadcast_arrays(theta, v, steer,
                                                             control[..., ACCEL], control[..., STEER_RATE])
    return np.stack([v * np.cos(theta),
                     v * np.sin(theta),
                     v * np.tan(steer) / wheelbase,
                     accel,
                     steer_rate], axis=-1)


def _euler(state, control, omega, dt, wheelbase, steer_limit):
    next_state = state + (dynamics_deriv(state, control, wheelbase) + omega) * dt
    next_state[..., STEER] = np.clip(next_state[..., STEER], -steer_limit, steer_limit)
    return next_state


def step_stochastic(state, control, noise, rng, dt, wheelbase=WHEELBASE, reference_dt=None,
                    steer_limit=STEER_LIMIT):
    """
    One explicit Euler step of the stochastic model x' = x + (f(x, u) + omega) dt.
    Args:
        state: [..., 5] array
        control: [..., 2] array, clamped to the input bounds before use
        noise: NoiseModel
        rng: numpy Generator
        dt: float, step length in s
        wheelbase: float, L in m
        reference_dt: float or None. When given, the noise variance is scaled by reference_dt / dt so that
            the accumulated diffusion over reference_dt matches one step taken at reference_dt.
        steer_limit: float, actuator clamp on the steering angle
    Returns:
        next_state: [..., 5] array
    """
    if dt <= 0:
        raise ValueError("dt must be > 0, got {}".format(dt))
    state = np.asarray(state, dtype=np.float64)
    control = clamp_controls(np.asarray(control, dtype=np.float64))
    batch_shape = np.broadcast_shapes(state.shape[:-1], control.shape[:-1])
    variance_scale = 1.0 if reference_dt is None else reference_dt / dt
    omega = noise.sample(rng, batch_shape, variance_scale)
    return _euler(state, control, omega, dt, wheelbase, steer_limit)


def step_nominal(state, control, dt, wheelbase=WHEELBASE, steer_limit=STEER_LIMIT):
    if dt <= 0:
        raise ValueError("dt must be > 0, got {}".format(dt))
    state = np.asarray(state, dtype=np.float64)
    control = clamp_controls(np.asarray(control, dtype=np.float64))
    return _euler(state, control, 0.0, dt, wheelbase, steer_limit)


def linearize(state, control, wheelbase=WHEELBASE, dt=0.1):
    """
    Discrete Jacobians of the nominal Euler step, A = I + dt df/dx and B = dt df/du.
    Returns:
        A: [..., 5, 5], B: [..., 5, 2]
    """
    state = np.asarray(state, dtype=np.float64)
    control = np.asarray(control, dtype=np.float64)
    batch_shape = np.broadcast_shapes(state.shape[:-1], control.shape[:-1])
    state = np.broadcast_to(state, batch_shape + (STATE_DIM,))
    theta, v, steer = state[..., THETA], state[..., V], state[..., STEER]

    jac_x = np.zeros(batch_shape + (STATE_DIM, STATE_DIM))
    jac_x[..., X, THETA] = -v * np.sin(theta)
    jac_x[..., X, V] = np.cos(theta)
    jac_x[..., Y, THETA] = v * np.cos(theta)
    jac_x[..., Y, V] = np.sin(theta)
    jac_x[..., THETA, V] = np.tan(steer) / wheelbase
    jac_x[..., THETA, STEER] = v / (wheelbase * np.cos(steer) ** 2)

    A = np.eye(STATE_DIM) + dt * jac_x
    B = np.zeros(batch_shape + (STATE_DIM, CONTROL_DIM))
    B[..., V, ACCEL] = dt
    B[..., STEER, STEER_RATE] = dt
    return A, B


def riccati_gains(A, B, Q, R, Qf, return_cost_to_go=False):
    """
    Backward Riccati recursion of the finite horizon discrete LQR,
    K_t = (R + B^T P_{t+1} B)^-1 B^T P_{t+1} A, with P_N = Qf.
    Args:
        A: [..., N, 5, 5] linearized state matrices
        B: [..., N, 5, 2] linearized input matrices
        Q, R, Qf: weight matrices
        return_cost_to_go: bool, also return the P_t sequence [..., N + 1, 5, 5]
    Returns:
        gains: [..., N, 2, 5] (and P if requested)
    Raises:
        LinAlgError: R is not positive definite or R + B^T P B is ill-conditioned
    """
    try:
        np.linalg.cholesky(R)
    except np.linalg.LinAlgError:
        raise np.linalg.LinAlgError("R_lqr must be positive definite, got {}".format(R))

    horizon = A.shape[-3]
    batch_shape = A.shape[:-3]
    gains = np.zeros(batch_shape + (horizon, CONTROL_DIM, A.shape[-1]))
    P = np.broadcast_to(Qf, batch_shape + Qf.shape).copy()
    cost_to_go = [P]
    for t in reversed(range(horizon)):
        A_t, B_t = A[..., t, :, :], B[..., t, :, :]
        Bt_P = np.swapaxes(B_t, -1, -2) @ P
        S = R + Bt_P @ B_t
        if np.any(np.linalg.cond(S) > MAX_CONDITION):
            raise np.linalg.LinAlgError("Riccati input Hessian is ill-conditioned at step {}".format(t))
        K = np.linalg.solve(S, Bt_P @ A_t)
        A_cl = A_t - B_t @ K
        # Joseph form keeps P symmetric positive semidefinite
        P = Q + np.swapaxes(K, -1, -2) @ R @ K + np.swapaxes(A_cl, -1, -2) @ P @ A_cl
        gains[..., t, :, :] = K
        cost_to_go.append(P)
    if return_cost_to_go:
        return gains, np.stack(cost_to_go[::-1], axis=-3)
    return gains


def tvlqr_gains(nominal, Q_lqr, R_lqr, Qf_lqr, wheelbase=WHEELBASE, return_cost_to_go=False):
    """TVLQR gains along the linearization of `nominal`."""
    A, B = linearize(nominal.states[..., :-1, :], nominal.controls, wheelbase, nominal.dt)
    return riccati_gains(A, B, np.asarray(Q_lqr), np.asarray(R_lqr), np.asarray(Qf_lqr),
                         return_cost_to_go=return_cost_to_go)


def rollout_nominal(initial, controls, dt, wheelbase=WHEELBASE):
    """
    Deterministic trajectory x_{t+1} = x_t + f(x_t, u_t) dt from `initial` under clamped `controls` [..., N, 2].
    """
    controls = clamp_controls(np.asarray(controls, dtype=np.float64))
    initial = np.asarray(initial, dtype=np.float64)
    batch_shape = np.broadcast_shapes(initial.shape[:-1], controls.shape[:-2])
    controls = np.broadcast_to(controls, batch_shape + controls.shape[-2:])
    x = np.broadcast_to(initial, batch_shape + (STATE_DIM,)).copy()
    states = [x]
    for t in range(controls.shape[-2]):
        x = step_nominal(x, controls[..., t, :], dt, wheelbase)
        states.append(x)
    return Trajectory(np.stack(states, axis=-2), controls, dt)


def execute_policy(policy, initial, noise, rng, wheelbase=WHEELBASE, num_steps=None):
    """
    Closed-loop simulation of a feedback policy at `policy.substeps` updates per planning step.
    Nominal states and controls are interpolated linearly between knots, gains are held over each step.
    Noise variance is scaled so that the diffusion per planning step does not depend on the substep rate.
    Args:
        num_steps: int or None, number of planning steps to execute (default: the full horizon)
    Returns:
        Trajectory sampled at dt / substeps
    """
    nominal = policy.nominal
    horizon = nominal.num_steps
    num_steps = horizon if num_steps is None else num_steps
    substeps = policy.substeps
    h = nominal.dt / substeps

    initial = np.asarray(initial, dtype=np.float64)
    # one nominal and gain set may be shared by a batch of start states
    batch_shape = np.broadcast_shapes(initial.shape[:-1], nominal.states.shape[:-2])
    x = np.broadcast_to(initial, batch_shape + (STATE_DIM,)).copy()
    states, controls = [x], []
    for k in range(num_steps):
        x_k, x_next = nominal.states[..., k, :], nominal.states[..., k + 1, :]
        u_k = nominal.controls[..., k, :]
        u_next = nominal.controls[..., min(k + 1, horizon - 1), :]
        K = policy.gains[..., k, :, :]
        for s in range(substeps):
            frac = s / substeps
            x_d = x_k + frac * (x_next - x_k)
            u_d = u_k + frac * (u_next - u_k)
            u = clamp_controls(u_d + np.einsum('...ij,...j->...i', K, x_d - x))
            x = step_stochastic(x, u, noise, rng, h, wheelbase, reference_dt=nominal.dt)
            states.append(x)
            controls.append(u)
    return Trajectory(np.stack(states, axis=-2), np.stack(controls, axis=-2), h)


def rollout_policy(policy, initial, noise, rng, wheelbase=WHEELBASE):
    """Closed-loop rollout of the full horizon, returned at planning resolution."""
    fine = execute_policy(policy, initial, noise, rng, wheelbase)
    substeps = policy.substeps
    return Trajectory(fine.states[..., ::substeps, :], fine.controls[..., ::substeps, :], policy.nominal.dt)
