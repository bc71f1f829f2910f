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
# \file       pac_bounds.py
# \brief      contains the surrogate distribution over policy parameters, the archive of sampled
#               parameters and costs, the order-2 Renyi divergence between diagonal Gaussians and the
#               high-confidence upper bounds on expected cost and on the probability of constraint violation.
#
#               For an archive of L iterations with M samples each, sampled from nu_0 .. nu_{L-1}:
#                   J+ = J_hat + alpha d + ln(1/delta) / (alpha L M)
#                   J_hat = 1/(LM) sum_ij p(xi_ij | nu) / p(xi_ij | nu_i) J_ij
#                   d = 1/(2L) sum_i b_i^2 exp(D2(nu || nu_i))
#               The cost bound is computed on costs normalized by w and rescaled by w afterwards.
#
# \author     PACnav contributors
# \date       2026
#

import math
import logging
from dataclasses import dataclass, asdict, field
from typing import List, Optional, Tuple

import numpy as np
import torch
from scipy.stats import norm

logger = logging.getLogger(__name__)

DTYPE = torch.float64


class InfeasibleDivergenceError(ValueError):
    """The order-2 Renyi divergence is infinite: 2 sigma_old^2 - sigma_new^2 <= 0 in some dimension."""


@dataclass
class SurrogateHyperparams:
    """
    Diagonal Gaussian p(xi | nu) over the flattened nominal controls.
    """
    mean: np.ndarray
    log_var: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64).reshape(-1)
        self.log_var = np.asarray(self.log_var, dtype=np.float64).reshape(-1)
        if self.mean.shape != self.log_var.shape:
            raise ValueError("mean and log_var must have the same shape, got {} and {}".format(
                self.mean.shape, self.log_var.shape))
        if not (np.all(np.isfinite(self.mean)) and np.all(np.isfinite(self.log_var))):
            raise ValueError("Surrogate hyperparameters must be finite")

    @classmethod
    def isotropic(cls, mean, variance):
        mean = np.asarray(mean, dtype=np.float64).reshape(-1)
        return cls(mean, np.full(mean.shape, math.log(variance)))

    @property
    def dim(self):
        return self.mean.shape[0]

    @property
    def variance(self):
        return np.exp(self.log_var)

    def sample(self, rng: np.random.Generator, num_samples: int) -> np.ndarray:
        return self.mean + np.sqrt(self.variance) * rng.standard_normal((num_samples, self.dim))

    def log_prob(self, xi) -> np.ndarray:
        return norm.logpdf(np.asarray(xi, dtype=np.float64), self.mean, np.sqrt(self.variance)).sum(axis=-1)

    def tensors(self):
        return torch.as_tensor(self.mean, dtype=DTYPE), torch.as_tensor(self.log_var, dtype=DTYPE)

    def summary(self):
        var = self.variance
        return {"mean_norm": float(np.linalg.norm(self.mean)), "var_min": float(var.min()),
                "var_max": float(var.max()), "var_mean": float(var.mean())}


def log_prob_torch(xi: torch.Tensor, mean: torch.Tensor, log_var: torch.Tensor) -> torch.Tensor:
    return torch.distributions.Normal(mean, torch.exp(0.5 * log_var)).log_prob(xi).sum(dim=-1)


def renyi2_divergence(mean_new: torch.Tensor, log_var_new: torch.Tensor,
                      mean_old: torch.Tensor, log_var_old: torch.Tensor) -> torch.Tensor:
    """
    D2(N(mean_new, var_new) || N(mean_old, var_old)) for diagonal Gaussians, summed over the last axis:
        sum_d (mu - mu')^2 / s2 - 1/2 ln(s2 var_new / var_old^2),   s2 = 2 var_old - var_new
    Raises:
        InfeasibleDivergenceError: s2 <= 0 in some dimension
    """
    var_new, var_old = torch.exp(log_var_new), torch.exp(log_var_old)
    var_star = 2.0 * var_old - var_new
    if torch.any(var_star <= 0):
        raise InfeasibleDivergenceError("Renyi divergence is infinite: 2 var_old - var_new has minimum {:.3e}".format(
            var_star.min().item()))
    delta = mean_new - mean_old
    return torch.sum(delta ** 2 / var_star
                     - 0.5 * (torch.log(var_star) + log_var_new - 2.0 * log_var_old), dim=-1)


def renyi2_diag_gauss(nu_new: SurrogateHyperparams, nu_old: SurrogateHyperparams) -> float:
    return float(renyi2_divergence(*nu_new.tensors(), *nu_old.tensors()))


def optimal_alpha(d, num_iterations, num_samples, delta, alpha_range=None):
    """
    argmin_alpha alpha d + ln(1/delta) / (alpha L M) = sqrt(ln(1/delta) / (L M d)),
    projected onto alpha_range when given (the objective is convex in alpha).
    Without the projection the optimized bound does not depend on the normalization w; the clip onto
    alpha_range is what lets w change J+.
    """
    alpha = math.sqrt(math.log(1.0 / delta) / (num_iterations * num_samples * float(d)))
    if alpha_range is not None:
        alpha = min(max(alpha, float(alpha_range[0])), float(alpha_range[1]))
    return alpha


def robust_bound(estimate, d, alpha, num_iterations, num_samples, delta):
    """estimate + alpha d + ln(1/delta) / (alpha L M), for floats or tensors."""
    return estimate + alpha * d + math.log(1.0 / delta) / (alpha * num_iterations * num_samples)


@dataclass
class ArchiveIteration:
    nu: SurrogateHyperparams
    xi: np.ndarray
    costs: np.ndarray
    violations: np.ndarray


class SampleArchive:
    """
    Sampled parameters, raw costs and constraint indicators of the iterations of one planning interval.
    Costs are shifted by the archive-wide minimum raw cost plus eps so that every shifted cost is > 0.
    """

    def __init__(self, eps=1e-3):
        self.eps = float(eps)
        self.iterations: List[ArchiveIteration] = []
        self.min_cost = math.inf

    def __len__(self):
        return len(self.iterations)

    def append(self, nu: SurrogateHyperparams, xi, costs, violations):
        xi = np.asarray(xi, dtype=np.float64)
        costs = np.asarray(costs, dtype=np.float64).reshape(-1)
        violations = np.asarray(violations, dtype=np.float64).reshape(-1)
        if xi.shape[0] != costs.shape[0] or costs.shape != violations.shape:
            raise ValueError("Expected one cost and one violation flag per sample, got {}, {}, {}".format(
                xi.shape[0], costs.shape[0], violations.shape[0]))
        if self.iterations and xi.shape[0] != self.num_samples:
            raise ValueError("Every iteration must hold {} samples, got {}".format(self.num_samples, xi.shape[0]))
        if not np.all(np.isfinite(costs)):
            raise ValueError("Sampled costs must be finite")
        self.iterations.append(ArchiveIteration(nu, xi, costs, violations))
        self.min_cost = min(self.min_cost, float(costs.min()))

    @property
    def num_iterations(self):
        return len(self.iterations)

    @property
    def num_samples(self):
        return self.iterations[0].xi.shape[0]

    @property
    def shift(self):
        """Amount added to raw costs: -min raw cost + eps."""
        return self.eps - self.min_cost

    def raw_costs(self):
        return np.stack([it.costs for it in self.iterations])

    def shifted_costs(self):
        return self.raw_costs() + self.shift

    def cost_bounds(self):
        return self.shifted_costs().max(axis=-1)

    def mean_cost(self):
        """Normalization constant w: mean shifted cost over the archive."""
        return float(self.shifted_costs().mean())

    def violations(self):
        return np.stack([it.violations for it in self.iterations])


class PacBound:
    """
    Differentiable bounds over an archive as functions of the surrogate hyperparameters (mean, log_var).

    Args:
        archive: SampleArchive, nonempty
        delta: confidence parameter
        w: normalization constant for the cost bound (None: 1.0)
        alpha_range: (alpha_min, alpha_max) or None
    """

    def __init__(self, archive: SampleArchive, delta=0.05, w=None, alpha_range=None):
        if len(archive) == 0:
            raise ValueError("Cannot bound an empty archive")
        self.w = 1.0 if w is None else float(w)
        if not self.w > 0:
            raise ValueError("Normalization constant must be > 0, got {}".format(self.w))
        self.delta = float(delta)
        self.alpha_range = alpha_range
        self.L = archive.num_iterations
        self.M = archive.num_samples
        self.costs = torch.as_tensor(archive.shifted_costs() / self.w, dtype=DTYPE)
        self.cost_bounds = torch.as_tensor(archive.cost_bounds() / self.w, dtype=DTYPE)
        self.violations = torch.as_tensor(archive.violations(), dtype=DTYPE)
        self.xi = torch.as_tensor(np.stack([it.xi for it in archive.iterations]), dtype=DTYPE)
        self.old_mean = torch.as_tensor(np.stack([it.nu.mean for it in archive.iterations]), dtype=DTYPE)
        self.old_log_var = torch.as_tensor(np.stack([it.nu.log_var for it in archive.iterations]), dtype=DTYPE)
        self.log_q = log_prob_torch(self.xi, self.old_mean[:, None, :], self.old_log_var[:, None, :])

    def log_weights(self, mean, log_var):
        return log_prob_torch(self.xi, mean, log_var) - self.log_q

    def divergences(self, mean, log_var):
        return renyi2_divergence(mean, log_var, self.old_mean, self.old_log_var)

    def _bound(self, values, bounds, mean, log_var):
        weights = torch.exp(self.log_weights(mean, log_var))
        estimate = torch.mean(weights * values)
        d = torch.sum(bounds ** 2 * torch.exp(self.divergences(mean, log_var))) / (2.0 * self.L)
        alpha = optimal_alpha(d.item(), self.L, self.M, self.delta, self.alpha_range)
        return robust_bound(estimate, d, alpha, self.L, self.M, self.delta), alpha

    def cost_bound(self, mean, log_var) -> Tuple[torch.Tensor, float]:
        """J+ in shifted cost units: w J+(costs / w)."""
        bound, alpha = self._bound(self.costs, self.cost_bounds, mean, log_var)
        return self.w * bound, alpha

    def constraint_bound(self, mean, log_var) -> Tuple[torch.Tensor, float]:
        """Unclamped C+ with b_i = 1."""
        return self._bound(self.violations, torch.ones(self.L, dtype=DTYPE), mean, log_var)


def pac_cost_bound(archive: SampleArchive, nu: SurrogateHyperparams, w=1.0, delta=0.05, alpha_range=None):
    """
    Returns:
        (J+ in shifted cost units, alpha*)
    Raises:
        InfeasibleDivergenceError
    """
    bound, alpha = PacBound(archive, delta, w, alpha_range).cost_bound(*nu.tensors())
    return float(bound), alpha


def pac_constraint_bound(archive: SampleArchive, nu: SurrogateHyperparams, delta=0.05, alpha_range=None):
    """
    Returns:
        (C+ clamped to [0, 1], alpha*)
    """
    bound, alpha = PacBound(archive, delta, None, alpha_range).constraint_bound(*nu.tensors())
    return min(max(float(bound), 0.0), 1.0), alpha


@dataclass
class PacBoundReport:
    jplus: float
    cplus: float
    alpha_cost: float
    alpha_constraint: float
    w: float
    shift: float
    delta: float
    mc_cost: Optional[float] = None
    mc_violation: Optional[float] = None
    surrogate: dict = field(default_factory=dict)

    @property
    def jplus_raw(self):
        """J+ in the units of the unshifted trajectory cost."""
        return self.jplus - self.shift

    def to_dict(self):
        return asdict(self)
