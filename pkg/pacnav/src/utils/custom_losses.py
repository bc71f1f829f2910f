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
# \file       custom_losses.py
# \brief      contains the loss functions used to train the TD3 actor and twin critics
#
# \author     PACnav contributors
# \date       2026

import torch
import torch.nn as nn


def td3_target(rewards: torch.Tensor, dones: torch.Tensor, q1_next: torch.Tensor, q2_next: torch.Tensor,
               gamma_d: float) -> torch.Tensor:
    """
    Clipped double-Q target y = r + gamma_d * (1 - done) * min(Q'_1, Q'_2).
    Args:
        rewards, dones, q1_next, q2_next: tensors of shape [B]; dones is 1.0 for MDP-terminal transitions
        gamma_d: discount factor
    """
    return rewards + gamma_d * (1.0 - dones) * torch.min(q1_next, q2_next)


class TwinCriticLoss(nn.Module):
    """
    Sum of the mean squared errors of both critics against the shared target.
    """
    def __init__(self):
        super().__init__()
        self.mse = nn.MSELoss()

    def forward(self, q1: torch.Tensor, q2: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
        """
        Args:
            q1, q2: critic predictions, shape [B]
            target: TD target, shape [B], no gradient flows into it
        """
        target = target.detach()
        return self.mse(q1, target) + self.mse(q2, target)


class DeterministicPolicyLoss(nn.Module):
    """
    Actor loss -E[Q_1(s, pi(s))]: minimizing it ascends the first critic along the policy.
    """
    def forward(self, q1_pi: torch.Tensor) -> torch.Tensor:
        return -q1_pi.mean()
