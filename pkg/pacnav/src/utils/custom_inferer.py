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
# \file       custom_inferer.py
# \brief      contains the deployable value function reconstructed from a trained actor and critic,
#               V(x, l) = Q(s, pi(s)) with s = h(x, l). Dropout masks can be supplied per evaluation so
#               that every sampled trajectory sees one network hypothesis.
#
# \author     PACnav contributors
# \date       2026

from typing import Optional, Sequence, Tuple

import numpy as np
import torch

from pacnav.src.networks.mlp import DropoutMLP, DTYPE, sample_masks, ones_masks
from pacnav.src.utils.custom_transform import MdpStateTransform, ActionScaler

MaskPair = Tuple[Optional[Sequence[torch.Tensor]], Optional[Sequence[torch.Tensor]]]


class ValueFunction:
    """
    Actor pi(s) = tanh(actor(s)) in the normalized action box and the first critic Q(s, a).

    Args:
        actor: DropoutMLP with input dim 5 + num_beams and output dim 2
        critic: DropoutMLP with input dim 5 + num_beams + 2 and output dim 1
        transform: MdpStateTransform used to build s from (x, l, goal)
        scaler: ActionScaler between normalized actions and controls
    """

    def __init__(self, actor: DropoutMLP, critic: DropoutMLP, transform: MdpStateTransform,
                 scaler: Optional[ActionScaler] = None):
        if critic.layer_dims[0] != actor.layer_dims[0] + actor.layer_dims[-1]:
            raise ValueError("Critic input {} must equal actor input {} + actor output {}".format(
                critic.layer_dims[0], actor.layer_dims[0], actor.layer_dims[-1]))
        self.actor = actor
        self.critic = critic
        self.transform = transform
        self.scaler = scaler if scaler is not None else ActionScaler()

    def sample_masks(self, rng: np.random.Generator, batch_shape=()) -> MaskPair:
        return sample_masks(self.actor, rng, batch_shape), sample_masks(self.critic, rng, batch_shape)

    def ones_masks(self, batch_shape=()) -> MaskPair:
        return ones_masks(self.actor, batch_shape), ones_masks(self.critic, batch_shape)

    def action(self, s: torch.Tensor, actor_masks=None) -> torch.Tensor:
        return torch.tanh(self.actor(s, actor_masks))

    def value_from_mdp_state(self, s: torch.Tensor, masks: Optional[MaskPair] = None) -> torch.Tensor:
        actor_masks, critic_masks = masks if masks is not None else (None, None)
        a = self.action(s, actor_masks)
        # batched masks broadcast a single state over the mask batch
        s = s.expand(a.shape[:-1] + s.shape[-1:])
        return self.critic(torch.cat([s, a], dim=-1), critic_masks).squeeze(-1)

    def evaluate(self, states, scans, goal, masks: Optional[MaskPair] = None) -> np.ndarray:
        """
        Args:
            states: [..., 5], scans: [..., num_beams], goal: [5]
            masks: None or (actor masks, critic masks) broadcastable to the batch
        Returns:
            V: [...] array
        """
        s = torch.as_tensor(self.transform(states, scans, goal), dtype=DTYPE)
        with torch.no_grad():
            return self.value_from_mdp_state(s, masks).numpy()

    def controls(self, s) -> np.ndarray:
        """Deterministic expectation-mode actor, mapped to the control bounds."""
        with torch.no_grad():
            a = self.action(torch.as_tensor(s, dtype=DTYPE)).numpy()
        return self.scaler.to_control(a)


def evaluate_value(vf: ValueFunction, x, scan, goal, masks: Optional[MaskPair] = None):
    values = vf.evaluate(x, scan, goal, masks)
    return float(values) if np.ndim(values) == 0 else values
