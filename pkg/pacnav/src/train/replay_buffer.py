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
# \file       replay_buffer.py
# \brief      Ring buffer of MDP transitions with uniform sampling.
#
# \author     PACnav contributors
# \date       2026
#

from dataclasses import dataclass

import numpy as np


@dataclass
class TransitionSample:
    s: np.ndarray
    a: np.ndarray
    r: float
    s_next: np.ndarray
    done: bool


class ReplayBuffer:
    """
    Fixed-capacity ring buffer; the oldest transition is overwritten when full.
    States are stored in float32 to keep a 10^6 buffer in memory.
    """

    def __init__(self, capacity, state_dim, action_dim):
        self.capacity = int(capacity)
        self.states = np.zeros((self.capacity, state_dim), dtype=np.float32)
        self.actions = np.zeros((self.capacity, action_dim), dtype=np.float32)
        self.rewards = np.zeros(self.capacity, dtype=np.float64)
        self.next_states = np.zeros((self.capacity, state_dim), dtype=np.float32)
        self.dones = np.zeros(self.capacity, dtype=np.float64)
        self.position = 0
        self.size = 0

    def __len__(self):
        return self.size

    def add(self, transition: TransitionSample):
        i = self.position
        self.states[i] = transition.s
        self.actions[i] = transition.a
        self.rewards[i] = transition.r
        self.next_states[i] = transition.s_next
        self.dones[i] = float(transition.done)
        self.position = (self.position + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample_indices(self, rng, batch_size):
        if self.size == 0:
            raise ValueError("Cannot sample from an empty replay buffer")
        return rng.integers(0, self.size, size=batch_size)

    def sample(self, rng, batch_size):
        """
        Returns:
            dict of float64 arrays: s, a, r, s_next, done
        """
        idx = self.sample_indices(rng, batch_size)
        return {
            "s": self.states[idx].astype(np.float64),
            "a": self.actions[idx].astype(np.float64),
            "r": self.rewards[idx],
            "s_next": self.next_states[idx].astype(np.float64),
            "done": self.dones[idx],
        }
