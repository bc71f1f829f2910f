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
# \file       mlp.py
# \brief      Fully connected ReLU networks with externally supplied dropout masks, used for the TD3 actor
#               and critics. Supplying a mask makes the forward pass one stochastic network hypothesis
#               (inverted dropout, kept units are divided by the keep probability); no mask gives the
#               expectation-mode network.
#               Weights are stored in a small little-endian binary format:
#                   b"MLP1" | uint32 number of layers n | uint32 dims[n + 1] |
#                   for each layer: float64 weight (out_dim x in_dim, row-major), float64 bias (out_dim)
#
# \author     PACnav contributors
# \date       2026
#

import struct
import logging
from typing import List, Optional, Sequence

import numpy as np
import torch
import torch.nn as nn

logger = logging.getLogger(__name__)

MAGIC = b"MLP1"
DTYPE = torch.float64


class DropoutMLP(nn.Module):
    """
    affine -> ReLU -> dropout(mask) for each hidden layer, then a final affine layer.
    The output activation is left to the caller (tanh for the actor, none for the critics).

    Args:
        layer_dims: sequence of ints, e.g. [69, 256, 256, 2]
        dropout_rate: float, probability of dropping a hidden unit when a mask is sampled
    """

    def __init__(self, layer_dims: Sequence[int], dropout_rate: float = 0.1) -> None:
        super().__init__()
        if len(layer_dims) < 2:
            raise ValueError("At least an input and an output dimension are required, got {}".format(layer_dims))
        if not 0.0 <= dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1), got {}".format(dropout_rate))
        self.layer_dims = [int(d) for d in layer_dims]
        self.dropout_rate = float(dropout_rate)
        self.layers = nn.ModuleList(
            [nn.Linear(d_in, d_out).to(DTYPE) for d_in, d_out in zip(self.layer_dims[:-1], self.layer_dims[1:])]
        )
        for layer in self.layers:
            bound = 1.0 / np.sqrt(layer.in_features)
            nn.init.uniform_(layer.weight, -bound, bound)
            nn.init.uniform_(layer.bias, -bound, bound)

    @property
    def keep_prob(self) -> float:
        return 1.0 - self.dropout_rate

    @property
    def hidden_dims(self) -> List[int]:
        return self.layer_dims[1:-1]

    def forward(self, x: torch.Tensor, masks: Optional[Sequence[torch.Tensor]] = None) -> torch.Tensor:
        """
        Args:
            x: [..., layer_dims[0]] input
            masks: None or one {0, 1} tensor per hidden layer, broadcastable to [..., hidden_dim]
        """
        if x.shape[-1] != self.layer_dims[0]:
            raise ValueError("Expected input dimension {}, got {}".format(self.layer_dims[0], x.shape[-1]))
        if masks is not None and len(masks) != len(self.hidden_dims):
            raise ValueError("Expected {} dropout masks, got {}".format(len(self.hidden_dims), len(masks)))
        h = x
        for i, layer in enumerate(self.layers[:-1]):
            h = torch.relu(layer(h))
            if masks is not None:
                h = h * masks[i] / self.keep_prob
        return self.layers[-1](h)


def sample_masks(net: DropoutMLP, rng: np.random.Generator, batch_shape=()) -> List[torch.Tensor]:
    """Draw one Bernoulli(keep_prob) mask per hidden layer from the numpy generator."""
    return [torch.as_tensor((rng.random(tuple(batch_shape) + (d,)) < net.keep_prob).astype(np.float64))
            for d in net.hidden_dims]


def ones_masks(net: DropoutMLP, batch_shape=()) -> List[torch.Tensor]:
    return [torch.ones(tuple(batch_shape) + (d,), dtype=DTYPE) for d in net.hidden_dims]


def backward(net: DropoutMLP, x: torch.Tensor, masks, output_grad: torch.Tensor) -> List[torch.Tensor]:
    """
    Reverse-mode gradients of <output_grad, net(x, masks)> with respect to every parameter,
    in the order of net.parameters().
    """
    x = torch.as_tensor(x, dtype=DTYPE)
    out = net(x, masks)
    if out.shape != output_grad.shape:
        raise ValueError("Output gradient shape {} does not match output shape {}".format(
            tuple(output_grad.shape), tuple(out.shape)))
    return list(torch.autograd.grad(out, list(net.parameters()), grad_outputs=output_grad, allow_unused=False))


def make_optimizer(net: nn.Module, lr: float) -> torch.optim.Adam:
    return torch.optim.Adam(net.parameters(), lr=lr, betas=(0.9, 0.999), eps=1e-8)


def adam_step(net: nn.Module, grads: Sequence[torch.Tensor], optimizer: torch.optim.Adam,
              lr: Optional[float] = None) -> nn.Module:
    """
    Apply one Adam update with externally computed gradients.
    """
    if lr is not None:
        for group in optimizer.param_groups:
            group['lr'] = lr
    optimizer.zero_grad()
    for param, grad in zip(net.parameters(), grads):
        param.grad = grad.detach().clone()
    optimizer.step()
    return net


def save_weights(net: DropoutMLP, path) -> None:
    dims = net.layer_dims
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(dims) - 1))
        f.write(struct.pack("<{}I".format(len(dims)), *dims))
        for layer in net.layers:
            f.write(layer.weight.detach().cpu().numpy().astype("<f8").tobytes(order="C"))
            f.write(layer.bias.detach().cpu().numpy().astype("<f8").tobytes(order="C"))


def read_weights(path):
    """
    Parse a weight file.
    Returns:
        dims: list of ints, weights: list of [out, in] arrays, biases: list of [out] arrays
    Raises:
        ValueError: bad magic, truncated or oversized file
    """
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != MAGIC:
        raise ValueError("{} is not a weight file (bad magic {!r})".format(path, blob[:4]))
    offset = 4
    if len(blob) < offset + 4:
        raise ValueError("{} is truncated in the header".format(path))
    (num_layers,) = struct.unpack_from("<I", blob, offset)
    offset += 4
    if num_layers < 1 or len(blob) < offset + 4 * (num_layers + 1):
        raise ValueError("{} is truncated in the header".format(path))
    dims = list(struct.unpack_from("<{}I".format(num_layers + 1), blob, offset))
    offset += 4 * (num_layers + 1)

    expected = offset + 8 * sum(d_out * d_in + d_out for d_in, d_out in zip(dims[:-1], dims[1:]))
    if len(blob) != expected:
        raise ValueError("{} has {} bytes, the header announces {}".format(path, len(blob), expected))
    weights, biases = [], []
    for d_in, d_out in zip(dims[:-1], dims[1:]):
        w = np.frombuffer(blob, dtype="<f8", count=d_out * d_in, offset=offset).reshape(d_out, d_in)
        offset += 8 * d_out * d_in
        b = np.frombuffer(blob, dtype="<f8", count=d_out, offset=offset)
        offset += 8 * d_out
        weights.append(w.copy())
        biases.append(b.copy())
    return dims, weights, biases


def load_weights(path, net: Optional[DropoutMLP] = None, dropout_rate: float = 0.1) -> DropoutMLP:
    """
    Load a weight file into `net` (dimensions must match) or into a new network.
    """
    dims, weights, biases = read_weights(path)
    if net is None:
        net = DropoutMLP(dims, dropout_rate)
    elif net.layer_dims != dims:
        raise ValueError("Weight file dims {} do not match network dims {}".format(dims, net.layer_dims))
    with torch.no_grad():
        for layer, w, b in zip(net.layers, weights, biases):
            layer.weight.copy_(torch.from_numpy(w))
            layer.bias.copy_(torch.from_numpy(b))
    return net
