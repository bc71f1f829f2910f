import numpy as np
import pytest
import torch
import yaml

from pacnav.src.networks.mlp import DropoutMLP
from pacnav.src.utils.config_utils import load_config, merge_config
from pacnav.src.utils.custom_inferer import ValueFunction
from pacnav.src.utils.custom_transform import MdpStateTransform, ActionScaler

FAST_OVERRIDES = {
    "pac": {"num_samples": 32, "num_iterations": 2, "gradient_steps": 2},
    "td3": {"hidden_dims": [16, 16], "batch_size": 16, "warmup_steps": 10, "max_steps": 40,
            "buffer_capacity": 1000, "checkpoint_every": 1000, "plateau_window": 5},
    "environment": {"num_obstacles": [20, 30]},
    "benchmark": {"timeout": 0.4, "num_environments": 2, "calibration_environments": 1},
}


@pytest.fixture
def config_info():
    return load_config()


@pytest.fixture
def fast_config(config_info):
    return merge_config(config_info, FAST_OVERRIDES)


@pytest.fixture
def zero_noise_config(fast_config):
    return merge_config(fast_config, {"dynamics": {"noise_model": "zero"}})


@pytest.fixture
def fast_config_file(tmp_path):
    path = tmp_path / "fast_config.yml"
    with open(path, "w") as f:
        yaml.dump(FAST_OVERRIDES, f)
    return str(path)


def make_value_function(config_info, hidden=(8, 8), dropout_rate=0.1, constant=None, seed=0):
    """Small value function; `constant` zeroes every weight and sets the critic output bias."""
    torch.manual_seed(seed)
    state_dim = 5 + int(config_info['lidar']['num_beams'])
    actor = DropoutMLP([state_dim, *hidden, 2], dropout_rate)
    critic = DropoutMLP([state_dim + 2, *hidden, 1], dropout_rate)
    if constant is not None:
        with torch.no_grad():
            for p in list(actor.parameters()) + list(critic.parameters()):
                p.zero_()
            critic.layers[-1].bias.fill_(constant)
    return ValueFunction(actor, critic, MdpStateTransform.from_config(config_info),
                         ActionScaler.from_config(config_info))


@pytest.fixture
def zero_vf(config_info):
    return make_value_function(config_info, constant=0.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
