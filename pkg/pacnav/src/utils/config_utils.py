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
# \file       config_utils.py
# \brief      Helpers to read the YAML configuration used by all PACnav entry points.
#               The packaged default lives in pacnav/config/pacnav_config.yml.
#               User files only need to list the fields they change, they are merged over the default.
#
# \author     PACnav contributors
# \date       2026
#

import os
import copy
import json
import hashlib

import yaml

import pacnav

NUM_WORKERS_ENV = "PACNAV_NUM_WORKERS"

# environment presets, "hardware" mirrors the motion capture arena protocol
ENVIRONMENT_PRESETS = {
    "simulation": {},
    "hardware": {
        "p_min": [0.0, 0.0],
        "p_max": [8.0, 6.0],
        "num_obstacles": [1, 8],
        "no_overlap": True,
    },
}


def default_config_file():
    return os.path.join(*[os.path.dirname(pacnav.__file__), "config", "pacnav_config.yml"])


def _read_yaml(config_file):
    if not os.path.isfile(config_file):
        raise FileNotFoundError('Expected config file: {} not found'.format(config_file))
    with open(config_file) as f:
        config = yaml.load(f, Loader=yaml.FullLoader)
    return config if config is not None else {}


def merge_config(base, update):
    """
    Recursively merge the dictionary `update` into a copy of `base`.
    Args:
        base: dict, default configuration
        update: dict, partial configuration, its leaves win
    Returns:
        merged: dict, new dictionary (inputs are not modified)
    """
    merged = copy.deepcopy(base)
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = merge_config(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def apply_environment_preset(config_info):
    env_config = config_info['environment']
    preset = env_config.get('preset', 'simulation')
    if preset not in ENVIRONMENT_PRESETS:
        raise ValueError("Unrecognized environment preset: {}".format(preset))
    config_info['environment'] = merge_config(env_config, ENVIRONMENT_PRESETS[preset])
    return config_info


def load_config(config_file=None):
    """
    Read the default configuration and merge the optional user file over it.
    Args:
        config_file: str or None, path to a YAML file. If None, only the packaged default is used.
    Returns:
        config_info: dict, sections device, dynamics, lidar, environment, cost, td3, pac, benchmark, output, log
    """
    config_info = _read_yaml(default_config_file())
    if config_file is not None:
        config_info = merge_config(config_info, _read_yaml(config_file))
    return apply_environment_preset(config_info)


def config_hash(config_info):
    """SHA-256 of the canonical JSON dump of the configuration."""
    canonical = json.dumps(config_info, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def num_workers(config_info):
    if os.environ.get(NUM_WORKERS_ENV):
        return max(1, int(os.environ[NUM_WORKERS_ENV]))
    return max(1, int(config_info['device'].get('num_workers', 1)))
