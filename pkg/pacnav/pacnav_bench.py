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
# \file       pacnav_bench.py
# \brief      Command line harness: train the value function, benchmark the terminal cost modes,
#               validate the bounds against Monte Carlo estimates and replay logged trials.
#               Example: python pacnav/pacnav_bench.py benchmark --checkpoint ckpt --out results
#
# \author     PACnav contributors
# \date       2026
#

import sys
import logging
import argparse

from pacnav.src.bench.benchmark import cmd_train, cmd_benchmark, cmd_validate_bounds, cmd_replay
from pacnav.src.inference.navigation_inference import MODES, LEARNED_VF


def _add_common_arguments(parser):
    parser.add_argument('--config_file', '--config',
                        dest='config_file',
                        metavar='/path/to/config_file.yml',
                        type=str,
                        help='config file merged over the packaged pacnav/config/pacnav_config.yml',
                        default=None)
    parser.add_argument('--seed',
                        dest='seed',
                        metavar='SEED',
                        type=int,
                        help='seed of every random draw (default from the config file)',
                        default=None)
    parser.add_argument('--out',
                        dest='out',
                        metavar='/path/to/out_folder',
                        type=str,
                        help='output directory (default: output.out_dir of the config file, one folder per command)',
                        default=None)


def build_parser():
    parser = argparse.ArgumentParser(description='Sampling-based stochastic NMPC with a learned terminal value.')
    subparsers = parser.add_subparsers(dest='command')
    subparsers.required = True

    train = subparsers.add_parser('train', help='train the TD3 actor and critics')
    _add_common_arguments(train)
    train.add_argument('--max_steps', '--max-steps',
                       dest='max_steps',
                       metavar='N',
                       type=int,
                       help='hard cap on environment steps (default td3.max_steps)',
                       default=None)
    train.add_argument('--wheelbase',
                       dest='wheelbase',
                       metavar='L',
                       type=float,
                       help='wheelbase of the training dynamics (model mismatch ablation)',
                       default=None)
    train.set_defaults(func=cmd_train)

    benchmark = subparsers.add_parser('benchmark', help='run the terminal cost modes on blocked environments')
    _add_common_arguments(benchmark)
    benchmark.add_argument('--checkpoint',
                           dest='checkpoint',
                           metavar='/path/to/checkpoint_dir',
                           type=str,
                           default=None)
    benchmark.add_argument('--modes',
                           dest='modes',
                           nargs='+',
                           choices=MODES,
                           default=None)
    benchmark.add_argument('--num_environments', '--num-environments',
                           dest='num_environments',
                           metavar='N',
                           type=int,
                           default=None)
    benchmark.set_defaults(func=cmd_benchmark)

    validate = subparsers.add_parser('validate-bounds', help='compare bounds with Monte Carlo estimates')
    _add_common_arguments(validate)
    validate.add_argument('--checkpoint',
                          dest='checkpoint',
                          metavar='/path/to/checkpoint_dir',
                          type=str,
                          default=None)
    validate.add_argument('--mode',
                          dest='mode',
                          choices=MODES[:2],
                          default=LEARNED_VF)
    validate.set_defaults(func=cmd_validate_bounds)

    replay = subparsers.add_parser('replay', help='re-execute a logged trial')
    _add_common_arguments(replay)
    replay.add_argument('--trial',
                        dest='trial',
                        metavar='/path/to/trials.jsonl',
                        type=str,
                        required=True)
    replay.add_argument('--index',
                        dest='index',
                        type=int,
                        help='line of the trial in the JSON lines file',
                        default=0)
    replay.add_argument('--environment',
                        dest='environment',
                        metavar='/path/to/environment.json',
                        type=str,
                        required=True)
    replay.add_argument('--checkpoint',
                        dest='checkpoint',
                        metavar='/path/to/checkpoint_dir',
                        type=str,
                        default=None)
    replay.set_defaults(func=cmd_replay)
    return parser


def main(argv=None):
    logging.basicConfig(stream=sys.stdout, level=logging.INFO)
    args = build_parser().parse_args(argv)
    print("*** Running {}".format(args.command))
    return args.func(args)


if __name__ == '__main__':
    main()
