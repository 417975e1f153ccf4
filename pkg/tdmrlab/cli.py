# Licensed to the Apache Software Foundation (ASF) under one
# or more contributor license agreements.  See the NOTICE file
# distributed with this work for additional information
# regarding copyright ownership.  The ASF licenses this file
# to you under the Apache License, Version 2.0 (the
# "License"); you may not use this file except in compliance
# with the License.  You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Command line front end: gen, train, eval, compare and preset verbs."""

import argparse
import importlib
import json
import logging
import os
import sys

from tdmrlab import Constants, __version__
from tdmrlab.config import ExperimentConfig
from tdmrlab.errors import OrderingViolation, TdmrLabException
from tdmrlab.experiment import (compare, evaluate_checkpoint, generate, prepare_pool, read_summary,
                                run, sector_count)
from tdmrlab.presets.parsing import StoreBraceExpandedAction, parse_profiles

logger = logging.getLogger(__name__) # pylint: disable=invalid-name
logger.setLevel(logging.INFO)

EXIT_ERROR = 1
EXIT_ORDERING_VIOLATION = 2


def common_parser():
    """Arguments every verb shares."""
    parser = argparse.ArgumentParser(add_help=False)
    parser.add_argument('--config', metavar='FILE',
                        help='Experiment config overriding the packaged defaults')
    parser.add_argument('--sectors', type=int, metavar='N',
                        help="Sectors to simulate (default {0})".format(
                            Constants.channel.sectors)) # pylint: disable=no-member
    parser.add_argument('--full', action='store_true',
                        help="Simulate the full {0}-sector protocol".format(
                            Constants.channel.full_sectors)) # pylint: disable=no-member
    parser.add_argument('--seed', type=int, help='Channel seed')
    parser.add_argument('--out', metavar='DIR',
                        help="Output directory (default {0})".format(
                            Constants.experiment.output_dir)) # pylint: disable=no-member
    parser.add_argument('--data', metavar='DIR',
                        help='Sector archive to use instead of simulating sectors')
    parser.add_argument('--assert-orderings', action='store_true',
                        help='Exit with code 2 if a result ordering is violated')
    return parser


def _add_selection_arguments(parser):
    parser.add_argument('--train-sectors', action=StoreBraceExpandedAction, metavar='SECTORS',
                        help='Sectors to train on, as a brace pattern such as {1..3} or all')
    parser.add_argument('--test-sectors', action=StoreBraceExpandedAction, metavar='SECTORS',
                        help='Sectors to evaluate on, as a brace pattern such as {2..6} or all')


def build_parser():
    parser = argparse.ArgumentParser(prog='tdmrlab',
                                     description='Two-reader TDMR read-channel laboratory')
    parser.add_argument('--version', action='version', version=__version__)
    parser.add_argument('-v', '--verbose', action='store_true', help='Log at DEBUG level')
    common = common_parser()
    verbs = parser.add_subparsers(dest='verb', help='The action to perform')
    verbs.required = True

    gen = verbs.add_parser('gen', parents=[common], help='Simulate a calibrated sector archive')
    gen.add_argument('--bits', type=int, metavar='N', help='Bits per sector')
    gen.add_argument('--cts', type=float, metavar='PERCENT',
                     help='Cross-track separation of the readers in percent of the track pitch')
    gen.add_argument('--raw-ber', type=float, metavar='BER',
                     help='Raw BER the AWGN level is calibrated to')

    train = verbs.add_parser('train', parents=[common], help='Train the model a config describes')
    _add_selection_arguments(train)

    evaluate = verbs.add_parser('eval', parents=[common], help='Evaluate a saved checkpoint')
    evaluate.add_argument('--checkpoint', required=True, metavar='FILE')
    evaluate.add_argument('--test-sectors', action=StoreBraceExpandedAction, metavar='SECTORS',
                          help='Sectors to evaluate on, as a brace pattern or all')

    comparison = verbs.add_parser('compare', help='Relative BER reduction of b over a')
    comparison.add_argument('summary_a', metavar='SUMMARY_A')
    comparison.add_argument('summary_b', metavar='SUMMARY_B')
    comparison.add_argument('--model-a', help='Model of summary a (default: its first)')
    comparison.add_argument('--model-b', help='Model of summary b (default: its first)')
    comparison.add_argument('--confidence', type=float, default=0.95)

    preset = verbs.add_parser('preset', help='Run one of the packaged experiment presets')
    parse_profiles(preset, parents=[common])
    return parser


def _verbose():
    for name in list(logging.root.manager.loggerDict):
        if name == 'tdmrlab' or name.startswith('tdmrlab.'):
            logging.getLogger(name).setLevel(logging.DEBUG)


def _pool(config, args):
    return prepare_pool(config, sector_count(config, args.sectors, args.full), archive=args.data)


def _gen(args):
    config = ExperimentConfig.from_args(args)
    if args.bits:
        config.set('channel', 'bits_per_sector', args.bits)
    if args.cts is not None:
        config.set('geometry', 'cts_percent', args.cts)
    if args.raw_ber is not None:
        config.set('channel', 'raw_ber', args.raw_ber)
    directory = args.out or os.path.join(config.experiment.output_dir, 'sectors')
    pool = generate(config, directory, sector_count(config, args.sectors, args.full))
    logger.info('Wrote %d sectors (awgn sigma %.4f, dataset %s) to %s.', len(pool.sectors),
                pool.params.awgn_sigma, pool.hash[:12], directory)
    return pool


def _train(args):
    config = ExperimentConfig.from_args(args)
    summary = run(config, _pool(config, args), args.out, args.train_sectors, args.test_sectors)
    model = summary['models']['model']
    logger.info('Test BER %.6f (%d errors in %d bits), MSE %.5f, CE %.5f.', model['ber'],
                model['n_errors'], model['n_bits'], model['mse'], model['ce'])
    return summary


def _eval(args):
    config = ExperimentConfig.from_args(args)
    record = evaluate_checkpoint(config, args.checkpoint, _pool(config, args), args.test_sectors)
    logger.info('%s: BER %.6f (%d errors in %d bits), MSE %.5f, CE %.5f.', args.checkpoint,
                record.ber, record.n_errors, record.n_bits, record.final('mse'),
                record.final('ce'))
    return record


def _compare(args):
    report = compare(read_summary(args.summary_a), read_summary(args.summary_b),
                     args.model_a, args.model_b, args.confidence)
    logger.info('%s BER %.6f -> %s BER %.6f: %.2f%% reduction (%.0f%% interval %.2f%% .. %.2f%%).',
                report['model_a'], report['ber_a'], report['model_b'], report['ber_b'],
                100 * report['reduction'], 100 * report['confidence'], 100 * report['lower'],
                100 * report['upper'])
    json.dump(report, sys.stdout, indent=2)
    sys.stdout.write('\n')
    return report


def _preset(args):
    actions = importlib.import_module("tdmrlab.presets.{0}.actions".format(args.preset))
    return actions.run(args)


VERBS = {'gen': _gen, 'train': _train, 'eval': _eval, 'compare': _compare, 'preset': _preset}


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.verbose:
        _verbose()
    try:
        VERBS[args.verb](args)
    except OrderingViolation as exception:
        logger.error(exception)
        return EXIT_ORDERING_VIOLATION
    except TdmrLabException as exception:
        logger.error(exception)
        return EXIT_ERROR
    return 0
