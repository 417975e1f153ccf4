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

"""Every folder in this package is a preset: a profile.cfg naming the models to train, the result
orderings to check and the preset's command line arguments, plus an actions.py whose run(args)
the preset verb calls."""

import logging

from tdmrlab.config import ExperimentConfig
from tdmrlab.experiment import prepare_pool, run_preset, sector_count
from tdmrlab.presets.parsing import load_profile

logger = logging.getLogger(__name__) # pylint: disable=invalid-name
logger.setLevel(logging.INFO)


def run_profile(preset, args):
    """Prepare the sector pool the arguments describe and run the preset on it."""
    profile = load_profile(preset)
    config = ExperimentConfig.from_args(args)
    pool = prepare_pool(config, sector_count(config, args.sectors, args.full), archive=args.data)
    return run_preset(profile, config, pool, args.out or config.experiment.output_dir,
                      train_indices=getattr(args, 'train_sectors', None),
                      test_indices=getattr(args, 'test_sectors', None),
                      epochs=getattr(args, 'epochs', None),
                      assert_orderings=args.assert_orderings)


def report(summary, columns):
    """Log one line per model with the requested summary columns."""
    for name, metrics in summary['models'].items():
        logger.info('%-14s %s', name, '  '.join("{0}={1:.6g}".format(column, metrics[column])
                                               for column in columns))
