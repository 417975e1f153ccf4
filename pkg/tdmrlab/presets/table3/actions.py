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

"""Overall detector BER of the three equalizer and criterion combinations, with the relative BER
reductions of both cross-entropy models over the linear MMSE equalizer."""

import logging

from tdmrlab.presets import report, run_profile
from tdmrlab.utils import relative_reduction

logger = logging.getLogger(__name__) # pylint: disable=invalid-name
logger.setLevel(logging.INFO)

BASELINE = 'le_mse'


def run(args):
    summary = run_profile('table3', args)
    report(summary, ('ber', 'n_errors', 'n_bits', 'epochs_to_convergence'))
    models = summary['models']
    for name in ('le_ce', 'nle_ce'):
        reduction, lower, upper = relative_reduction(
            models[BASELINE]['n_errors'], models[BASELINE]['n_bits'],
            models[name]['n_errors'], models[name]['n_bits'])
        logger.info('%s vs %s: %.2f%% lower detector BER (95%% interval %.2f%% .. %.2f%%).',
                    name, BASELINE, 100 * reduction, 100 * lower, 100 * upper)
    return summary
