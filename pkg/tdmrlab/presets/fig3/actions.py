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

"""Equalizer output error histograms of the MSE-trained LE and NLE. The NLE error piles up closer
to 0 but leaves more mass in the tails, which is where the detector makes its mistakes."""

import logging

from tdmrlab.presets import report, run_profile

logger = logging.getLogger(__name__) # pylint: disable=invalid-name
logger.setLevel(logging.INFO)


def run(args):
    summary = run_profile('fig3', args)
    report(summary, ('mse', 'peak', 'tail'))
    for name, metrics in summary['models'].items():
        logger.info('%s: P(|e| > %g) = %.5f.', name, metrics['tail_threshold'], metrics['tail'])
    return summary
