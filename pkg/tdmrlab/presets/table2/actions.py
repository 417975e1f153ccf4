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

"""Detector BER of NLE variants adapted with cross entropy."""

import logging

from tdmrlab.presets import report, run_profile

logger = logging.getLogger(__name__) # pylint: disable=invalid-name
logger.setLevel(logging.INFO)


def run(args):
    summary = run_profile('table2', args)
    report(summary, ('ber', 'param_count'))
    adapted = summary['models']['ta_6_tanh']['target']
    logger.info('Adapted target of the [22-6-1] tanh NLE: [%s].',
                ', '.join("{0:.4f}".format(tap) for tap in adapted))
    return summary
