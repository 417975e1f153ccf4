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

"""NLE vs LE, both adapted with MSE towards the fixed target [4,7,1]. Lower equalizer MSE does not
buy a lower detector BER."""

from tdmrlab.presets import report, run_profile


def run(args):
    summary = run_profile('table1', args)
    report(summary, ('mse', 'ber', 'param_count'))
    return summary
