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

"""Adaptation curves of a [22,1] LE under MSE and CE. The per-sector curves land in
<out>/fig4/<model>-curves.csv; the final values are the means over the last epoch."""

from tdmrlab.presets import report, run_profile


def run(args):
    summary = run_profile('fig4', args)
    report(summary, ('final_mse', 'final_ce', 'final_ber', 'epochs_to_convergence'))
    return summary
