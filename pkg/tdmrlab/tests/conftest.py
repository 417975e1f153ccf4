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

import pytest

from tdmrlab.config import ExperimentConfig

TINY_CONFIG = """
[channel]
calibrate = false
awgn_sigma = 0.3
bits_per_sector = 1500
sectors = 3
seed = 5

[equalizer]
layers = 6-1
target_length = 3

[training]
epochs = 1
batch_size = 256
learning_rate = 0.01
"""


@pytest.fixture
def tiny_config_file(tmp_path):
    path = tmp_path / 'tiny.cfg'
    path.write_text(TINY_CONFIG)
    return str(path)


@pytest.fixture
def tiny_config(tiny_config_file):
    return ExperimentConfig.from_file(tiny_config_file)
