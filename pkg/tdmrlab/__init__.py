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

"""The tdmrlab package houses a desk-scale two-reader TDMR read-channel laboratory: a channel
simulator producing per-sector ADC sample streams, linear and MLP equalizers, a trellis detector
with max-log soft output, MSE and cross-entropy adaptation, and the experiment presets that
compare them. It also contains the small reverse-mode gradient engine the cross-entropy chain is
verified against."""

import logging
from configparser import ConfigParser
from os.path import dirname, join

__version__ = '0.4.0'

logging.basicConfig(level=logging.ERROR)

CONSTANTS_FILE = join(dirname(__file__), 'constants.cfg')


class Constants(object):
    """A class just designed to make the contents of constants.cfg available to tdmrlab modules
    in a pretty way. Accessing Constants.channel.pw50_over_t reads better than
    constants['channel']['pw50_over_t'], and the raw strings stay available to the config layer,
    which does its own type coercion.

    Note that, to keep Pylint happy, we'll have to add
        # pylint: disable=no-member
    at the end of every line in which we reference this class.
    """

    # pylint: disable=too-few-public-methods

    _config = ConfigParser()
    _config.read(CONSTANTS_FILE)
    for section in _config.sections() + ['DEFAULT']:
        locals()[section] = type(section, (), {item[0]: item[1] for item in _config.items(section)})
