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

"""Exceptions raised by tdmrlab modules. The CLI catches TdmrLabException and turns it into a
logged error and a non-zero exit code."""


class TdmrLabException(Exception):
    """Base class of every exception raised on purpose by tdmrlab."""
    pass


class ConfigError(TdmrLabException):
    """An exception to raise when an experiment config or preset profile is invalid."""
    pass


class ChannelError(TdmrLabException):
    """An exception to raise when channel parameters or a sample stream are unusable."""
    pass


class CalibrationError(ChannelError):
    """An exception to raise when the noise calibration cannot reach its target raw BER."""
    pass


class DatasetError(TdmrLabException):
    """An exception to raise when windows cannot be formed or a sector archive is missing."""
    pass


class TapeError(TdmrLabException):
    """An exception to raise when an operation cannot be recorded on a gradient tape."""
    pass


class DetectorError(TdmrLabException):
    """An exception to raise when a block does not fit the detector or its bookkeeping is
    stale."""
    pass


class OrderingViolation(TdmrLabException):
    """An exception to raise when a preset run breaks one of its expected result orderings."""
    pass
