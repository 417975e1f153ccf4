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

"""Experiment configuration files. An experiment config uses the sections and keys of
constants.cfg; anything it leaves out keeps the packaged default, and every value is coerced to the
type of that default."""

import logging
from collections import OrderedDict
from configparser import ConfigParser, Error as ConfigParserError
from types import SimpleNamespace

from tdmrlab import CONSTANTS_FILE
from tdmrlab.chansim import ChannelParams, ReaderGeometry
from tdmrlab.equalizer import MlpSpec
from tdmrlab.errors import ConfigError
from tdmrlab.training import TrainConfig

logger = logging.getLogger(__name__) # pylint: disable=invalid-name
logger.setLevel(logging.INFO)

TRUE_WORDS = ('true', 'yes', 'on')
FALSE_WORDS = ('false', 'no', 'off')


def infer_type(raw):
    """Turn a default string into a typed value."""
    if raw.lower() in TRUE_WORDS + FALSE_WORDS:
        return raw.lower() in TRUE_WORDS
    for kind in (int, float):
        try:
            return kind(raw)
        except ValueError:
            pass
    return raw


def _coerce(raw, default, where):
    if isinstance(default, bool):
        if isinstance(raw, bool):
            return raw
        if str(raw).lower() in TRUE_WORDS + FALSE_WORDS:
            return str(raw).lower() in TRUE_WORDS
        raise ConfigError("{0} expects true or false (got {1}).".format(where, raw))
    try:
        return type(default)(raw)
    except (TypeError, ValueError):
        raise ConfigError("{0} expects a value of type {1} (got {2}).".format(
            where, type(default).__name__, raw))


def load_defaults():
    parser = ConfigParser()
    parser.read(CONSTANTS_FILE)
    return OrderedDict((section, OrderedDict((key, infer_type(value))
                                             for key, value in parser.items(section)))
                       for section in parser.sections())


def parse_taps(text):
    try:
        return tuple(float(tap) for tap in str(text).split(','))
    except ValueError:
        raise ConfigError("Cannot parse target taps {0}.".format(text))


class ExperimentConfig(object):
    """Typed experiment settings, section by section. Read a value with
    config.channel.pw50_over_t or config.get('channel', 'pw50_over_t')."""

    def __init__(self, overrides=None):
        self._values = load_defaults()
        for section, items in (overrides or {}).items():
            for key, value in items.items():
                self.set(section, key, value)
        self.source = None

    @classmethod
    def from_file(cls, path):
        parser = ConfigParser()
        try:
            if not parser.read(path):
                raise ConfigError("Cannot read experiment config {0}.".format(path))
        except ConfigParserError as exception:
            raise ConfigError("Malformed experiment config {0}: {1}".format(path, exception))
        config = cls({section: OrderedDict(parser.items(section)) for section in parser.sections()})
        config.source = path
        logger.info('Loaded experiment config %s.', path)
        return config

    @classmethod
    def from_args(cls, args):
        """Config named by --config (or the defaults) with the --seed override applied."""
        path = getattr(args, 'config', None)
        config = cls.from_file(path) if path else cls()
        if getattr(args, 'seed', None) is not None:
            config.set('channel', 'seed', args.seed)
        return config

    def __getattr__(self, section):
        if section.startswith('_') or section not in self._values:
            raise AttributeError(section)
        return SimpleNamespace(**self._values[section])

    @property
    def sections(self):
        return list(self._values)

    def get(self, section, key):
        self._check(section, key)
        return self._values[section][key]

    def set(self, section, key, value):
        self._check(section, key)
        where = "{0}.{1}".format(section, key)
        self._values[section][key] = _coerce(value, self._values[section][key], where)

    def _check(self, section, key):
        if section not in self._values:
            raise ConfigError("Unknown config section [{0}] (known: {1}).".format(
                section, ', '.join(self._values)))
        if key not in self._values[section]:
            raise ConfigError("Unknown key {0} in section [{1}].".format(key, section))

    def to_dict(self):
        return OrderedDict((section, OrderedDict(items)) for section, items in self._values.items())

    def write(self, path):
        parser = ConfigParser()
        for section, items in self._values.items():
            parser[section] = OrderedDict((key, str(value).lower() if isinstance(value, bool)
                                           else str(value)) for key, value in items.items())
        with open(path, 'w') as config_file:
            parser.write(config_file)
        return path

    def channel_params(self):
        channel = self.channel
        return ChannelParams(bit_interval=channel.bit_interval,
                             pw50_over_t=channel.pw50_over_t,
                             jitter_sigma=channel.jitter_sigma,
                             awgn_sigma=channel.awgn_sigma,
                             span_bits=channel.span_bits,
                             quantizer_bits=channel.quantizer_bits or None,
                             sampling_phase=channel.sampling_phase,
                             quantizer_full_scale=channel.quantizer_full_scale)

    def reader_geometry(self):
        geometry = self.geometry
        return ReaderGeometry(cts_percent=geometry.cts_percent,
                              crosstrack_sigma=geometry.crosstrack_sigma,
                              track_pitch=geometry.track_pitch,
                              n_side_tracks=geometry.n_side_tracks)

    def mlp_spec(self):
        return MlpSpec.parse(self.equalizer.layers, self.equalizer.activation)

    def train_config(self, criterion=None, target_mode=None, epochs=None, pretrain=None):
        training = self.training
        return TrainConfig(criterion=criterion or training.criterion,
                           learning_rate=training.learning_rate,
                           batch_size=training.batch_size,
                           epochs=epochs or training.epochs,
                           beta1=training.beta1,
                           beta2=training.beta2,
                           epsilon=training.epsilon,
                           target_mode=target_mode or self.equalizer.target_mode,
                           fixed_target=parse_taps(self.equalizer.fixed_target),
                           target_length=self.equalizer.target_length,
                           llr_clip=training.llr_clip,
                           engine=training.engine,
                           seed=training.seed,
                           pretrain_epochs=(training.pretrain_epochs if pretrain is None
                                            else pretrain),
                           scale_lr_by_target=training.scale_lr_by_target)

    def decision_delay(self):
        """None for an automatic sweep, else the configured integer delay."""
        raw = str(self.equalizer.decision_delay)
        if raw.lower() == 'auto':
            return None
        try:
            return int(raw)
        except ValueError:
            raise ConfigError("decision_delay must be auto or an integer (got {0}).".format(raw))
