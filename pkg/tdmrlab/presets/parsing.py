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

"""This module handles the parsing of presets' profile.cfg files into the models, orderings and
command line arguments of the preset verb."""

import argparse
import os
from collections import OrderedDict
from configparser import ConfigParser
from dataclasses import dataclass, field

from tdmrlab.config import infer_type
from tdmrlab.errors import ConfigError
from tdmrlab.experiment import ModelSpec
from tdmrlab.utils import parse_selection

PRESETS_CONFIG_NAME = 'profile.cfg'
ARG_PREFIX = 'arg.'
ARG_HELP_SUFFIX = '.help'
ARG_METAVAR_SUFFIX = '.metavar'


@dataclass
class Profile(object):
    """A preset: the models it trains and the result orderings it expects."""
    name: str
    description: str
    models: OrderedDict = field(default_factory=OrderedDict)
    orderings: OrderedDict = field(default_factory=OrderedDict)
    histograms: bool = False


def presets_directory():
    return os.path.dirname(__file__)


def preset_names():
    directory = presets_directory()
    return sorted(name for name in os.listdir(directory)
                  if os.path.isfile(os.path.join(directory, name, PRESETS_CONFIG_NAME)))


def read_profile_config(preset):
    config_filename = os.path.join(presets_directory(), preset, PRESETS_CONFIG_NAME)
    if not os.path.isfile(config_filename):
        raise ConfigError("Unknown preset {0} (choose from {1}).".format(
            preset, ', '.join(preset_names())))
    config = ConfigParser(allow_no_value=True)
    config.read(config_filename)
    return config


def get_profile_config_item(preset, section, item):
    """Return a string representation of a particular preset's section's item's value."""
    return read_profile_config(preset).get(section, item)


def load_profile(preset):
    config = read_profile_config(preset)
    profile = Profile(name=config.get('general', 'name'),
                      description=config.get('general', 'description'),
                      histograms=config.getboolean('general', 'histograms', fallback=False))
    if config.has_section('models'):
        for name in config.options('models'):
            profile.models[name] = ModelSpec.parse(name, config.get('models', name))
    if not profile.models:
        raise ConfigError("Preset {0} defines no models.".format(preset))
    if config.has_section('orderings'):
        for name in config.options('orderings'):
            profile.orderings[name] = config.get('orderings', name)
    return profile


def parse_args_from_config(parser, config, section):
    """Feed the arg.-prefixed options of a profile section into an argparse parser."""
    group = parser.add_argument_group()
    config_args = OrderedDict()
    if not config.has_section(section):
        return
    for option in config.options(section):
        if not option.startswith(ARG_PREFIX):
            continue
        if option.endswith(ARG_HELP_SUFFIX):
            config_args[option[len(ARG_PREFIX):-len(ARG_HELP_SUFFIX)]]['help'] = config.get(
                section, option)
        elif option.endswith(ARG_METAVAR_SUFFIX):
            config_args[option[len(ARG_PREFIX):-len(ARG_METAVAR_SUFFIX)]]['metavar'] = config.get(
                section, option)
        else:
            config_args[option[len(ARG_PREFIX):]] = {'default': config.get(section, option)}

    # A boolean default turns the argument into a switch that flips it.
    for arg, settings in config_args.items():
        options = {key: value for key, value in settings.items() if value}
        default = settings.get('default')
        if default is not None and default.lower() == 'false':
            options['action'] = 'store_true'
            del options['default']
        elif default is not None and default.lower() == 'true':
            options['action'] = 'store_false'
            del options['default']
        elif default is not None and arg.endswith('sectors'):
            options['action'] = StoreBraceExpandedAction
            options['default'] = parse_selection(default)
        elif default is not None:
            options['type'] = type(infer_type(default))
            options['default'] = infer_type(default)
        group.add_argument("--{0}".format(arg), **options)


def parse_profiles(parser, parents=()):
    """Generate one subparser per preset under the given parser."""
    subparsers = parser.add_subparsers(help='The preset to run', dest='preset')
    subparsers.required = True
    parsers = dict()
    for preset in preset_names():
        config = read_profile_config(preset)
        parsers[preset] = subparsers.add_parser(
            preset, help=config.get('general', 'description'), parents=list(parents),
            formatter_class=argparse.ArgumentDefaultsHelpFormatter)
        parse_args_from_config(parsers[preset], config, 'run')
    return parsers


class StoreBraceExpandedAction(argparse.Action):
    """A custom argparse Action that brace-expands a sector selection such as {2..6} into a list of
    sector indices before storing it in dest; 'all' is stored as None."""

    # pylint: disable=too-few-public-methods

    def __init__(self, option_strings, dest, nargs=None, **kwargs):
        if nargs is not None:
            raise ValueError("nargs not allowed")
        super(StoreBraceExpandedAction, self).__init__(option_strings, dest, **kwargs)

    def __call__(self, parser, namespace, values, option_string=None):
        try:
            setattr(namespace, self.dest, parse_selection(values))
        except ConfigError as exception:
            parser.error(str(exception))
