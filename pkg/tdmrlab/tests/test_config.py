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

from argparse import Namespace

import pytest

from tdmrlab.config import ExperimentConfig, parse_taps
from tdmrlab.errors import ConfigError


class TestDefaults:
    def test_every_section_has_defaults(self):
        config = ExperimentConfig()
        assert config.sections == ['channel', 'geometry', 'equalizer', 'training', 'experiment']
        assert config.channel.sectors == 20
        assert config.channel.full_sectors == 100
        assert config.channel.calibrate is True
        assert config.geometry.cts_percent == 30.0
        assert config.training.learning_rate == 1e-3
        assert config.decision_delay() is None

    def test_typed_views(self):
        config = ExperimentConfig()
        assert config.channel_params().pw50_over_t == 1.5
        assert config.channel_params().quantizer_bits is None
        assert config.reader_geometry().crosstrack_sigma == 0.3398
        assert config.mlp_spec().layer_sizes == (22, 1)
        train_config = config.train_config('ce', 'fixed', 6)
        assert (train_config.criterion, train_config.target_mode, train_config.epochs) == \
            ('ce', 'fixed', 6)
        assert train_config.fixed_target == (4.0, 7.0, 1.0)

    def test_warm_up_and_step_scaling_settings(self):
        config = ExperimentConfig()
        assert config.experiment.workers == 4
        assert config.train_config('ce').pretrain_epochs == 0
        assert config.train_config('ce', pretrain=2).pretrain_epochs == 2
        assert config.train_config().scale_lr_by_target is True
        config.set('training', 'scale_lr_by_target', 'false')
        assert config.train_config().scale_lr_by_target is False


class TestOverrides:
    def test_file_values_are_coerced(self, tiny_config):
        assert tiny_config.channel.calibrate is False
        assert tiny_config.channel.awgn_sigma == 0.3
        assert tiny_config.channel.bits_per_sector == 1500
        assert tiny_config.training.epochs == 1
        assert tiny_config.channel.pw50_over_t == 1.5

    def test_unknown_section_or_key_raises(self, tmp_path):
        path = tmp_path / 'bad.cfg'
        path.write_text('[channel]\nsnr = 12\n')
        with pytest.raises(ConfigError):
            ExperimentConfig.from_file(str(path))
        path.write_text('[decoder]\niterations = 2\n')
        with pytest.raises(ConfigError):
            ExperimentConfig.from_file(str(path))

    def test_bad_values_raise(self):
        config = ExperimentConfig()
        with pytest.raises(ConfigError):
            config.set('channel', 'sectors', 'many')
        with pytest.raises(ConfigError):
            config.set('channel', 'calibrate', 'maybe')
        config.set('equalizer', 'decision_delay', 'x')
        with pytest.raises(ConfigError):
            config.decision_delay()

    def test_missing_file_raises(self, tmp_path):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_file(str(tmp_path / 'missing.cfg'))

    def test_fixed_decision_delay(self):
        config = ExperimentConfig({'equalizer': {'decision_delay': '3'}})
        assert config.decision_delay() == 3

    def test_args_override_the_seed(self, tiny_config_file):
        config = ExperimentConfig.from_args(Namespace(config=tiny_config_file, seed=99))
        assert config.channel.seed == 99
        assert config.source == tiny_config_file
        assert ExperimentConfig.from_args(Namespace(config=None, seed=None)).channel.seed == 2021

    def test_written_config_reads_back(self, tiny_config, tmp_path):
        path = tiny_config.write(str(tmp_path / 'copy.cfg'))
        assert ExperimentConfig.from_file(path).to_dict() == tiny_config.to_dict()

    def test_parse_taps(self):
        assert parse_taps('4,7,1') == (4.0, 7.0, 1.0)
        with pytest.raises(ConfigError):
            parse_taps('4;7')
