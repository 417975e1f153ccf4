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

import threading

import pytest

from tdmrlab.errors import ConfigError
from tdmrlab.utils import (binomial_interval, config_hash, map_threads, parse_selection,
                           relative_reduction, z_score)


class TestSelection:
    @pytest.mark.parametrize('text,expected', [('all', None), ('ALL', None), ('3', [3]),
                                               ('{2..6}', [2, 3, 4, 5, 6]),
                                               ('{1,3,3}', [1, 3]), (['4', 2], [2, 4])])
    def test_parse(self, text, expected):
        assert parse_selection(text) == expected

    @pytest.mark.parametrize('text', ['x', '{0..2}', '-1', ''])
    def test_bad_selection_raises(self, text):
        with pytest.raises(ConfigError):
            parse_selection(text)


class TestStatistics:
    def test_reduction_of_published_error_rates(self):
        reduction, lower, upper = relative_reduction(1450, 100000, 1120, 100000)
        assert reduction == pytest.approx(0.2276, abs=1e-4)
        assert lower < reduction < upper
        reduction, _, _ = relative_reduction(1450, 100000, 1370, 100000)
        assert reduction == pytest.approx(0.0552, abs=1e-4)

    def test_identical_systems(self):
        reduction, lower, upper = relative_reduction(500, 40000, 500, 40000)
        assert reduction == 0.0
        assert lower == pytest.approx(-upper)

    def test_interval_shrinks_with_more_bits(self):
        _, narrow_low, _ = relative_reduction(14500, 1000000, 11200, 1000000)
        _, wide_low, _ = relative_reduction(145, 10000, 112, 10000)
        assert narrow_low > wide_low

    def test_binomial_interval(self):
        lower, upper = binomial_interval(100, 10000)
        assert lower < 0.01 < upper
        assert upper - lower == pytest.approx(2 * z_score() * (0.01 * 0.99 / 10000) ** 0.5)
        assert binomial_interval(0, 100) == (0.0, 0.0)

    def test_z_score(self):
        assert z_score(0.95) == pytest.approx(1.959964, abs=1e-6)


class TestHashes:
    def test_config_hash_ignores_key_order(self):
        assert config_hash({'a': 1, 'b': [1, 2]}) == config_hash({'b': [1, 2], 'a': 1})
        assert config_hash({'a': 1}) != config_hash({'a': 2})


class TestThreads:
    def test_results_keep_the_item_order(self):
        assert map_threads(lambda value: value * value, range(10), max_workers=3) == \
            [value * value for value in range(10)]
        assert map_threads(abs, []) == []

    def test_fan_out_is_bounded(self):
        lock = threading.Lock()
        running = [0]
        peak = [0]
        release = threading.Event()

        def _work(_):
            with lock:
                running[0] += 1
                peak[0] = max(peak[0], running[0])
            release.wait(0.05)
            with lock:
                running[0] -= 1
            return threading.current_thread().name

        names = map_threads(_work, range(12), max_workers=2)
        assert peak[0] <= 2
        assert len(set(names)) <= 2

    def test_worker_exception_is_raised(self):
        def _work(value):
            if value == 3:
                raise ConfigError('bad item')
            return value

        with pytest.raises(ConfigError):
            map_threads(_work, range(6), max_workers=2)
