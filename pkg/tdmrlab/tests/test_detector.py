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

import csv

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from tdmrlab.detector import (_soft_decision, branch_metrics, brute_force_llr, build_trellis,
                              dump_state_metrics, free_start, known_start, llr_backward,
                              maxlog_llr, maxlog_llr_tape, survivor_path, viterbi_hard)
from tdmrlab.equalizer import PrTarget, reference_signal
from tdmrlab.errors import DetectorError
from tdmrlab.grad import Tape, backward, mul, relative_error, total

FIXED_TARGET = [4.0, 7.0, 1.0]


def random_target(rng):
    taps = rng.normal(size=5)
    taps[0] = 1.0
    return taps


def noisy_block(rng, taps, n_samples, sigma=1.0):
    bits = 2 * rng.integers(0, 2, size=n_samples) - 1
    padded = np.concatenate((-np.ones(len(taps) - 1), bits))
    clean = reference_signal(taps, padded)[len(taps) - 1:len(taps) - 1 + n_samples]
    return bits, clean + rng.normal(0.0, sigma, size=n_samples)


class TestTrellis:
    def test_tables(self):
        trellis = build_trellis(PrTarget.fixed(FIXED_TARGET))
        assert trellis.n_states == 4
        assert trellis.n_branches == 8
        assert_array_equal(trellis.next_state, [0, 1, 2, 3, 0, 1, 2, 3])
        assert_array_equal(trellis.bit, [-1, 1] * 4)
        assert trellis.expected[0] == -12.0
        assert trellis.expected[7] == 12.0
        assert_array_equal(trellis.outgoing(3), [6, 7])
        for state, arriving in enumerate(trellis.incoming):
            assert list(arriving) == sorted(arriving)
            assert np.all(trellis.next_state[arriving] == state)

    def test_single_tap_target_has_one_state(self):
        trellis = build_trellis([1.0])
        assert trellis.n_states == 1
        assert_array_equal(trellis.expected, [-1.0, 1.0])

    def test_start_metrics(self):
        trellis = build_trellis(FIXED_TARGET)
        assert known_start(trellis).tolist() == [0.0, np.inf, np.inf, np.inf]
        assert free_start(trellis).tolist() == [0.0] * 4


class TestOracles:
    @pytest.mark.parametrize('seed', range(10))
    def test_maxlog_equals_brute_force_exactly(self, seed):
        # 10 seeds x 100 blocks of 10 samples, half on [4, 7, 1] and half on a random 5-tap.
        rng = np.random.default_rng(seed)
        for block in range(100):
            taps = FIXED_TARGET if block % 2 else random_target(rng)
            trellis = build_trellis(taps)
            _, y = noisy_block(rng, taps, 10, sigma=2.0)
            start = None if block % 3 else free_start(trellis)
            soft = maxlog_llr(trellis, y, start)
            oracle = brute_force_llr(trellis, y, start)
            assert_array_equal(soft.llr, oracle.llr)
            assert_array_equal(viterbi_hard(trellis, y, start), oracle.hard_bits)
            assert_array_equal(soft.hard_bits, oracle.hard_bits)

    def test_noiseless_block_is_detected_with_confident_llrs(self):
        rng = np.random.default_rng(12)
        bits, y = noisy_block(rng, FIXED_TARGET, 200, sigma=0.0)
        trellis = build_trellis(FIXED_TARGET)
        soft = maxlog_llr(trellis, y)
        assert_array_equal(soft.hard_bits, bits)
        assert np.all(np.sign(soft.llr) == bits)
        assert_array_equal(survivor_path(trellis, soft), bits)

    def test_block_limits(self):
        trellis = build_trellis(FIXED_TARGET)
        with pytest.raises(DetectorError):
            brute_force_llr(trellis, np.zeros(17))
        with pytest.raises(DetectorError):
            maxlog_llr(trellis, np.zeros(2))
        with pytest.raises(DetectorError):
            viterbi_hard(trellis, np.zeros(8), np.zeros(3))


class TestLlrSymmetries:
    def block(self, seed, taps=None, n_samples=40):
        rng = np.random.default_rng(seed)
        taps = random_target(rng) if taps is None else np.asarray(taps, dtype=np.float64)
        _, y = noisy_block(rng, taps, n_samples)
        return taps, y

    def test_constant_added_to_one_stage_leaves_llrs_unchanged(self):
        taps, y = self.block(61)
        trellis = build_trellis(taps)
        start = free_start(trellis)
        reference = maxlog_llr(trellis, y, start)
        for stage in (0, 17, y.size - 1):
            metrics = branch_metrics(trellis, y)
            metrics[stage] += 3.25
            shifted = _soft_decision(trellis, y, metrics, start)
            assert_allclose(shifted.llr, reference.llr, rtol=0, atol=1e-9)
            assert_array_equal(shifted.hard_bits, reference.hard_bits)

    @pytest.mark.parametrize('scale', [2.0, 0.5, 3.0])
    def test_scaling_target_and_samples_scales_llrs_quadratically(self, scale):
        taps, y = self.block(62)
        soft = maxlog_llr(build_trellis(taps), y)
        scaled = maxlog_llr(build_trellis(scale * taps), scale * y)
        assert_allclose(scaled.llr, scale ** 2 * soft.llr, rtol=1e-10, atol=1e-9)
        assert_array_equal(scaled.hard_bits, soft.hard_bits)

    @pytest.mark.parametrize('taps', [FIXED_TARGET, None])
    def test_negated_samples_negate_llrs_from_a_free_start(self, taps):
        taps, y = self.block(63, taps)
        trellis = build_trellis(taps)
        soft = maxlog_llr(trellis, y, free_start(trellis))
        mirrored = maxlog_llr(trellis, -y, free_start(trellis))
        assert_allclose(mirrored.llr, -soft.llr, rtol=0, atol=1e-9)
        assert_array_equal(mirrored.hard_bits, -soft.hard_bits)

    def test_single_tap_llr_is_four_times_the_sample(self):
        y = np.random.default_rng(64).normal(size=30)
        trellis = build_trellis([1.0])
        soft = maxlog_llr(trellis, y)
        assert_allclose(soft.llr, 4.0 * y, rtol=1e-12, atol=1e-12)
        d_y, d_g = llr_backward(trellis, soft, y, np.ones(30))
        assert_allclose(d_y, 4.0)
        assert_allclose(d_g, [4.0 * np.sum(y)], rtol=1e-12)


class TestLlrGradient:
    def setup_method(self):
        rng = np.random.default_rng(21)
        self.taps = random_target(rng)
        self.trellis = build_trellis(self.taps)
        _, self.y = noisy_block(rng, self.taps, 24)
        self.weights = rng.normal(size=24)

    def objective(self, y, taps):
        return float(np.dot(self.weights, maxlog_llr(build_trellis(taps), y).llr))

    def test_matches_finite_differences(self):
        soft = maxlog_llr(self.trellis, self.y)
        d_y, d_g = llr_backward(self.trellis, soft, self.y, self.weights)
        h = 1e-6
        numeric_y = np.array([(self.objective(self.y + h * e, self.taps)
                               - self.objective(self.y - h * e, self.taps)) / (2 * h)
                              for e in np.eye(self.y.size)])
        numeric_g = np.array([(self.objective(self.y, self.taps + h * e)
                               - self.objective(self.y, self.taps - h * e)) / (2 * h)
                              for e in np.eye(self.taps.size)])
        assert np.max(relative_error(d_y, numeric_y, floor=1e-3)) < 1e-5
        assert np.max(relative_error(d_g, numeric_g, floor=1e-3)) < 1e-5

    def test_matches_tape(self):
        tape = Tape()
        y_nodes = [tape.leaf(value) for value in self.y]
        taps = tape.param('g', self.taps)
        llrs = maxlog_llr_tape(self.trellis, y_nodes, taps, tape)
        adjoints = backward(tape, total([mul(llr, w) for llr, w in zip(llrs, self.weights)]))

        soft = maxlog_llr(self.trellis, self.y)
        assert_allclose([llr.value for llr in llrs], soft.llr, rtol=1e-12, atol=1e-12)
        d_y, d_g = llr_backward(self.trellis, soft, self.y, self.weights)
        assert_allclose([adjoints[node] for node in y_nodes], d_y, rtol=1e-9, atol=1e-9)
        assert_allclose(adjoints.param('g'), d_g, rtol=1e-9, atol=1e-9)

    def test_stale_samples_raise(self):
        soft = maxlog_llr(self.trellis, self.y)
        with pytest.raises(DetectorError):
            llr_backward(self.trellis, soft, self.y + 1.0, self.weights)
        with pytest.raises(DetectorError):
            llr_backward(build_trellis(self.taps * 2), soft, self.y, self.weights)
        with pytest.raises(DetectorError):
            llr_backward(self.trellis, brute_force_llr(self.trellis, self.y[:12]), self.y[:12],
                         self.weights[:12])

    def test_without_target(self):
        soft = maxlog_llr(self.trellis, self.y)
        _, d_g = llr_backward(self.trellis, soft, self.y, self.weights, with_target=False)
        assert d_g is None


class TestStateDump:
    def test_dump_lists_every_state(self, tmp_path):
        trellis = build_trellis(FIXED_TARGET)
        soft = maxlog_llr(trellis, np.linspace(-5, 5, 6))
        with open(dump_state_metrics(soft, str(tmp_path / 'states.csv'))) as dump:
            rows = list(csv.reader(dump))
        assert rows[0] == ['k', 'state', 'alpha', 'beta']
        assert len(rows) == 1 + 7 * 4
        assert float(rows[1][2]) == 0.0
        assert rows[2][2] == 'inf'
