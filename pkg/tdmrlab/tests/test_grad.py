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

import numpy as np
import pytest
from numpy.testing import assert_allclose

from tdmrlab.errors import TapeError
from tdmrlab.grad import (ParamSet, Tape, backward, check_gradient, exp, finite_diff, log, min2,
                          mul, relu, sigmoid, softplus, square, tanh, total)


class TestTape:
    def test_parents_precede_children(self):
        tape = Tape()
        x = tape.leaf(2.0)
        y = x * x + 3.0
        assert y.value == 7.0
        for index, parents in enumerate(tape.parents):
            assert all(parent < index for parent in parents)

    def test_param_leaves_are_created_once(self):
        tape = Tape()
        first = tape.param('w', np.ones((2, 3)))
        second = tape.param('w', np.zeros((2, 3)))
        assert first is second
        assert tape.param_names == ['w']
        assert len(tape) == 6

    def test_foreign_operand_raises(self):
        x = Tape().leaf(1.0)
        y = Tape().leaf(2.0)
        with pytest.raises(TapeError):
            mul(x, y)

    def test_log_of_non_positive_raises(self):
        tape = Tape()
        with pytest.raises(TapeError):
            log(tape.leaf(0.0))
        with pytest.raises(TapeError):
            log(tape.leaf(-1.5))


class TestBackward:
    def test_product_rule(self):
        tape = Tape()
        x, y = tape.leaf(3.0), tape.leaf(-2.0)
        z = x * y - x
        adjoints = backward(tape, z)
        assert adjoints[x] == -3.0
        assert adjoints[y] == 3.0

    def test_fan_out_accumulates(self):
        tape = Tape()
        x = tape.leaf(0.7)
        z = total([square(x), tanh(x), exp(x), sigmoid(x), softplus(x)])
        expected = (2 * 0.7 + (1 - np.tanh(0.7) ** 2) + np.exp(0.7)
                    + 2 / (1 + np.exp(-0.7)) - 1 / (1 + np.exp(-0.7)) ** 2)
        assert_allclose(backward(tape, z)[x], expected, rtol=1e-12)

    def test_relu_passes_only_positive_inputs(self):
        tape = Tape()
        x, y = tape.leaf(1.5), tape.leaf(-0.5)
        adjoints = backward(tape, relu(x) + relu(y))
        assert adjoints[x] == 1.0
        assert adjoints[y] == 0.0

    def test_min_ties_go_to_first_operand(self):
        tape = Tape()
        a, b = tape.leaf(1.0), tape.leaf(1.0)
        adjoints = backward(tape, min2(a, b))
        assert adjoints[a] == 1.0
        assert adjoints[b] == 0.0

    def test_min_routes_to_smaller_operand(self):
        tape = Tape()
        a, b = tape.leaf(2.0), tape.leaf(-1.0)
        adjoints = backward(tape, min2(a, b))
        assert adjoints[a] == 0.0
        assert adjoints[b] == 1.0

    def test_param_gradients_match_finite_differences(self):
        rng = np.random.default_rng(3)
        params = ParamSet({'w': rng.normal(size=(3, 2)), 'b': rng.normal(size=2)})
        x = rng.normal(size=3)

        def recorded(values):
            tape = Tape()
            w, b = tape.param('w', values['w']), tape.param('b', values['b'])
            hidden = [tanh(total([w[i, j] * x[i] for i in range(3)]) + b[j]) for j in range(2)]
            return tape, square(hidden[0] - hidden[1])

        tape, loss = recorded(params)
        analytic = backward(tape, loss).params()
        worst, _ = check_gradient(lambda values: recorded(values)[1].value, params, analytic)
        assert worst < 1e-6


class TestParamSet:
    def test_set_checks_shape(self):
        params = ParamSet({'g': [1.0, 0.0, 0.0]})
        with pytest.raises(TapeError):
            params.set('g', [1.0, 0.0])

    def test_copy_is_deep(self):
        params = ParamSet({'g': [1.0, 0.0]}, frozen={'g': [True, False]})
        twin = params.copy()
        twin.values['g'][1] = 5.0
        twin.frozen['g'][0] = False
        assert params['g'][1] == 0.0
        assert params.frozen['g'][0]

    def test_size_counts_every_element(self):
        assert ParamSet({'w1': np.zeros((22, 6)), 'b1': np.zeros(6)}).size == 138


class TestFiniteDiff:
    def test_quadratic(self):
        params = ParamSet({'x': [1.0, -2.0]})
        numeric = finite_diff(lambda values: float(np.sum(values['x'] ** 2)), params)
        assert_allclose(numeric.gradients['x'], [2.0, -4.0], rtol=1e-8)
        assert not numeric.kinks['x'].any()

    def test_signature_change_marks_kink(self):
        params = ParamSet({'x': [0.0, 1.0]})

        def absolute(values):
            x = values['x']
            return float(np.sum(np.abs(x))), np.sign(x)

        numeric = finite_diff(absolute, params)
        assert numeric.kinks['x'].tolist() == [True, False]
        assert np.isnan(numeric.gradients['x'][0])
        assert_allclose(numeric.gradients['x'][1], 1.0)

    def test_step_must_be_positive(self):
        with pytest.raises(TapeError):
            finite_diff(lambda values: 0.0, ParamSet({'x': [0.0]}), h=0.0)
