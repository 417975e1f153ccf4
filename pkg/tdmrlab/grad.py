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

"""A small reverse-mode gradient engine. Every scalar operation appends a node (kind, parent
indices, local partials, value) to a Tape, so parents always precede their children and a single
reverse sweep yields every adjoint. The tape is rebuilt on each forward pass, which is what the
detector needs: which trellis branches survive a min() changes from batch to batch.

The module also holds ParamSet, the named container of learnables shared by the equalizer, the
optimizer and the finite-difference checks.
"""

import logging
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from tdmrlab.errors import TapeError

logger = logging.getLogger(__name__) # pylint: disable=invalid-name
logger.setLevel(logging.INFO)


class Var(object):
    """Handle of a node recorded on a Tape."""

    __slots__ = ('tape', 'index', 'value')

    def __init__(self, tape, index, value):
        self.tape = tape
        self.index = index
        self.value = value

    def __repr__(self):
        return "Var(index={0}, value={1})".format(self.index, self.value)

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return neg(self)


class Tape(object):
    """Append-only record of scalar operations."""

    def __init__(self):
        self.kinds = []
        self.parents = []
        self.partials = []
        self.values = []
        self._params = OrderedDict()

    def __len__(self):
        return len(self.values)

    def record(self, kind, value, parents=(), partials=()):
        self.kinds.append(kind)
        self.parents.append(tuple(parents))
        self.partials.append(tuple(float(partial) for partial in partials))
        self.values.append(float(value))
        return Var(self, len(self.values) - 1, float(value))

    def leaf(self, value):
        return self.record('leaf', value)

    def const(self, value):
        return self.record('const', value)

    def param(self, name, array):
        """Register a named learnable array as leaves (once per tape) and return an object array
        of Vars with the same shape."""
        if name not in self._params:
            array = np.asarray(array, dtype=np.float64)
            leaves = np.empty(array.shape, dtype=object)
            for position, value in np.ndenumerate(array):
                leaves[position] = self.leaf(value)
            self._params[name] = leaves
        return self._params[name]

    @property
    def param_names(self):
        return list(self._params)

    def param_leaves(self, name):
        return self._params[name]


def _lift(tape, operand):
    if isinstance(operand, Var):
        if operand.tape is not tape:
            raise TapeError('Operands were recorded on different tapes.')
        return operand
    return tape.const(operand)


def _tape_of(*operands):
    for operand in operands:
        if isinstance(operand, Var):
            return operand.tape
    raise TapeError('At least one operand must be a recorded Var.')


def add(a, b):
    tape = _tape_of(a, b)
    a, b = _lift(tape, a), _lift(tape, b)
    return tape.record('add', a.value + b.value, (a.index, b.index), (1.0, 1.0))


def sub(a, b):
    tape = _tape_of(a, b)
    a, b = _lift(tape, a), _lift(tape, b)
    return tape.record('sub', a.value - b.value, (a.index, b.index), (1.0, -1.0))


def neg(a):
    return a.tape.record('neg', -a.value, (a.index,), (-1.0,))


def mul(a, b):
    tape = _tape_of(a, b)
    a, b = _lift(tape, a), _lift(tape, b)
    return tape.record('mul', a.value * b.value, (a.index, b.index), (b.value, a.value))


def total(operands):
    """Sum of many nodes as a single node."""
    operands = list(operands)
    tape = _tape_of(*operands)
    operands = [_lift(tape, operand) for operand in operands]
    return tape.record('total', sum(operand.value for operand in operands),
                       [operand.index for operand in operands], [1.0] * len(operands))


def square(a):
    return a.tape.record('square', a.value * a.value, (a.index,), (2.0 * a.value,))


def tanh(a):
    value = np.tanh(a.value)
    return a.tape.record('tanh', value, (a.index,), (1.0 - value * value,))


def relu(a):
    return a.tape.record('relu', max(a.value, 0.0), (a.index,), (1.0 if a.value > 0 else 0.0,))


def log(a):
    if a.value <= 0:
        raise TapeError("log of non-positive value {0}.".format(a.value))
    return a.tape.record('log', np.log(a.value), (a.index,), (1.0 / a.value,))


def exp(a):
    value = np.exp(a.value)
    return a.tape.record('exp', value, (a.index,), (value,))


def sigmoid(a):
    value = expit(a.value)
    return a.tape.record('sigmoid', value, (a.index,), (value * (1.0 - value),))


def softplus(a):
    """log(1 + e^a), evaluated without overflow."""
    return a.tape.record('softplus', np.logaddexp(0.0, a.value), (a.index,), (expit(a.value),))


def min2(a, b):
    """Minimum of two nodes. The gradient flows to the smaller operand only; ties go to a."""
    tape = _tape_of(a, b)
    a, b = _lift(tape, a), _lift(tape, b)
    if a.value <= b.value:
        return tape.record('min2', a.value, (a.index, b.index), (1.0, 0.0))
    return tape.record('min2', b.value, (a.index, b.index), (0.0, 1.0))


class Adjoints(object):
    """Result of a reverse sweep: one adjoint per tape node."""

    def __init__(self, tape, values):
        self.tape = tape
        self.values = values

    def __getitem__(self, var):
        return self.values[var.index]

    def param(self, name):
        leaves = self.tape.param_leaves(name)
        out = np.zeros(leaves.shape)
        for position, leaf in np.ndenumerate(leaves):
            out[position] = self.values[leaf.index]
        return out

    def params(self):
        return OrderedDict((name, self.param(name)) for name in self.tape.param_names)


def backward(tape, root):
    """Propagate d(root)/d(node) from root down to every node it depends on."""
    if root.tape is not tape:
        raise TapeError('Root was recorded on a different tape.')
    adjoints = np.zeros(len(tape))
    adjoints[root.index] = 1.0
    for index in range(root.index, -1, -1):
        adjoint = adjoints[index]
        if adjoint == 0.0:
            continue
        for parent, partial in zip(tape.parents[index], tape.partials[index]):
            adjoints[parent] += adjoint * partial
    return Adjoints(tape, adjoints)


class ParamSet(object):
    """Named float64 arrays of learnables with an element-wise frozen mask. Frozen entries still
    receive gradients, but optimizers must leave them untouched."""

    def __init__(self, values=None, frozen=None):
        self.values = OrderedDict()
        self.frozen = OrderedDict()
        for name, value in (values or {}).items():
            self.add(name, value)
        for name, mask in (frozen or {}).items():
            self.freeze(name, mask)

    def __contains__(self, name):
        return name in self.values

    def __getitem__(self, name):
        return self.values[name]

    def __iter__(self):
        return iter(self.values)

    def add(self, name, value):
        self.values[name] = np.array(value, dtype=np.float64)
        self.frozen[name] = np.zeros(self.values[name].shape, dtype=bool)

    def set(self, name, value):
        value = np.array(value, dtype=np.float64)
        if value.shape != self.values[name].shape:
            raise TapeError("Shape mismatch for {0}: {1} vs {2}.".format(
                name, value.shape, self.values[name].shape))
        self.values[name] = value

    def freeze(self, name, mask=True):
        self.frozen[name] = np.broadcast_to(np.asarray(mask, dtype=bool),
                                            self.values[name].shape).copy()

    def items(self):
        return self.values.items()

    @property
    def size(self):
        return int(sum(value.size for value in self.values.values()))

    def copy(self):
        return ParamSet(OrderedDict((name, value.copy()) for name, value in self.values.items()),
                        OrderedDict((name, mask.copy()) for name, mask in self.frozen.items()))

    def perturbed(self, name, position, delta):
        twin = self.copy()
        twin.values[name][position] += delta
        return twin


@dataclass
class FiniteDiff(object):
    """Central-difference gradients; kinks marks learnables where the function reported a
    different argmin signature at +h and -h (their gradient is NaN)."""
    gradients: OrderedDict
    kinks: OrderedDict


def _split(outcome):
    if isinstance(outcome, tuple):
        return float(outcome[0]), outcome[1]
    return float(outcome), None


def _same_signature(left, right):
    if left is None or right is None:
        return True
    return np.array_equal(np.asarray(left), np.asarray(right))


def finite_diff(f, params, h=1e-5, names=None):
    """Central differences (f(p+h) - f(p-h)) / 2h for every learnable. f may return a float or a
    (value, signature) pair whose signature identifies its argmin choices."""
    if h <= 0:
        raise TapeError("Finite-difference step must be positive (got {0}).".format(h))
    gradients = OrderedDict()
    kinks = OrderedDict()
    for name in (names or list(params)):
        grad = np.zeros(params[name].shape)
        kink = np.zeros(params[name].shape, dtype=bool)
        for position in np.ndindex(params[name].shape):
            upper, upper_signature = _split(f(params.perturbed(name, position, h)))
            lower, lower_signature = _split(f(params.perturbed(name, position, -h)))
            if not _same_signature(upper_signature, lower_signature):
                kink[position] = True
                grad[position] = np.nan
            else:
                grad[position] = (upper - lower) / (2.0 * h)
        gradients[name] = grad
        kinks[name] = kink
    return FiniteDiff(gradients=gradients, kinks=kinks)


def relative_error(analytic, numeric, floor=1e-6):
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / scale


def check_gradient(f, params, analytic, h=1e-5, names=None):
    """Compare analytic gradients (a name -> array mapping) with central differences. Returns
    (worst relative error over differentiable entries, FiniteDiff)."""
    numeric = finite_diff(f, params, h=h, names=names)
    worst = 0.0
    for name, grad in numeric.gradients.items():
        usable = ~numeric.kinks[name]
        if usable.any():
            worst = max(worst, float(np.max(relative_error(analytic[name][usable],
                                                           grad[usable]))))
    excluded = sum(int(kink.sum()) for kink in numeric.kinks.values())
    if excluded:
        logger.debug('Excluded %d learnables sitting on a min() kink.', excluded)
    return worst, numeric
