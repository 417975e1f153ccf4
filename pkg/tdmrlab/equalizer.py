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

"""Linear and MLP equalizers and the partial-response target they are trained against. A linear
equalizer is simply an MLP without hidden layers: its inter-layer weights are the FIR taps.

Learnables live in an MlpParams (a ParamSet) under the names w1, b1, ..., wN, bN and, once a
target is attached, g for the PR taps. Weight matrices are stored (fan_in, fan_out) so a batch of
windows multiplies on the left.
"""

import json
import logging
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from tdmrlab import grad
from tdmrlab.chansim import SectorWindows
from tdmrlab.errors import ConfigError, DatasetError
from tdmrlab.grad import ParamSet

logger = logging.getLogger(__name__) # pylint: disable=invalid-name
logger.setLevel(logging.INFO)

ACTIVATIONS = ('tanh', 'relu')
TARGET_KEY = 'g'
CHECKPOINT_FORMAT = 1


@dataclass(frozen=True)
class MlpSpec(object):
    """Layer sizes [2 D_in, H_1, ..., H_l, 1] (l <= 2) and the hidden-layer activation."""
    layer_sizes: Tuple[int, ...]
    activation: str = 'tanh'

    def __post_init__(self):
        sizes = tuple(int(size) for size in self.layer_sizes)
        object.__setattr__(self, 'layer_sizes', sizes)
        if not 2 <= len(sizes) <= 4:
            raise ConfigError("An equalizer has 0, 1 or 2 hidden layers (got sizes {0}).".format(
                self.describe()))
        if sizes[-1] != 1:
            raise ConfigError("The output layer must have one unit (got {0}).".format(sizes[-1]))
        if sizes[0] < 2 or sizes[0] % 2 or (sizes[0] // 2) % 2 == 0:
            raise ConfigError("The input layer must hold an odd D_in samples per reader "
                              "(got {0} inputs).".format(sizes[0]))
        if any(size < 1 for size in sizes):
            raise ConfigError("Layer sizes must be positive (got {0}).".format(self.describe()))
        if self.activation not in ACTIVATIONS:
            raise ConfigError("Unknown activation {0} (choose from {1}).".format(
                self.activation, ', '.join(ACTIVATIONS)))

    @classmethod
    def parse(cls, layers, activation='tanh'):
        """Build a spec from a dash-separated string such as 22-6-1."""
        try:
            sizes = tuple(int(size) for size in str(layers).split('-'))
        except ValueError:
            raise ConfigError("Cannot parse layer sizes {0}.".format(layers))
        return cls(layer_sizes=sizes, activation=activation)

    def describe(self):
        return '-'.join(str(size) for size in self.layer_sizes)

    @property
    def d_in(self):
        return self.layer_sizes[0] // 2

    @property
    def n_hidden(self):
        return len(self.layer_sizes) - 2

    @property
    def n_layers(self):
        return len(self.layer_sizes) - 1

    @property
    def is_linear(self):
        return self.n_hidden == 0


@dataclass(frozen=True, eq=False)
class PrTarget(object):
    """Partial-response target taps g_0..g_{L-1}. A monic target keeps g_0 = 1; a fixed target is
    never adapted."""
    taps: np.ndarray
    monic: bool = False
    adaptive: bool = False

    def __post_init__(self):
        taps = np.array(self.taps, dtype=np.float64).ravel()
        if taps.size < 1:
            raise ConfigError('A PR target needs at least one tap.')
        object.__setattr__(self, 'taps', taps)

    @property
    def length(self):
        return self.taps.size

    @classmethod
    def fixed(cls, taps):
        return cls(taps=taps, monic=False, adaptive=False)

    @classmethod
    def adaptive_monic(cls, length=5):
        """Initial adaptive target: [1, 0, ..., 0]."""
        taps = np.zeros(length)
        taps[0] = 1.0
        return cls(taps=taps, monic=True, adaptive=True)


class MlpParams(ParamSet):
    """Equalizer learnables, optionally together with the PR target they are trained against."""

    def __init__(self, spec, values=None, frozen=None, monic=False, adaptive=False):
        super(MlpParams, self).__init__(values, frozen)
        self.spec = spec
        self.monic = monic
        self.adaptive = adaptive

    def copy(self):
        twin = MlpParams(self.spec, monic=self.monic, adaptive=self.adaptive)
        for name, value in self.values.items():
            twin.values[name] = value.copy()
            twin.frozen[name] = self.frozen[name].copy()
        return twin

    @property
    def has_target(self):
        return TARGET_KEY in self.values

    @property
    def target(self):
        if not self.has_target:
            raise ConfigError('No PR target is attached to these parameters.')
        return PrTarget(taps=self.values[TARGET_KEY].copy(), monic=self.monic,
                        adaptive=self.adaptive)

    def layer(self, index):
        return self.values['w{0}'.format(index + 1)], self.values['b{0}'.format(index + 1)]

    @property
    def equalizer_names(self):
        return [name for name in self.values if name != TARGET_KEY]


def init_mlp(spec, seed):
    """Glorot-uniform weights and zero biases, deterministic in seed."""
    rng = np.random.default_rng(seed)
    params = MlpParams(spec)
    for index, (fan_in, fan_out) in enumerate(zip(spec.layer_sizes[:-1], spec.layer_sizes[1:])):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        params.add('w{0}'.format(index + 1), rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        params.add('b{0}'.format(index + 1), np.zeros(fan_out))
    return params


def attach_target(params, target):
    """Add the target taps to params as learnable g, frozen wholesale for a fixed target and at g_0
    for a monic one."""
    params.add(TARGET_KEY, target.taps)
    params.monic = target.monic
    params.adaptive = target.adaptive
    if not target.adaptive:
        params.freeze(TARGET_KEY, True)
    elif target.monic:
        enforce_monic_params(params)
    return params


def param_count(spec, target=None):
    """Learnables of an equalizer with biases, plus the free taps of an adaptive target."""
    count = sum((fan_in + 1) * fan_out
                for fan_in, fan_out in zip(spec.layer_sizes[:-1], spec.layer_sizes[1:]))
    if target is not None and target.adaptive:
        count += target.length - (1 if target.monic else 0)
    return count


def _tape_activation(kind):
    return grad.tanh if kind == 'tanh' else grad.relu


def forward(params, window, tape):
    """Record one equalizer evaluation on tape and return the output node y_k."""
    spec = params.spec
    window = np.asarray(window, dtype=np.float64)
    if window.shape != (spec.layer_sizes[0],):
        raise DatasetError("Window of shape {0} does not fit a {1} equalizer.".format(
            window.shape, spec.describe()))
    activation = _tape_activation(spec.activation)
    units = [float(sample) for sample in window]
    for index in range(spec.n_layers):
        weights = tape.param('w{0}'.format(index + 1), params['w{0}'.format(index + 1)])
        biases = tape.param('b{0}'.format(index + 1), params['b{0}'.format(index + 1)])
        outputs = []
        for unit in range(weights.shape[1]):
            terms = [grad.mul(weights[source, unit], value) for source, value in enumerate(units)]
            node = grad.total(terms + [biases[unit]])
            outputs.append(activation(node) if index < spec.n_layers - 1 else node)
        units = outputs
    return units[0]


def _activate(kind, z):
    return np.tanh(z) if kind == 'tanh' else np.maximum(z, 0.0)


def _activation_slope(kind, z, a):
    return 1.0 - a * a if kind == 'tanh' else (z > 0).astype(np.float64)


@dataclass(eq=False)
class ForwardCache(object):
    """Per-layer inputs and pre-activations of a batch forward pass."""
    inputs: list = field(default_factory=list)
    pre_activations: list = field(default_factory=list)


def forward_batch(params, inputs):
    """Equalizer outputs for a (batch, 2 D_in) array. Returns (y, cache)."""
    spec = params.spec
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim != 2 or inputs.shape[1] != spec.layer_sizes[0]:
        raise DatasetError("Inputs of shape {0} do not fit a {1} equalizer.".format(
            inputs.shape, spec.describe()))
    cache = ForwardCache()
    units = inputs
    for index in range(spec.n_layers):
        weights, biases = params.layer(index)
        cache.inputs.append(units)
        z = units @ weights + biases
        cache.pre_activations.append(z)
        units = _activate(spec.activation, z) if index < spec.n_layers - 1 else z
    return units[:, 0], cache


def backward_batch(params, cache, dy):
    """Gradients of a loss with respect to every weight and bias, given dJ/dy per window."""
    spec = params.spec
    delta = np.asarray(dy, dtype=np.float64)[:, None]
    grads = OrderedDict()
    for index in range(spec.n_layers - 1, -1, -1):
        weights, _ = params.layer(index)
        grads['w{0}'.format(index + 1)] = cache.inputs[index].T @ delta
        grads['b{0}'.format(index + 1)] = delta.sum(axis=0)
        if index > 0:
            # Inputs of this layer are the activations of the previous one.
            delta = (delta @ weights.T) * _activation_slope(
                spec.activation, cache.pre_activations[index - 1], cache.inputs[index])
    return OrderedDict((name, grads[name]) for name in params.equalizer_names)


def reference_output(target, bits, k):
    """Noiseless target output y^_k = sum_m g_m u_{k-m}."""
    taps = target.taps if isinstance(target, PrTarget) else np.asarray(target, dtype=np.float64)
    bits = np.asarray(bits, dtype=np.float64)
    if k < taps.size - 1:
        raise DatasetError("Reference output at k={0} needs {1} earlier bits.".format(
            k, taps.size - 1))
    if k >= bits.size:
        raise DatasetError("Reference output at k={0} is past the end of {1} bits.".format(
            k, bits.size))
    return float(np.dot(taps, bits[k - np.arange(taps.size)]))


def reference_signal(target, bits):
    """Full convolution of the bit sequence with the target taps."""
    taps = target.taps if isinstance(target, PrTarget) else np.asarray(target, dtype=np.float64)
    return np.convolve(np.asarray(bits, dtype=np.float64), taps)


def equalizer_error(y, y_ref):
    return np.asarray(y, dtype=np.float64) - np.asarray(y_ref, dtype=np.float64)


def enforce_monic(target):
    """Return the target with g_0 pinned to 1; the other taps are untouched."""
    if not target.monic:
        raise ConfigError('Only a monic target can be pinned.')
    taps = target.taps.copy()
    taps[0] = 1.0
    return PrTarget(taps=taps, monic=True, adaptive=target.adaptive)


def enforce_monic_params(params):
    params[TARGET_KEY][0] = 1.0
    mask = params.frozen[TARGET_KEY]
    mask[0] = True
    params.freeze(TARGET_KEY, mask)
    return params


def choose_decision_delay(frame, bits, taps, d_in, max_windows=20000):
    """Fit an unregularized linear equalizer (with bias) by least squares for every delay
    |d| <= (D_in - 1)/2 and return (best delay, residual ratio per delay). The residual ratio is the
    fit's mean squared error over the reference variance. Ties go to the smaller |d|."""
    taps = np.asarray(taps, dtype=np.float64)
    half_width = (d_in - 1) // 2
    n_samples = min(frame.n_samples, max_windows + d_in - 1)
    samples = frame.samples[:, :n_samples]
    bits = np.asarray(bits)[:n_samples]

    residuals = OrderedDict()
    best = None
    for delay in sorted(range(-half_width, half_width + 1), key=lambda d: (abs(d), d)):
        windows = SectorWindows(samples, bits, d_in, delay)
        design = np.hstack([windows.inputs(), np.ones((len(windows), 1))])
        reference = windows.label_history(taps.size) @ taps
        solution, _, _, _ = np.linalg.lstsq(design, reference, rcond=None)
        ratio = float(np.mean((design @ solution - reference) ** 2) / np.var(reference))
        residuals[delay] = ratio
        if best is None or ratio < residuals[best]:
            best = delay
    logger.info('Decision delay %d chosen (residual ratio %.4g).', best, residuals[best])
    return best, residuals


def save_checkpoint(path, params, step=0, extra=None):
    """Write layer sizes, activation, flattened learnables, target and step count as JSON. Items
    of extra (for instance the decision delay) are stored alongside."""
    payload = dict(extra or {})
    payload.update({
        'format': CHECKPOINT_FORMAT,
        'layer_sizes': list(params.spec.layer_sizes),
        'activation': params.spec.activation,
        'weights': OrderedDict((name, params[name].ravel().tolist())
                               for name in params.equalizer_names),
        'step': int(step),
    })
    if params.has_target:
        payload['target'] = {'taps': params[TARGET_KEY].tolist(), 'monic': params.monic,
                             'adaptive': params.adaptive}
    with open(path, 'w') as checkpoint:
        json.dump(payload, checkpoint, indent=2)
    logger.debug('Saved checkpoint to %s.', path)
    return path


def load_checkpoint(path):
    """Read a checkpoint back. Returns (MlpParams, payload); payload holds the step count and any
    extra items."""
    try:
        with open(path) as checkpoint:
            payload = json.load(checkpoint)
    except (IOError, ValueError) as exception:
        raise DatasetError("Cannot read checkpoint {0}: {1}".format(path, exception))
    spec = MlpSpec(layer_sizes=tuple(payload['layer_sizes']), activation=payload['activation'])
    params = init_mlp(spec, seed=0)
    for name in params.equalizer_names:
        params.set(name, np.reshape(payload['weights'][name], params[name].shape))
    if 'target' in payload:
        attach_target(params, PrTarget(taps=payload['target']['taps'],
                                       monic=payload['target']['monic'],
                                       adaptive=payload['target']['adaptive']))
    return params, payload
