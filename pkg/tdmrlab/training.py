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

"""This module adapts equalizers (and their PR targets) with Adam under either criterion:

* mse: mean squared error between the equalizer output and the target reference, on windows
  shuffled within a sector;
* ce: cross entropy between the true bits and the LLRs of the max-log detector, on contiguous spans
  of a sector whose trellis state is carried over (detached) from the previous span.

Gradients come from the vectorized analytic backward passes (engine numpy) or from a scalar tape
rebuilt for every batch (engine tape). After each sector of an epoch the sector is re-evaluated so
the curves show per-sector equalizer MSE, mean CE and Viterbi BER.
"""

import csv
import logging
from collections import OrderedDict
from dataclasses import dataclass, field, replace
from typing import List, Tuple

import numpy as np
from scipy.special import expit

from tdmrlab import grad
from tdmrlab.detector import (build_trellis, free_start, llr_backward, maxlog_llr,
                              maxlog_llr_tape, survivor_path)
from tdmrlab.equalizer import (PrTarget, TARGET_KEY, attach_target, backward_batch,
                               equalizer_error, forward, forward_batch, init_mlp)
from tdmrlab.errors import ConfigError, DatasetError
from tdmrlab.utils import MAX_WORKERS, map_threads

logger = logging.getLogger(__name__) # pylint: disable=invalid-name
logger.setLevel(logging.INFO)

CRITERIA = ('mse', 'ce')
TARGET_MODES = ('fixed', 'adaptive')
ENGINES = ('numpy', 'tape')
CURVE_COLUMNS = ('epoch', 'sector', 'mse', 'ce', 'ber')


@dataclass(frozen=True)
class TrainConfig(object):
    criterion: str = 'mse'
    learning_rate: float = 1e-3
    batch_size: int = 1024
    epochs: int = 2
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    target_mode: str = 'adaptive'
    fixed_target: Tuple[float, ...] = (4.0, 7.0, 1.0)
    target_length: int = 5
    llr_clip: float = 50.0
    engine: str = 'numpy'
    seed: int = 11
    pretrain_epochs: int = 0
    scale_lr_by_target: bool = True

    def __post_init__(self):
        if self.criterion not in CRITERIA:
            raise ConfigError("Unknown criterion {0} (choose from {1}).".format(
                self.criterion, ', '.join(CRITERIA)))
        if self.target_mode not in TARGET_MODES:
            raise ConfigError("Unknown target mode {0} (choose from {1}).".format(
                self.target_mode, ', '.join(TARGET_MODES)))
        if self.engine not in ENGINES:
            raise ConfigError("Unknown engine {0} (choose from {1}).".format(
                self.engine, ', '.join(ENGINES)))
        if self.batch_size < 1:
            raise ConfigError("batch_size must be at least 1 (got {0}).".format(self.batch_size))
        if self.learning_rate < 0:
            raise ConfigError("learning_rate must not be negative (got {0}).".format(
                self.learning_rate))
        if self.epochs < 1:
            raise ConfigError("epochs must be at least 1 (got {0}).".format(self.epochs))
        if self.llr_clip <= 0:
            raise ConfigError("llr_clip must be positive (got {0}).".format(self.llr_clip))
        if self.pretrain_epochs < 0:
            raise ConfigError("pretrain_epochs must not be negative (got {0}).".format(
                self.pretrain_epochs))

    def initial_target(self):
        if self.target_mode == 'fixed':
            return PrTarget.fixed(self.fixed_target)
        return PrTarget.adaptive_monic(self.target_length)


class AdamState(object):
    """First and second moments of every learnable, plus the step counter."""

    def __init__(self, params):
        self.first = OrderedDict((name, np.zeros(value.shape)) for name, value in params.items())
        self.second = OrderedDict((name, np.zeros(value.shape)) for name, value in params.items())
        self.step = 0


@dataclass
class SectorMetrics(object):
    epoch: int
    sector: int
    mse: float
    ce: float
    ber: float
    n_bits: int = 0
    n_errors: int = 0


@dataclass
class MetricsRecord(object):
    """Per-sector metrics in the order they were produced."""
    records: List[SectorMetrics] = field(default_factory=list)
    n_sectors: int = 0
    steps: int = 0

    def append(self, metrics):
        self.records.append(metrics)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def curve(self, name):
        return np.array([getattr(record, name) for record in self.records])

    def epochs(self):
        return sorted(set(record.epoch for record in self.records))

    def epoch_means(self, name):
        return OrderedDict((epoch, float(np.mean([getattr(record, name) for record in self.records
                                                  if record.epoch == epoch])))
                           for epoch in self.epochs())

    def final(self, name):
        """Mean over the last epoch."""
        if not self.records:
            raise DatasetError('No metrics were recorded.')
        return list(self.epoch_means(name).values())[-1]

    @property
    def n_bits(self):
        return int(sum(record.n_bits for record in self.records))

    @property
    def n_errors(self):
        return int(sum(record.n_errors for record in self.records))

    @property
    def ber(self):
        """Pooled bit error rate over every record."""
        return self.n_errors / self.n_bits if self.n_bits else float('nan')

    def sector_number(self, record):
        return self.n_sectors * (record.epoch - 1) + record.sector


@dataclass
class Histogram(object):
    edges: np.ndarray
    density: np.ndarray
    tail_threshold: float
    tail_mass: float
    n_samples: int

    @property
    def centers(self):
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    @property
    def integral(self):
        return float(np.sum(self.density * np.diff(self.edges)))

    @property
    def peak(self):
        """Density of the bin holding e = 0."""
        position = np.searchsorted(self.edges, 0.0, side='right') - 1
        return float(self.density[min(max(position, 0), self.density.size - 1)])


def mse_loss(errors):
    errors = np.asarray(errors, dtype=np.float64)
    if errors.size == 0:
        raise DatasetError('Cannot take the MSE of an empty error sequence.')
    return float(np.mean(errors ** 2))


def clip_llr(llr, clip):
    return np.clip(np.asarray(llr, dtype=np.float64), -clip, clip)


def ce_contributions(llr, bits):
    """Per-bit cross entropy: softplus(llr) for u = -1 and softplus(-llr) for u = +1."""
    llr = np.asarray(llr, dtype=np.float64)
    bits = np.asarray(bits)
    if llr.shape != bits.shape:
        raise DatasetError("Got {0} LLRs for {1} bits.".format(llr.shape, bits.shape))
    return np.logaddexp(0.0, np.where(bits > 0, -llr, llr))


def ce_loss(llr, bits):
    contributions = ce_contributions(llr, bits)
    if contributions.size == 0:
        raise DatasetError('Cannot take the cross entropy of an empty block.')
    return float(np.mean(contributions))


def dce_dllr(llr, bits):
    """Derivative of each per-bit contribution: P+ = sigmoid(llr) for u = -1 and
    -P- = sigmoid(llr) - 1 for u = +1."""
    probability = expit(np.asarray(llr, dtype=np.float64))
    return np.where(np.asarray(bits) > 0, probability - 1.0, probability)


def llr_descent_step(llr, bits, mu):
    """One steepest-descent step on the cross entropy taken directly in LLR space."""
    return np.asarray(llr, dtype=np.float64) - mu * dce_dllr(llr, bits)


def adam_step(params, grads, state, config):
    """Bias-corrected Adam update of every non-frozen learnable; frozen entries keep zero
    moments."""
    state.step += 1
    first_correction = 1.0 - config.beta1 ** state.step
    second_correction = 1.0 - config.beta2 ** state.step
    for name, gradient in grads.items():
        gradient = np.asarray(gradient, dtype=np.float64)
        if gradient.shape != params[name].shape:
            raise ConfigError("Gradient of {0} has shape {1}, expected {2}.".format(
                name, gradient.shape, params[name].shape))
        free = ~params.frozen[name]
        first = state.first[name]
        second = state.second[name]
        first[free] = config.beta1 * first[free] + (1.0 - config.beta1) * gradient[free]
        second[free] = config.beta2 * second[free] + (1.0 - config.beta2) * gradient[free] ** 2
        update = (first[free] / first_correction) / (np.sqrt(second[free] / second_correction)
                                                     + config.epsilon)
        params[name][free] -= config.learning_rate * update
    return params, state


def _target_reference(params, history):
    return history @ params[TARGET_KEY]


def mse_gradients(params, inputs, history):
    """Batch MSE against the target reference and its gradients (numpy engine)."""
    y, cache = forward_batch(params, inputs)
    errors = equalizer_error(y, _target_reference(params, history))
    d_y = 2.0 * errors / errors.size
    grads = backward_batch(params, cache, d_y)
    grads[TARGET_KEY] = -history.T @ d_y
    return mse_loss(errors), grads


def _clipped_upstream(llr, bits, clip):
    inside = np.abs(llr) < clip
    return dce_dllr(clip_llr(llr, clip), bits) * inside / llr.size


def ce_gradients(params, inputs, bits, clip, initial_metrics=None):
    """Batch CE of the detector LLRs and its gradients through the detector (numpy engine).
    Returns (loss, grads, soft decision)."""
    y, cache = forward_batch(params, inputs)
    trellis = build_trellis(params[TARGET_KEY])
    soft = maxlog_llr(trellis, y, initial_metrics)
    loss = ce_loss(clip_llr(soft.llr, clip), bits)
    d_y, d_taps = llr_backward(trellis, soft, y, _clipped_upstream(soft.llr, bits, clip))
    grads = backward_batch(params, cache, d_y)
    grads[TARGET_KEY] = d_taps
    return loss, grads, soft


def ce_objective(params, inputs, bits, clip, initial_metrics=None):
    """Batch CE together with the argmin signature of the detector, for finite differences."""
    y, _ = forward_batch(params, inputs)
    soft = maxlog_llr(build_trellis(params[TARGET_KEY]), y, initial_metrics)
    signature = np.concatenate([soft.best_minus, soft.best_plus, soft.alpha_choice.ravel(),
                                soft.beta_choice.ravel(),
                                (np.abs(soft.llr) < clip).astype(np.int64)])
    return ce_loss(clip_llr(soft.llr, clip), bits), signature


def tape_gradients(params, inputs, history, bits, config, initial_metrics=None):
    """Loss and gradients of one batch recorded on a scalar tape (engine tape)."""
    tape = grad.Tape()
    y_nodes = [forward(params, window, tape) for window in np.asarray(inputs)]
    taps = list(tape.param(TARGET_KEY, params[TARGET_KEY]))
    scale = 1.0 / len(y_nodes)
    if config.criterion == 'mse':
        terms = [grad.square(node - grad.total([grad.mul(tap, float(value))
                                                for tap, value in zip(taps, row)]))
                 for node, row in zip(y_nodes, history)]
    else:
        trellis = build_trellis(params[TARGET_KEY])
        terms = []
        for node, bit in zip(maxlog_llr_tape(trellis, y_nodes, taps, tape, initial_metrics),
                             bits):
            if abs(node.value) >= config.llr_clip:
                node = tape.const(float(np.clip(node.value, -config.llr_clip, config.llr_clip)))
            terms.append(grad.softplus(-node if bit > 0 else node))
    root = grad.total(terms) * scale
    adjoints = grad.backward(tape, root)
    return root.value, adjoints.params()


def _spans(n_windows, batch_size, minimum):
    starts = list(range(0, n_windows, batch_size))
    spans = [(start, min(start + batch_size, n_windows)) for start in starts]
    return [span for span in spans if span[1] - span[0] >= minimum]


def _train_sector_mse(params, state, windows, config, rng):
    inputs = windows.inputs()
    history = windows.label_history(params[TARGET_KEY].size)
    order = rng.permutation(len(windows))
    losses = []
    for start in range(0, order.size, config.batch_size):
        batch = order[start:start + config.batch_size]
        if config.engine == 'tape':
            loss, grads = tape_gradients(params, inputs[batch], history[batch], None, config)
        else:
            loss, grads = mse_gradients(params, inputs[batch], history[batch])
        adam_step(params, grads, state, config)
        losses.append(loss)
        logger.debug('Step %d: batch MSE %.6f.', state.step, loss)
    return losses


def _train_sector_ce(params, state, windows, config):
    inputs = windows.inputs()
    labels = windows.labels
    metrics = None
    losses = []
    for start, stop in _spans(len(windows), config.batch_size, params[TARGET_KEY].size):
        if metrics is None:
            metrics = free_start(build_trellis(params[TARGET_KEY]))
        if config.engine == 'tape':
            history = windows.label_history(params[TARGET_KEY].size, start, stop)
            loss, grads = tape_gradients(params, inputs[start:stop], history, labels[start:stop],
                                         config, metrics)
            y, _ = forward_batch(params, inputs[start:stop])
            soft = maxlog_llr(build_trellis(params[TARGET_KEY]), y, metrics)
        else:
            loss, grads, soft = ce_gradients(params, inputs[start:stop], labels[start:stop],
                                             config.llr_clip, metrics)
        # Warm start for the next span, detached and shifted to a zero minimum.
        metrics = soft.final_metrics - np.min(soft.final_metrics)
        adam_step(params, grads, state, config)
        losses.append(loss)
        logger.debug('Step %d: span CE %.6f.', state.step, loss)
    return losses


def evaluate_sector(params, windows, clip=50.0, epoch=0, sector=0):
    """Equalizer MSE against the target reference, mean CE of the clipped max-log LLRs and
    Viterbi BER of one sector. Detection starts free since the bits before the first label are
    unknown."""
    inputs = windows.inputs()
    labels = windows.labels
    y, _ = forward_batch(params, inputs)
    reference = _target_reference(params, windows.label_history(params[TARGET_KEY].size))
    trellis = build_trellis(params[TARGET_KEY])
    soft = maxlog_llr(trellis, y, free_start(trellis))
    decisions = survivor_path(trellis, soft)
    n_errors = int(np.sum(decisions != labels))
    return SectorMetrics(epoch=epoch, sector=sector,
                         mse=mse_loss(equalizer_error(y, reference)),
                         ce=ce_loss(clip_llr(soft.llr, clip), labels),
                         ber=n_errors / labels.size, n_bits=int(labels.size), n_errors=n_errors)


def evaluate(params, dataset, clip=50.0, epoch=0, workers=MAX_WORKERS):
    """Evaluate every sector of a dataset on at most workers threads."""
    if not dataset.sectors:
        raise DatasetError('Cannot evaluate on an empty dataset.')
    results = map_threads(lambda position: evaluate_sector(params, dataset.sectors[position], clip,
                                                           epoch, position + 1),
                          range(len(dataset.sectors)), workers)
    record = MetricsRecord(records=results, n_sectors=len(results))
    logger.info('Evaluated %d sectors: MSE %.5f, CE %.5f, BER %.5f (%d/%d).', len(results),
                record.final('mse'), record.final('ce'), record.ber, record.n_errors,
                record.n_bits)
    return record


def effective_learning_rate(config):
    """Adam step size train() uses: learning_rate, times the L2 norm of the initial target when
    scale_lr_by_target is set (1 for a monic start, sqrt(66) for [4, 7, 1])."""
    if not config.scale_lr_by_target:
        return config.learning_rate
    return config.learning_rate * float(np.linalg.norm(config.initial_target().taps))


def _phases(config):
    if config.criterion != 'mse' and config.pretrain_epochs:
        return [('mse', config.pretrain_epochs), (config.criterion, config.epochs)]
    return [(config.criterion, config.epochs)]


def train(config, spec, dataset, params=None, init_seed=7):
    """Adapt an equalizer (and its target) over config.epochs passes of the dataset.

    A CE criterion with pretrain_epochs > 0 first runs that many MSE epochs; the CE phase then
    starts from those weights with fresh Adam moments, and epoch numbers run on across both
    phases. Returns (params, MetricsRecord, AdamState of the last phase); record.steps counts
    the updates of every phase.
    """
    if len(dataset) == 0 or not dataset.sectors:
        raise DatasetError('Cannot train on an empty dataset.')
    if spec.layer_sizes[0] != 2 * dataset.d_in:
        raise DatasetError("A {0} equalizer needs D_in = {1}, but the windows hold {2}.".format(
            spec.describe(), spec.d_in, dataset.d_in))
    if params is None:
        params = attach_target(init_mlp(spec, init_seed), config.initial_target())
    rng = np.random.default_rng(config.seed)
    record = MetricsRecord(n_sectors=len(dataset.sectors))
    learning_rate = effective_learning_rate(config)
    logger.info('Training a %s equalizer at learning rate %.3g.', spec.describe(), learning_rate)

    epoch = 0
    for criterion, count in _phases(config):
        phase = replace(config, criterion=criterion, learning_rate=learning_rate)
        state = AdamState(params)
        for _ in range(count):
            epoch += 1
            for position, windows in enumerate(dataset.sectors):
                if criterion == 'mse':
                    _train_sector_mse(params, state, windows, phase, rng)
                else:
                    _train_sector_ce(params, state, windows, phase)
                metrics = evaluate_sector(params, windows, config.llr_clip, epoch, position + 1)
                record.append(metrics)
                logger.info('Epoch %d sector %d: MSE %.5f, CE %.5f, BER %.5f.', epoch,
                            position + 1, metrics.mse, metrics.ce, metrics.ber)
            logger.info('Epoch %d (%s) done after %d steps: mean BER %.5f.', epoch, criterion,
                        record.steps + state.step, record.epoch_means('ber')[epoch])
        record.steps += state.step
    return params, record, state


def equalizer_errors(params, dataset):
    """e_k = y_k - y^_k over every window of the dataset."""
    errors = []
    for windows in dataset.sectors:
        y, _ = forward_batch(params, windows.inputs())
        errors.append(equalizer_error(y, _target_reference(
            params, windows.label_history(params[TARGET_KEY].size))))
    return np.concatenate(errors)


def error_histogram(params, dataset, n_bins=201, tail_threshold=1.0, limit=None):
    """Normalized histogram of the equalizer error over every window of the dataset, on n_bins
    bins symmetric around 0 (limit defaults to the largest error seen), plus P(|e| > threshold)."""
    return histogram_from_errors(equalizer_errors(params, dataset), n_bins, tail_threshold, limit)


def histogram_from_errors(errors, n_bins=201, tail_threshold=1.0, limit=None):
    errors = np.asarray(errors, dtype=np.float64)
    if errors.size == 0:
        raise DatasetError('Cannot build a histogram without errors.')
    if limit is None:
        limit = max(float(np.max(np.abs(errors))), tail_threshold)
    limit = limit if limit > 0 else 1.0
    density, edges = np.histogram(errors, bins=n_bins, range=(-limit, limit), density=True)
    return Histogram(edges=edges, density=density, tail_threshold=tail_threshold,
                     tail_mass=float(np.mean(np.abs(errors) > tail_threshold)),
                     n_samples=int(errors.size))


def convergence_epoch(record, tolerance=1e-4, name='ber'):
    """First epoch after which no later epoch improves the mean metric by more than tolerance."""
    means = list(record.epoch_means(name).items())
    if not means:
        raise DatasetError('No metrics were recorded.')
    for position, (epoch, value) in enumerate(means):
        if all(later >= value - tolerance for _, later in means[position + 1:]):
            return epoch
    return means[-1][0]


def write_curves(record, path):
    """CSV of (epoch, sector, mse, ce, ber); sector counts across epochs."""
    with open(path, 'w', newline='') as curves:
        writer = csv.writer(curves)
        writer.writerow(CURVE_COLUMNS)
        for metrics in record:
            writer.writerow([metrics.epoch, record.sector_number(metrics), repr(metrics.mse),
                             repr(metrics.ce), repr(metrics.ber)])
    logger.info('Wrote %d curve points to %s.', len(record), path)
    return path


def write_histogram(histogram, path):
    """CSV of (center, density) pairs followed by a tail-mass comment line."""
    with open(path, 'w', newline='') as output:
        writer = csv.writer(output)
        writer.writerow(['center', 'density'])
        for center, density in zip(histogram.centers, histogram.density):
            writer.writerow([repr(float(center)), repr(float(density))])
        output.write("# tail_mass(|e|>{0})={1!r}\n".format(histogram.tail_threshold,
                                                         histogram.tail_mass))
    return path
