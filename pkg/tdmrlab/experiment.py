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

"""This module glues the lab together: it prepares (or loads) the sector pool, trains one model
per model spec on the selected sectors, evaluates it, writes curves, checkpoints, histograms and a
summary JSON, and checks the result orderings a preset expects."""

import json
import logging
import os
import re
from collections import OrderedDict
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from tdmrlab import __version__
from tdmrlab.archive import read_archive_channel, write_archive
from tdmrlab.chansim import (calibrate_noise, normalize_frame, sector_tracks, simulate_sectors,
                             synthesize_readback, window_dataset)
from tdmrlab.equalizer import (MlpSpec, choose_decision_delay, load_checkpoint, param_count,
                               save_checkpoint)
from tdmrlab.errors import ConfigError, DatasetError, OrderingViolation
from tdmrlab.training import (evaluate, convergence_epoch, equalizer_errors, histogram_from_errors,
                              train, write_curves, write_histogram)
from tdmrlab.utils import (Stopwatch, config_hash, dataset_hash, map_threads, parse_selection,
                           relative_reduction)

logger = logging.getLogger(__name__) # pylint: disable=invalid-name
logger.setLevel(logging.INFO)

CALIBRATION_SEED_OFFSET = 100000
SUMMARY_FILE = 'summary.json'
CHAIN_RULE = re.compile(r'^\s*(\w+)\s*:\s*(\w+(?:\s*[<>]\s*\w+)+)\s*$')
REDUCTION_RULE = re.compile(r'^\s*reduction\(\s*(\w+)\s*,\s*(\w+)\s*\)\s*>=\s*([-+0-9.eE]+)\s*$')
MODEL_OPTIONS = ('epochs', 'pretrain')


@dataclass(frozen=True)
class ModelSpec(object):
    """One model of an experiment, written as '<layers> <activation> <criterion> <target>' with
    optional trailing 'epochs=N' and 'pretrain=N' (MSE warm-up epochs of a CE model), e.g.
    '22-6-1 tanh ce adaptive pretrain=2'. The activation of a linear equalizer is spelled
    'linear'."""
    name: str
    mlp: MlpSpec
    criterion: str
    target_mode: str
    epochs: Optional[int] = None
    pretrain: Optional[int] = None

    @classmethod
    def parse(cls, name, text):
        tokens = str(text).split()
        if len(tokens) < 4:
            raise ConfigError("Model {0}: expected '<layers> <activation> <criterion> <target>' "
                              "(got {1}).".format(name, text))
        layers, activation, criterion, target_mode = tokens[:4]
        options = {}
        for extra in tokens[4:]:
            key, _, value = extra.partition('=')
            if key not in MODEL_OPTIONS or not value.isdigit():
                raise ConfigError("Model {0}: unknown option {1}.".format(name, extra))
            options[key] = int(value)
        if options.get('pretrain') and criterion == 'mse':
            raise ConfigError("Model {0}: only a CE model takes pretrain epochs.".format(name))
        if activation == 'linear':
            mlp = MlpSpec.parse(layers)
            if not mlp.is_linear:
                raise ConfigError("Model {0}: a linear equalizer has no hidden layer.".format(name))
        else:
            mlp = MlpSpec.parse(layers, activation)
        return cls(name=name, mlp=mlp, criterion=criterion, target_mode=target_mode, **options)

    def describe(self):
        activation = 'linear' if self.mlp.is_linear else self.mlp.activation
        words = [self.mlp.describe(), activation, self.criterion, self.target_mode]
        for key in MODEL_OPTIONS:
            if getattr(self, key) is not None:
                words.append("{0}={1}".format(key, getattr(self, key)))
        return ' '.join(words)


@dataclass
class SectorPool(object):
    """Sectors available to an experiment plus the channel they came from."""
    sectors: list
    params: object
    geometry: object
    simulated: bool = True
    hash: str = ''

    def __post_init__(self):
        if not self.hash:
            self.hash = dataset_hash(self.sectors)

    def select(self, indices):
        if indices is None:
            return list(self.sectors)
        by_index = {sector.index: sector for sector in self.sectors}
        missing = [index for index in indices if index not in by_index]
        if missing:
            raise DatasetError("Sectors {0} are not in the pool (holds {1}..{2}).".format(
                missing, min(by_index), max(by_index)))
        return [by_index[index] for index in indices]


@dataclass
class ModelResult(object):
    model: ModelSpec
    params: object
    record: object
    test: object
    delay: int
    steps: int
    histogram: Optional[object] = None
    paths: dict = field(default_factory=dict)

    def metrics(self):
        metrics = OrderedDict([
            ('spec', self.model.describe()),
            ('param_count', param_count(self.model.mlp, self.params.target)),
            ('decision_delay', self.delay),
            ('steps', self.steps),
            ('target', self.params.target.taps.tolist()),
            ('mse', self.test.final('mse')),
            ('ce', self.test.final('ce')),
            ('ber', self.test.ber),
            ('n_errors', self.test.n_errors),
            ('n_bits', self.test.n_bits),
            ('final_mse', self.record.final('mse')),
            ('final_ce', self.record.final('ce')),
            ('final_ber', self.record.final('ber')),
            ('epochs_to_convergence', convergence_epoch(self.record)),
        ])
        if self.histogram is not None:
            metrics['peak'] = self.histogram.peak
            metrics['tail'] = self.histogram.tail_mass
            metrics['tail_threshold'] = self.histogram.tail_threshold
        return metrics


def sector_count(config, sectors=None, full=False):
    if full:
        return config.channel.full_sectors
    return sectors or config.channel.sectors


def prepare_pool(config, n_sectors=None, archive=None, workers=None):
    """Load a sector archive (with the channel its headers record), or calibrate the channel and
    simulate n_sectors fresh sectors."""
    if archive:
        sectors, params, geometry = read_archive_channel(archive)
        return SectorPool(sectors=sectors, params=params, geometry=geometry, simulated=False)
    params = config.channel_params()
    geometry = config.reader_geometry()
    n_sectors = n_sectors or config.channel.sectors
    if config.channel.calibrate:
        params = calibrate_noise(params, geometry, config.channel.raw_ber,
                                 n_sectors=config.channel.calibration_sectors,
                                 n_bits=config.channel.calibration_bits,
                                 seed=config.channel.seed + CALIBRATION_SEED_OFFSET)
    sectors = simulate_sectors(n_sectors, config.channel.seed, params, geometry,
                               config.channel.bits_per_sector,
                               workers or config.experiment.workers)
    return SectorPool(sectors=sectors, params=params, geometry=geometry, simulated=True)


def generate(config, directory, n_sectors=None):
    """Simulate a calibrated pool and write it as a sector archive."""
    pool = prepare_pool(config, n_sectors)
    write_archive(directory, pool.sectors, pool.params, pool.geometry)
    return pool


def noiseless_frame(pool, sector):
    """The sector read back without AWGN, normalized. Archived sectors get their tracks drawn
    again from the seed; if those disagree with the archived bits the stored frame is used."""
    tracks = sector.tracks
    if not pool.simulated:
        tracks = sector_tracks(sector.seed, pool.params, sector.frame.n_samples)
        if not np.array_equal(tracks.center, sector.bits):
            logger.warning('Sector %d does not match its seed; choosing the delay on its '
                           'noisy frame.', sector.index)
            return sector.frame
    quiet = replace(pool.params, awgn_sigma=0.0)
    return normalize_frame(synthesize_readback(tracks, quiet, pool.geometry, 0))


def resolve_delay(config, pool, sector, d_in, taps):
    delay = config.decision_delay()
    if delay is not None:
        return delay
    delay, _ = choose_decision_delay(noiseless_frame(pool, sector), sector.bits, taps, d_in)
    return delay


def windows_of(sectors, d_in, delay):
    return window_dataset([sector.frame for sector in sectors], sectors, d_in, delay)


def train_model(model, config, pool, train_indices=None, test_indices=None, epochs=None):
    """Train one model on the selected sectors and evaluate it on the test selection."""
    stopwatch = Stopwatch()
    train_config = config.train_config(model.criterion, model.target_mode,
                                       model.epochs or epochs, model.pretrain)
    training_sectors = pool.select(train_indices)
    test_sectors = pool.select(test_indices)
    delay = resolve_delay(config, pool, training_sectors[0], model.mlp.d_in,
                          train_config.initial_target().taps)
    logger.info('Training %s (%s) on %d sectors, decision delay %d.', model.name,
                model.describe(), len(training_sectors), delay)
    params, record, _ = train(train_config, model.mlp,
                              windows_of(training_sectors, model.mlp.d_in, delay),
                              init_seed=config.equalizer.init_seed)
    test = evaluate(params, windows_of(test_sectors, model.mlp.d_in, delay),
                    train_config.llr_clip, epoch=record.epochs()[-1])
    logger.info('Model %s done in %.1f s: test BER %.5f.', model.name, stopwatch.elapsed,
                test.ber)
    return ModelResult(model=model, params=params, record=record, test=test, delay=delay,
                       steps=record.steps)


def attach_histograms(results, config, pool, test_indices=None):
    """Error histograms of every result on a common symmetric range."""
    errors = OrderedDict()
    for name, result in results.items():
        errors[name] = equalizer_errors(result.params, windows_of(pool.select(test_indices),
                                                                  result.model.mlp.d_in,
                                                                  result.delay))
    limit = max(max(float(np.max(np.abs(values))) for values in errors.values()),
                config.experiment.tail_threshold)
    for name, result in results.items():
        result.histogram = histogram_from_errors(errors[name], config.experiment.histogram_bins,
                                                 config.experiment.tail_threshold, limit)


def write_results(results, directory):
    if not os.path.isdir(directory):
        os.makedirs(directory)
    for name, result in results.items():
        result.paths['curves'] = write_curves(result.record, os.path.join(
            directory, "{0}-curves.csv".format(name)))
        result.paths['checkpoint'] = save_checkpoint(
            os.path.join(directory, "{0}-checkpoint.json".format(name)), result.params,
            step=result.steps, extra={'decision_delay': result.delay})
        if result.histogram is not None:
            result.paths['histogram'] = write_histogram(result.histogram, os.path.join(
                directory, "{0}-histogram.csv".format(name)))


def summarize(results, config, pool, orderings=None, preset=None):
    summary = OrderedDict([
        ('tool_version', __version__),
        ('preset', preset),
        ('config_hash', config_hash(config.to_dict())),
        ('dataset_hash', pool.hash),
        ('awgn_sigma', pool.params.awgn_sigma),
        ('models', OrderedDict((name, result.metrics()) for name, result in results.items())),
    ])
    if orderings is not None:
        summary['orderings'] = [OrderedDict([('name', check.name), ('rule', check.rule),
                                             ('passed', check.passed), ('detail', check.detail)])
                                for check in orderings]
    return summary


def write_summary(summary, directory):
    path = os.path.join(directory, SUMMARY_FILE)
    with open(path, 'w') as summary_file:
        json.dump(summary, summary_file, indent=2)
        summary_file.write('\n')
    logger.info('Wrote summary to %s.', path)
    return path


def train_models(models, config, pool, train_indices=None, test_indices=None, epochs=None,
                 workers=None):
    """Train independent models on at most workers threads, one optimizer each."""

    def _train(model):
        try:
            return train_model(model, config, pool, train_indices, test_indices, epochs)
        except Exception as exception: # pylint: disable=broad-except
            logger.error('Model %s failed: %s', model.name, exception)
            raise

    trained = map_threads(_train, models, workers or config.experiment.workers)
    return OrderedDict((model.name, result) for model, result in zip(models, trained))


def run(config, pool=None, output_dir=None, train_indices=None, test_indices=None):
    """Train the single model an experiment config describes and write its artifacts."""
    pool = pool or prepare_pool(config)
    output_dir = output_dir or config.experiment.output_dir
    model = ModelSpec(name='model', mlp=config.mlp_spec(), criterion=config.training.criterion,
                      target_mode=config.equalizer.target_mode)
    train_indices = train_indices or parse_selection(config.experiment.train_sectors)
    test_indices = test_indices or parse_selection(config.experiment.test_sectors)
    results = OrderedDict([(model.name, train_model(model, config, pool, train_indices,
                                                    test_indices))])
    write_results(results, output_dir)
    summary = summarize(results, config, pool)
    write_summary(summary, output_dir)
    return summary


def run_preset(profile, config, pool, output_dir, train_indices=None, test_indices=None,
               epochs=None, assert_orderings=False):
    """Train every model of a preset profile, check its orderings and write the artifacts."""
    results = train_models(list(profile.models.values()), config, pool, train_indices,
                           test_indices, epochs)
    if profile.histograms:
        attach_histograms(results, config, pool, test_indices)
    checks = check_orderings(profile.orderings, OrderedDict(
        (name, result.metrics()) for name, result in results.items()))
    directory = os.path.join(output_dir, profile.name)
    write_results(results, directory)
    summary = summarize(results, config, pool, checks, preset=profile.name)
    write_summary(summary, directory)
    for check in checks:
        log = logger.info if check.passed else logger.warning
        log('Ordering %s %s: %s', check.name, 'holds' if check.passed else 'VIOLATED', check.detail)
    violated = [check.name for check in checks if not check.passed]
    if assert_orderings and violated:
        raise OrderingViolation("Preset {0} violated {1}.".format(profile.name,
                                                                  ', '.join(violated)))
    return summary


def evaluate_checkpoint(config, checkpoint, pool, test_indices=None):
    """Evaluate a saved model on a selection of the pool."""
    params, payload = load_checkpoint(checkpoint)
    delay = payload.get('decision_delay')
    if delay is None:
        delay = resolve_delay(config, pool, pool.select(test_indices)[0], params.spec.d_in,
                              params.target.taps)
    return evaluate(params, windows_of(pool.select(test_indices), params.spec.d_in, delay),
                    config.training.llr_clip)


@dataclass
class OrderingCheck(object):
    name: str
    rule: str
    passed: bool
    detail: str


def _metric(metrics, model, name, rule):
    if model not in metrics:
        raise ConfigError("Ordering rule {0} names unknown model {1}.".format(rule, model))
    if name not in metrics[model]:
        raise ConfigError("Ordering rule {0} needs metric {1}, which {2} lacks.".format(
            rule, name, model))
    return metrics[model][name]


def check_orderings(rules, metrics, confidence=0.95):
    """Evaluate ordering rules against per-model metrics. A rule is either a chain such as
    'ber: nle_ce < le_ce < le_mse' or a reduction bound such as 'reduction(le_mse, nle_ce) >= 0.10',
    which holds when the lower end of the confidence interval of the relative BER reduction of the
    second model over the first reaches the bound."""
    checks = []
    for name, rule in rules.items():
        chain = CHAIN_RULE.match(rule)
        reduction = REDUCTION_RULE.match(rule)
        if chain:
            metric = chain.group(1)
            tokens = re.findall(r'\w+|[<>]', chain.group(2))
            models, operators = tokens[0::2], tokens[1::2]
            values = [_metric(metrics, model, metric, rule) for model in models]
            passed = all(left < right if operator == '<' else left > right
                         for left, operator, right in zip(values, operators, values[1:]))
            detail = ' '.join("{0}={1:.6g}".format(model, value)
                              for model, value in zip(models, values))
        elif reduction:
            baseline, candidate, bound = reduction.group(1), reduction.group(2), reduction.group(3)
            value, lower, upper = relative_reduction(
                _metric(metrics, baseline, 'n_errors', rule),
                _metric(metrics, baseline, 'n_bits', rule),
                _metric(metrics, candidate, 'n_errors', rule),
                _metric(metrics, candidate, 'n_bits', rule), confidence)
            passed = lower >= float(bound)
            detail = "reduction {0:.2%} ({1:.2%} .. {2:.2%})".format(value, lower, upper)
        else:
            raise ConfigError("Cannot parse ordering rule {0}: {1}".format(name, rule))
        checks.append(OrderingCheck(name=name, rule=rule, passed=passed, detail=detail))
    return checks


def read_summary(path):
    try:
        with open(path) as summary_file:
            return json.load(summary_file)
    except (IOError, ValueError) as exception:
        raise DatasetError("Cannot read summary {0}: {1}".format(path, exception))


def _model_entry(summary, model):
    models = summary.get('models', {})
    if not models:
        raise DatasetError('Summary holds no models.')
    if model is None:
        model = next(iter(models))
    if model not in models:
        raise DatasetError("Summary has no model {0} (has {1}).".format(model,
                                                                        ', '.join(models)))
    return model, models[model]


def compare(summary_a, summary_b, model_a=None, model_b=None, confidence=0.95):
    """Relative BER reduction of b over a with its binomial confidence interval."""
    if summary_a.get('dataset_hash') != summary_b.get('dataset_hash'):
        raise DatasetError('Summaries were produced on different datasets ({0} vs {1}).'.format(
            summary_a.get('dataset_hash'), summary_b.get('dataset_hash')))
    name_a, entry_a = _model_entry(summary_a, model_a)
    name_b, entry_b = _model_entry(summary_b, model_b)
    reduction, lower, upper = relative_reduction(entry_a['n_errors'], entry_a['n_bits'],
                                                 entry_b['n_errors'], entry_b['n_bits'],
                                                 confidence)
    return OrderedDict([
        ('model_a', name_a), ('ber_a', entry_a['n_errors'] / entry_a['n_bits']),
        ('model_b', name_b), ('ber_b', entry_b['n_errors'] / entry_b['n_bits']),
        ('reduction', reduction), ('lower', lower), ('upper', upper),
        ('confidence', confidence),
    ])
