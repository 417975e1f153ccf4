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

"""This module contains utility functions that may be relevant to more than one experiment."""

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from time import time

import numpy as np
from braceexpand import braceexpand
from scipy.stats import norm

from tdmrlab.errors import ConfigError

ALL_SECTORS = 'all'
MAX_WORKERS = 4


def parse_selection(text):
    """Turn a sector selection such as 'all', '3' or '{2..6}' into a sorted list of 1-based sector
    indices; 'all' gives None."""
    if isinstance(text, (list, tuple)):
        values = [str(value) for value in text]
    else:
        text = str(text).strip()
        if text.lower() == ALL_SECTORS:
            return None
        values = list(braceexpand(text))
    try:
        indices = sorted(set(int(value) for value in values))
    except ValueError:
        raise ConfigError("Cannot parse sector selection {0}.".format(text))
    if not indices or indices[0] < 1:
        raise ConfigError("Sector indices start at 1 (got {0}).".format(text))
    return indices


def dataset_hash(sectors):
    """SHA-256 over the samples and center-track bits of every sector, in index order."""
    digest = hashlib.sha256()
    for sector in sorted(sectors, key=lambda sector: sector.index):
        digest.update(str(sector.index).encode('utf-8'))
        digest.update(np.ascontiguousarray(sector.frame.samples, dtype='<f4').tobytes())
        digest.update(np.ascontiguousarray(sector.bits, dtype='i1').tobytes())
    return digest.hexdigest()


def config_hash(mapping):
    """SHA-256 of a mapping serialized as sorted-key JSON."""
    encoded = json.dumps(mapping, sort_keys=True, default=str).encode('utf-8')
    return hashlib.sha256(encoded).hexdigest()


def z_score(confidence=0.95):
    return float(norm.ppf(0.5 + 0.5 * confidence))


def binomial_interval(n_errors, n_bits, confidence=0.95):
    """Normal-approximation confidence interval of an error rate."""
    rate = n_errors / n_bits
    half_width = z_score(confidence) * np.sqrt(rate * (1.0 - rate) / n_bits)
    return max(rate - half_width, 0.0), min(rate + half_width, 1.0)


def relative_reduction(errors_a, bits_a, errors_b, bits_b, confidence=0.95):
    """Relative error-rate reduction (p_a - p_b) / p_a of system b over system a, with the
    two-proportion normal-approximation interval of p_a - p_b scaled by 1 / p_a. Returns
    (reduction, lower, upper)."""
    rate_a = errors_a / bits_a
    rate_b = errors_b / bits_b
    if rate_a == 0:
        return 0.0, 0.0, 0.0
    spread = np.sqrt(rate_a * (1.0 - rate_a) / bits_a + rate_b * (1.0 - rate_b) / bits_b)
    reduction = (rate_a - rate_b) / rate_a
    half_width = z_score(confidence) * spread / rate_a
    return float(reduction), float(reduction - half_width), float(reduction + half_width)


class Stopwatch(object):
    """Wall-clock timer for log messages."""

    def __init__(self):
        self.start = time()

    @property
    def elapsed(self):
        return time() - self.start


def map_threads(function, items, max_workers=MAX_WORKERS):
    """Apply function to every item on at most max_workers threads. Results keep the order of
    items; the first exception raised by a worker is re-raised here."""
    items = list(items)
    if not items:
        return []
    with ThreadPoolExecutor(max_workers=max(1, min(max_workers, len(items)))) as executor:
        return list(executor.map(function, items))
