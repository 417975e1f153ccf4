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

"""Trellis detection matched to a PR target: hard Viterbi decisions, exact max-log soft output
through forward and backward min-sum recursions, exhaustive oracles for short blocks and the
subgradient of the LLRs with respect to the equalized samples and the target taps.

A state holds the previous L-1 bits; bit m-1 of the state index is 1 when u_{n-m} = +1, so the
all-(-1) history is state 0. Branch 2 s + b leaves state s on input bit 2 b - 1. LLRs are positive
when +1 is the more likely bit. Ties in every min() go to the lower branch index.
"""

import csv
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from tdmrlab import grad
from tdmrlab.equalizer import PrTarget
from tdmrlab.errors import DetectorError

logger = logging.getLogger(__name__) # pylint: disable=invalid-name
logger.setLevel(logging.INFO)

MAX_BRUTE_FORCE_BITS = 16


@dataclass(frozen=True, eq=False)
class Trellis(object):
    """Branch tables of the trellis matched to a PR target."""
    taps: np.ndarray
    n_states: int
    origin: np.ndarray
    bit: np.ndarray
    next_state: np.ndarray
    history: np.ndarray
    incoming: np.ndarray

    @property
    def length(self):
        return self.taps.size

    @property
    def n_branches(self):
        return self.origin.size

    @property
    def expected(self):
        """Noiseless output y^(s, u) of every branch; linear in the taps through history."""
        return self.history @ self.taps

    def outgoing(self, state):
        return np.array([2 * state, 2 * state + 1])


def build_trellis(target):
    taps = target.taps if isinstance(target, PrTarget) else np.asarray(target, dtype=np.float64)
    taps = np.array(taps, dtype=np.float64).ravel()
    if taps.size < 1:
        raise DetectorError('A trellis needs a target with at least one tap.')
    memory = taps.size - 1
    n_states = 2 ** memory
    mask = n_states - 1

    branches = np.arange(2 * n_states)
    origin = branches // 2
    bit_index = branches % 2
    next_state = ((origin << 1) | bit_index) & mask
    history = np.empty((branches.size, taps.size))
    history[:, 0] = 2 * bit_index - 1
    for m in range(1, taps.size):
        history[:, m] = 2 * ((origin >> (m - 1)) & 1) - 1

    incoming = np.empty((n_states, 2), dtype=np.int64)
    for state in range(n_states):
        arriving = branches[next_state == state]
        incoming[state] = np.sort(arriving)
    return Trellis(taps=taps, n_states=n_states, origin=origin, bit=(2 * bit_index - 1),
                   next_state=next_state, history=history, incoming=incoming)


def known_start(trellis):
    """Start metrics of a block preceded by -1 pad bits."""
    metrics = np.full(trellis.n_states, np.inf)
    metrics[0] = 0.0
    return metrics


def free_start(trellis):
    """Start metrics of a block whose preceding bits are unknown."""
    return np.zeros(trellis.n_states)


def branch_metric(y_k, expected):
    """Squared distance (y_k - y^)^2 between an equalized sample and a branch output."""
    return (np.asarray(y_k, dtype=np.float64) - expected) ** 2


def branch_metrics(trellis, y):
    """(N, 2 S) array of branch metrics for a sample sequence."""
    return branch_metric(np.asarray(y, dtype=np.float64)[:, None], trellis.expected[None, :])


@dataclass(frozen=True, eq=False)
class SoftDecision(object):
    """Hard decisions and LLRs of one block. The remaining fields are the bookkeeping that
    llr_backward walks back through; they are None for brute-force results."""
    hard_bits: np.ndarray
    llr: np.ndarray
    y: Optional[np.ndarray] = None
    taps: Optional[np.ndarray] = None
    metrics: Optional[np.ndarray] = None
    alpha: Optional[np.ndarray] = None
    beta: Optional[np.ndarray] = None
    alpha_choice: Optional[np.ndarray] = None
    beta_choice: Optional[np.ndarray] = None
    best_minus: Optional[np.ndarray] = None
    best_plus: Optional[np.ndarray] = None

    @property
    def argmin_paths(self):
        return self.best_minus, self.best_plus

    @property
    def final_metrics(self):
        return None if self.alpha is None else self.alpha[-1]


def _check_block(trellis, y):
    y = np.asarray(y, dtype=np.float64).ravel()
    if y.size < trellis.length:
        raise DetectorError("Block of {0} samples is shorter than the target ({1} taps).".format(
            y.size, trellis.length))
    return y


def _start(trellis, initial_metrics):
    if initial_metrics is None:
        return known_start(trellis)
    initial_metrics = np.asarray(initial_metrics, dtype=np.float64)
    if initial_metrics.shape != (trellis.n_states,):
        raise DetectorError("Expected {0} start metrics (got {1}).".format(
            trellis.n_states, initial_metrics.shape))
    return initial_metrics


def _forward(trellis, metrics, start):
    """Add-compare-select over the block. alpha[k] holds the state metrics before sample k."""
    n_samples = metrics.shape[0]
    alpha = np.empty((n_samples + 1, trellis.n_states))
    choice = np.empty((n_samples, trellis.n_states), dtype=np.int64)
    alpha[0] = start
    columns = np.arange(trellis.n_states)
    for k in range(n_samples):
        candidates = (alpha[k][trellis.origin] + metrics[k])[trellis.incoming]
        picked = np.argmin(candidates, axis=1)
        choice[k] = trellis.incoming[columns, picked]
        alpha[k + 1] = candidates[columns, picked]
    return alpha, choice


def _backward(trellis, metrics):
    """Backward min-sum; beta[k] holds the best metric of samples k..N-1 from each state."""
    n_samples = metrics.shape[0]
    beta = np.zeros((n_samples + 1, trellis.n_states))
    choice = np.empty((n_samples, trellis.n_states), dtype=np.int64)
    outgoing = np.arange(2 * trellis.n_states).reshape(trellis.n_states, 2)
    columns = np.arange(trellis.n_states)
    for k in range(n_samples - 1, -1, -1):
        candidates = (metrics[k] + beta[k + 1][trellis.next_state])[outgoing]
        picked = np.argmin(candidates, axis=1)
        choice[k] = outgoing[columns, picked]
        beta[k] = candidates[columns, picked]
    return beta, choice


def _traceback(trellis, alpha, choice):
    n_samples = choice.shape[0]
    bits = np.empty(n_samples, dtype=np.int8)
    state = int(np.argmin(alpha[-1]))
    for k in range(n_samples - 1, -1, -1):
        branch = choice[k, state]
        bits[k] = trellis.bit[branch]
        state = trellis.origin[branch]
    return bits


def viterbi_hard(trellis, y, initial_metrics=None):
    """Input bits of the minimum path-metric path; the end state is free."""
    y = _check_block(trellis, y)
    alpha, choice = _forward(trellis, branch_metrics(trellis, y), _start(trellis, initial_metrics))
    return _traceback(trellis, alpha, choice)


def survivor_path(trellis, soft):
    """Viterbi decisions recovered from the forward pass of a maxlog_llr result."""
    return _traceback(trellis, soft.alpha, soft.alpha_choice)


def maxlog_llr(trellis, y, initial_metrics=None):
    """Exact max-log LLRs: llr_k = min PM over paths with u_k = -1 minus min PM over paths with
    u_k = +1, with every path metric split as alpha + BM + beta around sample k."""
    y = _check_block(trellis, y)
    return _soft_decision(trellis, y, branch_metrics(trellis, y), _start(trellis, initial_metrics))


def _soft_decision(trellis, y, metrics, start):
    alpha, alpha_choice = _forward(trellis, metrics, start)
    beta, beta_choice = _backward(trellis, metrics)

    totals = (alpha[:-1][:, trellis.origin] + metrics) + beta[1:][:, trellis.next_state]
    minus = np.flatnonzero(trellis.bit < 0)
    plus = np.flatnonzero(trellis.bit > 0)
    best_minus = minus[np.argmin(totals[:, minus], axis=1)]
    best_plus = plus[np.argmin(totals[:, plus], axis=1)]
    rows = np.arange(y.size)
    llr = totals[rows, best_minus] - totals[rows, best_plus]
    hard_bits = trellis.bit[np.argmin(totals, axis=1)].astype(np.int8)
    return SoftDecision(hard_bits=hard_bits, llr=llr, y=y.copy(), taps=trellis.taps.copy(),
                        metrics=metrics, alpha=alpha, beta=beta, alpha_choice=alpha_choice,
                        beta_choice=beta_choice, best_minus=best_minus, best_plus=best_plus)


def _enumerate_paths(trellis, n_samples, start):
    """Branch indices of every (start state, bit sequence) path, start states ascending."""
    starts = np.flatnonzero(np.isfinite(start))
    sequences = (np.arange(2 ** n_samples)[:, None] >> np.arange(n_samples - 1, -1, -1)) & 1
    state = np.repeat(starts, sequences.shape[0])
    bits = np.tile(sequences, (starts.size, 1))
    branches = np.empty(bits.shape, dtype=np.int64)
    for k in range(n_samples):
        branches[:, k] = 2 * state + bits[:, k]
        state = trellis.next_state[branches[:, k]]
    return np.repeat(start[starts], sequences.shape[0]), branches


def brute_force_llr(trellis, y, initial_metrics=None):
    """Exhaustive oracle for maxlog_llr and viterbi_hard on blocks of at most 16 samples. Prefix
    metrics are summed left to right and suffix metrics right to left, the same association the
    recursions use, so both agree to the last bit."""
    y = _check_block(trellis, y)
    if y.size > MAX_BRUTE_FORCE_BITS:
        raise DetectorError("Brute force is limited to {0} samples (got {1}).".format(
            MAX_BRUTE_FORCE_BITS, y.size))
    metrics = branch_metrics(trellis, y)
    start = _start(trellis, initial_metrics)
    offsets, branches = _enumerate_paths(trellis, y.size, start)
    path_metrics = metrics[np.arange(y.size)[None, :], branches]

    prefix = np.cumsum(np.hstack([offsets[:, None], path_metrics]), axis=1)
    suffix = np.hstack([np.cumsum(path_metrics[:, ::-1], axis=1)[:, ::-1],
                        np.zeros((branches.shape[0], 1))])
    totals = prefix[:, 1:] + suffix[:, 1:]
    bits = trellis.bit[branches]

    llr = np.empty(y.size)
    for k in range(y.size):
        llr[k] = np.min(totals[bits[:, k] < 0, k]) - np.min(totals[bits[:, k] > 0, k])
    hard_bits = bits[np.argmin(prefix[:, -1])].astype(np.int8)
    return SoftDecision(hard_bits=hard_bits, llr=llr)


def llr_backward(trellis, soft, y, upstream, with_target=True):
    """Backpropagate dJ/dllr through the argmin structure of a maxlog_llr result.

    Returns (dJ/dy, dJ/dg); dJ/dg is None when with_target is False. Start metrics are treated as
    constants.
    """
    y = np.asarray(y, dtype=np.float64).ravel()
    if soft.alpha is None:
        raise DetectorError('Soft decision carries no bookkeeping to backpropagate through.')
    if y.shape != soft.y.shape or not np.array_equal(y, soft.y) \
            or not np.array_equal(trellis.taps, soft.taps):
        raise DetectorError('Samples or target changed since the forward pass.')
    upstream = np.asarray(upstream, dtype=np.float64).ravel()
    if upstream.shape != y.shape:
        raise DetectorError("Got {0} upstream gradients for {1} LLRs.".format(upstream.size,
                                                                              y.size))
    n_samples = y.size
    rows = np.arange(n_samples)
    d_metrics = np.zeros_like(soft.metrics)
    d_alpha = np.zeros_like(soft.alpha)
    d_beta = np.zeros_like(soft.beta)

    for branches, sign in ((soft.best_minus, 1.0), (soft.best_plus, -1.0)):
        weight = sign * upstream
        np.add.at(d_metrics, (rows, branches), weight)
        np.add.at(d_alpha, (rows, trellis.origin[branches]), weight)
        np.add.at(d_beta, (rows + 1, trellis.next_state[branches]), weight)

    for k in range(n_samples - 1, -1, -1):
        adjoint = d_alpha[k + 1]
        if not adjoint.any():
            continue
        chosen = soft.alpha_choice[k]
        np.add.at(d_metrics[k], chosen, adjoint)
        np.add.at(d_alpha[k], trellis.origin[chosen], adjoint)

    for k in range(n_samples):
        adjoint = d_beta[k]
        if not adjoint.any():
            continue
        chosen = soft.beta_choice[k]
        np.add.at(d_metrics[k], chosen, adjoint)
        if k + 1 < n_samples:
            np.add.at(d_beta[k + 1], trellis.next_state[chosen], adjoint)

    residual = 2.0 * (y[:, None] - trellis.expected[None, :])
    d_y = np.sum(d_metrics * residual, axis=1)
    if not with_target:
        return d_y, None
    d_expected = -np.sum(d_metrics * residual, axis=0)
    return d_y, trellis.history.T @ d_expected


def maxlog_llr_tape(trellis, y_nodes, taps, tape, initial_metrics=None):
    """The maxlog_llr recursion recorded with min2 on a tape. y_nodes are Vars (or floats) and taps
    either Vars or floats. Returns the list of LLR nodes."""
    n_samples = len(y_nodes)
    if n_samples < trellis.length:
        raise DetectorError("Block of {0} samples is shorter than the target ({1} taps).".format(
            n_samples, trellis.length))
    start = _start(trellis, initial_metrics)
    expected = [grad.total([grad.mul(taps[m], float(trellis.history[branch, m]))
                            if isinstance(taps[m], grad.Var) else
                            tape.const(float(taps[m]) * trellis.history[branch, m])
                            for m in range(trellis.length)])
                for branch in range(trellis.n_branches)]
    metrics = [[grad.square(grad.sub(y_nodes[k], expected[branch]))
                for branch in range(trellis.n_branches)] for k in range(n_samples)]

    alpha = [[tape.const(value) for value in start]]
    for k in range(n_samples):
        row = []
        for state in range(trellis.n_states):
            first, second = trellis.incoming[state]
            row.append(grad.min2(alpha[k][trellis.origin[first]] + metrics[k][first],
                                 alpha[k][trellis.origin[second]] + metrics[k][second]))
        alpha.append(row)

    beta = [None] * (n_samples + 1)
    beta[n_samples] = [tape.const(0.0) for _ in range(trellis.n_states)]
    for k in range(n_samples - 1, -1, -1):
        beta[k] = [grad.min2(metrics[k][2 * state] + beta[k + 1][trellis.next_state[2 * state]],
                             metrics[k][2 * state + 1]
                             + beta[k + 1][trellis.next_state[2 * state + 1]])
                   for state in range(trellis.n_states)]

    llrs = []
    for k in range(n_samples):
        best = {}
        for branch in range(trellis.n_branches):
            total = (alpha[k][trellis.origin[branch]] + metrics[k][branch]) \
                + beta[k + 1][trellis.next_state[branch]]
            side = trellis.bit[branch]
            best[side] = total if side not in best else grad.min2(best[side], total)
        llrs.append(best[-1] - best[1])
    return llrs


def dump_state_metrics(soft, path):
    """Write alpha and beta of every (sample, state) pair as CSV."""
    if soft.alpha is None:
        raise DetectorError('Soft decision carries no state metrics.')
    with open(path, 'w', newline='') as dump:
        writer = csv.writer(dump)
        writer.writerow(['k', 'state', 'alpha', 'beta'])
        for k in range(soft.alpha.shape[0]):
            for state in range(soft.alpha.shape[1]):
                writer.writerow([k, state, repr(float(soft.alpha[k, state])),
                                 repr(float(soft.beta[k, state]))])
    logger.debug('Dumped state metrics to %s.', path)
    return path
