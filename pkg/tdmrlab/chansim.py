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

"""This module implements the two-reader TDMR channel simulator. Five tracks of random bits are
written with Gaussian position jitter, read back through an erf transition response by two
readers whose cross-track Gaussian footprints decide how much of each track they pick up, and
sampled once per bit interval with additive white Gaussian noise. The resulting per-sector sample
streams are normalized per reader and cut into sliding windows for the equalizers.
"""

import logging
from dataclasses import dataclass, field, replace
from math import log, sqrt
from typing import List, Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.optimize import curve_fit
from scipy.special import erf
from scipy.stats import norm

from tdmrlab.errors import CalibrationError, ChannelError, DatasetError
from tdmrlab.utils import MAX_WORKERS, map_threads

# We disable a couple of Pylint conventions because it assumes that module level variables must be
# named as if they're constants (which isn't the case here).
logger = logging.getLogger(__name__) # pylint: disable=invalid-name
logger.setLevel(logging.INFO)

N_TRACKS = 5
CENTER_TRACK = 2
N_READERS = 2
PAD_BIT = -1

ERF_SCALE = 2.0 * sqrt(log(2.0))


@dataclass(frozen=True)
class ChannelParams(object):
    """Down-track channel parameters. Times are in units of the bit interval T, except
    bit_interval itself. A quantizer_bits of None (or 0) means ideal float sampling."""
    bit_interval: float = 1.0
    pw50_over_t: float = 1.5
    jitter_sigma: float = 0.08
    awgn_sigma: float = 0.0
    span_bits: int = 8
    quantizer_bits: Optional[int] = None
    sampling_phase: float = 0.5
    quantizer_full_scale: float = 4.0

    def __post_init__(self):
        if self.bit_interval <= 0:
            raise ChannelError("bit_interval must be positive (got {0}).".format(self.bit_interval))
        if self.pw50_over_t <= 0:
            raise ChannelError("pw50_over_t must be positive (got {0}).".format(self.pw50_over_t))
        if self.jitter_sigma < 0 or self.awgn_sigma < 0:
            raise ChannelError("Noise deviations must be non-negative (jitter {0}, awgn {1}).".format(
                self.jitter_sigma, self.awgn_sigma))
        if self.span_bits < 4:
            raise ChannelError("span_bits must be at least 4 (got {0}).".format(self.span_bits))

    @property
    def pw50(self):
        return self.pw50_over_t * self.bit_interval

    @property
    def jitter_bound(self):
        """Jitter draws are kept strictly inside (-T/2, T/2)."""
        return 0.5 * self.bit_interval


@dataclass(frozen=True)
class ReaderGeometry(object):
    """Cross-track placement of the two readers. Readers sit symmetrically around the center of
    track 0, cts_percent of a track pitch apart; crosstrack_sigma is in track-pitch units."""
    cts_percent: float = 30.0
    crosstrack_sigma: float = 0.3398
    track_pitch: float = 1.0
    n_side_tracks: int = 2


@dataclass(frozen=True, eq=False)
class TrackEnsemble(object):
    """Bits (+/-1) and position jitter for tracks -2..2 of one sector; row 2 is track 0."""
    bits: np.ndarray
    jitter: np.ndarray
    seed: int

    @property
    def n_bits(self):
        return self.bits.shape[1]

    @property
    def center(self):
        return self.bits[CENTER_TRACK]


@dataclass(frozen=True, eq=False)
class AdcFrame(object):
    """Per-reader sample streams of one sector (row 0 is reader 1)."""
    samples: np.ndarray
    norm_mean: np.ndarray = field(default_factory=lambda: np.zeros(N_READERS))
    norm_std: np.ndarray = field(default_factory=lambda: np.ones(N_READERS))
    normalized: bool = False

    @property
    def n_samples(self):
        return self.samples.shape[1]


@dataclass(frozen=True, eq=False)
class Sector(object):
    """A simulated (or archived) sector: its normalized frame plus the ground truth."""
    index: int
    seed: int
    frame: AdcFrame
    tracks: TrackEnsemble
    weights: np.ndarray

    @property
    def bits(self):
        return self.tracks.center


def _frozen(array):
    array.setflags(write=False)
    return array


def transition_response(t, params):
    """Isolated transition response h(t) = 0.5 erf(2 sqrt(ln 2) t / PW50), swinging +/-0.5."""
    return 0.5 * erf(ERF_SCALE * np.asarray(t, dtype=np.float64) / params.pw50)


def dibit_response(t, params):
    """Dibit response p(t) = h(t) - h(t - T)."""
    t = np.asarray(t, dtype=np.float64)
    return transition_response(t, params) - transition_response(t - params.bit_interval, params)


def dibit_table(params):
    """Return (offsets, taps) with taps[i] = p((offsets[i] + phase) T) for offsets in
    [-span_bits, span_bits]."""
    offsets = np.arange(-params.span_bits, params.span_bits + 1)
    taps = dibit_response((offsets + params.sampling_phase) * params.bit_interval, params)
    return offsets, taps


def dibit_energy_fraction(params, extent=4):
    """Fraction of the sampled dibit energy that falls outside the tabulated span."""
    wide = replace(params, span_bits=extent * params.span_bits)
    _, inside = dibit_table(params)
    _, everything = dibit_table(wide)
    total = np.sum(everything ** 2)
    return float((total - np.sum(inside ** 2)) / total)


def gen_tracks(n_bits, seed, params):
    """Draw i.i.d. equiprobable bits for all five tracks and Gaussian jitter that is
    rejection-resampled until every draw lies strictly inside (-T/2, T/2)."""
    if n_bits < 1:
        raise ChannelError("A sector needs at least one bit (got {0}).".format(n_bits))
    rng = np.random.default_rng(seed)
    bits = (2 * rng.integers(0, 2, size=(N_TRACKS, n_bits)) - 1).astype(np.int8)

    sigma = params.jitter_sigma * params.bit_interval
    if sigma == 0:
        jitter = np.zeros((N_TRACKS, n_bits))
    else:
        jitter = rng.normal(0.0, sigma, size=(N_TRACKS, n_bits))
        rejected = np.abs(jitter) >= params.jitter_bound
        while rejected.any():
            jitter[rejected] = rng.normal(0.0, sigma, size=int(rejected.sum()))
            rejected = np.abs(jitter) >= params.jitter_bound
    return TrackEnsemble(bits=_frozen(bits), jitter=_frozen(jitter), seed=seed)


def reader_offsets(geometry):
    """Cross-track centers of reader 1 and reader 2 relative to the center of track 0."""
    half_separation = 0.5 * geometry.cts_percent / 100.0 * geometry.track_pitch
    return np.array([-half_separation, half_separation])


def _track_masses(center, sigma, pitch, n_side_tracks):
    # Inner track edges; everything beyond the outermost edges folds into the outermost tracks.
    edges = (np.arange(-n_side_tracks, n_side_tracks) + 0.5) * pitch
    cdf = norm.cdf((edges - center) / sigma)
    return np.diff(np.concatenate(([0.0], cdf, [1.0])))


def iti_weights(geometry):
    """Return a (2, 5) array: row j holds the share of reader j+1's Gaussian cross-track footprint
    falling on tracks -2..2. Reader 2 is reader 1 mirrored around track 0."""
    if geometry.n_side_tracks != 2:
        raise ChannelError("Only two side tracks per side are simulated (got {0}).".format(
            geometry.n_side_tracks))
    if geometry.crosstrack_sigma <= 0:
        raise ChannelError("crosstrack_sigma must be positive (got {0}).".format(
            geometry.crosstrack_sigma))
    reader1 = _track_masses(reader_offsets(geometry)[0], geometry.crosstrack_sigma,
                            geometry.track_pitch, geometry.n_side_tracks)
    return np.vstack([reader1, reader1[::-1]])


def fit_geometry(target_weights, track_pitch=1.0):
    """Fit the cross-track sigma and the (symmetric) reader offset so that reader 1's weights
    match target_weights in the log domain. Returns the fitted ReaderGeometry."""
    target = np.asarray(target_weights, dtype=np.float64)
    if target.shape != (N_TRACKS,) or np.any(target <= 0):
        raise ChannelError("Target weights must be 5 positive values (got {0}).".format(target))

    def log_masses(_, center, sigma):
        return np.log(np.maximum(_track_masses(center, sigma, track_pitch, 2), 1e-300))

    (center, sigma), _ = curve_fit(log_masses, np.arange(N_TRACKS), np.log(target),
                                   p0=(-0.1 * track_pitch, 0.3 * track_pitch),
                                   bounds=([-0.5 * track_pitch, 1e-3],
                                           [0.5 * track_pitch, 2.0 * track_pitch]),
                                   xtol=1e-14, ftol=1e-14, gtol=1e-14)
    cost = 0.5 * float(np.sum((log_masses(None, center, sigma) - np.log(target)) ** 2))
    logger.info("Fitted reader geometry: offset %.5f pitch, sigma %.5f pitch (cost %.3g).",
                center, sigma, cost)
    return ReaderGeometry(cts_percent=float(-200.0 * center / track_pitch),
                          crosstrack_sigma=float(sigma), track_pitch=track_pitch)


def track_readback(levels, jitter, params, pad_level=PAD_BIT):
    """Noiseless single-reader readback of every track in levels (shape (n_tracks, N)), i.e.
    sum_m levels[m] p((k - m + phase) T + jitter[m]) sampled at k = 0..N-1. The sector is padded
    with pad_level on both ends so edge samples see a settled channel."""
    levels = np.atleast_2d(np.asarray(levels, dtype=np.float64))
    jitter = np.atleast_2d(np.asarray(jitter, dtype=np.float64))
    span = params.span_bits
    n_samples = levels.shape[1]
    padded = np.pad(levels, ((0, 0), (span, span)), constant_values=pad_level)
    padded_jitter = np.pad(jitter, ((0, 0), (span, span)))

    out = np.zeros_like(levels)
    for offset in range(-span, span + 1):
        # Sample k picks up bit m = k - offset, which sits at padded index k - offset + span.
        source = slice(span - offset, span - offset + n_samples)
        instants = (offset + params.sampling_phase) * params.bit_interval + padded_jitter[:, source]
        out += padded[:, source] * dibit_response(instants, params)
    return out


def quantize(samples, bits, full_scale):
    """Mid-rise uniform quantizer with 2**bits levels over [-full_scale, full_scale]."""
    step = 2.0 * full_scale / 2 ** bits
    top = full_scale - 0.5 * step
    return np.clip((np.floor(samples / step) + 0.5) * step, -top, top)


def synthesize_readback(tracks, params, geometry, noise_seed):
    """Readback of both readers for one sector, before normalization."""
    per_track = track_readback(tracks.bits, tracks.jitter, params)
    samples = iti_weights(geometry) @ per_track
    if params.awgn_sigma > 0:
        rng = np.random.default_rng(noise_seed)
        samples = samples + rng.normal(0.0, params.awgn_sigma, size=samples.shape)
    if params.quantizer_bits:
        samples = quantize(samples, params.quantizer_bits, params.quantizer_full_scale)
    return AdcFrame(samples=_frozen(samples))


def normalize_frame(frame):
    """Shift and scale every reader stream to zero mean and unit (population) deviation."""
    if frame.normalized:
        raise ChannelError('Frame is already normalized.')
    mean = frame.samples.mean(axis=1)
    std = frame.samples.std(axis=1)
    if np.any(std == 0):
        raise ChannelError("Cannot normalize a zero-variance stream (std per reader: {0}).".format(
            std))
    samples = (frame.samples - mean[:, None]) / std[:, None]
    return AdcFrame(samples=_frozen(samples), norm_mean=mean, norm_std=std, normalized=True)


def raw_ber(frame, tracks):
    """Per-reader fraction of samples whose sign disagrees with the center-track bit."""
    bits = tracks.center if isinstance(tracks, TrackEnsemble) else np.asarray(tracks)
    decisions = np.where(frame.samples >= 0, 1, -1)
    return np.mean(decisions != bits[None, :], axis=1)


class SectorWindows(object):
    """Sliding windows of one sector. Windows are built lazily as strided views of the sample
    streams, so a sector costs no more memory than its frame."""

    def __init__(self, samples, bits, d_in, delay):
        self.samples = samples
        self.bits = np.asarray(bits)
        self.d_in = d_in
        self.delay = delay
        self.half_width = (d_in - 1) // 2
        self._views = [sliding_window_view(samples[reader], d_in) for reader in range(N_READERS)]

    def __len__(self):
        return self.samples.shape[1] - self.d_in + 1

    @property
    def centers(self):
        return np.arange(self.half_width, self.half_width + len(self))

    @property
    def label_index(self):
        return self.centers - self.delay

    @property
    def labels(self):
        return self.bits[self.label_index]

    def inputs(self, start=0, stop=None):
        """Equalizer inputs for windows start..stop-1: reader 1 samples then reader 2 samples."""
        stop = len(self) if stop is None else stop
        return np.hstack([view[start:stop] for view in self._views]).astype(np.float64)

    def label_history(self, length, start=0, stop=None):
        """Row n holds u[j_n], u[j_n - 1], ..., u[j_n - length + 1] for the label index j_n of
        window n; bits before the sector start are the -1 pad."""
        stop = len(self) if stop is None else stop
        padded = np.concatenate((np.full(length - 1, PAD_BIT), self.bits)).astype(np.float64)
        rows = self.label_index[start:stop] + length - 1
        return padded[rows[:, None] - np.arange(length)[None, :]]


@dataclass
class WindowedDataset(object):
    """Sliding-window examples of one or more sectors, kept per sector so detection spans never
    straddle a sector boundary."""
    sectors: List[SectorWindows]
    d_in: int
    decision_delay: int

    def __len__(self):
        return sum(len(sector) for sector in self.sectors)

    def window(self, index):
        """Return (inputs, center index k, true bit) of a window counted across sectors."""
        for sector in self.sectors:
            if index < len(sector):
                return (sector.inputs(index, index + 1)[0], int(sector.centers[index]),
                        int(sector.labels[index]))
            index -= len(sector)
        raise DatasetError('Window index out of range.')


def _center_bits(tracks):
    if isinstance(tracks, TrackEnsemble):
        return tracks.center
    if isinstance(tracks, Sector):
        return tracks.bits
    return np.asarray(tracks)


def window_dataset(frames, tracks, d_in, delay):
    """Cut normalized frames into centered windows of d_in samples per reader; the window
    centered on k is labeled with the center-track bit u[k - delay]."""
    if d_in < 1 or d_in % 2 == 0:
        raise DatasetError("D_in must be a positive odd number (got {0}).".format(d_in))
    if abs(delay) > (d_in - 1) // 2:
        raise DatasetError("Decision delay {0} reaches outside a window of {1} samples.".format(
            delay, d_in))
    if len(frames) != len(tracks):
        raise DatasetError("Got {0} frames but {1} track ensembles.".format(len(frames),
                                                                         len(tracks)))
    sectors = []
    for frame, truth in zip(frames, tracks):
        if not frame.normalized:
            raise DatasetError('Frames must be normalized before windowing.')
        if d_in > frame.n_samples:
            raise DatasetError("D_in = {0} is larger than the sector ({1} samples).".format(
                d_in, frame.n_samples))
        sectors.append(SectorWindows(frame.samples, _center_bits(truth), d_in, delay))
    return WindowedDataset(sectors=sectors, d_in=d_in, decision_delay=delay)


def _seeds(seed):
    track_seed, noise_seed = np.random.SeedSequence(seed).generate_state(2)
    return int(track_seed), int(noise_seed)


def sector_tracks(seed, params, n_bits):
    """Tracks of the sector simulated from seed. They depend only on the seed and the jitter
    settings, so the full ensemble of an archived sector can be drawn again."""
    return gen_tracks(n_bits, _seeds(seed)[0], params)


def simulate_sector(index, seed, params, geometry, n_bits):
    """Generate, read back and normalize one sector."""
    tracks = sector_tracks(seed, params, n_bits)
    frame = normalize_frame(synthesize_readback(tracks, params, geometry, _seeds(seed)[1]))
    return Sector(index=index, seed=seed, frame=frame, tracks=tracks,
                  weights=iti_weights(geometry))


def simulate_sectors(count, base_seed, params, geometry, n_bits, workers=MAX_WORKERS):
    """Simulate count sectors on at most workers threads; sector i (1-based) uses seed
    base_seed + i."""
    sectors = map_threads(lambda index: simulate_sector(index, base_seed + index, params, geometry,
                                                        n_bits),
                          range(1, count + 1), workers)
    logger.info("Simulated %d sectors of %d bits (base seed %d).", count, n_bits, base_seed)
    return sectors


def calibrate_noise(params, geometry, target_raw_ber, n_sectors=5, n_bits=8192, seed=0,
                    tolerance=0.005, sigma_max=4.0, max_iterations=40):
    """Bisect awgn_sigma (jitter held as configured) until the mean per-reader raw BER over
    n_sectors calibration sectors is within tolerance of target_raw_ber. The calibration sectors
    are drawn once, so every bisection step sees the same bits, jitter and unit noise."""
    if not 0 <= target_raw_ber < 0.5:
        raise ChannelError("Target raw BER must be in [0, 0.5) (got {0}).".format(target_raw_ber))
    if n_sectors < 1:
        raise ChannelError('Calibration needs at least one sector.')

    ensembles = []
    for position in range(n_sectors):
        track_seed, noise_seed = _seeds(seed + position)
        ensembles.append((gen_tracks(n_bits, track_seed, params), noise_seed))

    def measure(sigma):
        trial = replace(params, awgn_sigma=sigma)
        return float(np.mean([raw_ber(synthesize_readback(tracks, trial, geometry, noise_seed),
                                      tracks)
                              for tracks, noise_seed in ensembles]))

    low, high = 0.0, sigma_max
    low_ber = measure(low)
    if abs(low_ber - target_raw_ber) <= tolerance:
        logger.info('Noiseless channel already sits at raw BER %.4f.', low_ber)
        return replace(params, awgn_sigma=0.0)
    if low_ber > target_raw_ber:
        raise CalibrationError("Raw BER without noise is {0:.4f}, above the target {1}.".format(
            low_ber, target_raw_ber))
    high_ber = measure(high)
    if high_ber < target_raw_ber - tolerance:
        raise CalibrationError("Raw BER at awgn_sigma={0} is only {1:.4f}; target {2} is out of "
                               "reach.".format(high, high_ber, target_raw_ber))

    for iteration in range(max_iterations):
        middle = 0.5 * (low + high)
        middle_ber = measure(middle)
        logger.debug('Calibration step %d: awgn_sigma %.5f -> raw BER %.4f.', iteration, middle,
                     middle_ber)
        if abs(middle_ber - target_raw_ber) <= tolerance:
            logger.info("Calibrated awgn_sigma = %.5f (raw BER %.4f, target %.4f).", middle,
                        middle_ber, target_raw_ber)
            return replace(params, awgn_sigma=middle)
        if middle_ber < target_raw_ber:
            low = middle
        else:
            high = middle
    raise CalibrationError("Calibration did not settle within {0} bisection steps.".format(
        max_iterations))
