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

from dataclasses import replace

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from scipy.special import erf

from tdmrlab.chansim import (AdcFrame, ChannelParams, ReaderGeometry, calibrate_noise,
                             dibit_energy_fraction, dibit_response, dibit_table, fit_geometry,
                             gen_tracks, iti_weights, normalize_frame, quantize, raw_ber,
                             reader_offsets, sector_tracks, simulate_sector, simulate_sectors,
                             synthesize_readback, track_readback, transition_response,
                             window_dataset)
from tdmrlab.errors import ChannelError, DatasetError

PUBLISHED_WEIGHTS = [3.54e-05, 0.1514, 0.8207, 0.0279, 5.96e-07]


@pytest.fixture
def params():
    return ChannelParams()


class TestResponses:
    def test_ideal_channel_samples_a_unit_pulse(self):
        offsets, taps = dibit_table(ChannelParams(pw50_over_t=0.05))
        expected = np.where(offsets == 0, 1.0, 0.0)
        assert_allclose(taps, expected, atol=1e-12)

    def test_sampled_dibit_sums_to_bit_interval(self, params):
        _, taps = dibit_table(params)
        assert_allclose(np.sum(taps), params.bit_interval, rtol=1e-6)

    def test_span_holds_the_dibit_energy(self, params):
        assert dibit_energy_fraction(params) < 1e-3

    def test_dibit_peaks_between_transitions(self, params):
        t = np.linspace(-3, 4, 701)
        assert_allclose(t[np.argmax(dibit_response(t, params))], 0.5, atol=0.01)

    def test_invalid_parameters_raise(self):
        with pytest.raises(ChannelError):
            ChannelParams(pw50_over_t=0.0)
        with pytest.raises(ChannelError):
            ChannelParams(awgn_sigma=-0.1)

    def test_pw50_is_the_full_width_at_half_maximum(self, params):
        half = params.pw50 / 2
        assert transition_response(half, params) == pytest.approx(0.5 * erf(np.sqrt(np.log(2.0))),
                                                                  rel=1e-12)
        h = 1e-6

        def slope(t):
            rise = transition_response(t + h, params) - transition_response(t - h, params)
            return rise / (2 * h)

        assert slope(half) / slope(0.0) == pytest.approx(0.5, rel=1e-6)
        assert slope(-half) / slope(0.0) == pytest.approx(0.5, rel=1e-6)


class TestGeometry:
    def test_readers_straddle_track_zero(self):
        assert_allclose(reader_offsets(ReaderGeometry(cts_percent=30.0)), [-0.15, 0.15])

    def test_weights_sum_to_one(self):
        weights = iti_weights(ReaderGeometry())
        assert weights.shape == (2, 5)
        assert_allclose(weights.sum(axis=1), 1.0, atol=1e-6)

    def test_default_geometry_matches_published_weights(self):
        weights = iti_weights(ReaderGeometry())
        assert_allclose(weights[0], PUBLISHED_WEIGHTS, rtol=0.02)
        assert_allclose(weights[1], PUBLISHED_WEIGHTS[::-1], rtol=0.02)

    def test_fit_recovers_the_default_geometry(self):
        geometry = fit_geometry(PUBLISHED_WEIGHTS)
        assert_allclose(geometry.crosstrack_sigma, 0.3398, rtol=0.01)
        assert_allclose(geometry.cts_percent, 30.0, rtol=0.02)

    def test_vanishing_footprint_reads_only_track_zero(self):
        weights = iti_weights(ReaderGeometry(cts_percent=0.0, crosstrack_sigma=1e-6))
        assert_allclose(weights, [[0, 0, 1, 0, 0], [0, 0, 1, 0, 0]], atol=1e-12)


class TestTracks:
    def test_bits_are_antipodal_and_reproducible(self, params):
        first = gen_tracks(1000, 5, params)
        second = gen_tracks(1000, 5, params)
        assert first.bits.shape == (5, 1000)
        assert set(np.unique(first.bits)) == {-1, 1}
        assert_array_equal(first.bits, second.bits)
        assert_array_equal(first.jitter, second.jitter)

    def test_jitter_stays_inside_half_a_bit(self):
        wild = ChannelParams(jitter_sigma=0.4)
        tracks = gen_tracks(20000, 1, wild)
        assert np.all(np.abs(tracks.jitter) < 0.5 * wild.bit_interval)

    def test_empty_sector_raises(self, params):
        with pytest.raises(ChannelError):
            gen_tracks(0, 1, params)


class TestReadback:
    def test_noiseless_readback_matches_convolution(self, params):
        quiet = replace(params, jitter_sigma=0.0)
        geometry = ReaderGeometry()
        tracks = gen_tracks(500, 9, quiet)
        frame = synthesize_readback(tracks, quiet, geometry, noise_seed=0)

        _, taps = dibit_table(quiet)
        span = quiet.span_bits
        per_track = np.array([np.convolve(np.pad(row.astype(np.float64), span,
                                                 constant_values=-1.0), taps, mode='valid')
                              for row in tracks.bits])
        assert_allclose(frame.samples, iti_weights(geometry) @ per_track, rtol=0, atol=1e-12)

    def test_readback_is_linear_in_the_levels(self, params):
        rng = np.random.default_rng(13)
        first = rng.normal(size=(5, 200))
        second = rng.normal(size=(5, 200))
        still = np.zeros((5, 200))
        assert_allclose(track_readback(first + second, still, params, pad_level=0.0),
                        track_readback(first, still, params, pad_level=0.0) +
                        track_readback(second, still, params, pad_level=0.0), rtol=0, atol=1e-12)

    def test_normalize_two_sample_streams(self):
        frame = normalize_frame(AdcFrame(samples=np.array([[1.0, 3.0], [1.0, 3.0]])))
        assert_allclose(frame.samples, [[-1, 1], [-1, 1]])
        assert_allclose(frame.norm_mean, [2, 2])
        assert frame.normalized
        with pytest.raises(ChannelError):
            normalize_frame(AdcFrame(samples=np.array([[1.0, 3.0], [2.0, 2.0]])))

    def test_quantizer_levels(self):
        samples = np.linspace(-6, 6, 10001)
        levels = np.unique(quantize(samples, 3, 4.0))
        assert len(levels) == 8
        assert_allclose(levels, np.arange(-3.5, 4.0, 1.0))

    def test_normalized_frame_has_unit_statistics(self, params):
        tracks = gen_tracks(4000, 2, params)
        noisy = replace(params, awgn_sigma=0.3)
        frame = normalize_frame(synthesize_readback(tracks, noisy, ReaderGeometry(), 3))
        assert_allclose(frame.samples.mean(axis=1), 0.0, atol=1e-12)
        assert_allclose(frame.samples.std(axis=1), 1.0, rtol=1e-12)
        with pytest.raises(ChannelError):
            normalize_frame(frame)

    def test_raw_ber_is_low_without_noise(self, params):
        tracks = gen_tracks(4000, 2, params)
        frame = synthesize_readback(tracks, params, ReaderGeometry(), 0)
        assert np.all(raw_ber(frame, tracks) < 0.11)


class TestSectors:
    def test_sectors_are_indexed_from_one(self, params):
        sectors = simulate_sectors(3, 100, replace(params, awgn_sigma=0.3), ReaderGeometry(), 512)
        assert [sector.index for sector in sectors] == [1, 2, 3]
        assert [sector.seed for sector in sectors] == [101, 102, 103]
        again = simulate_sector(2, 102, replace(params, awgn_sigma=0.3), ReaderGeometry(), 512)
        assert_array_equal(again.frame.samples, sectors[1].frame.samples)
        assert_array_equal(again.bits, sectors[1].bits)

    def test_worker_count_does_not_change_the_sectors(self, params):
        noisy = replace(params, awgn_sigma=0.3)
        serial = simulate_sectors(4, 40, noisy, ReaderGeometry(), 256, workers=1)
        pooled = simulate_sectors(4, 40, noisy, ReaderGeometry(), 256, workers=3)
        for first, second in zip(serial, pooled):
            assert first.index == second.index
            assert_array_equal(first.frame.samples, second.frame.samples)

    def test_tracks_are_drawn_again_from_the_seed(self, params):
        sector = simulate_sector(1, 77, replace(params, awgn_sigma=0.3), ReaderGeometry(), 300)
        tracks = sector_tracks(77, params, 300)
        assert_array_equal(tracks.bits, sector.tracks.bits)
        assert_array_equal(tracks.jitter, sector.tracks.jitter)

    @pytest.mark.slow
    def test_calibration_reaches_the_target_raw_ber(self, params):
        geometry = ReaderGeometry()
        calibrated = calibrate_noise(params, geometry, 0.11, n_sectors=3, n_bits=8192, seed=77)
        sector = simulate_sector(1, 4242, calibrated, geometry, 20000)
        frame = synthesize_readback(sector.tracks, calibrated, geometry, 99)
        assert abs(float(np.mean(raw_ber(frame, sector.tracks))) - 0.11) <= 0.02


class TestWindows:
    @pytest.fixture
    def sector(self, params):
        return simulate_sector(1, 5, replace(params, awgn_sigma=0.2), ReaderGeometry(), 300)

    def test_windows_are_labeled_with_delayed_bits(self, sector):
        dataset = window_dataset([sector.frame], [sector], 11, 2)
        windows = dataset.sectors[0]
        assert len(windows) == 290
        assert windows.inputs().shape == (290, 22)
        assert_array_equal(windows.centers[:3], [5, 6, 7])
        assert_array_equal(windows.labels, sector.bits[windows.centers - 2])
        inputs, center, bit = dataset.window(4)
        assert_array_equal(inputs[:11], sector.frame.samples[0, 4:15])
        assert_array_equal(inputs[11:], sector.frame.samples[1, 4:15])
        assert center == 9
        assert bit == sector.bits[7]

    def test_label_history_pads_with_minus_one(self, sector):
        windows = window_dataset([sector.frame], [sector], 3, 1).sectors[0]
        history = windows.label_history(3, 0, 2)
        assert_array_equal(history[0], [sector.bits[0], -1, -1])
        assert_array_equal(history[1], [sector.bits[1], sector.bits[0], -1])

    def test_invalid_windows_raise(self, sector):
        with pytest.raises(DatasetError):
            window_dataset([sector.frame], [sector], 10, 0)
        with pytest.raises(DatasetError):
            window_dataset([sector.frame], [sector], 401, 0)
        with pytest.raises(DatasetError):
            window_dataset([sector.frame], [sector], 5, 3)

    def test_window_counts(self, params):
        full = simulate_sector(1, 8, replace(params, awgn_sigma=0.2), ReaderGeometry(), 39512)
        assert len(window_dataset([full.frame], [full], 11, 0).sectors[0]) == 39502

    def test_single_sample_windows(self, sector):
        windows = window_dataset([sector.frame], [sector], 1, 0).sectors[0]
        assert len(windows) == 300
        assert windows.inputs().shape == (300, 2)
        assert_array_equal(windows.labels, sector.bits)
