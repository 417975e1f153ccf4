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

"""Reading and writing of sector archives. Each sector is one file: a little-endian uint32 header
length, a JSON header (seed, channel parameters, geometry, ITI weights, normalization constants),
then reader 1 and reader 2 as little-endian float32 rows and the center-track bits as an int8
row."""

import glob
import json
import logging
import os
import struct
from dataclasses import asdict

import numpy as np

from tdmrlab.chansim import (AdcFrame, ChannelParams, ReaderGeometry, Sector, TrackEnsemble,
                             CENTER_TRACK, N_TRACKS)
from tdmrlab.errors import DatasetError

logger = logging.getLogger(__name__) # pylint: disable=invalid-name
logger.setLevel(logging.INFO)

SECTOR_FILE_PATTERN = 'sector-{0:04d}.sec'
HEADER_LENGTH = struct.Struct('<I')
FORMAT_VERSION = 1


def sector_path(directory, index):
    return os.path.join(directory, SECTOR_FILE_PATTERN.format(index))


def write_sector(directory, sector, params, geometry):
    """Write one sector into directory and return the file name."""
    header = {
        'format': FORMAT_VERSION,
        'index': sector.index,
        'seed': sector.seed,
        'n_bits': int(sector.frame.n_samples),
        'params': asdict(params),
        'geometry': asdict(geometry),
        'weights': sector.weights.tolist(),
        'norm_mean': np.asarray(sector.frame.norm_mean).tolist(),
        'norm_std': np.asarray(sector.frame.norm_std).tolist(),
        'normalized': bool(sector.frame.normalized),
    }
    encoded = json.dumps(header, sort_keys=True).encode('utf-8')
    path = sector_path(directory, sector.index)
    with open(path, 'wb') as archive:
        archive.write(HEADER_LENGTH.pack(len(encoded)))
        archive.write(encoded)
        archive.write(sector.frame.samples.astype('<f4').tobytes())
        archive.write(np.asarray(sector.bits).astype('i1').tobytes())
    return path


def read_sector(path):
    """Read a sector file back. Only the center track survives the round trip; the other rows of
    the returned TrackEnsemble are zero and carry no jitter."""
    with open(path, 'rb') as archive:
        payload = archive.read()
    if len(payload) < HEADER_LENGTH.size:
        raise DatasetError("{0} is not a sector archive.".format(path))
    (header_length,) = HEADER_LENGTH.unpack_from(payload)
    start = HEADER_LENGTH.size
    header = json.loads(payload[start:start + header_length].decode('utf-8'))
    n_bits = header['n_bits']

    offset = start + header_length
    samples = np.frombuffer(payload, dtype='<f4', count=2 * n_bits, offset=offset)
    offset += samples.nbytes
    bits = np.frombuffer(payload, dtype='i1', count=n_bits, offset=offset)

    all_bits = np.zeros((N_TRACKS, n_bits), dtype=np.int8)
    all_bits[CENTER_TRACK] = bits
    frame = AdcFrame(samples=samples.astype(np.float64).reshape(2, n_bits),
                     norm_mean=np.array(header['norm_mean']),
                     norm_std=np.array(header['norm_std']),
                     normalized=header['normalized'])
    tracks = TrackEnsemble(bits=all_bits, jitter=np.zeros((N_TRACKS, n_bits)),
                           seed=header['seed'])
    sector = Sector(index=header['index'], seed=header['seed'], frame=frame, tracks=tracks,
                    weights=np.array(header['weights']))
    return sector, header


def write_archive(directory, sectors, params, geometry):
    """Write every sector into directory (created if needed)."""
    if not os.path.isdir(directory):
        os.makedirs(directory)
    paths = [write_sector(directory, sector, params, geometry) for sector in sectors]
    logger.info("Wrote %d sectors to %s.", len(paths), directory)
    return paths


def _read_all(directory):
    paths = sorted(glob.glob(os.path.join(directory, '*.sec')))
    if not paths:
        raise DatasetError("No sector archive found in {0}.".format(directory))
    return [read_sector(path) for path in paths]


def read_archive(directory):
    """Read every sector file of a directory, ordered by sector index."""
    sectors = [sector for sector, _ in _read_all(directory)]
    logger.info("Read %d sectors from %s.", len(sectors), directory)
    return sorted(sectors, key=lambda sector: sector.index)


def header_channel(header):
    """ChannelParams and ReaderGeometry recorded in a sector header."""
    return ChannelParams(**header['params']), ReaderGeometry(**header['geometry'])


def read_archive_channel(directory):
    """Read an archive together with the channel parameters and geometry it was simulated with.

    Returns (sectors, params, geometry); every sector must record the same channel.
    """
    entries = _read_all(directory)
    params, geometry = header_channel(entries[0][1])
    for sector, header in entries[1:]:
        if header_channel(header) != (params, geometry):
            raise DatasetError("Sector {0} of {1} was simulated on another channel.".format(
                sector.index, directory))
    sectors = sorted((sector for sector, _ in entries), key=lambda sector: sector.index)
    logger.info("Read %d sectors from %s (AWGN sigma %.4f).", len(sectors), directory,
                params.awgn_sigma)
    return sectors, params, geometry
