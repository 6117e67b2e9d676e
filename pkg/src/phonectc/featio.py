"""Binary feature-matrix files.

Single matrix: magic ``FEAT``, uint32 T, uint32 dim, row-major little-endian
float32 data. World split files pack many utterances: magic ``FTS0``, uint32
count, then ``count`` single-matrix records without their magic.
"""

from __future__ import annotations

import struct

import numpy as np

FEAT_MAGIC = b"FEAT"
SET_MAGIC = b"FTS0"


def write_feature_matrix(path, feats):
    feats = np.ascontiguousarray(feats, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(FEAT_MAGIC)
        fh.write(struct.pack("<II", *feats.shape))
        fh.write(feats.tobytes())


def read_feature_matrix(path):
    with open(path, "rb") as fh:
        if fh.read(4) != FEAT_MAGIC:
            raise ValueError(f"{path}: not a feature file")
        t, dim = struct.unpack("<II", fh.read(8))
        data = np.frombuffer(fh.read(4 * t * dim), dtype="<f4")
    return data.reshape(t, dim).astype(np.float64)


def write_feature_set(path, matrices):
    with open(path, "wb") as fh:
        fh.write(SET_MAGIC)
        fh.write(struct.pack("<I", len(matrices)))
        for feats in matrices:
            feats = np.ascontiguousarray(feats, dtype="<f4")
            fh.write(struct.pack("<II", *feats.shape))
            fh.write(feats.tobytes())


def read_feature_set(path):
    out = []
    with open(path, "rb") as fh:
        if fh.read(4) != SET_MAGIC:
            raise ValueError(f"{path}: not a feature set file")
        (count,) = struct.unpack("<I", fh.read(4))
        for _ in range(count):
            t, dim = struct.unpack("<II", fh.read(8))
            data = np.frombuffer(fh.read(4 * t * dim), dtype="<f4")
            out.append(data.reshape(t, dim).astype(np.float64))
    return out
