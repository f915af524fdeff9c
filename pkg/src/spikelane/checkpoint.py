"""Binary checkpoint format for trained models.

Layout, all little-endian:

    bytes 0..3   magic "SPKL"
    byte  4      format version (currently 1)
    bytes 5..20  four u32 dims: input_steps, input_dim, hidden_dim, classes
    byte  21     reset mode (0 = to_zero, 1 = subtract)
    bytes 22..45 three f64: beta, v_threshold, surrogate_slope
    rest         f64 parameters in declaration order: feature weights
                 (row-major in x hidden), feature bias, classifier weights
                 (row-major hidden x classes), classifier bias

The format is fixed-size given the dims, so truncation and trailing garbage
are both detectable.  Save/load round-trips are bit-exact.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import CheckpointError
from .model import LifConfig, LinearLayer, Model, RESET_MODES

MAGIC = b"SPKL"
VERSION = 1

_HEADER = struct.Struct("<4sB4IB3d")
_MAX_DIM = 1_000_000


def model_to_bytes(model: Model) -> bytes:
    header = _HEADER.pack(
        MAGIC,
        VERSION,
        model.input_steps,
        model.input_dim,
        model.hidden_dim,
        model.classes,
        RESET_MODES.index(model.lif.reset_mode),
        model.lif.beta,
        model.lif.v_threshold,
        model.lif.surrogate_slope,
    )
    params = np.concatenate(
        [
            model.feature_layer.weights.ravel(),
            model.feature_layer.bias,
            model.classifier.weights.ravel(),
            model.classifier.bias,
        ]
    )
    return header + params.astype("<f8").tobytes()


def model_from_bytes(blob: bytes) -> Model:
    if len(blob) < _HEADER.size:
        raise CheckpointError(
            f"checkpoint truncated: {len(blob)} bytes, header needs {_HEADER.size}"
        )
    magic, version, steps, in_dim, hidden, classes, reset, beta, v_th, slope = (
        _HEADER.unpack_from(blob)
    )
    if magic != MAGIC:
        raise CheckpointError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    for name, dim in (
        ("input_steps", steps),
        ("input_dim", in_dim),
        ("hidden_dim", hidden),
        ("classes", classes),
    ):
        if not 1 <= dim <= _MAX_DIM:
            raise CheckpointError(f"implausible {name}={dim} in checkpoint header")
    if reset >= len(RESET_MODES):
        raise CheckpointError(f"unknown reset mode byte {reset}")

    n_params = in_dim * hidden + hidden + hidden * classes + classes
    expected = _HEADER.size + 8 * n_params
    if len(blob) != expected:
        raise CheckpointError(
            f"checkpoint size {len(blob)} bytes, expected {expected} for these dims"
        )

    flat = np.frombuffer(blob, dtype="<f8", offset=_HEADER.size).astype(np.float64)
    if not np.isfinite(flat).all():
        raise CheckpointError("checkpoint holds non-finite parameters")
    splits = np.cumsum([in_dim * hidden, hidden, hidden * classes])
    w1, b1, w2, b2 = np.split(flat, splits)
    try:
        return Model(
            feature_layer=LinearLayer(w1.reshape(in_dim, hidden), b1),
            classifier=LinearLayer(w2.reshape(hidden, classes), b2),
            lif=LifConfig(
                beta=beta,
                v_threshold=v_th,
                surrogate_slope=slope,
                reset_mode=RESET_MODES[reset],
            ),
            input_steps=steps,
        )
    except Exception as exc:
        raise CheckpointError(f"checkpoint header rejected: {exc}") from exc


def save_model(model: Model, destination: str | Path) -> bytes:
    """Write the checkpoint to a file and return its bytes."""
    blob = model_to_bytes(model)
    Path(destination).write_bytes(blob)
    return blob


def load_model(source: str | Path) -> Model:
    """Read a checkpoint file back into a Model."""
    return model_from_bytes(Path(source).read_bytes())
