"""Two-layer graph-convolution encoder with a selectable activation.

The square activation keeps the whole forward pass polynomial; relu is the
conventional baseline. No bias terms, which keeps the recorded circuit small.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graphdata import SparseAdjacency
from .tape import Tape, forward

ACTIVATIONS = ("square", "relu")
_ACTIVATION_CODE = {"square": 0, "relu": 1}
_CODE_ACTIVATION = {v: k for k, v in _ACTIVATION_CODE.items()}


@dataclass
class ModelConfig:
    hidden: int = 64
    out_dim: int = 128
    activation: str = "square"
    square_scale: float = 1.0  # set to 0.5 to tame divergence; costs one extra ct-pt level

    def __post_init__(self):
        if self.hidden <= 0 or self.out_dim <= 0:
            raise ValueError("hidden and out_dim must be positive")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}; got {self.activation!r}")


@dataclass
class EncoderParams:
    w1: np.ndarray  # (F, H)
    w2: np.ndarray  # (H, D)
    activation: str

    def __post_init__(self):
        self.w1 = np.asarray(self.w1, dtype=np.float64)
        self.w2 = np.asarray(self.w2, dtype=np.float64)
        if self.w1.ndim != 2 or self.w2.ndim != 2 or self.w1.shape[1] != self.w2.shape[0]:
            raise ValueError(f"incompatible weight shapes {self.w1.shape} and {self.w2.shape}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}; got {self.activation!r}")
        if not (np.all(np.isfinite(self.w1)) and np.all(np.isfinite(self.w2))):
            raise ValueError("weights contain non-finite values")

    @property
    def f_in(self) -> int:
        return self.w1.shape[0]

    @property
    def hidden(self) -> int:
        return self.w1.shape[1]

    @property
    def out_dim(self) -> int:
        return self.w2.shape[1]


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_params(f_in: int, hidden: int, out_dim: int, activation: str, seed: int) -> EncoderParams:
    """Glorot-uniform weights, drawn in a fixed order from one seeded stream."""
    if min(f_in, hidden, out_dim) <= 0:
        raise ValueError("all dimensions must be positive")
    rng = np.random.default_rng(seed)
    w1 = glorot_uniform(rng, f_in, hidden)
    w2 = glorot_uniform(rng, hidden, out_dim)
    return EncoderParams(w1=w1, w2=w2, activation=activation)


def encode(tape: Tape, adj: SparseAdjacency, x: int, w1: int, w2: int,
           activation: str, square_scale: float = 1.0) -> int:
    """Record Z = A_hat . act(A_hat X W1) . W2 and return the output node id."""
    h = tape.dense_matmul(tape.spmm(adj, x), w1)
    if activation == "square":
        h = tape.elem_square(h)
        if square_scale != 1.0:
            h = tape.scale_by_constant(h, square_scale)
    elif activation == "relu":
        h = tape.relu(h)
    else:
        raise ValueError(f"activation must be one of {ACTIVATIONS}; got {activation!r}")
    return tape.dense_matmul(tape.spmm(adj, h), w2)


def encoder_tape(adj: SparseAdjacency, features: np.ndarray, params: EncoderParams,
                 square_scale: float = 1.0) -> Tape:
    """Standalone encoder circuit: features encrypted, weights plaintext."""
    t = Tape()
    x = t.input("x", value=features, encrypted=True)
    w1 = t.input("w1", value=params.w1)
    w2 = t.input("w2", value=params.w2)
    t.set_output(encode(t, adj, x, w1, w2, params.activation, square_scale))
    return t


def encode_features(adj: SparseAdjacency, features: np.ndarray, params: EncoderParams,
                    square_scale: float = 1.0) -> np.ndarray:
    """Embeddings of the un-augmented graph (frozen-encoder evaluation path)."""
    return forward(encoder_tape(adj, features, params, square_scale))


_HEADER = struct.Struct("<iiii")


def save_params(params: EncoderParams, path: str | Path) -> None:
    """Checkpoint: little-endian header (f_in, hidden, out, activation) + row-major doubles."""
    with open(path, "wb") as f:
        f.write(_HEADER.pack(params.f_in, params.hidden, params.out_dim,
                             _ACTIVATION_CODE[params.activation]))
        f.write(np.ascontiguousarray(params.w1, dtype="<f8").tobytes())
        f.write(np.ascontiguousarray(params.w2, dtype="<f8").tobytes())


def load_params(path: str | Path) -> EncoderParams:
    with open(path, "rb") as f:
        header = f.read(_HEADER.size)
        if len(header) != _HEADER.size:
            raise ValueError(f"{path}: truncated checkpoint header")
        f_in, hidden, out_dim, code = _HEADER.unpack(header)
        if code not in _CODE_ACTIVATION:
            raise ValueError(f"{path}: unknown activation code {code}")
        w1 = np.frombuffer(f.read(8 * f_in * hidden), dtype="<f8").reshape(f_in, hidden)
        w2_bytes = f.read(8 * hidden * out_dim)
        if len(w2_bytes) != 8 * hidden * out_dim:
            raise ValueError(f"{path}: truncated weight data")
        w2 = np.frombuffer(w2_bytes, dtype="<f8").reshape(hidden, out_dim)
    return EncoderParams(w1=w1.copy(), w2=w2.copy(), activation=_CODE_ACTIVATION[code])
