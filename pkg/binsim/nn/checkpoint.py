"""
BNNM model files.

Layout (little-endian): magic b"BNNM", u8 version (1), u32 tensor count,
then per tensor: u16 name length, UTF-8 name, u8 rank, rank x u32 dims,
float32 data in C order.
"""

import logging
import struct
from pathlib import Path
from typing import Dict, Union

import numpy as np

from .model import ToyModel

logger = logging.getLogger(__name__)

MAGIC = b"BNNM"
VERSION = 1
_HEADER = struct.Struct("<4sBI")


class ModelFormatError(ValueError):
    """Raised when a BNNM payload is malformed; ``offset`` is the byte where parsing failed."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


def to_bytes(state: Dict[str, np.ndarray]) -> bytes:
    parts = [_HEADER.pack(MAGIC, VERSION, len(state))]
    for name, tensor in state.items():
        encoded = name.encode("utf-8")
        data = np.ascontiguousarray(tensor, dtype="<f4")
        parts.append(struct.pack("<H", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack(f"<B{data.ndim}I", data.ndim, *data.shape))
        parts.append(data.tobytes())
    return b"".join(parts)


def _take(payload: bytes, offset: int, size: int, what: str) -> bytes:
    if offset + size > len(payload):
        raise ModelFormatError(f"truncated {what}", offset)
    return payload[offset:offset + size]


def from_bytes(payload: bytes) -> Dict[str, np.ndarray]:
    magic, version, count = _HEADER.unpack(_take(payload, 0, _HEADER.size, "header"))
    if magic != MAGIC:
        raise ModelFormatError(f"bad magic {magic!r}", 0)
    if version != VERSION:
        raise ModelFormatError(f"unsupported version {version}", 4)
    offset = _HEADER.size
    state: Dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", _take(payload, offset, 2, "name length"))
        offset += 2
        try:
            name = _take(payload, offset, name_len, "name").decode("utf-8")
        except UnicodeDecodeError as e:
            raise ModelFormatError(f"name is not UTF-8: {e}", offset) from e
        offset += name_len
        (rank,) = struct.unpack("<B", _take(payload, offset, 1, "rank"))
        offset += 1
        dims = struct.unpack(f"<{rank}I", _take(payload, offset, 4 * rank, "dims"))
        offset += 4 * rank
        nbytes = 4 * int(np.prod(dims, dtype=np.int64))
        data = _take(payload, offset, nbytes, f"data of {name}")
        state[name] = np.frombuffer(data, dtype="<f4").reshape(dims).copy()
        offset += nbytes
    if offset != len(payload):
        raise ModelFormatError(f"{len(payload) - offset} trailing bytes", offset)
    return state


def save_model(model: ToyModel, path: Union[str, Path]):
    state = model.state_dict()
    Path(path).write_bytes(to_bytes(state))
    logger.info(f"Saved {len(state)} tensors to {path}")


def load_state(path: Union[str, Path]) -> Dict[str, np.ndarray]:
    return from_bytes(Path(path).read_bytes())


def load_model(model: ToyModel, path: Union[str, Path]) -> ToyModel:
    """Load a BNNM file into an already-built model of the same architecture."""
    model.load_state_dict(load_state(path))
    return model
