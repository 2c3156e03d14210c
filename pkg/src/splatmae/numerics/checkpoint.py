"""Binary checkpoint format.

Layout (all integers little-endian):

    magic      8 bytes  b"SPMAECKP"
    version    u32
    config     u32 byte length, then UTF-8 TOML text of the run configuration
    count      u32 number of tensors
    per tensor u16 name length, UTF-8 name, u8 ndim, ndim x u32 dims,
               prod(dims) float32 values in row-major order
"""

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import BinaryIO, Dict, Union

import numpy as np

from ..utils.exceptions import DataFormatError, DatasetIOError
from ..utils.logging_config import get_logger

MAGIC = b"SPMAECKP"
FORMAT_VERSION = 1

logger = get_logger(__name__)


@dataclass
class Checkpoint:
    """Decoded checkpoint contents."""

    config_text: str
    tensors: Dict[str, np.ndarray] = field(default_factory=dict)
    version: int = FORMAT_VERSION


def _read_exact(handle: BinaryIO, size: int, path: Path) -> bytes:
    data = handle.read(size)
    if len(data) != size:
        raise DataFormatError(f"Truncated checkpoint: {path}", {"path": str(path)})
    return data


def _decode(raw: bytes, what: str, path: Path) -> str:
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError as e:
        raise DataFormatError(
            f"Checkpoint {what} is not valid UTF-8: {path} ({e.reason})",
            {"path": str(path), "offset": e.start},
        )


def save_checkpoint(
    path: Union[str, Path], tensors: Dict[str, np.ndarray], config_text: str = ""
) -> Path:
    """Write named tensors and the serialized config to ``path``."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wb") as handle:
            handle.write(MAGIC)
            handle.write(struct.pack("<I", FORMAT_VERSION))
            config_bytes = config_text.encode("utf-8")
            handle.write(struct.pack("<I", len(config_bytes)))
            handle.write(config_bytes)
            handle.write(struct.pack("<I", len(tensors)))
            for name, value in tensors.items():
                array = np.asarray(value, dtype="<f4")
                name_bytes = name.encode("utf-8")
                handle.write(struct.pack("<H", len(name_bytes)))
                handle.write(name_bytes)
                handle.write(struct.pack("<B", array.ndim))
                handle.write(struct.pack(f"<{array.ndim}I", *array.shape))
                handle.write(np.ascontiguousarray(array).tobytes())
    except OSError as e:
        raise DatasetIOError(
            f"Cannot write checkpoint {path}: {e}", {"path": str(path)}
        )

    logger.debug(f"Saved checkpoint with {len(tensors)} tensors to {path}")
    return path


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    """Read a checkpoint written by ``save_checkpoint``."""
    path = Path(path)
    if not path.exists():
        raise DatasetIOError(f"Checkpoint not found: {path}", {"path": str(path)})

    with open(path, "rb") as handle:
        magic = handle.read(len(MAGIC))
        if magic != MAGIC:
            raise DataFormatError(
                f"Not a splatmae checkpoint: {path}", {"path": str(path)}
            )
        (version,) = struct.unpack("<I", _read_exact(handle, 4, path))
        if version != FORMAT_VERSION:
            raise DataFormatError(
                f"Unsupported checkpoint version {version}",
                {"path": str(path), "version": version},
            )
        (config_len,) = struct.unpack("<I", _read_exact(handle, 4, path))
        config_text = _decode(_read_exact(handle, config_len, path), "config", path)
        (count,) = struct.unpack("<I", _read_exact(handle, 4, path))

        tensors: Dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", _read_exact(handle, 2, path))
            name = _decode(_read_exact(handle, name_len, path), "tensor name", path)
            (ndim,) = struct.unpack("<B", _read_exact(handle, 1, path))
            dims = struct.unpack(f"<{ndim}I", _read_exact(handle, 4 * ndim, path))
            raw = _read_exact(handle, 4 * math.prod(dims), path)
            try:
                values = np.frombuffer(raw, dtype="<f4").reshape(dims)
            except ValueError as e:
                raise DataFormatError(
                    f"Tensor {name} does not match its shape {dims}: {e}",
                    {"path": str(path), "tensor": name},
                )
            tensors[name] = values.astype(np.float64)

    return Checkpoint(config_text=config_text, tensors=tensors, version=version)
