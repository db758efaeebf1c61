"""
Binary checkpoint container.

Layout (all integers little-endian):
    magic   b"HCTN"
    version u32
    count   u32
    table   count x (name_len u16, name utf-8, ndim u8, dims ndim x u32)
    payload row-major little-endian float64 values, table order
"""
import struct
from pathlib import Path

import numpy as np

from ..exceptions import DimensionMismatchError, QoSDataError
from .tensor import Tensor

MAGIC = b"HCTN"
FORMAT_VERSION = 1


def save_checkpoint(path, arrays):
    """
    Write named arrays to `path`.

    Parameters
    ----------
    path : str or Path
    arrays : dict[str, np.ndarray]
        Names must be unique; order is preserved.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = [MAGIC, struct.pack('<II', FORMAT_VERSION, len(arrays))]
    payload = []
    for name, value in arrays.items():
        value = np.ascontiguousarray(value, dtype='<f8')
        encoded = name.encode('utf-8')
        header.append(struct.pack('<H', len(encoded)))
        header.append(encoded)
        header.append(struct.pack('<B', value.ndim))
        header.append(struct.pack(f'<{value.ndim}I', *value.shape))
        payload.append(value.tobytes(order='C'))
    with open(path, 'wb') as handle:
        handle.write(b''.join(header))
        handle.write(b''.join(payload))


def load_checkpoint(path):
    """
    Read a checkpoint written by `save_checkpoint`.

    Returns
    -------
    dict[str, np.ndarray]
    """
    blob = Path(path).read_bytes()
    if blob[:4] != MAGIC:
        raise QoSDataError(f"{path}: not an HCTN checkpoint")
    version, count = struct.unpack_from('<II', blob, 4)
    if version != FORMAT_VERSION:
        raise QoSDataError(f"{path}: unsupported checkpoint version {version}")
    offset = 12
    table = []
    for _ in range(count):
        (name_len,) = struct.unpack_from('<H', blob, offset)
        offset += 2
        name = blob[offset:offset + name_len].decode('utf-8')
        offset += name_len
        (ndim,) = struct.unpack_from('<B', blob, offset)
        offset += 1
        shape = struct.unpack_from(f'<{ndim}I', blob, offset)
        offset += 4 * ndim
        table.append((name, shape))

    arrays = {}
    for name, shape in table:
        size = int(np.prod(shape)) if shape else 1
        values = np.frombuffer(blob, dtype='<f8', count=size, offset=offset)
        offset += 8 * size
        arrays[name] = values.astype(np.float64).reshape(shape)
    if offset != len(blob):
        raise QoSDataError(f"{path}: trailing bytes after payload")
    return arrays


def assign_arrays(tensors, arrays, prefix=''):
    """
    Copy loaded arrays into existing tensors (by name) in place.

    Raises
    ------
    DimensionMismatchError
        A name is missing or its shape differs.
    """
    for name, tensor in tensors.items():
        key = prefix + name
        if key not in arrays:
            raise DimensionMismatchError(f"checkpoint has no entry '{key}'")
        target = tensor.data if isinstance(tensor, Tensor) else tensor
        if arrays[key].shape != target.shape:
            raise DimensionMismatchError(
                f"checkpoint entry '{key}' has shape {arrays[key].shape}, model expects {target.shape}"
            )
        target[...] = arrays[key]
