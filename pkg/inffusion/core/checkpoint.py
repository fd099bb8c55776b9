"""
Checkpoint container.

    magic    8 bytes  b"INFNCKPT"
    version  uint32 little-endian
    hlen     uint32 little-endian, header length
    header   hlen bytes of JSON (sorted keys): architecture plus per-tensor name/shape/step
    payload  for each tensor in header order: value, Adam m, Adam v as '<f8', C order

Equal parameters and optimizer state always serialize to equal bytes.
"""
import logging
import os
import struct
from typing import Optional, Union

import numpy as np
import orjson

from inffusion.core.infn import ModelParams
from inffusion.core.optim import Parameter
from inffusion.core.tensor import Tensor
from inffusion.errors import ArchitectureMismatchError, CheckpointFormatError, MissingInputError
from inffusion.schemas.configs import ModelConfig

logger = logging.getLogger(__name__)

MAGIC = b"INFNCKPT"
VERSION = 1
_PREFIX = struct.Struct("<8sII")


def dumps_checkpoint(params: ModelParams) -> bytes:
    header = {
        "arch": params.arch.model_dump(mode="json"),
        "tensors": [
            {"name": p.name, "shape": list(p.shape), "step": p.step}
            for p in params.parameters()
        ],
    }
    header_bytes = orjson.dumps(header, option=orjson.OPT_SORT_KEYS)
    chunks = [_PREFIX.pack(MAGIC, VERSION, len(header_bytes)), header_bytes]
    for p in params.parameters():
        for buf in (p.data, p.m, p.v):
            chunks.append(np.ascontiguousarray(buf, dtype="<f8").tobytes())
    return b"".join(chunks)


def loads_checkpoint(blob: bytes, expected: Optional[ModelConfig] = None) -> ModelParams:
    if len(blob) < _PREFIX.size:
        raise CheckpointFormatError("checkpoint shorter than its fixed prefix", size=len(blob))
    magic, version, header_len = _PREFIX.unpack_from(blob, 0)
    if magic != MAGIC:
        raise CheckpointFormatError(f"not a checkpoint (magic {magic!r})")
    if version != VERSION:
        raise CheckpointFormatError(f"unsupported checkpoint version {version}", version=version)
    offset = _PREFIX.size
    if len(blob) < offset + header_len:
        raise CheckpointFormatError("checkpoint header is truncated")
    try:
        header = orjson.loads(blob[offset:offset + header_len])
        arch = ModelConfig.model_validate(header["arch"])
        entries = header["tensors"]
    except (orjson.JSONDecodeError, KeyError, ValueError) as e:
        raise CheckpointFormatError(f"unreadable checkpoint header: {e}")
    offset += header_len

    if expected is not None and expected != arch:
        raise ArchitectureMismatchError(
            "checkpoint architecture differs from the requested one",
            checkpoint=arch.model_dump(mode="json"),
            requested=expected.model_dump(mode="json"),
        )

    params = ModelParams(arch)
    for entry in entries:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape, dtype=np.int64))
        arrays = []
        for _ in range(3):
            end = offset + 8 * count
            if end > len(blob):
                raise CheckpointFormatError(f"payload truncated in tensor {entry['name']!r}")
            arrays.append(np.frombuffer(blob, dtype="<f8", count=count, offset=offset).reshape(shape).copy())
            offset = end
        value, m, v = arrays
        params.tensors[entry["name"]] = Parameter(entry["name"], Tensor(value), m=m, v=v, step=int(entry["step"]))
    if offset != len(blob):
        raise CheckpointFormatError(f"{len(blob) - offset} trailing bytes after payload")
    return params


def save_checkpoint(params: ModelParams, path: Union[str, os.PathLike]) -> str:
    path = os.fspath(path)
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(dumps_checkpoint(params))
    logger.debug(f"Checkpoint written: {path} ({params.count()} parameters)")
    return path


def load_checkpoint(path: Union[str, os.PathLike], expected: Optional[ModelConfig] = None) -> ModelParams:
    path = os.fspath(path)
    if not os.path.isfile(path):
        raise MissingInputError(f"checkpoint not found: {path}", path=path)
    with open(path, "rb") as fh:
        return loads_checkpoint(fh.read(), expected)
