"""
Model file codec.

Layout (all integers little-endian u32):

    b"MCPS" | version | config_len | config bytes (UTF-8)
    repeated: name_len | name (UTF-8) | rank | dims... | f64 payload (LE)

Records are written in the order given and read back into an ordered dict,
so load → save reproduces the file byte for byte.
"""

import struct
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, Optional, Tuple, Union

import numpy as np
import torch
from torch import nn

from gradcore.optim import OptimizerState
from utils.errors import CheckpointError
from utils.logger import get_logger

logger = get_logger(__name__)

MAGIC = b"MCPS"
FORMAT_VERSION = 1

_U32 = struct.Struct("<I")

OPT_PREFIX = "opt."


@dataclass
class ModelState:
    """Named tensors, configuration text and optional optimizer moments."""

    config_text: str
    tensors: "OrderedDict[str, np.ndarray]" = field(default_factory=OrderedDict)
    optimizer: Optional[OptimizerState] = None


def encode(config_text: str, records: Iterable[Tuple[str, np.ndarray]]) -> bytes:
    config_bytes = config_text.encode("utf-8")
    chunks = [MAGIC, _U32.pack(FORMAT_VERSION), _U32.pack(len(config_bytes)), config_bytes]
    for name, array in records:
        data = np.asarray(array, dtype="<f8")
        if not np.all(np.isfinite(data)):
            raise CheckpointError(f"record {name!r} contains non-finite values")
        name_bytes = name.encode("utf-8")
        chunks.append(_U32.pack(len(name_bytes)))
        chunks.append(name_bytes)
        chunks.append(_U32.pack(data.ndim))
        chunks.extend(_U32.pack(dim) for dim in data.shape)
        chunks.append(data.tobytes(order="C"))
    return b"".join(chunks)


def decode(blob: bytes) -> Tuple[int, str, "OrderedDict[str, np.ndarray]"]:
    if blob[:4] != MAGIC:
        raise CheckpointError("not an MCPST model file (bad magic)")
    offset = 4

    def take_u32() -> int:
        nonlocal offset
        if offset + 4 > len(blob):
            raise CheckpointError("truncated model file")
        (value,) = _U32.unpack_from(blob, offset)
        offset += 4
        return value

    def take(count: int) -> bytes:
        nonlocal offset
        if offset + count > len(blob):
            raise CheckpointError("truncated model file")
        chunk = blob[offset:offset + count]
        offset += count
        return chunk

    version = take_u32()
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported model file version {version}")
    config_text = take(take_u32()).decode("utf-8")
    records: "OrderedDict[str, np.ndarray]" = OrderedDict()
    while offset < len(blob):
        name = take(take_u32()).decode("utf-8")
        rank = take_u32()
        shape = tuple(take_u32() for _ in range(rank))
        count = int(np.prod(shape)) if shape else 1
        records[name] = np.frombuffer(take(8 * count), dtype="<f8").reshape(shape).copy()
    return version, config_text, records


def capture_state(module: nn.Module, config_text: str, optimizer: Optional[OptimizerState] = None,
                  extras: Optional[Dict[str, np.ndarray]] = None) -> ModelState:
    """Snapshot parameters (and optimizer moments) of ``module``."""
    tensors: "OrderedDict[str, np.ndarray]" = OrderedDict()
    for name, param in module.named_parameters():
        tensors[name] = param.detach().cpu().numpy().copy()
    for name, value in (extras or {}).items():
        tensors[name] = np.asarray(value, dtype=np.float64)
    return ModelState(config_text=config_text, tensors=tensors, optimizer=optimizer)


def _optimizer_records(opt: OptimizerState):
    yield f"{OPT_PREFIX}step", np.array([float(opt.step_count)])
    yield f"{OPT_PREFIX}hyper", np.array([opt.lr, opt.beta1, opt.beta2, opt.eps, opt.weight_decay])
    for name, tensor in opt.first_moment.items():
        yield f"{OPT_PREFIX}m.{name}", tensor.detach().cpu().numpy()
    for name, tensor in opt.second_moment.items():
        yield f"{OPT_PREFIX}v.{name}", tensor.detach().cpu().numpy()


def save_state(state: ModelState, path: Union[str, Path]) -> None:
    records = list(state.tensors.items())
    if state.optimizer is not None:
        records.extend(_optimizer_records(state.optimizer))
    Path(path).write_bytes(encode(state.config_text, records))
    logger.info(f"Saved model file {path} ({len(records)} records)")


def load_state(path: Union[str, Path]) -> ModelState:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read model file {path}: {exc}") from exc
    _, config_text, records = decode(blob)
    tensors: "OrderedDict[str, np.ndarray]" = OrderedDict()
    optimizer: Optional[OptimizerState] = None
    moments_m: Dict[str, torch.Tensor] = OrderedDict()
    moments_v: Dict[str, torch.Tensor] = OrderedDict()
    step, hyper = None, None
    for name, array in records.items():
        if name == f"{OPT_PREFIX}step":
            step = int(array[0])
        elif name == f"{OPT_PREFIX}hyper":
            hyper = array
        elif name.startswith(f"{OPT_PREFIX}m."):
            moments_m[name[len(OPT_PREFIX) + 2:]] = torch.from_numpy(array.copy())
        elif name.startswith(f"{OPT_PREFIX}v."):
            moments_v[name[len(OPT_PREFIX) + 2:]] = torch.from_numpy(array.copy())
        else:
            tensors[name] = array
    if step is not None and hyper is not None:
        lr, beta1, beta2, eps, weight_decay = (float(v) for v in hyper)
        optimizer = OptimizerState(
            lr=lr,
            beta1=beta1,
            beta2=beta2,
            eps=eps,
            weight_decay=weight_decay,
            step_count=step,
            first_moment=moments_m,
            second_moment=moments_v,
        )
    return ModelState(config_text=config_text, tensors=tensors, optimizer=optimizer)


@torch.no_grad()
def restore_parameters(module: nn.Module, tensors: Dict[str, np.ndarray]) -> None:
    """Copy stored arrays into ``module``; every parameter must be present with its shape."""
    for name, param in module.named_parameters():
        if name not in tensors:
            raise CheckpointError(f"model file lacks parameter {name!r}")
        array = tensors[name]
        if tuple(array.shape) != tuple(param.shape):
            raise CheckpointError(
                f"{name}: stored shape {array.shape} != model shape {tuple(param.shape)}"
            )
        param.copy_(torch.from_numpy(np.array(array, dtype=np.float64)))
