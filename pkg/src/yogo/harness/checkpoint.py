"""Single-file checkpoint container.

Layout (all integers little-endian)::

    offset 0   8 bytes   magic b"YOGOCKPT"
    offset 8   u32       format version (currently 1)
    offset 12  u64       header length L in bytes
    offset 20  L bytes   UTF-8 JSON header
    offset 20+L          tensor data blob

The header holds ``config`` (RunConfig as a dict), ``epoch``, ``iteration``,
``loss_tail`` (last LossTrace rows) and ``tensors``: a list of
``{"name", "dtype", "shape", "offset", "nbytes"}`` where ``offset`` is
relative to the start of the data blob and each tensor is stored C-contiguous
in little-endian byte order (``<f4`` / ``<f8``).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from ..model import YOGO
from ..ops import ConfigError
from .config import RunConfig, from_dict

MAGIC = b"YOGOCKPT"
VERSION = 1
_PREFIX = struct.Struct("<8sIQ")

_DTYPES = {torch.float32: "<f4", torch.float64: "<f8"}
_TORCH_DTYPES = {v: k for k, v in _DTYPES.items()}


@dataclass
class Checkpoint:
    state: dict[str, torch.Tensor]
    config: RunConfig
    epoch: int = 0
    iteration: int = 0
    loss_tail: list[dict] = field(default_factory=list)
    version: int = VERSION

    def build_model(self) -> YOGO:
        model = YOGO(self.config.model)
        if self.config.run.dtype == "float64":
            model = model.double()
        expected = {k: tuple(v.shape) for k, v in model.state_dict().items()}
        stored = {k: tuple(v.shape) for k, v in self.state.items()}
        if expected != stored:
            missing = sorted(set(expected) - set(stored))
            extra = sorted(set(stored) - set(expected))
            bad = sorted(k for k in set(expected) & set(stored) if expected[k] != stored[k])
            raise ConfigError(
                f"checkpoint does not match its model config "
                f"(missing {missing[:3]}, unexpected {extra[:3]}, reshaped {bad[:3]})"
            )
        model.load_state_dict(self.state)
        return model


def save_checkpoint(path: str | Path, model: torch.nn.Module, config: RunConfig,
                    epoch: int = 0, iteration: int = 0, loss_tail=()) -> Path:
    path = Path(path)
    tensors, blobs, offset = [], [], 0
    for name, t in model.state_dict().items():
        if t.dtype not in _DTYPES:
            raise ConfigError(f"cannot store tensor {name} of dtype {t.dtype}")
        raw = t.detach().cpu().contiguous().numpy().astype(_DTYPES[t.dtype], copy=False).tobytes()
        tensors.append({"name": name, "dtype": _DTYPES[t.dtype], "shape": list(t.shape),
                        "offset": offset, "nbytes": len(raw)})
        blobs.append(raw)
        offset += len(raw)
    header = json.dumps({
        "config": config.to_dict(),
        "epoch": epoch,
        "iteration": iteration,
        "loss_tail": list(loss_tail),
        "tensors": tensors,
    }, sort_keys=True).encode("utf-8")
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(_PREFIX.pack(MAGIC, VERSION, len(header)))
        fh.write(header)
        for raw in blobs:
            fh.write(raw)
    tmp.replace(path)
    return path


def load_checkpoint(path: str | Path) -> Checkpoint:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read checkpoint {path}: {exc}") from exc
    if len(data) < _PREFIX.size:
        raise ConfigError(f"{path} is too short to be a checkpoint")
    magic, version, header_len = _PREFIX.unpack_from(data)
    if magic != MAGIC:
        raise ConfigError(f"{path} is not a YOGO checkpoint")
    if version != VERSION:
        raise ConfigError(f"unsupported checkpoint version {version}")
    start = _PREFIX.size
    header = json.loads(data[start:start + header_len].decode("utf-8"))
    blob = memoryview(data)[start + header_len:]
    state = {}
    for entry in header["tensors"]:
        raw = blob[entry["offset"]:entry["offset"] + entry["nbytes"]]
        arr = np.frombuffer(raw, dtype=entry["dtype"]).reshape(entry["shape"])
        state[entry["name"]] = torch.from_numpy(arr.astype(arr.dtype.newbyteorder("="), copy=True))
    return Checkpoint(state=state, config=from_dict(header["config"]), epoch=header["epoch"],
                      iteration=header["iteration"], loss_tail=header["loss_tail"], version=version)
