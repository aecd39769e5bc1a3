"""Binary checkpoint format.

Layout::

    b"PCAMCKPT" | uint32 LE version | uint32 LE header length | JSON header | float32 LE data

The header holds the run configuration text, epoch, tuned tau and the
ordered list of ``[name, shape]`` entries; the data section is every
parameter flattened in that order.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from .config import RunConfig, parse_config_text
from .exceptions import CheckpointError, ConfigError

MAGIC = b"PCAMCKPT"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<II")


@dataclass
class Checkpoint:
    params: Dict[str, np.ndarray]
    config: RunConfig = field(default_factory=RunConfig)
    epoch: int = 0
    tau: Optional[float] = None
    version: int = FORMAT_VERSION

    def to_bytes(self):
        names = sorted(self.params)
        arrays = [np.asarray(self.params[n], dtype="<f4") for n in names]
        header = {
            "config": self.config.to_text(),
            "epoch": int(self.epoch),
            "tau": None if self.tau is None else float(self.tau),
            "params": [[n, list(a.shape)] for n, a in zip(names, arrays)],
        }
        blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
        data = b"".join(np.ascontiguousarray(a).tobytes() for a in arrays)
        return MAGIC + _PREFIX.pack(self.version, len(blob)) + blob + data

    @classmethod
    def from_bytes(cls, raw):
        if raw[: len(MAGIC)] != MAGIC:
            raise CheckpointError("not a checkpoint file (bad magic)")
        off = len(MAGIC)
        if len(raw) < off + _PREFIX.size:
            raise CheckpointError("truncated checkpoint header")
        version, hlen = _PREFIX.unpack_from(raw, off)
        if version != FORMAT_VERSION:
            raise CheckpointError(f"checkpoint version {version} does not match reader version {FORMAT_VERSION}")
        off += _PREFIX.size
        if len(raw) < off + hlen:
            raise CheckpointError("truncated checkpoint header")
        try:
            header = json.loads(raw[off : off + hlen].decode("utf-8"))
            config = parse_config_text(header["config"])
        except (ValueError, KeyError, ConfigError) as exc:
            raise CheckpointError(f"corrupt checkpoint header: {exc}") from None
        off += hlen
        params = {}
        for name, shape in header["params"]:
            if name in params:
                raise CheckpointError(f"duplicate parameter {name}")
            count = int(np.prod(shape, dtype=np.int64))
            end = off + 4 * count
            if end > len(raw):
                raise CheckpointError(f"truncated checkpoint data at parameter {name}")
            arr = np.frombuffer(raw, dtype="<f4", count=count, offset=off).reshape(shape)
            params[name] = arr.astype(np.float64)
            off = end
        if off != len(raw):
            raise CheckpointError(f"{len(raw) - off} trailing bytes after checkpoint data")
        return cls(params, config, header["epoch"], header["tau"], version)

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path):
        try:
            with open(path, "rb") as fh:
                raw = fh.read()
        except OSError as exc:
            raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from None
        return cls.from_bytes(raw)


def save_checkpoint(checkpoint, path):
    checkpoint.save(path)


def load_checkpoint(path):
    return Checkpoint.load(path)
