"""Named trainable tensors and their checkpoint format.

A checkpoint directory holds ``params.json`` (name, shape, dtype, byte offset,
byte count per tensor plus free-form metadata) and ``params.bin``, the
concatenated little-endian raw buffers in store order.
"""

from __future__ import annotations

import json
from collections import OrderedDict
from pathlib import Path
from typing import Iterator

import numpy as np

from exception import ConfigError, DataError, ShapeMismatch

from .autograd import Tensor

MANIFEST = "params.json"
BUFFER = "params.bin"
FORMAT_VERSION = 1


class ParamStore:
    """Insertion-ordered name → Tensor map; every entry is trainable and has a gradient buffer."""

    def __init__(self, dtype: str | np.dtype = "float64", rng: np.random.Generator | None = None):
        self.dtype = np.dtype(dtype)
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self._params: OrderedDict[str, Tensor] = OrderedDict()

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __len__(self) -> int:
        return len(self._params)

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def items(self):
        return self._params.items()

    def names(self) -> list[str]:
        return list(self._params)

    def create(self, name: str, shape: tuple[int, ...], init: str = "glorot") -> Tensor:
        """Register a parameter; re-creating an existing name returns the existing tensor (aliasing)."""
        if name in self._params:
            existing = self._params[name]
            if existing.shape != tuple(shape):
                raise ShapeMismatch(f"parameter {name!r} exists with shape {existing.shape}, requested {shape}")
            return existing
        data = self._initial_value(tuple(shape), init)
        tensor = Tensor(data, requires_grad=True, name=name)
        tensor.zero_grad()
        self._params[name] = tensor
        return tensor

    def _initial_value(self, shape: tuple[int, ...], init: str) -> np.ndarray:
        if init == "zeros":
            return np.zeros(shape, dtype=self.dtype)
        if init == "ones":
            return np.ones(shape, dtype=self.dtype)
        if init == "glorot":
            fan_in, fan_out = shape[-2], shape[-1]
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            return self.rng.uniform(-bound, bound, size=shape).astype(self.dtype)
        raise ConfigError(f"unknown initializer {init!r}")

    def count(self, prefix: str | None = None) -> int:
        return int(sum(t.size for name, t in self._params.items() if prefix is None or name.startswith(prefix)))

    def zero_grad(self) -> None:
        for tensor in self._params.values():
            tensor.zero_grad()

    def state(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self._params.items()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        for name, tensor in self._params.items():
            if name not in state:
                raise DataError(f"checkpoint has no parameter {name!r}")
            value = np.asarray(state[name])
            if value.shape != tensor.shape:
                raise ShapeMismatch(f"parameter {name!r}: checkpoint shape {value.shape} != {tensor.shape}")
            tensor.data = value.astype(self.dtype, copy=True)

    def save(self, directory: str | Path, metadata: dict | None = None) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        entries = []
        offset = 0
        with open(directory / BUFFER, "wb") as fh:
            for name, tensor in self._params.items():
                raw = tensor.data.astype(tensor.dtype.newbyteorder("<"), copy=False).tobytes(order="C")
                entries.append({
                    "name": name,
                    "shape": list(tensor.shape),
                    "dtype": tensor.dtype.name,
                    "offset": offset,
                    "nbytes": len(raw),
                })
                fh.write(raw)
                offset += len(raw)
        manifest = {"format_version": FORMAT_VERSION, "params": entries, "metadata": metadata or {}}
        (directory / MANIFEST).write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8")
        return directory

    @staticmethod
    def read_manifest(directory: str | Path) -> dict:
        path = Path(directory) / MANIFEST
        if not path.exists():
            raise DataError(f"no parameter manifest at {path}")
        return json.loads(path.read_text(encoding="utf-8"))

    @staticmethod
    def read_state(directory: str | Path) -> dict[str, np.ndarray]:
        directory = Path(directory)
        manifest = ParamStore.read_manifest(directory)
        buffer = (directory / BUFFER).read_bytes()
        state = {}
        for entry in manifest["params"]:
            dtype = np.dtype(entry["dtype"]).newbyteorder("<")
            chunk = buffer[entry["offset"]:entry["offset"] + entry["nbytes"]]
            state[entry["name"]] = np.frombuffer(chunk, dtype=dtype).reshape(entry["shape"]).copy()
        return state

    def load(self, directory: str | Path) -> dict:
        """Overwrite values from a checkpoint directory; returns its metadata."""
        self.load_state(self.read_state(directory))
        return self.read_manifest(directory).get("metadata", {})
