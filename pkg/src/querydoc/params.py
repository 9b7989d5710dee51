"""Named parameter store and the flat checkpoint archive.

A checkpoint is a zip holding one raw little-endian float32 payload per
parameter under ``params/<name>`` plus ``manifest.json`` with shapes, the
config hash, and RNG state. Save/load round-trips bit-exactly.
"""

from __future__ import annotations

import hashlib
import json
import zipfile
from dataclasses import dataclass, field
from fnmatch import fnmatch

import numpy as np

from .autodiff import Tensor

CHECKPOINT_FORMAT = "querydoc-checkpoint-v1"


@dataclass
class Param:
    name: str
    values: np.ndarray
    grad: np.ndarray = None
    trainable: bool = True

    def __post_init__(self):
        if self.grad is None:
            self.grad = np.zeros_like(self.values)
        if self.grad.shape != self.values.shape:
            raise ValueError(f"{self.name}: grad shape {self.grad.shape} != value shape {self.values.shape}")


class ParamStore:
    """Ordered mapping of parameter name -> Param."""

    def __init__(self):
        self._params: dict[str, Param] = {}

    def add(self, name: str, values: np.ndarray, trainable: bool = True) -> Param:
        if name in self._params:
            raise ValueError(f"duplicate parameter {name!r}")
        p = Param(name=name, values=np.ascontiguousarray(values), trainable=trainable)
        self._params[name] = p
        return p

    def __getitem__(self, name: str) -> Param:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self):
        return iter(self._params.values())

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def match(self, patterns) -> list[Param]:
        if isinstance(patterns, str):
            patterns = [patterns]
        return [p for p in self if any(fnmatch(p.name, pat) for pat in patterns)]

    def set_trainable(self, patterns, trainable: bool) -> list[str]:
        hit = self.match(patterns)
        for p in hit:
            p.trainable = trainable
        return [p.name for p in hit]

    def zero_grads(self) -> None:
        for p in self:
            p.grad[...] = 0.0

    def clone(self) -> "ParamStore":
        out = ParamStore()
        for p in self:
            out.add(p.name, p.values.copy(), trainable=p.trainable)
        return out

    def astype(self, dtype) -> "ParamStore":
        out = ParamStore()
        for p in self:
            out.add(p.name, p.values.astype(dtype), trainable=p.trainable)
        return out

    def state_hash(self, patterns: list | None = None) -> str:
        """sha256 over the raw bytes of (sorted) matching parameters."""
        params = self.match(patterns) if patterns is not None else list(self)
        h = hashlib.sha256()
        for p in sorted(params, key=lambda q: q.name):
            h.update(p.name.encode())
            h.update(np.ascontiguousarray(p.values).tobytes())
        return h.hexdigest()


class ParamTensors:
    """Per-forward-pass view wrapping params as autodiff leaves."""

    def __init__(self, store: ParamStore):
        self.store = store
        self._cache: dict[str, Tensor] = {}

    def __getitem__(self, name: str) -> Tensor:
        t = self._cache.get(name)
        if t is None:
            p = self.store[name]
            t = Tensor(p.values, requires_grad=p.trainable)
            self._cache[name] = t
        return t

    def harvest(self) -> None:
        """Accumulate tensor gradients back into the store after backward()."""
        for name, t in self._cache.items():
            if t.grad is not None:
                p = self.store[name]
                p.grad += t.grad.astype(p.grad.dtype, copy=False)


def config_hash(config: dict) -> str:
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canon.encode()).hexdigest()


def save_checkpoint(path, store: ParamStore, *, config: dict | None = None,
                    rng_state: dict | None = None, extra: dict | None = None) -> None:
    manifest = {
        "format": CHECKPOINT_FORMAT,
        "config_hash": config_hash(config or {}),
        "rng_state": rng_state or {},
        "extra": extra or {},
        "params": {
            p.name: {"shape": list(p.values.shape), "dtype": "<f4", "trainable": p.trainable}
            for p in store
        },
    }
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        info = zipfile.ZipInfo("manifest.json", date_time=(1980, 1, 1, 0, 0, 0))
        zf.writestr(info, json.dumps(manifest, sort_keys=True, indent=1))
        for name in sorted(store.names()):
            p = store[name]
            payload = np.ascontiguousarray(p.values, dtype="<f4").tobytes()
            info = zipfile.ZipInfo(f"params/{name}", date_time=(1980, 1, 1, 0, 0, 0))
            zf.writestr(info, payload)


def load_checkpoint(path) -> tuple:
    """Returns (ParamStore, manifest dict)."""
    store = ParamStore()
    with zipfile.ZipFile(path, "r") as zf:
        manifest = json.loads(zf.read("manifest.json").decode("utf-8"))
        if manifest.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"{path}: unknown checkpoint format {manifest.get('format')!r}")
        for name, meta in manifest["params"].items():
            raw = zf.read(f"params/{name}")
            values = np.frombuffer(raw, dtype="<f4").reshape(meta["shape"]).astype(np.float32)
            store.add(name, values, trainable=bool(meta["trainable"]))
    return store, manifest
