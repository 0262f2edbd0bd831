"""Named parameter store and checkpoint files."""

from __future__ import annotations

import hashlib
import json
from collections.abc import Mapping
from pathlib import Path

import numpy as np

from .tensor import Tensor


class CheckpointError(RuntimeError):
    pass


class ModelParams(Mapping):
    """Ordered ``name -> Tensor`` map with shapes fixed at construction.

    Values are leaf tensors with ``requires_grad=True``. ``assign`` swaps the
    data of an entry but refuses a shape change.
    """

    def __init__(self, arrays=None):
        self._store = {}
        for name, value in (arrays or {}).items():
            self._store[name] = Tensor(np.array(value, dtype=np.float64), requires_grad=True, name=name)

    def __getitem__(self, name):
        return self._store[name]

    def __iter__(self):
        return iter(self._store)

    def __len__(self):
        return len(self._store)

    def add(self, name, value):
        if name in self._store:
            raise KeyError(f"duplicate parameter {name!r}")
        self._store[name] = Tensor(np.array(value, dtype=np.float64), requires_grad=True, name=name)
        return self._store[name]

    def assign(self, name, value):
        value = np.asarray(value, dtype=np.float64)
        cur = self._store[name]
        if value.shape != cur.shape:
            raise ValueError(f"{name}: shape {value.shape} != {cur.shape}")
        self._store[name] = Tensor(value.copy(), requires_grad=True, name=name)

    def arrays(self):
        return {k: v.data for k, v in self._store.items()}

    def copy(self):
        return ModelParams({k: v.data.copy() for k, v in self._store.items()})

    def subset(self, prefix):
        """Entries under ``prefix`` (sharing the same tensors)."""
        out = ModelParams()
        for k, v in self._store.items():
            if k.startswith(prefix):
                out._store[k] = v
        return out

    def merge(self, other):
        out = ModelParams()
        out._store.update(self._store)
        for k, v in other._store.items():
            if k in out._store:
                raise KeyError(f"duplicate parameter {k!r}")
            out._store[k] = v
        return out

    def n_values(self):
        return int(sum(v.data.size for v in self._store.values()))


def save_checkpoint(path, params, meta=None):
    """Write ``params`` as a directory of raw float64 blobs plus ``manifest.json``."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, (name, t) in enumerate(params.items()):
        blob = np.ascontiguousarray(t.data, dtype="<f8").tobytes()
        fname = f"{i:04d}.bin"
        (path / fname).write_bytes(blob)
        entries.append({
            "name": name,
            "shape": list(t.shape),
            "file": fname,
            "sha256": hashlib.sha256(blob).hexdigest(),
        })
    manifest = {"format": "scaffdiff-ckpt-1", "params": entries, "meta": meta or {}}
    (path / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True))


def load_checkpoint(path):
    """Inverse of ``save_checkpoint``; returns ``(ModelParams, meta)``."""
    path = Path(path)
    try:
        manifest = json.loads((path / "manifest.json").read_text())
    except FileNotFoundError:
        raise CheckpointError(f"no manifest.json in {path}") from None
    arrays = {}
    for e in manifest["params"]:
        blob = (path / e["file"]).read_bytes()
        if hashlib.sha256(blob).hexdigest() != e["sha256"]:
            raise CheckpointError(f"checksum mismatch for parameter {e['name']!r}")
        arr = np.frombuffer(blob, dtype="<f8").astype(np.float64)
        arrays[e["name"]] = arr.reshape(e["shape"])
    return ModelParams(arrays), manifest.get("meta", {})
