"""Named parameter storage, optimizer state, and checkpoint files.

A checkpoint is a single file: an 8-byte magic, a little-endian u32
manifest length, a JSON manifest (tensor names, shapes, byte offsets,
plus caller metadata and the optimizer step counter), then one payload
blob of little-endian 32-bit floats.  Round-trips are bit-exact.
"""

import json
import struct
from pathlib import Path

import numpy as np

from .autodiff import Tensor

CHECKPOINT_MAGIC = b"STCVAE01"


class CheckpointError(ValueError):
    """Raised for malformed checkpoint files."""


class ParamStore:
    """Ordered name -> float array map with per-array Adam moments."""

    def __init__(self, arrays: dict[str, np.ndarray], step: int = 0):
        self.arrays = dict(arrays)
        self.step = step
        self.m = {k: np.zeros_like(v) for k, v in self.arrays.items()}
        self.v = {k: np.zeros_like(v) for k, v in self.arrays.items()}

    def __len__(self) -> int:
        return len(self.arrays)

    def names(self) -> list[str]:
        return list(self.arrays)

    @property
    def size(self) -> int:
        return sum(a.size for a in self.arrays.values())

    def tensors(self, requires_grad: bool = False) -> dict[str, Tensor]:
        """Tensor views of the arrays (no copy); fresh graph leaves."""
        return {
            k: Tensor(v, requires_grad=requires_grad)
            for k, v in self.arrays.items()
        }

    def astype(self, dtype) -> "ParamStore":
        """Copy with arrays (not moments) cast; used for 64-bit checks."""
        out = ParamStore(
            {k: v.astype(dtype) for k, v in self.arrays.items()}, self.step
        )
        return out

    def copy(self) -> "ParamStore":
        out = ParamStore({k: v.copy() for k, v in self.arrays.items()}, self.step)
        out.m = {k: v.copy() for k, v in self.m.items()}
        out.v = {k: v.copy() for k, v in self.v.items()}
        return out


def save_checkpoint(store: ParamStore, path, metadata: dict | None = None):
    """Write ``store`` (parameters and Adam moments) to ``path``.

    Arrays must be float32; the payload format is fixed at 32-bit.
    """
    entries = []
    payload = bytearray()
    sections = [("param", store.arrays), ("adam_m", store.m), ("adam_v", store.v)]
    for section, arrays in sections:
        for name, arr in arrays.items():
            if arr.dtype != np.float32:
                raise CheckpointError(
                    f"checkpoint payload is float32 only; {section}/{name} "
                    f"has dtype {arr.dtype}"
                )
            entries.append(
                {
                    "name": f"{section}/{name}",
                    "shape": list(arr.shape),
                    "offset": len(payload),
                }
            )
            payload += np.ascontiguousarray(arr).astype("<f4").tobytes()
    manifest = {
        "version": 1,
        "step": store.step,
        "metadata": metadata or {},
        "tensors": entries,
    }
    blob = json.dumps(manifest, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(bytes(payload))


def load_checkpoint(path) -> tuple[ParamStore, dict]:
    """Read a checkpoint; returns (store, metadata)."""
    raw = Path(path).read_bytes()
    if raw[:8] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"bad magic at offset 0 in {path}")
    manifest_len = int(np.frombuffer(raw[8:12], dtype="<u4")[0])
    header_end = 12 + manifest_len
    if len(raw) < header_end:
        raise CheckpointError("manifest truncated")
    try:
        manifest = json.loads(raw[12:header_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"manifest is not valid JSON: {exc}") from exc
    if manifest.get("version") != 1:
        raise CheckpointError(f"unsupported version {manifest.get('version')}")
    payload = raw[header_end:]
    sections: dict[str, dict[str, np.ndarray]] = {
        "param": {},
        "adam_m": {},
        "adam_v": {},
    }
    for entry in manifest["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        end = start + 4 * count
        if end > len(payload):
            raise CheckpointError(f"payload short for tensor {entry['name']}")
        arr = np.frombuffer(payload[start:end], dtype="<f4").reshape(shape).copy()
        section, _, name = entry["name"].partition("/")
        if section not in sections:
            raise CheckpointError(f"unknown tensor section {section!r}")
        sections[section][name] = arr
    store = ParamStore(sections["param"], step=int(manifest["step"]))
    if set(sections["adam_m"]) == set(store.arrays):
        store.m = sections["adam_m"]
        store.v = sections["adam_v"]
    return store, manifest.get("metadata", {})
