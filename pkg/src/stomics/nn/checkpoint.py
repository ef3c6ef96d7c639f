"""Checkpoint files: one JSON manifest line, then little-endian float64 blocks.

The manifest lists every array (parameters first, then buffers) with its name,
kind and shape; the binary blocks follow in exactly that order.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import DataError, ShapeMismatch

FORMAT = "stomics-checkpoint-1"


def manifest_for(module, extra=None):
    entries = [{"name": n, "kind": "param", "shape": list(p.data.shape)} for n, p in module.named_parameters()]
    entries += [{"name": n, "kind": "buffer", "shape": list(b.shape)} for n, b in module.named_buffers()]
    manifest = {"format": FORMAT, "arrays": entries}
    manifest.update(extra or {})
    return manifest


def _arrays(module):
    return [p.data for _, p in module.named_parameters()] + [b for _, b in module.named_buffers()]


def dumps(module, extra=None) -> bytes:
    manifest = manifest_for(module, extra)
    head = json.dumps(manifest, sort_keys=True).encode("utf-8") + b"\n"
    body = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in _arrays(module))
    return head + body


def loads_manifest(raw: bytes):
    nl = raw.find(b"\n")
    if nl < 0:
        raise DataError("checkpoint has no manifest line")
    try:
        manifest = json.loads(raw[:nl].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataError(f"unreadable checkpoint manifest: {exc}") from None
    if manifest.get("format") != FORMAT:
        raise DataError(f"unknown checkpoint format {manifest.get('format')!r}")
    return manifest, nl + 1


def load_into(module, raw: bytes):
    """Copy checkpoint arrays into ``module``; names and shapes must match."""
    manifest, offset = loads_manifest(raw)
    targets = _arrays(module)
    names = [n for n, _ in module.named_parameters()] + [n for n, _ in module.named_buffers()]
    if [e["name"] for e in manifest["arrays"]] != names:
        raise ShapeMismatch("checkpoint arrays do not match the model layout")
    for entry, target in zip(manifest["arrays"], targets):
        shape = tuple(entry["shape"])
        if shape != target.shape:
            raise ShapeMismatch(f"{entry['name']}: checkpoint shape {shape} != model shape {target.shape}")
        n = int(np.prod(shape)) * 8
        if offset + n > len(raw):
            raise DataError("checkpoint payload truncated")
        target[...] = np.frombuffer(raw, dtype="<f8", count=n // 8, offset=offset).reshape(shape)
        offset += n
    return manifest


def param_count_from_manifest(manifest):
    return int(sum(int(np.prod(e["shape"])) for e in manifest["arrays"] if e["kind"] == "param"))


def save(module, path, extra=None):
    Path(path).write_bytes(dumps(module, extra))


def read(path):
    return Path(path).read_bytes()
