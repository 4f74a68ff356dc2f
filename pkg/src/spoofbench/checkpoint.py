"""Self-describing checkpoint container shared by all trainable models.

A checkpoint is a ``torch.save`` dict::

    {"format": "spoofbench", "version": 1, "kind": ...,
     "sections": {name: header dict}, "state": {param name: tensor}}

Headers carry plain Python values only so that files load with
``weights_only=True``.
"""

from __future__ import annotations

import hashlib
import io
from pathlib import Path

import torch

from .errors import AdapterError

FORMAT = "spoofbench"
VERSION = 1


def save_checkpoint(path, kind: str, sections: dict, state: dict) -> None:
    blob = {
        "format": FORMAT,
        "version": VERSION,
        "kind": kind,
        "sections": sections,
        "state": {k: v.detach().cpu().clone() for k, v in state.items()},
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(blob, path)


def load_checkpoint(path, kind: str | None = None) -> dict:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such checkpoint: {path}")
    try:
        blob = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as exc:
        raise AdapterError(f"{path}: not a readable checkpoint ({exc})") from exc
    if not isinstance(blob, dict) or blob.get("format") != FORMAT:
        raise AdapterError(f"{path}: not a {FORMAT} checkpoint")
    if "version" not in blob:
        raise AdapterError(f"{path}: checkpoint has no version field")
    if blob["version"] > VERSION:
        raise AdapterError(
            f"{path}: checkpoint version {blob['version']} is newer than "
            f"supported version {VERSION}")
    if kind is not None and blob.get("kind") != kind:
        raise AdapterError(
            f"{path}: expected a {kind!r} checkpoint, found {blob.get('kind')!r}")
    return blob


def state_bytes(module: torch.nn.Module) -> bytes:
    """Canonical byte serialization of parameters and buffers.

    Keys are visited in sorted order and each tensor contributes its name,
    dtype, shape and raw little-endian bytes, so two modules compare equal
    exactly when every stored value is bit-identical.
    """
    buf = io.BytesIO()
    for name, tensor in sorted(module.state_dict().items()):
        t = tensor.detach().cpu().contiguous()
        buf.write(f"{name}|{t.dtype}|{tuple(t.shape)}\n".encode())
        buf.write(t.numpy().tobytes() if t.dtype != torch.bfloat16
                  else t.view(torch.int16).numpy().tobytes())
    return buf.getvalue()


def state_digest(module: torch.nn.Module) -> str:
    return hashlib.sha256(state_bytes(module)).hexdigest()
