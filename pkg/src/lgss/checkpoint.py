"""Model checkpoint: one ``.npz`` holding BNet and sequence-model tensors.

Layout: a ``__header__`` entry with JSON metadata (format tag, version,
hyperparameters of both models) and one float32 array per named tensor,
prefixed ``bnet/`` or ``seq/``.
"""
from __future__ import annotations

import io
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .bnet import BNetParams
from .sequence import SeqParams

CHECKPOINT_TAG = "lgss-checkpoint"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, bnet: BNetParams, seq: SeqParams) -> None:
    header = {"format": CHECKPOINT_TAG, "version": CHECKPOINT_VERSION,
              "bnet": bnet.meta(), "seq": seq.meta()}
    arrays = {"__header__": np.frombuffer(json.dumps(header, sort_keys=True).encode(), dtype=np.uint8)}
    for k, v in sorted(bnet.tensors.items()):
        arrays[f"bnet/{k}"] = v.astype(np.float32)
    for k, v in sorted(seq.tensors.items()):
        arrays[f"seq/{k}"] = v.astype(np.float32)
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    with os.fdopen(fd, "wb") as fh:
        fh.write(buf.getvalue())
    os.replace(tmp, path)


def load_checkpoint(path) -> tuple[BNetParams, SeqParams]:
    try:
        z = np.load(path)
    except (ValueError, EOFError) as exc:
        raise CheckpointError(f"{path}: not a checkpoint ({exc})") from exc
    with z:
        if "__header__" not in z:
            raise CheckpointError(f"{path}: missing header")
        header = json.loads(bytes(z["__header__"]).decode())
        if header.get("format") != CHECKPOINT_TAG or header.get("version") != CHECKPOINT_VERSION:
            raise CheckpointError(f"{path}: unsupported checkpoint {header.get('format')!r} "
                                  f"v{header.get('version')!r}")
        bt = {k[5:]: z[k].astype(np.float64) for k in z.files if k.startswith("bnet/")}
        st = {k[4:]: z[k].astype(np.float64) for k in z.files if k.startswith("seq/")}
    bnet = BNetParams(tensors=bt, **header["bnet"])
    seq = SeqParams(tensors=st, **header["seq"])
    return bnet, seq
