"""Binary checkpoints: config echo, named parameter blocks, Adam state."""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"TSVC1"


def _write_block(f, name: str, arr: np.ndarray):
    nb = name.encode("utf-8")
    f.write(struct.pack("<I", len(nb)))
    f.write(nb)
    f.write(struct.pack("<I", arr.ndim))
    f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
    f.write(arr.astype("<f4").tobytes())


def _read_block(blob, off):
    (nlen,) = struct.unpack_from("<I", blob, off)
    off += 4
    name = blob[off:off + nlen].decode("utf-8")
    off += nlen
    (ndim,) = struct.unpack_from("<I", blob, off)
    off += 4
    shape = struct.unpack_from(f"<{ndim}I", blob, off)
    off += 4 * ndim
    count = int(np.prod(shape)) if ndim else 1
    arr = np.frombuffer(blob, dtype="<f4", count=count, offset=off).reshape(shape)
    off += 4 * count
    return name, arr.copy(), off


def save_checkpoint(path, config_text: str, epoch: int,
                    params: list[tuple[str, np.ndarray]],
                    adam_step: int,
                    adam_m: list[np.ndarray], adam_v: list[np.ndarray],
                    pseudo_head: list[tuple[str, np.ndarray]]) -> None:
    with open(path, "wb") as f:
        f.write(MAGIC)
        cb = config_text.encode("utf-8")
        f.write(struct.pack("<I", len(cb)))
        f.write(cb)
        f.write(struct.pack("<II", epoch, len(params)))
        for name, arr in params:
            _write_block(f, name, arr)
        f.write(struct.pack("<Q", adam_step))
        for (name, _), m, v in zip(params, adam_m, adam_v):
            _write_block(f, name + ".m", m)
            _write_block(f, name + ".v", v)
        f.write(struct.pack("<I", len(pseudo_head)))
        for name, arr in pseudo_head:
            _write_block(f, name, arr)


def load_checkpoint(path) -> dict:
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:5] != MAGIC:
        raise ValueError(f"{path}: bad magic {blob[:5]!r}")
    off = 5
    (clen,) = struct.unpack_from("<I", blob, off)
    off += 4
    config_text = blob[off:off + clen].decode("utf-8")
    off += clen
    epoch, n_params = struct.unpack_from("<II", blob, off)
    off += 8
    params = {}
    order = []
    for _ in range(n_params):
        name, arr, off = _read_block(blob, off)
        params[name] = arr
        order.append(name)
    (adam_step,) = struct.unpack_from("<Q", blob, off)
    off += 8
    adam_m, adam_v = {}, {}
    for _ in range(n_params):
        name, arr, off = _read_block(blob, off)
        adam_m[name[:-2]] = arr
        name, arr, off = _read_block(blob, off)
        adam_v[name[:-2]] = arr
    (n_pseudo,) = struct.unpack_from("<I", blob, off)
    off += 4
    pseudo = {}
    for _ in range(n_pseudo):
        name, arr, off = _read_block(blob, off)
        pseudo[name] = arr
    return {"config_text": config_text, "epoch": epoch, "params": params,
            "param_order": order, "adam_step": adam_step, "adam_m": adam_m,
            "adam_v": adam_v, "pseudo_head": pseudo}
