"""Binary checkpoint of a trainer state (model, mixture, replay buffer, time step).

Layout, all integers little-endian::

    offset 0   8 bytes   magic  b"LDAUCKPT"
    offset 8   uint32    format version (currently 1)
    offset 12  uint64    header length H
    offset 20  H bytes   UTF-8 JSON header
    offset 20+H          raw arrays, concatenated in header order, row-major

The header holds ``time_step``, the layer list (weight shape and activation
for every encoder and classifier layer), scalar fields, and an ``arrays``
list of ``{"name", "dtype", "shape"}`` entries describing the payload.
Dtypes are ``<f8`` or ``<i8``.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .buffer import BufferEntry, ReplayBuffer
from .exceptions import ParseError
from .gmm import GmmState
from .nn import Dense, ModelParams
from .trainer import TrainerState

MAGIC = b"LDAUCKPT"
VERSION = 1
_PREFIX = struct.Struct("<8sIQ")


def _pack(state: TrainerState) -> tuple[dict, list[tuple[str, np.ndarray]]]:
    arrays = []
    model = state.model
    layers = {"encoder": [], "classifier": []}
    for part in ("encoder", "classifier"):
        for i, layer in enumerate(getattr(model, part)):
            layers[part].append({"shape": list(layer.weight.shape), "activation": layer.activation})
            arrays.append((f"{part}.{i}.weight", layer.weight))
            arrays.append((f"{part}.{i}.bias", layer.bias))
    header = {"time_step": int(state.time_step), "layers": layers, "gmm": None, "buffer": None}
    if state.gmm is not None:
        header["gmm"] = {"reg_epsilon": float(state.gmm.reg_epsilon)}
        arrays += [("gmm.weights", state.gmm.weights), ("gmm.means", state.gmm.means), ("gmm.covariances", state.gmm.covariances)]
    if state.buffer is not None:
        buf = state.buffer
        header["buffer"] = {"n_b": int(buf.n_b), "k": int(buf.k), "size": len(buf)}
        if len(buf):
            xs, ys, ts = buf.arrays()
            dist = np.array([e.distance_to_mean for e in buf.entries])
            arrays += [("buffer.inputs", xs), ("buffer.labels", ys), ("buffer.tasks", ts), ("buffer.distances", dist)]
    return header, arrays


def save_checkpoint(path, state: TrainerState) -> None:
    header, arrays = _pack(state)
    blobs = []
    header["arrays"] = []
    for name, arr in arrays:
        arr = np.asarray(arr)
        dtype = "<i8" if arr.dtype.kind in "iu" else "<f8"
        arr = np.ascontiguousarray(arr, dtype=dtype)
        header["arrays"].append({"name": name, "dtype": dtype, "shape": list(arr.shape)})
        blobs.append(arr.tobytes())
    raw = json.dumps(header, sort_keys=True).encode("utf-8")
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(_PREFIX.pack(MAGIC, VERSION, len(raw)))
        fh.write(raw)
        for b in blobs:
            fh.write(b)
    tmp.replace(path)


def load_checkpoint(path) -> TrainerState:
    data = Path(path).read_bytes()
    if len(data) < _PREFIX.size:
        raise ParseError(f"{path}: too short for a checkpoint header", 0)
    magic, version, hlen = _PREFIX.unpack_from(data)
    if magic != MAGIC:
        raise ParseError(f"{path}: bad magic {magic!r}", 0)
    if version != VERSION:
        raise ParseError(f"{path}: unsupported checkpoint version {version}", 8)
    start = _PREFIX.size
    if len(data) < start + hlen:
        raise ParseError(f"{path}: truncated header", len(data))
    header = json.loads(data[start:start + hlen].decode("utf-8"))
    pos = start + hlen
    arrays = {}
    for spec in header["arrays"]:
        dt = np.dtype(spec["dtype"])
        count = int(np.prod(spec["shape"], dtype=np.int64))
        nbytes = count * dt.itemsize
        if len(data) < pos + nbytes:
            raise ParseError(f"{path}: truncated array {spec['name']}", len(data))
        arrays[spec["name"]] = np.frombuffer(data, dtype=dt, count=count, offset=pos).reshape(spec["shape"]).copy()
        pos += nbytes
    if pos != len(data):
        raise ParseError(f"{path}: {len(data) - pos} trailing bytes", pos)

    parts = {}
    for part in ("encoder", "classifier"):
        parts[part] = [
            Dense(arrays[f"{part}.{i}.weight"], arrays[f"{part}.{i}.bias"], spec["activation"])
            for i, spec in enumerate(header["layers"][part])
        ]
    model = ModelParams(parts["encoder"], parts["classifier"])
    gmm = None
    if header["gmm"] is not None:
        gmm = GmmState(arrays["gmm.weights"], arrays["gmm.means"], arrays["gmm.covariances"], header["gmm"]["reg_epsilon"])
    buf = None
    if header["buffer"] is not None:
        b = header["buffer"]
        entries = []
        if b["size"]:
            for x, y, t, d in zip(arrays["buffer.inputs"], arrays["buffer.labels"], arrays["buffer.tasks"], arrays["buffer.distances"]):
                x = x.copy()
                x.setflags(write=False)
                entries.append(BufferEntry(x, int(y), int(t), float(d)))
        buf = ReplayBuffer(b["n_b"], b["k"], tuple(entries))
    return TrainerState(model, gmm, buf, header["time_step"])
