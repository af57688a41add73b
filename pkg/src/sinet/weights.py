"""Binary weight container.

Layout (all integers ASCII decimal)::

    SINW1\n
    <index length in bytes>\n
    <index: UTF-8 text, one record per line>
    <payload: raw little-endian IEEE-754 arrays, row-major>

Index records::

    meta <key> <value>
    tensor <name> <f32|f64> <d0,d1,...> <offset> <nbytes>

Offsets are relative to the first payload byte.  The ``table`` meta value is
the base64 of the architecture table text, so a container is self-describing.
"""

import base64

import numpy as np

from .arch import format_table, parse_table
from .errors import WeightFormatError, WeightShapeError, WeightTruncatedError

MAGIC = b"SINW1"
_DTYPES = {"f32": np.dtype("<f4"), "f64": np.dtype("<f8")}
_CODES = {np.dtype("float32"): "f32", np.dtype("float64"): "f64"}


def save_state(state, path, meta=None):
    """Write an ordered ``name -> ndarray`` mapping."""
    records, blobs, offset = [], [], 0
    for key, value in (meta or {}).items():
        records.append(f"meta {key} {value}")
    for name, arr in state.items():
        arr = np.asarray(arr)
        code = _CODES.get(arr.dtype)
        if code is None:
            raise WeightFormatError(f"unsupported dtype {arr.dtype} for {name}")
        blob = np.ascontiguousarray(arr, dtype=_DTYPES[code]).tobytes()
        shape = ",".join(str(d) for d in arr.shape) or "scalar"
        records.append(f"tensor {name} {code} {shape} {offset} {len(blob)}")
        blobs.append(blob)
        offset += len(blob)
    index = ("\n".join(records) + "\n").encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC + b"\n")
        fh.write(f"{len(index)}\n".encode())
        fh.write(index)
        for blob in blobs:
            fh.write(blob)


def read_state(path):
    """Return ``(meta, state)``; raises a distinct error per failure mode."""
    with open(path, "rb") as fh:
        raw = fh.read()
    head, sep, rest = raw.partition(b"\n")
    if head != MAGIC or not sep:
        raise WeightFormatError(f"{path}: bad magic {head[:8]!r}, expected {MAGIC!r}")
    length, sep, rest = rest.partition(b"\n")
    try:
        n = int(length)
    except ValueError:
        raise WeightFormatError(f"{path}: bad index length {length[:16]!r}") from None
    if len(rest) < n:
        raise WeightTruncatedError(f"{path}: index truncated")
    index, payload = rest[:n].decode(), rest[n:]
    meta, state, spans = {}, {}, []
    for line in index.splitlines():
        if not line:
            continue
        parts = line.split(" ")
        if parts[0] == "meta" and len(parts) >= 3:
            meta[parts[1]] = " ".join(parts[2:])
            continue
        if parts[0] != "tensor" or len(parts) != 6 or parts[2] not in _DTYPES:
            raise WeightFormatError(f"{path}: malformed index record {line!r}")
        _, name, code, shape_txt, off_txt, nb_txt = parts
        shape = () if shape_txt == "scalar" else tuple(int(d) for d in shape_txt.split(","))
        off, nbytes = int(off_txt), int(nb_txt)
        dt = _DTYPES[code]
        if nbytes != int(np.prod(shape, dtype=np.int64)) * dt.itemsize:
            raise WeightFormatError(f"{path}: byte count for {name} disagrees with its shape")
        if off < 0 or off + nbytes > len(payload):
            raise WeightTruncatedError(
                f"{path}: tensor {name!r} needs bytes [{off}, {off + nbytes}) "
                f"but payload has {len(payload)}", tensor=name)
        spans.append((off, off + nbytes, name))
        state[name] = np.frombuffer(payload, dtype=dt, count=int(np.prod(shape, dtype=np.int64)),
                                    offset=off).reshape(shape).copy()
    spans.sort()
    for (a0, a1, an), (b0, b1, bn) in zip(spans, spans[1:]):
        if b0 < a1:
            raise WeightFormatError(f"{path}: tensors {an!r} and {bn!r} overlap")
    return meta, state


def save_weights(model, path):
    meta = {
        "table": base64.b64encode(format_table(model.table).encode()).decode(),
        "num_class": model.num_class,
        "decoder": model.decoder_kind.value,
        "seed": model.seed,
    }
    save_state(model.state_dict(), path, meta)


def load_into(model, state):
    """Copy ``state`` into ``model`` after checking names and shapes."""
    expected = model.state_dict()
    missing = [k for k in expected if k not in state]
    extra = [k for k in state if k not in expected]
    if missing or extra:
        raise WeightShapeError(f"state keys differ from architecture: missing={missing[:5]} extra={extra[:5]}")
    for k, arr in expected.items():
        if state[k].shape != arr.shape:
            raise WeightShapeError(f"{k}: stored shape {state[k].shape} != architecture {arr.shape}")
    for k, arr in expected.items():
        arr[...] = state[k]
    return model


def load_weights(path):
    """Rebuild the model described by the container and load its tensors."""
    from .model import SINet

    meta, state = read_state(path)
    if "table" not in meta:
        raise WeightFormatError(f"{path}: container has no architecture table")
    table = parse_table(base64.b64decode(meta["table"]).decode())
    model = SINet(table, num_class=int(meta["num_class"]), decoder=meta["decoder"],
                  seed=int(meta.get("seed", 0)))
    dtypes = {a.dtype for a in state.values()}
    if dtypes == {np.dtype("<f8")}:
        model.to(np.float64)
    return load_into(model, state)
