"""Named parameter store with gradient slots and binary checkpoint I/O.

Checkpoint layout (all integers 64-bit little-endian):

    magic  b"MPCRN1\\0"
    u64    length of the UTF-8 config block (0 if none)
    bytes  config block, canonical "key=value" lines
    u64    record count
    per record:
        u64    name length, then the UTF-8 name bytes
        u64    rank, then one u64 per dimension
        f32[]  values, little-endian, C order

Values are stored as 32-bit floats and round-trip bit-exactly.
"""

import struct

import numpy as np

from ..errors import ParseError, ShapeError

MAGIC = b"MPCRN1\x00"


class Param:
    """One named tensor plus its gradient slot."""

    __slots__ = ("name", "value", "grad", "trainable")

    def __init__(self, name: str, value: np.ndarray, trainable: bool = True):
        self.name = name
        self.value = value
        self.grad = np.zeros_like(value)
        self.trainable = trainable

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        kind = "param" if self.trainable else "buffer"
        return f"Param({self.name!r}, shape={self.value.shape}, {kind})"


class ParamStore:
    """Ordered collection of Params; iteration order is registration order."""

    def __init__(self, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        self._params: dict[str, Param] = {}
        # Set by a completed backward pass; cleared by zero_grads. Lets the
        # optimizer reject a step before any gradients exist.
        self.grads_populated = False

    def register(self, name: str, value: np.ndarray, trainable: bool = True) -> Param:
        if name in self._params:
            raise ShapeError(f"duplicate parameter name {name!r}")
        p = Param(name, np.ascontiguousarray(value, dtype=self.dtype), trainable)
        self._params[name] = p
        return p

    def __getitem__(self, name: str) -> Param:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self):
        return iter(self._params.values())

    def __len__(self):
        return len(self._params)

    def names(self):
        return list(self._params)

    def trainable(self):
        return [p for p in self._params.values() if p.trainable]

    def zero_grads(self):
        for p in self._params.values():
            p.grad[...] = 0.0
        self.grads_populated = False

    def num_scalars(self, trainable_only: bool = True) -> int:
        return sum(
            p.value.size
            for p in self._params.values()
            if p.trainable or not trainable_only
        )

    def astype(self, dtype) -> "ParamStore":
        """Copy of the store in another dtype (e.g. float64 for gradient checks)."""
        out = ParamStore(dtype)
        for p in self._params.values():
            out.register(p.name, p.value.astype(dtype), p.trainable)
        return out

    def copy_values_from(self, other: "ParamStore"):
        for p in self._params.values():
            src = other[p.name]
            if src.value.shape != p.value.shape:
                raise ShapeError(
                    f"shape mismatch for {p.name!r}: {src.value.shape} vs {p.value.shape}"
                )
            p.value[...] = src.value


def save_checkpoint(path, store: ParamStore, config_text: str = ""):
    """Write the store (and an optional config block) in the binary format."""
    cfg = config_text.encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<Q", len(cfg)))
        f.write(cfg)
        params = list(store)
        f.write(struct.pack("<Q", len(params)))
        for p in params:
            name = p.name.encode("utf-8")
            f.write(struct.pack("<Q", len(name)))
            f.write(name)
            f.write(struct.pack("<Q", p.value.ndim))
            for d in p.value.shape:
                f.write(struct.pack("<Q", d))
            f.write(np.ascontiguousarray(p.value, dtype="<f4").tobytes())


def load_checkpoint(path):
    """Read a checkpoint.

    Returns:
        (entries, config_text) where entries is an ordered dict
        name -> float32 ndarray.
    """
    with open(path, "rb") as f:
        blob = f.read()
    if not blob.startswith(MAGIC):
        raise ParseError("not a checkpoint: bad magic")
    off = len(MAGIC)

    def read_u64():
        nonlocal off
        if off + 8 > len(blob):
            raise ParseError("truncated checkpoint")
        (v,) = struct.unpack_from("<Q", blob, off)
        off += 8
        return v

    cfg_len = read_u64()
    if off + cfg_len > len(blob):
        raise ParseError("truncated checkpoint config block")
    config_text = blob[off : off + cfg_len].decode("utf-8")
    off += cfg_len

    entries: dict[str, np.ndarray] = {}
    for _ in range(read_u64()):
        name_len = read_u64()
        name = blob[off : off + name_len].decode("utf-8")
        off += name_len
        rank = read_u64()
        shape = tuple(read_u64() for _ in range(rank))
        count = int(np.prod(shape, dtype=np.int64)) if rank else 1
        nbytes = 4 * count
        if off + nbytes > len(blob):
            raise ParseError(f"truncated values for record {name!r}")
        values = np.frombuffer(blob, dtype="<f4", count=count, offset=off)
        off += nbytes
        entries[name] = values.reshape(shape).copy()
    if off != len(blob):
        raise ParseError("trailing bytes after last record")
    return entries, config_text


def load_into_store(path, store: ParamStore) -> str:
    """Load a checkpoint into an existing store; shapes must match exactly."""
    entries, config_text = load_checkpoint(path)
    missing = [n for n in store.names() if n not in entries]
    extra = [n for n in entries if n not in store]
    if missing or extra:
        raise ParseError(
            f"checkpoint does not match model: missing={missing[:3]} extra={extra[:3]}"
        )
    for p in store:
        if entries[p.name].shape != p.value.shape:
            raise ParseError(
                f"shape mismatch for {p.name!r}: "
                f"{entries[p.name].shape} vs {p.value.shape}"
            )
        p.value[...] = entries[p.name].astype(store.dtype)
    return config_text
