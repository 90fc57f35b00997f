"""Dense tensor containers, the ``.dvt`` binary format and seeded synthetic data.

Layout of a ``.dvt`` file (all numbers little-endian)::

    b"DVT1" | u8 rank | rank x u32 dims | prod(dims) x f32 payload (row-major)

Only rank 2 (token matrices) and rank 3 (latent grids) are accepted on read.
"""

from __future__ import annotations

import hashlib
import os
import struct
from dataclasses import dataclass, field
from typing import Union

import numpy as np

MAGIC = b"DVT1"
_U32_MAX = 0xFFFFFFFF
_F32_LE = np.dtype("<f4")

PRNG_ALGORITHM = "numpy-PCG64"


class DVTFormatError(ValueError):
    """Raised when a file is not a well-formed ``.dvt`` tensor."""


def _frozen_f32(data, shape: tuple[int, ...]) -> np.ndarray:
    arr = np.array(data, dtype=np.float32, copy=True).reshape(shape)
    if not np.all(np.isfinite(arr)):
        raise ValueError("non-finite values")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class LatentTensor:
    """C x h x w grid of float32 values (C defaults to 16 in the pipeline)."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 3 or min(arr.shape) < 1:
            raise ValueError(f"latent must be a non-empty C x h x w array, got shape {arr.shape}")
        object.__setattr__(self, "data", _frozen_f32(arr, arr.shape))

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape


@dataclass(frozen=True)
class TokenMatrix:
    """N x D matrix of float32 token vectors."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 2 or min(arr.shape) < 1:
            raise ValueError(f"token matrix must be a non-empty N x D array, got shape {arr.shape}")
        object.__setattr__(self, "data", _frozen_f32(arr, arr.shape))

    @property
    def tokens(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape


Tensor = Union[LatentTensor, TokenMatrix]


@dataclass(frozen=True)
class SeededGenerator:
    """Named, reproducible random source.

    Every call to :meth:`rng` builds a fresh ``numpy.random.Generator`` over
    PCG64, so streams never depend on call history. ``keys`` select
    independent sub-streams via ``SeedSequence`` spawn keys.
    """

    seed: int
    algorithm: str = field(default=PRNG_ALGORITHM, init=False)

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError(f"seed must fit in 64 unsigned bits, got {self.seed}")

    def rng(self, *keys: int) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=int(self.seed), spawn_key=tuple(int(k) for k in keys))
        return np.random.Generator(np.random.PCG64(ss))

    def child(self, label: str) -> "SeededGenerator":
        """Derive a generator whose seed is a stable hash of (seed, label)."""
        digest = hashlib.sha256(f"{self.seed}:{label}".encode()).digest()
        return SeededGenerator(int.from_bytes(digest[:8], "little"))


def encode_tensor(t: Tensor | np.ndarray) -> bytes:
    arr = t.data if isinstance(t, (LatentTensor, TokenMatrix)) else np.asarray(t, dtype=np.float32)
    if arr.ndim > 255:
        raise DVTFormatError(f"rank {arr.ndim} does not fit in u8")
    if any(d > _U32_MAX for d in arr.shape):
        raise DVTFormatError(f"dims {arr.shape} overflow u32")
    header = MAGIC + struct.pack(f"<B{arr.ndim}I", arr.ndim, *arr.shape)
    return header + np.ascontiguousarray(arr, dtype=_F32_LE).tobytes()


def decode_tensor(buf: bytes) -> Tensor:
    if len(buf) < 5 or buf[:4] != MAGIC:
        raise DVTFormatError("not a DVT file")
    rank = buf[4]
    if rank not in (2, 3):
        raise DVTFormatError(f"unsupported rank {rank} (expected 2 or 3)")
    end = 5 + 4 * rank
    if len(buf) < end:
        raise DVTFormatError("truncated header")
    dims = struct.unpack(f"<{rank}I", buf[5:end])
    count = int(np.prod(dims, dtype=np.int64))
    if len(buf) - end != 4 * count:
        raise DVTFormatError(
            f"payload length mismatch: dims {dims} need {4 * count} bytes, found {len(buf) - end}"
        )
    arr = np.frombuffer(buf, dtype=_F32_LE, count=count, offset=end).reshape(dims)
    if not np.all(np.isfinite(arr)):
        raise DVTFormatError("non-finite values")
    return LatentTensor(arr) if rank == 3 else TokenMatrix(arr)


def write_tensor(path: str | os.PathLike, t: Tensor | np.ndarray) -> None:
    payload = encode_tensor(t)
    try:
        with open(path, "wb") as fh:
            fh.write(payload)
    except OSError as exc:
        raise OSError(f"cannot write tensor to {os.fspath(path)!r}: {exc.strerror}") from exc


def read_tensor(path: str | os.PathLike) -> Tensor:
    try:
        with open(path, "rb") as fh:
            buf = fh.read()
    except OSError as exc:
        raise OSError(f"cannot read tensor from {os.fspath(path)!r}: {exc.strerror}") from exc
    try:
        return decode_tensor(buf)
    except DVTFormatError as exc:
        raise DVTFormatError(f"{os.fspath(path)}: {exc}") from None


FAMILIES = ("uniform", "gaussian", "constant", "gradient")


def synth_latent(
    gen: SeededGenerator, C: int, h: int, w: int, family: str = "gaussian", k: float = 0.0
) -> LatentTensor:
    """Deterministic synthetic latent.

    ``uniform`` draws from [-1, 1), ``gaussian`` from N(0, 1), ``constant``
    fills every cell with ``k`` and ``gradient`` sets cell (c, i, j) to
    ``c + i/h + j/w``.
    """
    if min(C, h, w) < 1:
        raise ValueError(f"latent dims must be positive, got {(C, h, w)}")
    shape = (C, h, w)
    if family == "uniform":
        data = gen.rng().uniform(-1.0, 1.0, size=shape)
    elif family == "gaussian":
        data = gen.rng().standard_normal(size=shape)
    elif family == "constant":
        data = np.full(shape, k, dtype=np.float64)
    elif family == "gradient":
        c, i, j = np.meshgrid(np.arange(C), np.arange(h), np.arange(w), indexing="ij")
        data = c + i / h + j / w
    else:
        raise ValueError(f"unknown family {family!r}; choose from {FAMILIES}")
    return LatentTensor(data)


def parse_family(spec: str) -> tuple[str, float]:
    """Parse CLI family strings such as ``gaussian`` or ``constant:3.0``."""
    name, _, arg = spec.partition(":")
    if name not in FAMILIES:
        raise ValueError(f"unknown family {name!r}; choose from {FAMILIES}")
    if name == "constant":
        return name, float(arg) if arg else 0.0
    if arg:
        raise ValueError(f"family {name!r} takes no argument")
    return name, 0.0
