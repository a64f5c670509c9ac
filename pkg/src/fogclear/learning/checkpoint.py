"""FOGC checkpoint files.

Layout (little-endian)::

    b"FOGC" | u32 version=1 | u32 tensor_count
    per tensor: u16 name_len | name (UTF-8) | u8 rank | u32 dims[rank] | f32 values (row-major)
    u32 CRC-32 of every preceding byte

Tensor names determine the architecture on load: ``enc*``/``dec*`` names give
an encoder-decoder, ``conv*``/``head.*`` a classifier. Optimizer state is not
stored.
"""

import struct
import zlib

import numpy as np

from ..errors import FormatError, InvalidArgument
from .models import ClassifierParams, EncoderDecoderParams, clf_from_tensors, ed_from_tensors

MAGIC = b"FOGC"
VERSION = 1


def encode_tensors(tensors):
    parts = [MAGIC, struct.pack("<II", VERSION, len(tensors))]
    for name, arr in tensors.items():
        raw = name.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise InvalidArgument(f"tensor name too long: {name[:40]}...")
        arr = np.asarray(arr)
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def decode_tensors(buf):
    if len(buf) < 4 or buf[:4] != MAGIC:
        raise FormatError(f"bad magic {bytes(buf[:4])!r}, expected {MAGIC!r}", offset=0)
    if len(buf) < 16:
        raise FormatError("truncated checkpoint header", offset=len(buf))
    body, (crc,) = buf[:-4], struct.unpack("<I", buf[-4:])
    if zlib.crc32(body) != crc:
        raise FormatError("CRC-32 mismatch", offset=len(buf) - 4)
    version, count = struct.unpack_from("<II", body, 4)
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}", offset=4)
    off = 12
    tensors = {}

    def need(size, what):
        if off + size > len(body):
            raise FormatError(f"truncated checkpoint while reading {what}", offset=off)

    for _ in range(count):
        need(2, "name length")
        (n,) = struct.unpack_from("<H", body, off)
        off += 2
        need(n + 1, "name")
        name = bytes(body[off:off + n]).decode("utf-8")
        off += n
        rank = body[off]
        off += 1
        need(4 * rank, "dims")
        dims = struct.unpack_from(f"<{rank}I", body, off)
        off += 4 * rank
        size = 4 * int(np.prod(dims, dtype=np.int64))
        need(size, f"values of {name!r}")
        if name in tensors:
            raise FormatError(f"duplicate tensor {name!r}", offset=off)
        tensors[name] = np.frombuffer(body, dtype="<f4", count=size // 4, offset=off).reshape(dims).astype(np.float32)
        off += size
    if off != len(body):
        raise FormatError(f"{len(body) - off} unexpected bytes before checksum", offset=off)
    return tensors


def save_checkpoint(params, path):
    with open(path, "wb") as fh:
        fh.write(encode_tensors(params.named_tensors()))


def load_tensors(path):
    with open(path, "rb") as fh:
        return decode_tensors(fh.read())


def load_checkpoint(path, dtype=np.float32):
    """Load either network type; the architecture comes from the tensor names."""
    tensors = load_tensors(path)
    try:
        if "enc0.kernel" in tensors:
            return ed_from_tensors(tensors, dtype)
        return clf_from_tensors(tensors, dtype)
    except InvalidArgument as exc:
        raise FormatError(f"checkpoint does not describe a known network: {exc}", offset=12) from None


def load_encoder_decoder(path, dtype=np.float32):
    params = load_checkpoint(path, dtype)
    if not isinstance(params, EncoderDecoderParams):
        raise FormatError("checkpoint holds a classifier, not an encoder-decoder", offset=12)
    return params


def load_classifier(path, dtype=np.float32):
    params = load_checkpoint(path, dtype)
    if not isinstance(params, ClassifierParams):
        raise FormatError("checkpoint holds an encoder-decoder, not a classifier", offset=12)
    return params
