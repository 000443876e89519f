"""Binary model files.

Layout, little-endian throughout::

    b"SCAN"  u8 version=1  u8 form (0 = sac, 1 = absorbed)  u32 layer_count
    per layer:  u32 out  u32 in  u8 flags (bit0 shortcut, bit1 relu)
        form 0:  f32 k[out*in*9]  f32 k_i[out*in*9]  f32 theta[out]
        form 1:  f32 k_u[out*in*9]
    u32 classes  u32 channels  f32 head_w[classes*channels]  f32 head_b[classes]
    u32 crc32 of every preceding byte

Parameters are stored as float32; a float64 network is rounded on save.
"""
from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

from .errors import FormatError
from .network import SacNetwork
from .sac import KERNEL, SacLayer

MAGIC = b"SCAN"
VERSION = 1
FORM_CODES = {"sac": 0, "absorbed": 1}
_F32 = np.dtype("<f4")


def to_bytes(net: SacNetwork) -> bytes:
    parts = [MAGIC, struct.pack("<BBI", VERSION, FORM_CODES[net.form], net.depth)]
    if net.form == "sac":
        for layer in net.layers:
            flags = int(layer.lsc) | (int(layer.activation) << 1)
            parts.append(struct.pack("<IIB", layer.out_channels, layer.in_channels, flags))
            for arr in (layer.k, layer.k_i, layer.theta):
                parts.append(np.ascontiguousarray(arr, dtype=_F32).tobytes())
    else:
        for k in net.kernels:
            parts.append(struct.pack("<IIB", k.shape[0], k.shape[1], 0b11))
            parts.append(np.ascontiguousarray(k, dtype=_F32).tobytes())
    parts.append(struct.pack("<II", *net.head_w.shape))
    parts.append(np.ascontiguousarray(net.head_w, dtype=_F32).tobytes())
    parts.append(np.ascontiguousarray(net.head_b, dtype=_F32).tobytes())
    payload = b"".join(parts)
    return payload + struct.pack("<I", zlib.crc32(payload))


def save_model(net: SacNetwork, path: str | Path) -> None:
    Path(path).write_bytes(to_bytes(net))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError(f"truncated model file while reading {what} "
                              f"(need {n} bytes at offset {self.pos}, have {len(self.data) - self.pos})")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))

    def floats(self, shape: tuple[int, ...], what: str) -> np.ndarray:
        count = int(np.prod(shape))
        raw = self.take(count * 4, what)
        return np.frombuffer(raw, dtype=_F32).astype(np.float32).reshape(shape)


def from_bytes(data: bytes) -> SacNetwork:
    if len(data) < 4 or data[:4] != MAGIC:
        raise FormatError("bad magic: not a SCAN model file")
    if len(data) < 4 + 2 + 4 + 4:
        raise FormatError("truncated model file: header incomplete")
    version = data[4]
    if version != VERSION:
        raise FormatError(f"unsupported model file version {version} (expected {VERSION})")
    payload, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    r = _Reader(payload)
    r.take(5, "magic/version")
    form_code, depth = r.unpack("<BI", "header")
    forms = {v: k for k, v in FORM_CODES.items()}
    if form_code not in forms:
        raise FormatError(f"unknown form code {form_code}")
    form = forms[form_code]
    layers, kernels = [], []
    for i in range(depth):
        out_c, in_c, flags = r.unpack("<IIB", f"layer {i} header")
        shape = (out_c, in_c, KERNEL, KERNEL)
        if form == "sac":
            k = r.floats(shape, f"layer {i} k")
            k_i = r.floats(shape, f"layer {i} k_i")
            theta = r.floats((out_c,), f"layer {i} theta")
            layers.append(SacLayer(k, k_i, theta, lsc=bool(flags & 1), activation=bool(flags & 2)))
        else:
            kernels.append(r.floats(shape, f"layer {i} k_u"))
    classes, channels = r.unpack("<II", "head header")
    head_w = r.floats((classes, channels), "head weights")
    head_b = r.floats((classes,), "head bias")
    if r.pos != len(payload):
        raise FormatError(f"{len(payload) - r.pos} unexpected trailing bytes")
    if zlib.crc32(payload) != crc:
        raise FormatError("checksum mismatch: model file is corrupted")
    try:
        return SacNetwork(layers, kernels, head_w, head_b, form=form)
    except ValueError as exc:
        raise FormatError(f"inconsistent model file: {exc}") from exc


def load_model(path: str | Path) -> SacNetwork:
    return from_bytes(Path(path).read_bytes())
