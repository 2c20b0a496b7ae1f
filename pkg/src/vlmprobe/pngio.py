"""Minimal PNG codec for 8-bit grayscale / RGB canvases.

The whole pipeline promises byte-identical artifacts for identical seeds, so
image emission is pinned down to one fixed encoding (filter 0, zlib level 6)
instead of depending on whatever Pillow/libpng version happens to be
installed. The reader only accepts the subset this writer produces.
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

_SIGNATURE = b"\x89PNG\r\n\x1a\n"


class PngFormatError(ValueError):
    """Raised for PNG data outside the supported subset."""


def _chunk(tag: bytes, payload: bytes) -> bytes:
    return (
        struct.pack(">I", len(payload))
        + tag
        + payload
        + struct.pack(">I", zlib.crc32(tag + payload) & 0xFFFFFFFF)
    )


def encode_png(img: np.ndarray) -> bytes:
    """Encode a (h, w) grayscale or (h, w, 3) RGB uint8 array as PNG bytes."""
    if img.ndim == 2:
        color_type = 0
        rows = np.ascontiguousarray(img, dtype=np.uint8)
    elif img.ndim == 3 and img.shape[2] == 3:
        color_type = 2
        rows = np.ascontiguousarray(img, dtype=np.uint8)
    else:
        raise PngFormatError(f"unsupported array shape {img.shape}")
    h, w = img.shape[:2]
    if h < 1 or w < 1:
        raise PngFormatError("empty image")

    ihdr = struct.pack(">IIBBBBB", w, h, 8, color_type, 0, 0, 0)
    raw = bytearray()
    flat = rows.reshape(h, -1)
    for y in range(h):
        raw.append(0)  # filter type 0 on every scanline
        raw += flat[y].tobytes()
    idat = zlib.compress(bytes(raw), 6)
    return _SIGNATURE + _chunk(b"IHDR", ihdr) + _chunk(b"IDAT", idat) + _chunk(b"IEND", b"")


def decode_png(data: bytes) -> np.ndarray:
    """Decode PNG bytes produced by :func:`encode_png` back to a uint8 array."""
    if data[:8] != _SIGNATURE:
        raise PngFormatError("not a PNG stream")
    pos = 8
    ihdr = None
    idat = bytearray()
    while pos + 8 <= len(data):
        (length,) = struct.unpack(">I", data[pos : pos + 4])
        tag = data[pos + 4 : pos + 8]
        payload = data[pos + 8 : pos + 8 + length]
        pos += 12 + length
        if tag == b"IHDR":
            ihdr = struct.unpack(">IIBBBBB", payload)
        elif tag == b"IDAT":
            idat += payload
        elif tag == b"IEND":
            break
    if ihdr is None:
        raise PngFormatError("missing IHDR")
    w, h, depth, color_type, comp, filt, interlace = ihdr
    if depth != 8 or comp != 0 or filt != 0 or interlace != 0:
        raise PngFormatError("unsupported PNG encoding parameters")
    if color_type == 0:
        channels = 1
    elif color_type == 2:
        channels = 3
    else:
        raise PngFormatError(f"unsupported color type {color_type}")

    raw = zlib.decompress(bytes(idat))
    stride = w * channels
    if len(raw) != h * (stride + 1):
        raise PngFormatError("unexpected IDAT size")
    out = np.empty((h, stride), dtype=np.uint8)
    for y in range(h):
        off = y * (stride + 1)
        if raw[off] != 0:
            raise PngFormatError("only filter type 0 is supported")
        out[y] = np.frombuffer(raw, dtype=np.uint8, count=stride, offset=off + 1)
    if channels == 1:
        return out
    return out.reshape(h, w, 3)


def write_png(path, img: np.ndarray) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_png(img))


def read_png(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return decode_png(fh.read())


def gray_to_rgb(img: np.ndarray) -> np.ndarray:
    """Expand a grayscale canvas to 3 channels (emission-time only)."""
    return np.repeat(img[:, :, None], 3, axis=2)
