"""Binary PPM (P6) / PGM (P5) reading and writing, maxval 255 only."""

import os

import numpy as np


class NetpbmError(ValueError):
    """Malformed or unsupported netpbm file; ``offset`` is the byte position."""

    def __init__(self, msg, offset, path=None):
        where = f"{path}: " if path else ""
        super().__init__(f"{where}{msg} (byte offset {offset})")
        self.offset = offset


def _header_tokens(buf, count, path):
    tokens = []
    pos = 0
    n = len(buf)
    while len(tokens) < count:
        while pos < n and (buf[pos:pos + 1].isspace() or buf[pos:pos + 1] == b"#"):
            if buf[pos:pos + 1] == b"#":
                while pos < n and buf[pos:pos + 1] not in (b"\n", b"\r"):
                    pos += 1
            else:
                pos += 1
        if pos >= n:
            raise NetpbmError("truncated header", pos, path)
        start = pos
        while pos < n and not buf[pos:pos + 1].isspace() and buf[pos:pos + 1] != b"#":
            pos += 1
        tokens.append((buf[start:pos], start))
    # exactly one whitespace byte separates maxval from the raster
    if pos >= n or not buf[pos:pos + 1].isspace():
        raise NetpbmError("missing whitespace after header", pos, path)
    return tokens, pos + 1


def decode(buf, path=None):
    """Decode P5/P6 bytes to uint8 array (h, w) or (h, w, 3)."""
    if len(buf) < 2:
        raise NetpbmError("file too short for a magic number", 0, path)
    magic = bytes(buf[:2])
    if magic not in (b"P5", b"P6"):
        raise NetpbmError(f"unsupported magic {magic!r}, expected P5 or P6", 0, path)
    tokens, data_start = _header_tokens(buf, 4, path)
    values = []
    for tok, off in tokens[1:]:
        if not tok.isdigit():
            raise NetpbmError(f"expected a decimal integer, got {tok!r}", off, path)
        values.append(int(tok))
    w, h, maxval = values
    if w <= 0 or h <= 0:
        raise NetpbmError(f"non-positive image size {w}x{h}", tokens[1][1], path)
    if maxval != 255:
        raise NetpbmError(f"maxval must be 255, got {maxval}", tokens[3][1], path)
    depth = 3 if magic == b"P6" else 1
    need = w * h * depth
    have = len(buf) - data_start
    if have < need:
        raise NetpbmError(f"truncated raster: need {need} bytes, found {have}", len(buf), path)
    arr = np.frombuffer(bytes(buf[data_start:data_start + need]), dtype=np.uint8)
    return arr.reshape(h, w, 3) if depth == 3 else arr.reshape(h, w)


def encode(arr):
    arr = np.asarray(arr)
    if arr.dtype != np.uint8:
        raise TypeError(f"netpbm encoding needs uint8 data, got {arr.dtype}")
    if arr.ndim == 2:
        magic = b"P5"
    elif arr.ndim == 3 and arr.shape[2] == 3:
        magic = b"P6"
    else:
        raise ValueError(f"cannot encode array of shape {arr.shape}")
    h, w = arr.shape[:2]
    return magic + f"\n{w} {h}\n255\n".encode("ascii") + np.ascontiguousarray(arr).tobytes()


def read(path):
    with open(path, "rb") as fh:
        return decode(fh.read(), path=os.fspath(path))


def write(path, arr):
    with open(path, "wb") as fh:
        fh.write(encode(arr))


def quantize(values):
    """Map reals in [0, 1] to uint8 by rounding; values are clipped first."""
    return np.rint(np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0) * 255.0).astype(np.uint8)


def load_image(path):
    """RGB image as float32 (3, h, w) in [0, 1]."""
    arr = read(path)
    if arr.ndim != 3:
        raise NetpbmError("expected a P6 colour image", 0, os.fspath(path))
    return (arr.transpose(2, 0, 1) / 255.0).astype(np.float32)


def save_image(path, image):
    write(path, quantize(np.asarray(image).transpose(1, 2, 0)))


def load_map(path):
    """Grey-level map as float64 (h, w) in [0, 1]."""
    arr = read(path)
    if arr.ndim != 2:
        raise NetpbmError("expected a P5 grey-level map", 0, os.fspath(path))
    return arr / 255.0


def save_map(path, values):
    write(path, quantize(values))


def load_mask(path):
    """Binary mask (h, w) of 0/1 uint8; grey levels >= 128 are foreground."""
    return (load_map(path) >= 0.5).astype(np.uint8)


def save_mask(path, mask):
    write(path, (np.asarray(mask) > 0).astype(np.uint8) * 255)
