"""Small file-format helpers: key=value text, portable graymaps, atomic writes."""
from __future__ import annotations

import os
import tempfile
from pathlib import Path

import numpy as np

from .errors import ConfigError

_WHITESPACE = b" \t\n\r\x0b\x0c"
PGM_MAXVAL_LIMIT = 65535


def parse_kv_text(text: str) -> dict[str, str]:
    """Parse flat ``key = value`` text; ``#`` starts a comment, keys must be unique."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw.strip()!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        value = value.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def format_kv_text(pairs: dict[str, object]) -> str:
    return "".join(f"{k}={v}\n" for k, v in pairs.items())


def atomic_write_bytes(path: str | Path, data: bytes) -> None:
    """Write via a temp file in the same directory, then rename into place."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def atomic_write_text(path: str | Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def _skip_header_filler(data: bytes, pos: int) -> int:
    while pos < len(data):
        if data[pos] in _WHITESPACE:
            pos += 1
        elif data[pos : pos + 1] == b"#":
            nl = data.find(b"\n", pos)
            pos = len(data) if nl < 0 else nl + 1
        else:
            break
    return pos


def _next_token(data: bytes, pos: int) -> tuple[bytes, int]:
    pos = _skip_header_filler(data, pos)
    start = pos
    while pos < len(data) and data[pos] not in _WHITESPACE and data[pos : pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise ConfigError("truncated graymap header")
    return data[start:pos], pos


def _header_int(data: bytes, pos: int, what: str) -> tuple[int, int]:
    token, pos = _next_token(data, pos)
    try:
        value = int(token)
    except ValueError:
        raise ConfigError(f"graymap header: bad {what} token {token!r}") from None
    return value, pos


def read_pgm(path: str | Path) -> tuple[np.ndarray, int]:
    """Read a P2 (ascii) or P5 (binary) graymap.

    Returns (samples, maxval) with samples an int array of shape (height, width).
    """
    data = Path(path).read_bytes()
    magic, pos = _next_token(data, 0)
    if magic not in (b"P2", b"P5"):
        raise ConfigError(f"unsupported graymap magic {magic!r} (want P2 or P5)")
    width, pos = _header_int(data, pos, "width")
    height, pos = _header_int(data, pos, "height")
    maxval, pos = _header_int(data, pos, "maxval")
    if width < 1 or height < 1:
        raise ConfigError(f"graymap dimensions {width}x{height} invalid")
    if not (0 < maxval <= PGM_MAXVAL_LIMIT):
        raise ConfigError(f"graymap maxval {maxval} outside 1..{PGM_MAXVAL_LIMIT}")
    count = width * height
    if magic == b"P5":
        if pos >= len(data) or data[pos] not in _WHITESPACE:
            raise ConfigError("graymap: missing whitespace before binary raster")
        pos += 1
        itemsize = 2 if maxval > 255 else 1
        need = count * itemsize
        raster = data[pos : pos + need]
        if len(raster) < need:
            raise ConfigError("graymap: truncated binary raster")
        if data[pos + need :].strip(bytes(_WHITESPACE)):
            raise ConfigError("graymap: trailing data after raster")
        dtype = ">u2" if itemsize == 2 else np.uint8
        samples = np.frombuffer(raster, dtype=dtype).astype(np.int64).reshape(height, width)
    else:
        body = bytearray()
        rest = data[pos:]
        i = 0
        while i < len(rest):  # strip comments, keep whitespace structure
            if rest[i : i + 1] == b"#":
                nl = rest.find(b"\n", i)
                i = len(rest) if nl < 0 else nl + 1
            else:
                body.append(rest[i])
                i += 1
        tokens = bytes(body).split()
        if len(tokens) != count:
            raise ConfigError(f"graymap: expected {count} samples, found {len(tokens)}")
        try:
            samples = np.array([int(t) for t in tokens], dtype=np.int64).reshape(height, width)
        except ValueError:
            raise ConfigError("graymap: non-integer sample") from None
    if samples.min() < 0 or samples.max() > maxval:
        raise ConfigError("graymap: sample outside [0, maxval]")
    return samples, maxval


def write_pgm(path: str | Path, samples: np.ndarray, maxval: int, binary: bool = True) -> None:
    """Write integer samples as a P5 (binary) or P2 (ascii) graymap, atomically."""
    samples = np.asarray(samples)
    if samples.ndim != 2:
        raise ConfigError("graymap samples must be 2-D")
    if not (0 < maxval <= PGM_MAXVAL_LIMIT):
        raise ConfigError(f"graymap maxval {maxval} outside 1..{PGM_MAXVAL_LIMIT}")
    if not np.issubdtype(samples.dtype, np.integer):
        raise ConfigError("graymap samples must be integers")
    if samples.min() < 0 or samples.max() > maxval:
        raise ConfigError("graymap: sample outside [0, maxval]")
    height, width = samples.shape
    magic = "P5" if binary else "P2"
    header = f"{magic}\n{width} {height}\n{maxval}\n".encode("ascii")
    if binary:
        dtype = ">u2" if maxval > 255 else np.uint8
        raster = samples.astype(dtype).tobytes()
    else:
        lines = [" ".join(str(v) for v in row) for row in samples.tolist()]
        raster = ("\n".join(lines) + "\n").encode("ascii")
    atomic_write_bytes(path, header + raster)
