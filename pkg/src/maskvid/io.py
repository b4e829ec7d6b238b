"""Binary artifact files and the flat ``key = value`` text format.

All binary files share one header layout: a 4-byte magic, a little-endian
u32 version, then format-specific u32 dimensions, then the payload.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .core import GridShape, TokenGrid, VideoTensor

VERSION = 1

VIDEO_MAGIC = b"MGVD"
TOKEN_MAGIC = b"MGTK"
CODEBOOK_MAGIC = b"MGCB"
PARAMS_MAGIC = b"MGPT"


class FormatError(ValueError):
    pass


def _pack(magic: bytes, dims, payload: np.ndarray, dtype: str) -> bytes:
    header = magic + struct.pack("<I", VERSION) + struct.pack(f"<{len(dims)}I", *dims)
    return header + np.ascontiguousarray(payload, dtype=dtype).tobytes()


def _unpack(raw: bytes, magic: bytes, n_dims: int):
    if raw[:4] != magic:
        raise FormatError(f"bad magic {raw[:4]!r}, expected {magic!r}")
    if len(raw) < 8 + 4 * n_dims:
        raise FormatError("truncated header")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    dims = struct.unpack_from(f"<{n_dims}I", raw, 8)
    return dims, raw[8 + 4 * n_dims:]


def video_to_bytes(video: VideoTensor) -> bytes:
    return _pack(VIDEO_MAGIC, video.data.shape, video.data, "<f4")


def video_from_bytes(raw: bytes) -> VideoTensor:
    (t, h, w, c), payload = _unpack(raw, VIDEO_MAGIC, 4)
    data = np.frombuffer(payload, dtype="<f4")
    if data.size != t * h * w * c:
        raise FormatError("video payload length does not match header")
    return VideoTensor(data.astype(np.float64).reshape(t, h, w, c))


def tokens_to_bytes(grid: TokenGrid) -> bytes:
    return _pack(TOKEN_MAGIC, (*grid.shape.lattice, grid.v_vis), grid.ids, "<u4")


def tokens_from_bytes(raw: bytes, blocks=(1, 1, 1)) -> TokenGrid:
    """Token files carry no block sizes; pass them to recover the full GridShape."""
    (t, h, w, v_vis), payload = _unpack(raw, TOKEN_MAGIC, 4)
    ids = np.frombuffer(payload, dtype="<u4")
    if ids.size != t * h * w:
        raise FormatError("token payload length does not match header")
    return TokenGrid(GridShape(t, h, w, *blocks), ids.astype(np.int64), v_vis)


def codebook_to_bytes(centroids: np.ndarray) -> bytes:
    v, d = centroids.shape
    return _pack(CODEBOOK_MAGIC, (v, d), centroids, "<f4")


def codebook_from_bytes(raw: bytes) -> np.ndarray:
    (v, d), payload = _unpack(raw, CODEBOOK_MAGIC, 2)
    data = np.frombuffer(payload, dtype="<f4")
    if data.size != v * d:
        raise FormatError("codebook payload length does not match header")
    return data.astype(np.float64).reshape(v, d)


def params_to_bytes(a, b, g, h) -> bytes:
    v_vis = a.shape[1]
    n = b.shape[0]
    n_classes = h.shape[0] - 1
    flat = np.concatenate([np.ravel(x) for x in (a, b, g, h)])
    return _pack(PARAMS_MAGIC, (v_vis, n, n_classes), flat, "<f4")


def params_from_bytes(raw: bytes, n_tasks: int = 10):
    (v_vis, n, n_classes), payload = _unpack(raw, PARAMS_MAGIC, 3)
    flat = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    sizes = [(v_vis + 1, v_vis), (n, v_vis), (n_tasks, v_vis), (n_classes + 1, v_vis)]
    if flat.size != sum(r * c for r, c in sizes):
        raise FormatError("parameter payload length does not match header")
    out, pos = [], 0
    for r, c in sizes:
        out.append(flat[pos:pos + r * c].reshape(r, c).copy())
        pos += r * c
    return tuple(out)


def write_bytes(path, raw: bytes) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(raw)
    return path


# -- key = value text -------------------------------------------------------


def format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return ",".join(format_value(v) for v in value)
    if value is None:
        return ""
    return str(value)


def dumps_kv(items: dict, header: str | None = None) -> str:
    lines = []
    if header:
        lines.extend(f"# {line}" for line in header.splitlines())
    for key, value in items.items():
        lines.append(f"{key} = {format_value(value)}")
    return "\n".join(lines) + "\n"


def loads_kv(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment line. Values stay strings."""
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise FormatError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise FormatError(f"line {lineno}: empty key")
        if key in out:
            raise FormatError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value.strip()
    return out
