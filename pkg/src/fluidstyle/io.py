"""Binary grid/particle/filter-bank files and PNG images.

All multi-byte fields are little-endian and all reals are float64.

Grid file (``LNSG``)::

    magic "LNSG" | version u32 | nx ny nz u32 | spacing f64 | origin 3 x f64
    | components u32 | payload f64[nx*ny*nz*components]

The payload is node-major in x-fastest order with components interleaved per
node.

Particle file (``LNSP``)::

    magic "LNSP" | version u32 | count u32 | dim u32 | n_channels u32
    | positions_offset u64
    | n_channels x (name_len u16 | name utf-8 | offset u64)
    | positions f64[count*dim] (row-major) | each channel f64[count]

Offsets are absolute byte positions from the start of the file.

Filter-bank file (``LNSB``)::

    magic "LNSB" | version u32 | n_layers u32
    | n_layers x (c_in u32 | c_out u32 | k u32 | pool u8 | style u8 | style_weight f64)
    | per layer: weights f64[c_out*c_in*k*k] (out, in, row, col) then bias f64[c_out]
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from .errors import FormatError, LengthError, UnsupportedVersion
from .fields import GridSpec, Image, ParticleSet, ScalarGrid, VectorGrid
from .style import ConvLayer, FilterBank

__all__ = [
    "VERSION",
    "write_grid",
    "read_grid",
    "write_particles",
    "read_particles",
    "write_bank",
    "read_bank",
    "load_image",
    "save_image",
]

VERSION = 1

_GRID_HEAD = struct.Struct("<4sI3Id3dI")
_PART_HEAD = struct.Struct("<4sIIIIQ")
_BANK_HEAD = struct.Struct("<4sII")
_LAYER = struct.Struct("<IIIBBd")


def _f64(a) -> bytes:
    return np.ascontiguousarray(a, dtype="<f8").tobytes()


def _read_header(buf, st, magic, path):
    if len(buf) < 4 or buf[:4] != magic:
        raise FormatError(f"{path}: bad magic {bytes(buf[:4])!r}, expected {magic!r}")
    if len(buf) < st.size:
        raise LengthError(f"{path}: header truncated ({len(buf)} of {st.size} bytes)")
    head = st.unpack_from(buf, 0)
    if head[1] != VERSION:
        raise UnsupportedVersion(f"{path}: version {head[1]} is not supported (expected {VERSION})")
    return head


def _payload(buf, offset, count, path, what):
    end = offset + 8 * count
    if end > len(buf):
        raise LengthError(f"{path}: {what} needs {8 * count} bytes at offset {offset}, file has {len(buf) - offset}")
    return np.frombuffer(buf, dtype="<f8", count=count, offset=offset).astype(np.float64)


def write_grid(path, grid) -> None:
    """Write a :class:`ScalarGrid` or :class:`VectorGrid`."""
    spec = grid.spec
    if isinstance(grid, VectorGrid):
        ncomp = spec.dim
        payload = np.stack([grid.values[..., c].ravel(order="F") for c in range(ncomp)], axis=1)
    else:
        ncomp = 1
        payload = grid.flat
    head = _GRID_HEAD.pack(b"LNSG", VERSION, *spec.dims, spec.spacing, *spec.origin, ncomp)
    Path(path).write_bytes(head + _f64(payload.ravel()))


def read_grid(path):
    """Read a grid file; one component gives a ScalarGrid, more a VectorGrid."""
    buf = Path(path).read_bytes()
    _, _, nx, ny, nz, spacing, ox, oy, oz, ncomp = _read_header(buf, _GRID_HEAD, b"LNSG", path)
    try:
        spec = GridSpec((nx, ny, nz), spacing, (ox, oy, oz))
    except ValueError as e:
        raise FormatError(f"{path}: {e}") from None
    n = spec.size
    data = _payload(buf, _GRID_HEAD.size, n * ncomp, path, "grid payload")
    if len(buf) != _GRID_HEAD.size + 8 * n * ncomp:
        raise FormatError(f"{path}: {len(buf) - _GRID_HEAD.size - 8 * n * ncomp} trailing bytes after payload")
    if ncomp == 1:
        return ScalarGrid.from_flat(spec, data)
    if ncomp != spec.dim:
        raise FormatError(f"{path}: {ncomp} components for a {spec.dim}D grid")
    data = data.reshape(n, ncomp)
    values = np.stack([data[:, c].reshape(spec.dims, order="F") for c in range(ncomp)], axis=-1)
    return VectorGrid(spec, values)


def write_particles(path, particles: ParticleSet) -> None:
    names = list(particles.channels)
    encoded = [n.encode("utf-8") for n in names]
    dir_size = sum(2 + len(e) + 8 for e in encoded)
    pos_offset = _PART_HEAD.size + dir_size
    n, d = particles.count, particles.dim
    offset = pos_offset + 8 * n * d
    directory = b""
    for e in encoded:
        directory += struct.pack("<H", len(e)) + e + struct.pack("<Q", offset)
        offset += 8 * n
    head = _PART_HEAD.pack(b"LNSP", VERSION, n, d, len(names), pos_offset)
    body = _f64(particles.positions.ravel()) + b"".join(_f64(particles[name]) for name in names)
    Path(path).write_bytes(head + directory + body)


def read_particles(path) -> ParticleSet:
    buf = Path(path).read_bytes()
    _, _, count, dim, nchan, pos_offset = _read_header(buf, _PART_HEAD, b"LNSP", path)
    if dim not in (2, 3):
        raise FormatError(f"{path}: particle dimension {dim} is not 2 or 3")
    entries = []
    at = _PART_HEAD.size
    for _ in range(nchan):
        if at + 2 > len(buf):
            raise LengthError(f"{path}: channel directory truncated")
        (ln,) = struct.unpack_from("<H", buf, at)
        at += 2
        if at + ln + 8 > len(buf):
            raise LengthError(f"{path}: channel directory truncated")
        try:
            name = buf[at : at + ln].decode("utf-8")
        except UnicodeDecodeError:
            raise FormatError(f"{path}: channel name is not valid utf-8") from None
        (off,) = struct.unpack_from("<Q", buf, at + ln)
        at += ln + 8
        entries.append((name, off))
    pos = _payload(buf, pos_offset, count * dim, path, "positions").reshape(count, dim)
    # a channel's extent ends where the next block (or the file) begins
    starts = sorted({pos_offset, *(o for _, o in entries)})
    channels = {}
    for name, off in entries:
        if name in channels:
            raise FormatError(f"{path}: duplicate channel {name!r}")
        later = [s for s in starts if s > off]
        limit = later[0] if later else len(buf)
        if limit - off < 8 * count or off + 8 * count > len(buf):
            avail = max(0, min(limit, len(buf)) - off) // 8
            raise LengthError(f"{path}: channel {name!r} holds {avail} values, expected {count}")
        channels[name] = _payload(buf, off, count, path, f"channel {name!r}")
    try:
        return ParticleSet(pos, channels)
    except ValueError as e:
        raise FormatError(f"{path}: {e}") from None


def write_bank(path, bank: FilterBank) -> None:
    parts = [_BANK_HEAD.pack(b"LNSB", VERSION, len(bank.layers))]
    for i, layer in enumerate(bank.layers):
        style = i in bank.style_layers
        parts.append(_LAYER.pack(layer.c_in, layer.c_out, layer.k, int(layer.pool), int(style), bank.style_layers.get(i, 0.0)))
    for layer in bank.layers:
        parts.append(_f64(layer.weight.ravel()) + _f64(layer.bias))
    Path(path).write_bytes(b"".join(parts))


def read_bank(path) -> FilterBank:
    buf = Path(path).read_bytes()
    _, _, nlayers = _read_header(buf, _BANK_HEAD, b"LNSB", path)
    table_end = _BANK_HEAD.size + nlayers * _LAYER.size
    if table_end > len(buf):
        raise LengthError(f"{path}: layer table truncated")
    table = [_LAYER.unpack_from(buf, _BANK_HEAD.size + i * _LAYER.size) for i in range(nlayers)]
    at = table_end
    layers, style = [], {}
    for i, (c_in, c_out, k, pool, is_style, weight) in enumerate(table):
        nw = c_out * c_in * k * k
        w = _payload(buf, at, nw, path, f"layer {i} weights").reshape(c_out, c_in, k, k)
        b = _payload(buf, at + 8 * nw, c_out, path, f"layer {i} bias")
        at += 8 * (nw + c_out)
        try:
            layers.append(ConvLayer(w, b, bool(pool)))
        except ValueError as e:
            raise FormatError(f"{path}: layer {i}: {e}") from None
        if is_style:
            style[i] = weight
    if at != len(buf):
        raise FormatError(f"{path}: {len(buf) - at} trailing bytes after the last layer")
    try:
        return FilterBank(tuple(layers), style)
    except ValueError as e:
        raise FormatError(f"{path}: {e}") from None


def load_image(path) -> Image:
    """Decode an 8-bit grayscale or RGB PNG into reals in ``[0, 1]``.

    Alpha and palette images are converted to RGB; other modes (16-bit,
    float, 1-bit) raise :class:`FormatError`.
    """
    try:
        with PILImage.open(path) as im:
            im.load()
            mode, fmt = im.mode, im.format
            if fmt != "PNG":
                raise FormatError(f"{path}: not a PNG file ({fmt})")
            if mode in ("L", "RGB"):
                arr = np.asarray(im)
            elif mode in ("RGBA", "LA", "P", "PA"):
                arr = np.asarray(im.convert("RGB" if mode != "LA" else "L"))
            else:
                raise FormatError(f"{path}: unsupported PNG mode {mode!r}; only 8-bit grayscale or RGB")
    except OSError as e:
        raise FormatError(f"{path}: cannot decode image: {e}") from None
    if arr.dtype != np.uint8:
        raise FormatError(f"{path}: unsupported bit depth ({arr.dtype})")
    return Image(arr.astype(np.float64) / 255.0)


def save_image(path, image: Image) -> None:
    """Write an image as an 8-bit PNG, clipping to ``[0, 1]``."""
    px = np.clip(image.pixels, 0.0, 1.0)
    q = np.round(px * 255.0).astype(np.uint8)
    PILImage.fromarray(q[:, :, 0] if q.shape[2] == 1 else q).save(path, format="PNG")
