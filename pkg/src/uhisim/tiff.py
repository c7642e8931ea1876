"""Classic TIFF / GeoTIFF subset: reader and float32 writer.

Supported on read: little- or big-endian classic TIFF (magic 42), striped or
tiled layout, no compression or Deflate (codes 8 and 32946), sample types
uint8 / uint16 / int16 / float32, 1..8 interleaved samples per pixel,
georeferencing from ModelPixelScaleTag + ModelTiepointTag, nodata from the
GDAL_NODATA ASCII tag. Everything else raises UnsupportedFormat or
CorruptFile. Written files are little-endian, uncompressed, striped float32.
"""

from __future__ import annotations

import struct
import warnings
import zlib
from pathlib import Path

import numpy as np

from .errors import CorruptFile, UnsupportedFormat
from .raster import BandStack, GeoRef, Grid

TAG_WIDTH = 256
TAG_HEIGHT = 257
TAG_BITS = 258
TAG_COMPRESSION = 259
TAG_PHOTOMETRIC = 262
TAG_STRIP_OFFSETS = 273
TAG_SAMPLES_PER_PIXEL = 277
TAG_ROWS_PER_STRIP = 278
TAG_STRIP_BYTE_COUNTS = 279
TAG_PLANAR_CONFIG = 284
TAG_PREDICTOR = 317
TAG_TILE_WIDTH = 322
TAG_TILE_LENGTH = 323
TAG_TILE_OFFSETS = 324
TAG_TILE_BYTE_COUNTS = 325
TAG_SAMPLE_FORMAT = 339
TAG_MODEL_PIXEL_SCALE = 33550
TAG_MODEL_TIEPOINT = 33922
TAG_GEO_KEY_DIRECTORY = 34735
TAG_GEO_ASCII_PARAMS = 34737
TAG_GDAL_NODATA = 42113

GEOKEY_MODEL_TYPE = 1024
GEOKEY_CITATION = 1026
GEOKEY_PROJECTED_CRS = 3072

COMPRESSION_NONE = 1
COMPRESSION_DEFLATE_ADOBE = 8
COMPRESSION_DEFLATE_LEGACY = 32946

# TIFF field type -> (struct letter, byte size)
FIELD_TYPES = {
    1: ("B", 1),   # BYTE
    2: ("c", 1),   # ASCII
    3: ("H", 2),   # SHORT
    4: ("L", 4),   # LONG
    5: ("LL", 8),  # RATIONAL
    6: ("b", 1),
    7: ("c", 1),
    8: ("h", 2),
    9: ("l", 4),
    10: ("ll", 8),
    11: ("f", 4),
    12: ("d", 8),
}


class GeoTagsMissing(UserWarning):
    """File had no usable georeferencing; a unit georef was substituted."""


def _read_entries(buf: bytes, order: str, ifd_offset: int) -> dict[int, list]:
    if ifd_offset + 2 > len(buf):
        raise CorruptFile("IFD offset beyond end of file")
    (n_entries,) = struct.unpack_from(order + "H", buf, ifd_offset)
    end = ifd_offset + 2 + 12 * n_entries + 4
    if end > len(buf):
        raise CorruptFile("IFD overruns end of file")
    entries: dict[int, list] = {}
    for i in range(n_entries):
        base = ifd_offset + 2 + 12 * i
        tag, ftype, count = struct.unpack_from(order + "HHL", buf, base)
        if ftype not in FIELD_TYPES:
            continue  # unknown field type: skip tag (TIFF 6.0 readers may)
        letter, size = FIELD_TYPES[ftype]
        total = size * count
        if total <= 4:
            raw = buf[base + 8 : base + 8 + total]
        else:
            (offset,) = struct.unpack_from(order + "L", buf, base + 8)
            if offset + total > len(buf):
                raise CorruptFile(f"tag {tag} value offset beyond end of file")
            raw = buf[offset : offset + total]
        if ftype in (2, 7):
            entries[tag] = [raw]
        elif ftype in (5, 10):
            parts = struct.unpack(order + letter[0] * (2 * count), raw)
            entries[tag] = [parts[2 * j] / parts[2 * j + 1] for j in range(count)]
        else:
            entries[tag] = list(struct.unpack(order + letter * count, raw))
    return entries


def _dtype_for(bits: int, sample_format: int, order: str) -> np.dtype:
    key = (bits, sample_format)
    mapping = {
        (8, 1): "u1",
        (16, 1): "u2",
        (16, 2): "i2",
        (32, 3): "f4",
    }
    if key not in mapping:
        raise UnsupportedFormat(
            f"unsupported sample type: {bits}-bit, sample format {sample_format}"
        )
    prefix = "<" if order == "<" else ">"
    return np.dtype(prefix + mapping[key])


def _decode_chunk(raw: bytes, compression: int, expected: int) -> bytes:
    if compression == COMPRESSION_NONE:
        data = raw
    elif compression in (COMPRESSION_DEFLATE_ADOBE, COMPRESSION_DEFLATE_LEGACY):
        try:
            data = zlib.decompress(raw)
        except zlib.error as exc:
            raise CorruptFile(f"bad Deflate stream: {exc}") from None
    else:
        raise UnsupportedFormat(f"unsupported compression code {compression}")
    if len(data) < expected:
        raise CorruptFile(
            f"chunk decoded to {len(data)} bytes, expected {expected}"
        )
    return data[:expected]


def read_tiff_arrays(path: str | Path):
    """Decode the first IFD into per-sample arrays.

    Returns (arrays, georef_or_none, nodata_or_none); arrays is a list of 2-D
    numpy arrays, one per sample.
    """
    buf = Path(path).read_bytes()
    if len(buf) < 8:
        raise CorruptFile("file shorter than TIFF header")
    if buf[:2] == b"II":
        order = "<"
    elif buf[:2] == b"MM":
        order = ">"
    else:
        raise CorruptFile(f"not a TIFF: byte-order mark {buf[:2]!r}")
    (magic,) = struct.unpack_from(order + "H", buf, 2)
    if magic == 43:
        raise UnsupportedFormat("BigTIFF (magic 43) is not supported")
    if magic != 42:
        raise CorruptFile(f"bad TIFF magic {magic}")
    (ifd_offset,) = struct.unpack_from(order + "L", buf, 4)
    tags = _read_entries(buf, order, ifd_offset)

    try:
        width = int(tags[TAG_WIDTH][0])
        height = int(tags[TAG_HEIGHT][0])
    except KeyError:
        raise CorruptFile("missing image dimensions") from None
    samples = int(tags.get(TAG_SAMPLES_PER_PIXEL, [1])[0])
    if not 1 <= samples <= 8:
        raise UnsupportedFormat(f"{samples} samples per pixel outside 1..8")
    planar = int(tags.get(TAG_PLANAR_CONFIG, [1])[0])
    if planar != 1:
        raise UnsupportedFormat("planar (non-interleaved) layout not supported")
    predictor = int(tags.get(TAG_PREDICTOR, [1])[0])
    if predictor != 1:
        raise UnsupportedFormat(f"predictor {predictor} not supported")
    bits = tags.get(TAG_BITS, [1])
    if len(set(bits)) > 1:
        raise UnsupportedFormat("mixed per-sample bit depths not supported")
    fmt = tags.get(TAG_SAMPLE_FORMAT, [1])
    dtype = _dtype_for(int(bits[0]), int(fmt[0]), order)
    compression = int(tags.get(TAG_COMPRESSION, [COMPRESSION_NONE])[0])

    pixel_bytes = dtype.itemsize * samples
    if TAG_TILE_OFFSETS in tags:
        data = _read_tiled(buf, tags, width, height, pixel_bytes, compression)
    elif TAG_STRIP_OFFSETS in tags:
        data = _read_striped(buf, tags, width, height, pixel_bytes, compression)
    else:
        raise CorruptFile("no strip or tile offsets present")

    flat = np.frombuffer(data, dtype=dtype, count=width * height * samples)
    cube = flat.reshape(height, width, samples)
    arrays = [np.ascontiguousarray(cube[:, :, s]) for s in range(samples)]

    georef = _parse_georef(tags)
    nodata = _parse_nodata(tags)
    return arrays, georef, nodata


def _read_striped(buf, tags, width, height, pixel_bytes, compression) -> bytes:
    offsets = [int(v) for v in tags[TAG_STRIP_OFFSETS]]
    counts = [int(v) for v in tags.get(TAG_STRIP_BYTE_COUNTS, [])]
    if len(counts) != len(offsets):
        raise CorruptFile("strip offset/byte-count table length mismatch")
    rows_per_strip = int(tags.get(TAG_ROWS_PER_STRIP, [height])[0])
    if rows_per_strip < 1:
        raise CorruptFile("RowsPerStrip < 1")
    expected_strips = (height + rows_per_strip - 1) // rows_per_strip
    if len(offsets) != expected_strips:
        raise CorruptFile(
            f"{len(offsets)} strips present, geometry implies {expected_strips}"
        )
    out = bytearray()
    for i, (off, cnt) in enumerate(zip(offsets, counts)):
        if off + cnt > len(buf):
            raise CorruptFile(f"strip {i} extends beyond end of file")
        rows = min(rows_per_strip, height - i * rows_per_strip)
        out += _decode_chunk(buf[off : off + cnt], compression, rows * width * pixel_bytes)
    return bytes(out)


def _read_tiled(buf, tags, width, height, pixel_bytes, compression) -> bytes:
    tile_w = int(tags.get(TAG_TILE_WIDTH, [0])[0])
    tile_h = int(tags.get(TAG_TILE_LENGTH, [0])[0])
    if tile_w < 1 or tile_h < 1:
        raise CorruptFile("bad tile dimensions")
    offsets = [int(v) for v in tags[TAG_TILE_OFFSETS]]
    counts = [int(v) for v in tags.get(TAG_TILE_BYTE_COUNTS, [])]
    if len(counts) != len(offsets):
        raise CorruptFile("tile offset/byte-count table length mismatch")
    across = (width + tile_w - 1) // tile_w
    down = (height + tile_h - 1) // tile_h
    if len(offsets) != across * down:
        raise CorruptFile(
            f"{len(offsets)} tiles present, geometry implies {across * down}"
        )
    row_bytes = width * pixel_bytes
    out = bytearray(height * row_bytes)
    for ti, (off, cnt) in enumerate(zip(offsets, counts)):
        if off + cnt > len(buf):
            raise CorruptFile(f"tile {ti} extends beyond end of file")
        tile = _decode_chunk(buf[off : off + cnt], compression,
                             tile_w * tile_h * pixel_bytes)
        ty, tx = divmod(ti, across)
        rows = min(tile_h, height - ty * tile_h)
        cols_bytes = min(tile_w, width - tx * tile_w) * pixel_bytes
        for r in range(rows):
            src = r * tile_w * pixel_bytes
            dst = (ty * tile_h + r) * row_bytes + tx * tile_w * pixel_bytes
            out[dst : dst + cols_bytes] = tile[src : src + cols_bytes]
    return bytes(out)


def _parse_georef(tags) -> GeoRef | None:
    scale = tags.get(TAG_MODEL_PIXEL_SCALE)
    tiepoint = tags.get(TAG_MODEL_TIEPOINT)
    if not scale or not tiepoint or len(scale) < 2 or len(tiepoint) < 6:
        return None
    # tiepoint maps raster (i, j) to model (x, y); anchored at the corner
    i, j = tiepoint[0], tiepoint[1]
    x, y = tiepoint[3], tiepoint[4]
    origin_x = x - i * scale[0]
    origin_y = y + j * scale[1]
    crs_id = _parse_crs(tags)
    return GeoRef(origin_x, origin_y, float(scale[0]), float(scale[1]), crs_id)


def _parse_crs(tags) -> str:
    directory = tags.get(TAG_GEO_KEY_DIRECTORY)
    if not directory or len(directory) < 4:
        return "local"
    n_keys = int(directory[3])
    ascii_params = b""
    if TAG_GEO_ASCII_PARAMS in tags:
        ascii_params = tags[TAG_GEO_ASCII_PARAMS][0]
    citation = None
    for k in range(n_keys):
        base = 4 + 4 * k
        if base + 4 > len(directory):
            break
        key_id, location, count, value = (int(v) for v in directory[base : base + 4])
        if key_id == GEOKEY_PROJECTED_CRS and location == 0:
            return f"EPSG:{value}"
        if key_id == GEOKEY_CITATION and location == TAG_GEO_ASCII_PARAMS:
            raw = ascii_params[value : value + count]
            citation = raw.decode("ascii", "replace").rstrip("|\x00")
    return citation or "local"


def _parse_nodata(tags) -> float | None:
    raw = tags.get(TAG_GDAL_NODATA)
    if not raw:
        return None
    text = raw[0].split(b"\x00", 1)[0].decode("ascii", "replace").strip()
    try:
        return float(text)
    except ValueError:
        return None


def read_geotiff(path: str | Path, roles, units) -> BandStack:
    """Read a file into a BandStack with caller-assigned roles and units.

    roles is one role string per sample; units likewise (a single string is
    broadcast). Missing geo tags fall back to a unit georef with a
    GeoTagsMissing warning.
    """
    arrays, georef, nodata = read_tiff_arrays(path)
    if isinstance(roles, str):
        roles = [roles]
    if len(roles) != len(arrays):
        raise ValueError(
            f"{len(roles)} roles given for {len(arrays)} samples in {path}"
        )
    if isinstance(units, str):
        units = [units] * len(arrays)
    if georef is None:
        warnings.warn(f"{path}: no georeferencing tags, using unit georef",
                      GeoTagsMissing, stacklevel=2)
        georef = GeoRef(0.0, 0.0, 1.0, 1.0, "local")
    bands = []
    for role, unit, arr in zip(roles, units, arrays):
        values = arr.astype(np.float64)
        if nodata is None:
            mask = ~np.isfinite(values)
        elif np.isnan(nodata):
            mask = np.isnan(values)
        else:
            mask = (values == nodata) | ~np.isfinite(values)
        values = np.where(mask, 0.0, values)
        bands.append((role, Grid(values, georef, unit, mask)))
    return BandStack(bands)


# ---------------------------------------------------------------------------
# writer


class _IfdBuilder:
    def __init__(self):
        self.entries = []   # (tag, ftype, count, inline_bytes or overflow bytes)

    def add(self, tag: int, ftype: int, values) -> None:
        letter, size = FIELD_TYPES[ftype]
        if ftype == 2:
            payload = values if isinstance(values, bytes) else values.encode("ascii")
            if not payload.endswith(b"\x00"):
                payload += b"\x00"
            count = len(payload)
        else:
            payload = struct.pack("<" + letter * len(values), *values)
            count = len(values)
        self.entries.append((tag, ftype, count, payload))

    def render(self, ifd_offset: int) -> bytes:
        self.entries.sort(key=lambda e: e[0])
        n = len(self.entries)
        overflow_offset = ifd_offset + 2 + 12 * n + 4
        head = struct.pack("<H", n)
        body = b""
        tail = b""
        for tag, ftype, count, payload in self.entries:
            head_entry = struct.pack("<HHL", tag, ftype, count)
            if len(payload) <= 4:
                head_entry += payload.ljust(4, b"\x00")
            else:
                head_entry += struct.pack("<L", overflow_offset + len(tail))
                tail += payload
                if len(tail) % 2:
                    tail += b"\x00"  # keep word alignment
            body += head_entry
        return head + body + struct.pack("<L", 0) + tail


def write_geotiff(obj: Grid | BandStack, path: str | Path) -> None:
    """Write a grid or stack as uncompressed striped little-endian float32.

    Masked pixels are stored as NaN and declared via the GDAL_NODATA tag.
    """
    if isinstance(obj, Grid):
        grids = [obj]
    else:
        grids = [g for _, g in obj.bands]
    height, width = grids[0].shape
    georef = grids[0].georef
    samples = len(grids)

    cube = np.empty((height, width, samples), dtype="<f4")
    any_mask = False
    for s, grid in enumerate(grids):
        vals = grid.values.astype("<f4")
        if grid.nodata_mask.any():
            any_mask = True
            vals = np.where(grid.nodata_mask, np.float32("nan"), vals)
        cube[:, :, s] = vals
    data = cube.tobytes()

    ifd = _IfdBuilder()
    ifd.add(TAG_WIDTH, 4, [width])
    ifd.add(TAG_HEIGHT, 4, [height])
    ifd.add(TAG_BITS, 3, [32] * samples)
    ifd.add(TAG_COMPRESSION, 3, [COMPRESSION_NONE])
    ifd.add(TAG_PHOTOMETRIC, 3, [1])
    ifd.add(TAG_STRIP_OFFSETS, 4, [8])
    ifd.add(TAG_SAMPLES_PER_PIXEL, 3, [samples])
    ifd.add(TAG_ROWS_PER_STRIP, 4, [height])
    ifd.add(TAG_STRIP_BYTE_COUNTS, 4, [len(data)])
    ifd.add(TAG_PLANAR_CONFIG, 3, [1])
    ifd.add(TAG_SAMPLE_FORMAT, 3, [3] * samples)
    ifd.add(TAG_MODEL_PIXEL_SCALE, 12, [georef.pixel_w, georef.pixel_h, 0.0])
    ifd.add(TAG_MODEL_TIEPOINT, 12,
            [0.0, 0.0, 0.0, georef.origin_x, georef.origin_y, 0.0])
    _add_crs_tags(ifd, georef.crs_id)
    if any_mask:
        ifd.add(TAG_GDAL_NODATA, 2, "nan")

    ifd_offset = 8 + len(data)
    header = struct.pack("<2sHL", b"II", 42, ifd_offset)
    payload = header + data + ifd.render(ifd_offset)
    Path(path).write_bytes(payload)


def _add_crs_tags(ifd: _IfdBuilder, crs_id: str) -> None:
    keys = [(GEOKEY_MODEL_TYPE, 0, 1, 1)]
    ascii_params = None
    if crs_id.upper().startswith("EPSG:") and crs_id[5:].isdigit():
        keys.append((GEOKEY_PROJECTED_CRS, 0, 1, int(crs_id[5:])))
    else:
        ascii_params = crs_id + "|"
        keys.append((GEOKEY_CITATION, TAG_GEO_ASCII_PARAMS, len(ascii_params), 0))
    directory = [1, 1, 0, len(keys)]
    for key in sorted(keys):
        directory.extend(key)
    ifd.add(TAG_GEO_KEY_DIRECTORY, 3, directory)
    if ascii_params is not None:
        ifd.add(TAG_GEO_ASCII_PARAMS, 2, ascii_params)
