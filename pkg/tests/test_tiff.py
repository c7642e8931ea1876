import struct
import zlib

import numpy as np
import pytest

from uhisim.errors import CorruptFile, UnsupportedFormat
from uhisim.raster import BandStack, GeoRef, Grid
from uhisim.tiff import GeoTagsMissing, read_geotiff, read_tiff_arrays, write_geotiff


def _render_ifd(entries, byteorder="<"):
    entries = sorted(entries)
    ifd = struct.pack(byteorder + "H", len(entries))
    for tag, ftype, count, value in entries:
        ifd += struct.pack(byteorder + "HHL", tag, ftype, count)
        if ftype == 3:
            ifd += struct.pack(byteorder + "HH", value, 0)
        else:
            ifd += struct.pack(byteorder + "L", value)
    return ifd + struct.pack(byteorder + "L", 0)  # no next IFD


def build_fixture_tiff(compression=1, byteorder="<"):
    """2x2 float32 [[1.5, 2.5], [3.5, 4.5]], assembled tag by tag.

    Layout: 8-byte header, pixel data at offset 8, IFD after the data.
    """
    pixels = struct.pack(byteorder + "4f", 1.5, 2.5, 3.5, 4.5)
    data = zlib.compress(pixels) if compression == 8 else pixels
    entries = [
        (256, 4, 1, 2),            # ImageWidth
        (257, 4, 1, 2),            # ImageLength
        (258, 3, 1, 32),           # BitsPerSample
        (259, 3, 1, compression),  # Compression
        (262, 3, 1, 1),            # Photometric: BlackIsZero
        (273, 4, 1, 8),            # StripOffsets
        (277, 3, 1, 1),            # SamplesPerPixel
        (278, 4, 1, 2),            # RowsPerStrip
        (279, 4, 1, len(data)),    # StripByteCounts
        (339, 3, 1, 3),            # SampleFormat: IEEE float
    ]
    header = struct.pack(byteorder + "2sHL",
                         b"II" if byteorder == "<" else b"MM", 42, 8 + len(data))
    return header + data + _render_ifd(entries, byteorder)


def tiled_fixture_tiff():
    """2x2 image stored in one padded 16x16 tile."""
    tile = np.zeros((16, 16), dtype="<f4")
    tile[0, 0], tile[0, 1], tile[1, 0], tile[1, 1] = 1.5, 2.5, 3.5, 4.5
    data = tile.tobytes()
    entries = [
        (256, 4, 1, 2), (257, 4, 1, 2), (258, 3, 1, 32), (259, 3, 1, 1),
        (262, 3, 1, 1), (277, 3, 1, 1), (339, 3, 1, 3),
        (322, 3, 1, 16), (323, 3, 1, 16),
        (324, 4, 1, 8), (325, 4, 1, len(data)),
    ]
    return struct.pack("<2sHL", b"II", 42, 8 + len(data)) + data + _render_ifd(entries)


EXPECTED = np.array([[1.5, 2.5], [3.5, 4.5]])


class TestFixtureDecode:
    def test_hand_built_fixture_decodes(self, tmp_path):
        path = tmp_path / "fx.tif"
        path.write_bytes(build_fixture_tiff())
        arrays, georef, nodata = read_tiff_arrays(path)
        assert len(arrays) == 1 and georef is None and nodata is None
        assert np.array_equal(arrays[0], EXPECTED)

    def test_big_endian_fixture_decodes(self, tmp_path):
        path = tmp_path / "fx_be.tif"
        path.write_bytes(build_fixture_tiff(byteorder=">"))
        arrays, _, _ = read_tiff_arrays(path)
        assert np.array_equal(arrays[0], EXPECTED)

    def test_independent_reader_agrees(self, tmp_path):
        PIL = pytest.importorskip("PIL.Image")
        path = tmp_path / "fx.tif"
        path.write_bytes(build_fixture_tiff())
        with PIL.open(path) as img:
            theirs = np.array(img)
        ours = read_tiff_arrays(path)[0][0]
        assert np.array_equal(ours, theirs)

    def test_deflate_strip_matches_uncompressed(self, tmp_path):
        plain = tmp_path / "plain.tif"
        packed = tmp_path / "deflate.tif"
        plain.write_bytes(build_fixture_tiff(compression=1))
        packed.write_bytes(build_fixture_tiff(compression=8))
        a = read_tiff_arrays(plain)[0][0]
        b = read_tiff_arrays(packed)[0][0]
        assert np.array_equal(a, b)

    def test_tiled_layout_with_padding(self, tmp_path):
        path = tmp_path / "tiled.tif"
        path.write_bytes(tiled_fixture_tiff())
        arrays, _, _ = read_tiff_arrays(path)
        assert np.array_equal(arrays[0], EXPECTED)

    def test_magic_contract(self, tmp_path):
        good = tmp_path / "good.tif"
        good.write_bytes(build_fixture_tiff())
        read_tiff_arrays(good)  # magic 42 accepted

        bigtiff = tmp_path / "big.tif"
        payload = bytearray(build_fixture_tiff())
        struct.pack_into("<H", payload, 2, 43)
        bigtiff.write_bytes(bytes(payload))
        with pytest.raises(UnsupportedFormat, match="BigTIFF"):
            read_tiff_arrays(bigtiff)

    def test_not_a_tiff(self, tmp_path):
        path = tmp_path / "nope.tif"
        path.write_bytes(b"PK\x03\x04 not a tiff at all")
        with pytest.raises(CorruptFile):
            read_tiff_arrays(path)

    def test_ifd_offset_out_of_bounds(self, tmp_path):
        payload = bytearray(build_fixture_tiff())
        struct.pack_into("<L", payload, 4, len(payload) + 100)
        path = tmp_path / "bad_ifd.tif"
        path.write_bytes(bytes(payload))
        with pytest.raises(CorruptFile):
            read_tiff_arrays(path)

    def test_strip_overrun_detected(self, tmp_path):
        raw = build_fixture_tiff()
        path = tmp_path / "short.tif"
        path.write_bytes(raw[:10])  # truncate inside the pixel data
        with pytest.raises(CorruptFile):
            read_tiff_arrays(path)

    def test_unsupported_compression(self, tmp_path):
        path = tmp_path / "lzw.tif"
        path.write_bytes(build_fixture_tiff(compression=5))
        with pytest.raises(UnsupportedFormat, match="compression"):
            read_tiff_arrays(path)

    def test_missing_geo_tags_warns_and_unit_georef(self, tmp_path):
        path = tmp_path / "fx.tif"
        path.write_bytes(build_fixture_tiff())
        with pytest.warns(GeoTagsMissing):
            stack = read_geotiff(path, ["lst"], "celsius")
        assert stack.georef == GeoRef(0.0, 0.0, 1.0, 1.0, "local")


class TestRoundTrip:
    def test_value_exact_round_trip(self, tmp_path, georef):
        rng = np.random.default_rng(4)
        values = rng.standard_normal((9, 7)).astype(np.float32).astype(np.float64)
        grid = Grid(values, georef, "celsius")
        path = tmp_path / "rt.tif"
        write_geotiff(grid, path)
        back = read_geotiff(path, ["lst"], "celsius").band("lst")
        assert np.array_equal(back.values, values)
        assert back.georef == georef

    def test_nodata_survives_round_trip(self, tmp_path, georef):
        values = np.array([[1.0, 2.0], [3.0, 4.0]])
        mask = np.array([[False, True], [False, False]])
        grid = Grid(values, georef, "celsius", mask)
        path = tmp_path / "nd.tif"
        write_geotiff(grid, path)
        back = read_geotiff(path, ["lst"], "celsius").band("lst")
        assert np.array_equal(back.nodata_mask, mask)
        assert np.array_equal(back.values[~mask], values[~mask])

    def test_multiband_round_trip(self, tmp_path, georef):
        rng = np.random.default_rng(5)
        bands = []
        for role in ("red", "nir", "swir1"):
            vals = rng.random((6, 5)).astype(np.float32).astype(np.float64)
            bands.append((role, Grid(vals, georef, "reflectance")))
        stack = BandStack(bands)
        path = tmp_path / "mb.tif"
        write_geotiff(stack, path)
        back = read_geotiff(path, ["red", "nir", "swir1"], "reflectance")
        assert back == stack

    def test_crs_round_trip_epsg_and_citation(self, tmp_path):
        for crs in ("EPSG:32635", "custom-grid-7"):
            georef = GeoRef(10.0, 20.0, 30.0, 30.0, crs)
            grid = Grid(np.ones((2, 2)), georef, "celsius")
            path = tmp_path / f"{crs.replace(':', '_')}.tif"
            write_geotiff(grid, path)
            back = read_geotiff(path, ["lst"], "celsius")
            assert back.georef.crs_id == crs

    def test_independent_reader_reads_our_output(self, tmp_path, georef):
        PIL = pytest.importorskip("PIL.Image")
        values = np.arange(12, dtype=np.float64).reshape(3, 4)
        write_geotiff(Grid(values, georef, "celsius"), tmp_path / "ours.tif")
        with PIL.open(tmp_path / "ours.tif") as img:
            theirs = np.array(img)
        assert np.array_equal(theirs, values.astype(np.float32))

    def test_randomized_round_trips_bit_exact(self, tmp_path):
        rng = np.random.default_rng(99)
        for i in range(20):
            h = int(rng.integers(1, 68))
            w = int(rng.integers(1, 54))
            values = rng.standard_normal((h, w)).astype(np.float32).astype(np.float64)
            mask = rng.random((h, w)) < 0.15
            georef = GeoRef(float(rng.uniform(-1e6, 1e6)),
                            float(rng.uniform(-1e6, 1e6)),
                            float(rng.uniform(0.1, 100.0)),
                            float(rng.uniform(0.1, 100.0)), "EPSG:32635")
            grid = Grid(np.where(mask, 0.0, values), georef, "celsius", mask)
            path = tmp_path / f"r{i}.tif"
            write_geotiff(grid, path)
            back = read_geotiff(path, ["lst"], "celsius").band("lst")
            assert np.array_equal(back.nodata_mask, mask)
            assert np.array_equal(
                back.values[~mask].astype(np.float32),
                grid.values[~mask].astype(np.float32))
