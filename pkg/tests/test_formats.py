"""Readers and writers for the three supported container formats."""

from __future__ import annotations

import gzip
import io
import json
import struct
from fractions import Fraction

import numpy as np
import pytest
from PIL import Image

import helpers
from mist.errors import (
    Excluded,
    ExclusionReason,
    MixedSeries,
    NothingIngestable,
)
from mist.formats import (
    DecodedSeries,
    FormatKind,
    MetadataDocument,
    derive_uid,
    parse_dicom,
    read_dicom_series,
    read_nifti,
    read_raster,
    write_dicom_slice,
    write_nifti_bytes,
    write_png_bytes,
    write_series_payloads,
)
from mist.codec import PixelPlane


def write_files(tmp_path, blobs, suffix=".dcm"):
    tmp_path.mkdir(parents=True, exist_ok=True)
    paths = []
    for k, blob in enumerate(blobs):
        path = tmp_path / f"{k:03d}{suffix}"
        path.write_bytes(blob)
        paths.append(path)
    return paths


def ct_volume(rng, num_slices=4, rows=16, cols=20):
    return rng.integers(-1000, 2000, size=(num_slices, rows, cols), dtype=np.int16)


class TestDicomParsing:
    def test_explicit_and_implicit_agree(self, rng):
        pixels = ct_volume(rng, num_slices=1)[0]
        explicit = helpers.ct_slice(pixels, transfer_syntax=helpers.EXPLICIT_LE)
        implicit = helpers.ct_slice(pixels, transfer_syntax=helpers.IMPLICIT_LE)
        a = parse_dicom(explicit)
        b = parse_dicom(implicit)
        assert a.elements.keys() == b.elements.keys()
        for key in a.elements:
            assert a.get(key) == pytest.approx(b.get(key))
        assert a.pixel_bytes == b.pixel_bytes

    def test_sequences_are_skipped(self, rng):
        pixels = ct_volume(rng, num_slices=1)[0]
        item = struct.pack("<HHI", 0xFFFE, 0xE000, 8) + b"\x00" * 8
        defined_sq = helpers.el_explicit(0x0008, 0x1140, "SQ", item)
        undefined_items = (
            struct.pack("<HHI", 0xFFFE, 0xE000, 0xFFFFFFFF)
            + helpers.el_explicit(0x0008, 0x0100, "SH", b"CODE")
            + struct.pack("<HHI", 0xFFFE, 0xE00D, 0)
            + struct.pack("<HHI", 0xFFFE, 0xE0DD, 0)
        )
        undefined_sq = (
            struct.pack("<HH", 0x0008, 0x9215)
            + b"SQ\x00\x00"
            + struct.pack("<I", 0xFFFFFFFF)
            + undefined_items
        )
        blob = helpers.ct_slice(pixels, extra=[defined_sq, undefined_sq])
        parsed = parse_dicom(blob)
        assert (0x0008, 0x1140) not in parsed.elements
        assert (0x0008, 0x9215) not in parsed.elements
        assert (0x7FE0, 0x0010) in parsed.elements

    def test_missing_magic_rejected(self):
        with pytest.raises(Excluded) as err:
            parse_dicom(b"\x00" * 128 + b"JUNK" + b"\x00" * 64)
        assert err.value.reason is ExclusionReason.UNSUPPORTED_TYPE

    def test_truncated_element_rejected(self, rng):
        pixels = ct_volume(rng, num_slices=1)[0]
        blob = helpers.ct_slice(pixels)
        with pytest.raises(Excluded):
            parse_dicom(blob[: len(blob) - 7])


class TestDicomSeries:
    def test_round_trip_signal_and_tags(self, rng, tmp_path):
        volume = ct_volume(rng, num_slices=5, rows=16, cols=20)
        blobs = [
            helpers.ct_slice(
                volume[k],
                instance=k + 1,
                position=(-95.0, -120.0, 40.0 + 2.0 * k),
                spacing=(0.7, 0.6),
                thickness=2.0,
            )
            for k in range(5)
        ]
        series, exclusions = read_dicom_series(write_files(tmp_path, blobs))
        assert exclusions == []
        assert series.metadata.format is FormatKind.DICOM
        tags = series.metadata.tags
        assert tags["rows"] == 16 and tags["cols"] == 20
        assert tags["num_slices"] == 5
        assert tags["pixel_spacing_row"] == 0.7
        assert tags["pixel_spacing_col"] == 0.6
        assert tags["slice_thickness"] == 2.0
        assert tags["modality"] == "CT"
        # The stored-sample fold keeps the mapping exact: the canonical
        # intercept describes stored samples, so original signal still matches.
        assert tags["rescale_slope"] == 1.0
        assert tags["rescale_intercept"] == series.planes[0].rescale_intercept
        signal = np.stack([p.signal() for p in series.planes])
        assert np.array_equal(signal, volume.astype(np.int64) - 1024)

    def test_slices_sorted_by_normal_projection(self, rng, tmp_path):
        volume = ct_volume(rng, num_slices=6)
        rot = helpers.random_rotation(rng)
        row_dir, col_dir = rot[:, 0], rot[:, 1]
        normal = np.cross(row_dir, col_dir)
        order = rng.permutation(6)
        blobs = [
            helpers.ct_slice(
                volume[k],
                instance=int(kent + 1),
                position=tuple(10.0 + 1.5 * k * normal),
                orientation=tuple(np.round(np.concatenate([row_dir, col_dir]), 8)),
            )
            for kent, k in enumerate(order)
        ]
        series, exclusions = read_dicom_series(write_files(tmp_path, blobs))
        assert exclusions == []
        stacked = np.stack([p.signal() for p in series.planes])
        expected = volume.astype(np.int64) - 1024
        assert np.array_equal(stacked, expected)

    def test_geometry_oracle_random_orientation(self, rng, tmp_path):
        volume = ct_volume(rng, num_slices=4, rows=12, cols=18)
        rot = helpers.random_rotation(rng)
        row_dir, col_dir = np.round(rot[:, 0], 8), np.round(rot[:, 1], 8)
        normal = np.cross(row_dir, col_dir)
        origin = np.array([-40.0, 25.0, -10.0])
        step = 3.25
        sp_row, sp_col = 0.5, 0.8
        blobs = [
            helpers.ct_slice(
                volume[k],
                instance=k + 1,
                position=tuple(origin + step * k * normal),
                orientation=tuple(np.concatenate([row_dir, col_dir])),
                spacing=(sp_row, sp_col),
            )
            for k in range(4)
        ]
        series, _ = read_dicom_series(write_files(tmp_path, blobs))
        affine = series.metadata.affine
        for _ in range(25):
            i = int(rng.integers(0, 18))
            j = int(rng.integers(0, 12))
            k = int(rng.integers(0, 4))
            world = affine @ np.array([i, j, k, 1.0])
            expected = (
                origin + step * k * normal + i * sp_col * row_dir + j * sp_row * col_dir
            )
            assert np.allclose(world[:3], expected, atol=1e-6)

    def test_series_level_shift_folds_signed_range(self, rng, tmp_path):
        volume = ct_volume(rng, num_slices=3)
        volume[0, 0, 0] = -1000
        blobs = [
            helpers.ct_slice(volume[k], instance=k + 1, position=(0, 0, 2.0 * k))
            for k in range(3)
        ]
        series, _ = read_dicom_series(write_files(tmp_path, blobs))
        for k, plane in enumerate(series.planes):
            assert plane.samples.dtype == np.uint16
            recon = plane.signal()
            assert np.array_equal(recon, volume[k].astype(np.int64) - 1024)

    def test_no_pixel_data_excluded(self, rng, tmp_path):
        good = ct_volume(rng, num_slices=2)
        blobs = [
            helpers.ct_slice(good[0], instance=1, position=(0, 0, 0)),
            helpers.ct_slice(good[1], instance=2, position=(0, 0, 2)),
        ]
        no_pixels = helpers.part10(
            helpers.el_explicit(0x0008, 0x0060, "CS", b"CT")
            + helpers.el_explicit(0x0020, 0x000E, "UI", b"1.2.826.0.1.100.1\x00")
        )
        paths = write_files(tmp_path, blobs + [no_pixels])
        series, exclusions = read_dicom_series(paths)
        assert series.num_slices == 2
        assert len(exclusions) == 1
        assert exclusions[0][1] == ExclusionReason.NO_PIXEL_DATA

    def test_float_pixel_data_excluded(self, rng, tmp_path):
        floats = np.linspace(0, 1, 64, dtype=np.float32).tobytes()
        blob = helpers.part10(
            helpers.el_explicit(0x0020, 0x000E, "UI", b"1.2.826.0.1.100.1\x00")
            + helpers.el_explicit(0x0028, 0x0010, "US", struct.pack("<H", 8))
            + helpers.el_explicit(0x0028, 0x0011, "US", struct.pack("<H", 8))
            + helpers.el_explicit(0x7FE0, 0x0008, "OF", floats)
        )
        good = helpers.ct_slice(ct_volume(rng, num_slices=1)[0])
        paths = write_files(tmp_path, [good, blob])
        series, exclusions = read_dicom_series(paths)
        assert series.num_slices == 1
        assert exclusions[0][1] == ExclusionReason.UNSUPPORTED_TYPE

    def test_full_signed_range_survives(self, tmp_path):
        pixels = np.array([[-32768, 32767], [0, 1]], dtype=np.int16)
        blob = helpers.ct_slice(pixels, intercept="0")
        series, exclusions = read_dicom_series(write_files(tmp_path, [blob]))
        assert exclusions == []
        plane = series.planes[0]
        assert plane.bit_depth == 16
        assert np.array_equal(plane.signal(), pixels.astype(np.int64))

    def test_32bit_allocation_excluded(self, rng, tmp_path):
        deep = helpers.part10(
            helpers.el_explicit(0x0020, 0x000E, "UI", b"1.2.826.0.1.100.1\x00")
            + helpers.el_explicit(0x0028, 0x0010, "US", struct.pack("<H", 2))
            + helpers.el_explicit(0x0028, 0x0011, "US", struct.pack("<H", 2))
            + helpers.el_explicit(0x0028, 0x0100, "US", struct.pack("<H", 32))
            + helpers.el_explicit(0x7FE0, 0x0010, "OW", b"\x00" * 16)
        )
        good = helpers.ct_slice(ct_volume(rng, num_slices=1)[0])
        series, exclusions = read_dicom_series(write_files(tmp_path, [good, deep]))
        assert series.num_slices == 1
        assert exclusions[0][1] == ExclusionReason.UNSUPPORTED_DEPTH

    def test_color_excluded(self, rng, tmp_path):
        rgb = helpers.part10(
            helpers.el_explicit(0x0020, 0x000E, "UI", b"1.2.826.0.1.100.1\x00")
            + helpers.el_explicit(0x0028, 0x0002, "US", struct.pack("<H", 3))
            + helpers.el_explicit(0x0028, 0x0004, "CS", b"RGB ")
            + helpers.el_explicit(0x0028, 0x0010, "US", struct.pack("<H", 2))
            + helpers.el_explicit(0x0028, 0x0011, "US", struct.pack("<H", 2))
            + helpers.el_explicit(0x0028, 0x0100, "US", struct.pack("<H", 8))
            + helpers.el_explicit(0x7FE0, 0x0010, "OW", b"\x00" * 12)
        )
        good = helpers.ct_slice(ct_volume(rng, num_slices=1)[0])
        series, exclusions = read_dicom_series(write_files(tmp_path, [good, rgb]))
        assert series.num_slices == 1
        assert exclusions[0][1] == ExclusionReason.UNSUPPORTED_TYPE

    def test_mixed_series_uid_rejected(self, rng, tmp_path):
        volume = ct_volume(rng, num_slices=2)
        blobs = [
            helpers.ct_slice(volume[0], series_uid="1.2.826.0.1.100.1", instance=1),
            helpers.ct_slice(volume[1], series_uid="1.2.826.0.1.100.2", instance=2),
        ]
        with pytest.raises(MixedSeries):
            read_dicom_series(write_files(tmp_path, blobs))

    def test_mixed_dims_rejected(self, rng, tmp_path):
        blobs = [
            helpers.ct_slice(ct_volume(rng, 1, 16, 20)[0], instance=1),
            helpers.ct_slice(ct_volume(rng, 1, 16, 24)[0], instance=2),
        ]
        with pytest.raises(MixedSeries):
            read_dicom_series(write_files(tmp_path, blobs))

    def test_all_files_excluded_raises(self, tmp_path):
        blob = helpers.part10(helpers.el_explicit(0x0008, 0x0060, "CS", b"CT"))
        with pytest.raises(NothingIngestable) as err:
            read_dicom_series(write_files(tmp_path, [blob]))
        assert len(err.value.exclusions) == 1

    def test_passthrough_tags_survive(self, rng, tmp_path):
        pixels = ct_volume(rng, num_slices=1)[0]
        extra = [
            helpers.el_explicit(0x0008, 0x0070, "LO", b"Acme Scanner"),
            helpers.el_explicit(0x0018, 0x0060, "DS", b"120 "),
        ]
        blob = helpers.ct_slice(pixels, extra=extra)
        series, _ = read_dicom_series(write_files(tmp_path, [blob]))
        bag = series.metadata.tags["source_tags"]
        assert bag["0008,0070"] == {"vr": "LO", "value": "Acme Scanner"}
        assert bag["0018,0060"] == {"vr": "DS", "value": 120.0}


class TestDicomWriter:
    def test_write_read_fixpoint(self, rng, tmp_path):
        volume = ct_volume(rng, num_slices=4, rows=16, cols=20)
        blobs = [
            helpers.ct_slice(
                volume[k],
                instance=k + 1,
                position=(-95.0, -120.0, 40.0 + 2.5 * k),
                spacing=(0.7, 0.6),
            )
            for k in range(4)
        ]
        first, _ = read_dicom_series(write_files(tmp_path, blobs))
        rewritten = [write_dicom_slice(first, k) for k in range(4)]
        second, exclusions = read_dicom_series(
            write_files(tmp_path / "gen2", rewritten)
        )
        assert exclusions == []
        for a, b in zip(first.planes, second.planes):
            assert a.equals(b)
        assert np.allclose(first.metadata.affine, second.metadata.affine, atol=1e-9)
        assert first.metadata.tags == second.metadata.tags

    def test_derive_uid_stable_and_valid(self):
        uid = derive_uid("series/0/slice/3")
        assert uid == derive_uid("series/0/slice/3")
        assert uid != derive_uid("series/0/slice/4")
        assert uid.startswith("2.25.")
        assert len(uid) <= 64
        assert all(part.isdigit() for part in uid.split("."))


class TestNifti:
    def test_round_trip_both_byte_orders(self, rng, tmp_path):
        volume = rng.integers(0, 3000, size=(3, 10, 14), dtype=np.int16)
        affine = np.array(
            [
                [0.0, -1.2, 0.0, 30.0],
                [1.1, 0.0, 0.0, -22.0],
                [0.0, 0.0, 2.5, 7.0],
                [0.0, 0.0, 0.0, 1.0],
            ]
        )
        for order, name in (("<", "le.nii"), (">", "be.nii")):
            path = tmp_path / name
            path.write_bytes(
                helpers.nifti_bytes(volume, datatype=4, affine=affine, byte_order=order)
            )
            series = read_nifti(path)
            assert series.metadata.format is FormatKind.NIFTI
            stacked = np.stack([p.samples for p in series.planes])
            assert np.array_equal(stacked, volume.astype(np.uint16))
            assert np.allclose(series.metadata.affine, affine, atol=1e-5)

    def test_gzip_container(self, rng, tmp_path):
        volume = rng.integers(0, 255, size=(2, 8, 8), dtype=np.int16)
        raw = helpers.nifti_bytes(volume, datatype=4)
        path = tmp_path / "vol.nii.gz"
        path.write_bytes(gzip.compress(raw))
        series = read_nifti(path)
        assert series.num_slices == 2
        assert series.metadata.tags["series_id"] == "vol"

    def test_quaternion_fallback(self, rng, tmp_path):
        volume = rng.integers(0, 100, size=(2, 6, 6), dtype=np.int16)
        # identity quaternion with offsets; qfac = 1
        blob = helpers.nifti_bytes(
            volume,
            datatype=4,
            qform=(0.0, 0.0, 0.0, 5.0, -3.0, 12.0, 1.0),
            pixdim=(0.9, 1.1, 2.0),
        )
        path = tmp_path / "q.nii"
        path.write_bytes(blob)
        series = read_nifti(path)
        affine = series.metadata.affine
        expected = np.array(
            [
                [0.9, 0.0, 0.0, 5.0],
                [0.0, 1.1, 0.0, -3.0],
                [0.0, 0.0, 2.0, 12.0],
                [0.0, 0.0, 0.0, 1.0],
            ]
        )
        assert np.allclose(affine, expected, atol=1e-6)

    def test_scl_scaling_folds_into_rescale(self, rng, tmp_path):
        volume = rng.integers(-200, 200, size=(2, 8, 8), dtype=np.int16)
        blob = helpers.nifti_bytes(volume, datatype=4, scl_slope=2.0, scl_inter=-500.0)
        path = tmp_path / "scl.nii"
        path.write_bytes(blob)
        series = read_nifti(path)
        plane = series.planes[0]
        assert plane.rescale_slope == Fraction(2)
        recon = plane.signal()
        expected = volume[0].astype(np.int64) * 2 - 500
        assert np.array_equal(recon, expected)

    def test_float_datatype_excluded(self, rng, tmp_path):
        volume = rng.normal(size=(2, 8, 8))
        path = tmp_path / "f.nii"
        path.write_bytes(helpers.nifti_bytes(volume, datatype=16))
        with pytest.raises(Excluded) as err:
            read_nifti(path)
        assert err.value.reason is ExclusionReason.UNSUPPORTED_TYPE

    def test_wide_int32_excluded(self, tmp_path):
        volume = np.zeros((1, 4, 4), dtype=np.int64)
        volume[0, 0, 0] = 70000
        path = tmp_path / "wide.nii"
        path.write_bytes(helpers.nifti_bytes(volume, datatype=8))
        with pytest.raises(Excluded) as err:
            read_nifti(path)
        assert err.value.reason is ExclusionReason.UNSUPPORTED_DEPTH

    def test_narrow_int32_accepted(self, tmp_path):
        volume = np.full((1, 4, 4), 40000, dtype=np.int64)
        volume[0, 0, 0] = 12
        path = tmp_path / "narrow.nii"
        path.write_bytes(helpers.nifti_bytes(volume, datatype=8))
        series = read_nifti(path)
        plane = series.planes[0]
        assert plane.rescale_intercept == 0
        assert np.array_equal(plane.signal(), volume[0])
        assert plane.bit_depth == 16

    def test_time_series_excluded(self, rng, tmp_path):
        volume = rng.integers(0, 10, size=(2, 4, 4), dtype=np.int16)
        path = tmp_path / "t.nii"
        path.write_bytes(helpers.nifti_bytes(volume, datatype=4, dim0=4, extra_dim=3))
        with pytest.raises(Excluded) as err:
            read_nifti(path)
        assert err.value.reason is ExclusionReason.UNSUPPORTED_TYPE

    def test_truncated_voxels_rejected(self, rng, tmp_path):
        volume = rng.integers(0, 10, size=(2, 8, 8), dtype=np.int16)
        blob = helpers.nifti_bytes(volume, datatype=4)
        path = tmp_path / "short.nii"
        path.write_bytes(blob[:-40])
        with pytest.raises(Excluded):
            read_nifti(path)

    def test_write_read_round_trip(self, rng, tmp_path):
        volume = rng.integers(-300, 5000, size=(3, 12, 10), dtype=np.int64)
        path = tmp_path / "src.nii"
        path.write_bytes(helpers.nifti_bytes(volume, datatype=8))
        first = read_nifti(path)
        out = tmp_path / "copy.nii"
        out.write_bytes(write_nifti_bytes(first))
        second = read_nifti(out)
        for a, b in zip(first.planes, second.planes):
            assert np.array_equal(a.signal(), b.signal())
        assert np.allclose(first.metadata.affine, second.metadata.affine, atol=1e-5)


class TestRaster:
    def test_png_8bit_round_trip(self, rng, tmp_path):
        samples = rng.integers(0, 256, size=(9, 13), dtype=np.uint8)
        path = tmp_path / "img.png"
        Image.fromarray(samples, mode="L").save(path)
        series = read_raster(path)
        assert series.metadata.format is FormatKind.RASTER
        assert series.planes[0].bit_depth == 8
        assert np.array_equal(series.planes[0].samples, samples)
        back = write_png_bytes(series.planes[0])
        reread = np.asarray(Image.open(io.BytesIO(back)))
        assert np.array_equal(reread, samples)

    def test_png_16bit_round_trip(self, rng, tmp_path):
        samples = rng.integers(0, 65536, size=(6, 5), dtype=np.uint16)
        path = tmp_path / "img16.png"
        Image.fromarray(samples).save(path)
        series = read_raster(path)
        assert series.planes[0].bit_depth == 16
        assert np.array_equal(series.planes[0].samples, samples)
        back = write_png_bytes(series.planes[0])
        reread = np.asarray(Image.open(io.BytesIO(back)), dtype=np.uint16)
        assert np.array_equal(reread, samples)

    def test_bilevel_accepted(self, tmp_path):
        samples = np.array([[0, 1, 1], [1, 0, 0]], dtype=bool)
        path = tmp_path / "mask.png"
        Image.fromarray(samples).save(path)
        series = read_raster(path)
        assert np.array_equal(series.planes[0].samples, samples.astype(np.uint16))

    def test_color_excluded(self, rng, tmp_path):
        samples = rng.integers(0, 256, size=(4, 4, 3), dtype=np.uint8)
        path = tmp_path / "rgb.png"
        Image.fromarray(samples, mode="RGB").save(path)
        with pytest.raises(Excluded) as err:
            read_raster(path)
        assert err.value.reason is ExclusionReason.UNSUPPORTED_TYPE

    def test_palette_excluded(self, rng, tmp_path):
        samples = rng.integers(0, 256, size=(4, 4), dtype=np.uint8)
        path = tmp_path / "pal.png"
        Image.fromarray(samples, mode="L").convert("P").save(path)
        with pytest.raises(Excluded):
            read_raster(path)

    def test_metadata_minimal(self, rng, tmp_path):
        samples = rng.integers(0, 256, size=(4, 4), dtype=np.uint8)
        path = tmp_path / "tiny.png"
        Image.fromarray(samples, mode="L").save(path)
        series = read_raster(path)
        tags = series.metadata.tags
        assert tags["series_id"] == "tiny"
        assert tags["rows"] == 4 and tags["cols"] == 4
        assert tags["num_slices"] == 1
        assert series.metadata.validate() == []


class TestSeriesWriters:
    def test_payload_names_per_format(self, rng, tmp_path):
        volume = ct_volume(rng, num_slices=2)
        blobs = [
            helpers.ct_slice(volume[k], instance=k + 1, position=(0, 0, 2.0 * k))
            for k in range(2)
        ]
        series, _ = read_dicom_series(write_files(tmp_path, blobs))
        dicom_payloads = write_series_payloads(series, FormatKind.DICOM)
        assert [name for name, _ in dicom_payloads] == ["00000.dcm", "00001.dcm"]

        nifti_series = DecodedSeries(
            metadata=MetadataDocument(
                format=FormatKind.NIFTI,
                tags={
                    "series_id": "ab/cd e",
                    "rows": 4,
                    "cols": 4,
                    "num_slices": 1,
                    "bits_stored": 8,
                    "source_tags": {},
                },
            ),
            planes=[PixelPlane(np.zeros((4, 4), dtype=np.uint16), 8)],
        )
        payloads = write_series_payloads(nifti_series, FormatKind.NIFTI)
        names = [name for name, _ in payloads]
        assert names == ["ab_cd_e.nii", "ab_cd_e.metadata.json"]
        sidecar = json.loads(dict(payloads)["ab_cd_e.metadata.json"])
        assert sidecar["format"] == "nifti"

    def test_raster_payloads_include_sidecar(self, rng):
        plane = PixelPlane(rng.integers(0, 255, size=(4, 4), dtype=np.uint16), 8)
        series = DecodedSeries(
            metadata=MetadataDocument(
                format=FormatKind.RASTER,
                tags={
                    "series_id": "s1",
                    "rows": 4,
                    "cols": 4,
                    "num_slices": 1,
                    "bits_stored": 8,
                    "source_tags": {},
                },
            ),
            planes=[plane],
        )
        payloads = write_series_payloads(series, FormatKind.RASTER)
        names = [name for name, _ in payloads]
        assert names == ["00000.png", "s1.metadata.json"]
