"""Fixtures for the client suite: a vector corpus and a live server.

The client is exercised only through the primary component's external
surfaces: the ``mist`` command line (to build a store and export the shared
conformance vectors) and the HTTP service it serves.
"""

from __future__ import annotations

import os
import signal
import socket
import struct
import subprocess
import sys
import time
from pathlib import Path

import httpx
import numpy as np
import pytest
from PIL import Image

SEED = 20260814


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "criterion(label): acceptance criterion this test certifies"
    )


def run_mist(*args: object) -> str:
    """Run the store CLI and return stdout, failing loudly on non-zero exit."""
    proc = subprocess.run(
        [sys.executable, "-m", "mist", *map(str, args)],
        capture_output=True,
        text=True,
        timeout=300,
    )
    assert proc.returncode == 0, f"mist {args}: {proc.stderr}"
    return proc.stdout


# -- fixture data -------------------------------------------------------------


def _bandlimited_volume(
    rng: np.random.Generator, count: int, size: int, peak: int = 3000
) -> np.ndarray:
    """Smooth non-negative int16 planes built from a low-frequency spectrum."""
    planes = []
    for _ in range(count):
        spectrum = np.zeros((size, size // 2 + 1), dtype=np.complex128)
        block = rng.normal(size=(10, 10)) + 1j * rng.normal(size=(10, 10))
        spectrum[:10, :10] = block
        field = np.fft.irfft2(spectrum, s=(size, size))
        field -= field.min()
        if field.max() > 0:
            field /= field.max()
        planes.append(np.round(field * peak).astype(np.int16))
    return np.stack(planes)


def _nifti_bytes(volume: np.ndarray, affine: np.ndarray) -> bytes:
    """Minimal little-endian single-file volume around an int16 (z, y, x) array."""
    nz, ny, nx = volume.shape
    header = bytearray(348)
    struct.pack_into("<i", header, 0, 348)
    struct.pack_into("<8h", header, 40, 3, nx, ny, nz, 1, 1, 1, 1)
    struct.pack_into("<h", header, 70, 4)  # int16
    struct.pack_into("<h", header, 72, 16)
    spacings = [float(np.linalg.norm(affine[:3, axis])) for axis in range(3)]
    struct.pack_into("<8f", header, 76, 1.0, *spacings, 0.0, 0.0, 0.0, 0.0)
    struct.pack_into("<f", header, 108, 352.0)
    struct.pack_into("<f", header, 112, 1.0)
    struct.pack_into("<h", header, 254, 1)  # sform_code
    struct.pack_into("<4f", header, 280, *affine[0, :4])
    struct.pack_into("<4f", header, 296, *affine[1, :4])
    struct.pack_into("<4f", header, 312, *affine[2, :4])
    struct.pack_into("4s", header, 344, b"n+1\x00")
    data = np.ascontiguousarray(volume.astype("<i2")).tobytes()
    return bytes(header) + b"\x00\x00\x00\x00" + data


def parse_nifti_payload(payload: bytes) -> tuple[np.ndarray, np.ndarray]:
    """Voxels as (slice, row, col) int64 plus the 4x4 sform, parsed by hand."""
    dims = struct.unpack_from("<8h", payload, 40)
    datatype = struct.unpack_from("<h", payload, 70)[0]
    vox_offset = int(struct.unpack_from("<f", payload, 108)[0])
    dtype = {2: "<u1", 4: "<i2", 8: "<i4", 512: "<u2"}[datatype]
    cols, rows, slices = dims[1], dims[2], dims[3]
    voxels = (
        np.frombuffer(payload, dtype=dtype, count=cols * rows * slices, offset=vox_offset)
        .reshape(slices, rows, cols)
        .astype(np.int64)
    )
    affine = np.eye(4)
    for axis, offset in enumerate((280, 296, 312)):
        affine[axis, :] = struct.unpack_from("<4f", payload, offset)
    return voxels, affine


FIXTURE_AFFINE = np.array(
    [
        [0.55, 0.0, 0.0, 10.0],
        [0.0, 0.7, 0.0, -20.0],
        [0.0, 0.0, 2.5, 5.0],
        [0.0, 0.0, 0.0, 1.0],
    ]
)


# -- session fixtures ---------------------------------------------------------


@pytest.fixture(scope="session")
def vector_corpus(tmp_path_factory) -> list[Path]:
    """Shared codec vectors exported by the store's own tooling."""
    destination = tmp_path_factory.mktemp("vectors")
    run_mist("export-vectors", destination)
    cases = sorted(destination.glob("case_*"))
    assert cases, "export produced no cases"
    return cases


@pytest.fixture(scope="session")
def store_rig(tmp_path_factory) -> dict:
    """An initialized store holding one 4x512x512 volume and two 512x512 rasters."""
    rng = np.random.default_rng(SEED)
    data = tmp_path_factory.mktemp("data")
    volume = _bandlimited_volume(rng, count=4, size=512)
    (data / "vol.nii").write_bytes(_nifti_bytes(volume, FIXTURE_AFFINE))
    for name in ("scan_a", "scan_b"):
        plane = _bandlimited_volume(rng, count=1, size=512)[0].astype(np.uint16)
        image = Image.frombytes("I;16", (512, 512), plane.astype("<u2").tobytes())
        scan_dir = data / name  # one directory per raster: one series each
        scan_dir.mkdir()
        image.save(scan_dir / f"{name}.png", format="PNG")

    root = tmp_path_factory.mktemp("store")
    run_mist("--store", root, "init")
    listing = run_mist("--store", root, "ingest", data)

    nifti_id = None
    raster_ids = []
    for line in listing.splitlines():
        if "slice(s)" not in line:
            continue
        series_id, format_name = line.split()[:2]
        if format_name == "nifti":
            nifti_id = series_id
        elif format_name == "raster":
            raster_ids.append(series_id)
    assert nifti_id and len(raster_ids) == 2, listing
    return {"root": root, "nifti": nifti_id, "rasters": sorted(raster_ids)}


@pytest.fixture(scope="session")
def server(store_rig) -> str:
    """The store served over HTTP; yields its base URL."""
    with socket.socket() as probe:
        probe.bind(("127.0.0.1", 0))
        port = probe.getsockname()[1]
    base_url = f"http://127.0.0.1:{port}"
    proc = subprocess.Popen(
        [
            sys.executable,
            "-m",
            "mist",
            "--store",
            str(store_rig["root"]),
            "serve",
            "--listen",
            f"127.0.0.1:{port}",
        ],
        stdout=subprocess.PIPE,
        stderr=subprocess.PIPE,
        text=True,
        env=os.environ.copy(),
    )
    try:
        deadline = time.monotonic() + 30
        while True:
            if proc.poll() is not None:
                raise RuntimeError(f"server exited early: {proc.stderr.read()}")
            try:
                if httpx.get(f"{base_url}/v1/series", timeout=2.0).status_code == 200:
                    break
            except httpx.HTTPError:
                pass
            if time.monotonic() > deadline:
                raise RuntimeError("server did not come up within 30s")
            time.sleep(0.1)
        yield base_url
    finally:
        proc.send_signal(signal.SIGINT)
        try:
            proc.wait(timeout=10)
        except subprocess.TimeoutExpired:
            proc.kill()
            proc.wait()
