"""Command-line surface: exit codes, output shapes, the serve loop."""

from __future__ import annotations

import csv
import io
import json
import signal
import socket
import subprocess
import sys
import time
import urllib.request

import numpy as np
import pytest
from PIL import Image

import helpers
from mist.codec import decode
from mist.convert import convert_series
from mist.formats import FormatKind
from mist.store import Store


def run_cli(*args: str, cwd=None) -> subprocess.CompletedProcess:
    return subprocess.run(
        [sys.executable, "-m", "mist", *map(str, args)],
        capture_output=True,
        text=True,
        cwd=cwd,
        timeout=120,
    )


@pytest.fixture(scope="module")
def rig(tmp_path_factory):
    """An initialised store with one DICOM and one NIfTI series."""
    tmp_path = tmp_path_factory.mktemp("cli")
    rng = np.random.default_rng(4711)
    store_dir = tmp_path / "store"
    assert run_cli("--store", store_dir, "init").returncode == 0

    ct = tmp_path / "ct"
    ct.mkdir()
    volume = rng.integers(0, 3000, size=(2, 256, 320), dtype=np.int16)
    for k in range(2):
        (ct / f"{k:03d}.dcm").write_bytes(
            helpers.ct_slice(volume[k], instance=k + 1, position=(0, 0, 2.0 * k))
        )
    nii = tmp_path / "head.nii"
    nii.write_bytes(
        helpers.nifti_bytes(
            rng.integers(0, 500, size=(2, 64, 96), dtype=np.int16), datatype=4
        )
    )

    ingest = run_cli("--store", store_dir, "ingest", tmp_path)
    assert ingest.returncode == 0, ingest.stderr
    store = Store.open(store_dir)
    by_format = {store.manifest(s)["format"]: s for s in store.series_ids()}
    return tmp_path, store_dir, store, by_format


class TestLifecycle:
    def test_init_creates_marker(self, tmp_path):
        result = run_cli("--store", tmp_path / "s", "init")
        assert result.returncode == 0
        assert "initialized store" in result.stdout
        assert (tmp_path / "s" / "store.json").exists()

    def test_commands_need_existing_store(self, tmp_path):
        result = run_cli("--store", tmp_path / "missing", "report")
        assert result.returncode == 1
        assert "error:" in result.stderr

    def test_store_env_variable(self, tmp_path):
        env_store = tmp_path / "env-store"
        result = subprocess.run(
            [sys.executable, "-m", "mist", "init"],
            capture_output=True,
            text=True,
            env={"MIST_STORE": str(env_store), "PATH": "/usr/bin:/bin"},
            timeout=60,
        )
        assert result.returncode == 0
        assert (env_store / "store.json").exists()

    def test_unknown_command(self, tmp_path):
        assert run_cli("--store", tmp_path, "frobnicate").returncode == 1


class TestIngest:
    def test_reports_each_series(self, rig):
        _, store_dir, store, by_format = rig
        assert len(by_format) == 2
        for series_id in store.series_ids():
            assert store.manifest(series_id)["num_slices"] == 2

    def test_reingest_is_idempotent(self, rig):
        tmp_path, store_dir, _, _ = rig
        result = run_cli("--store", store_dir, "ingest", tmp_path / "ct")
        assert result.returncode == 0
        assert "[already stored]" in result.stdout
        assert "[ingested]" not in result.stdout

    def test_nothing_ingestable_exits_two(self, rig, tmp_path):
        _, store_dir, _, _ = rig
        empty = tmp_path / "empty"
        empty.mkdir()
        result = run_cli("--store", store_dir, "ingest", empty)
        assert result.returncode == 2
        assert "error:" in result.stderr

    def test_exclusions_reach_stderr(self, rig, tmp_path):
        _, store_dir, _, _ = rig
        bad = tmp_path / "floats"
        bad.mkdir()
        (bad / "f.nii").write_bytes(
            helpers.nifti_bytes(
                np.linspace(0, 1, 12, dtype=np.float32).reshape(1, 3, 4), datatype=16
            )
        )
        result = run_cli("--store", store_dir, "ingest", bad)
        assert result.returncode == 2
        assert "unsupported_type" in result.stderr
        assert "floating point" in result.stderr

    def test_format_hint_overrides_sniffing(self, rig, tmp_path):
        _, store_dir, _, _ = rig
        png = tmp_path / "hinted.png"
        Image.fromarray(np.full((8, 8), 7, dtype=np.uint8), mode="L").save(png)
        result = run_cli("--store", store_dir, "ingest", png, "--format", "raster")
        assert result.returncode == 0
        assert "raster" in result.stdout


class TestGet:
    def test_writes_payload_files(self, rig, tmp_path):
        _, store_dir, store, by_format = rig
        out = tmp_path / "out"
        result = run_cli(
            "--store", store_dir, "get", by_format["dicom"],
            "--format", "nifti", "--level", "1", "-o", out,
        )
        assert result.returncode == 0
        converted = convert_series(store, by_format["dicom"], FormatKind.NIFTI, 1)
        for name, blob in converted.payloads:
            assert (out / name).read_bytes() == blob
        assert f"{converted.bytes_read} codestream bytes read" in result.stdout

    def test_hierarchy_violation_exits_three(self, rig, tmp_path):
        _, store_dir, _, by_format = rig
        result = run_cli(
            "--store", store_dir, "get", by_format["nifti"],
            "--format", "dicom", "-o", tmp_path / "up",
        )
        assert result.returncode == 3
        assert "error:" in result.stderr

    def test_unknown_series_exits_one(self, rig, tmp_path):
        _, store_dir, _, _ = rig
        result = run_cli(
            "--store", store_dir, "get", "nope",
            "--format", "raster", "-o", tmp_path / "none",
        )
        assert result.returncode == 1

    def test_bad_level_exits_one(self, rig, tmp_path):
        _, store_dir, _, by_format = rig
        result = run_cli(
            "--store", store_dir, "get", by_format["dicom"],
            "--format", "raster", "--level", "77", "-o", tmp_path / "deep",
        )
        assert result.returncode == 1


class TestReports:
    def test_table_has_total_row(self, rig):
        _, store_dir, _, _ = rig
        result = run_cli("--store", store_dir, "report")
        assert result.returncode == 0
        lines = result.stdout.rstrip().splitlines()
        assert lines[0].split()[:2] == ["Series", "Format"]
        assert lines[-1].startswith("TOTAL")

    def test_csv_parses_with_integer_bytes(self, rig):
        _, store_dir, store, _ = rig
        result = run_cli("--store", store_dir, "report", "--csv")
        rows = list(csv.DictReader(io.StringIO(result.stdout)))
        totals = [r for r in rows if r["Series"] == "TOTAL"]
        assert len(totals) == 1
        assert int(totals[0]["Stored"]) == store.stats().stored_bytes

    def test_per_level_rows_grow(self, rig):
        _, store_dir, store, by_format = rig
        result = run_cli("--store", store_dir, "report", "--per-level", "--csv")
        rows = list(csv.DictReader(io.StringIO(result.stdout)))
        dicom_rows = [
            r for r in rows if by_format["dicom"].startswith(r["Series"])
        ]
        sizes = [int(r["Size"]) for r in dicom_rows]
        assert sizes == sorted(sizes) and sizes[0] < sizes[-1]

    def test_quality_csv(self, rig):
        _, store_dir, store, by_format = rig
        result = run_cli("--store", store_dir, "quality", by_format["dicom"], "--csv")
        rows = list(csv.DictReader(io.StringIO(result.stdout)))
        top = rows[-1]
        assert float(top["ssim_mean"]) == 1.0
        assert int(top["psnr_infinite_count"]) == int(top["slice_count"])


class TestExportVectors:
    def test_writes_cases(self, rig, tmp_path):
        _, store_dir, _, _ = rig
        dest = tmp_path / "vectors"
        result = run_cli("--store", store_dir, "export-vectors", dest)
        assert result.returncode == 0
        cases = sorted(dest.iterdir())
        assert len(cases) >= 5
        expected = json.loads((cases[0] / "expected.json").read_text())
        stream = (cases[0] / "stream.mistcs").read_bytes()
        assert len(stream) == expected["stream_length"]
        top = expected["levels"][-1]
        plane = decode(stream[: top["prefix_length"]])
        raw = (cases[0] / top["file"]).read_bytes()
        assert plane.samples.astype("<u2").tobytes() == raw


def _free_port() -> int:
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


class TestServe:
    def test_serves_until_interrupted(self, rig):
        _, store_dir, store, _ = rig
        port = _free_port()
        proc = subprocess.Popen(
            [sys.executable, "-m", "mist", "--store", str(store_dir),
             "serve", "--listen", f"127.0.0.1:{port}"],
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            text=True,
        )
        try:
            body = None
            for _ in range(100):
                try:
                    with urllib.request.urlopen(
                        f"http://127.0.0.1:{port}/v1/series", timeout=1
                    ) as response:
                        body = json.load(response)
                    break
                except OSError:
                    time.sleep(0.1)
            assert body is not None, "server never came up"
            assert body["total"] == len(store.series_ids())
        finally:
            proc.send_signal(signal.SIGINT)
            stdout, stderr = proc.communicate(timeout=15)
        assert proc.returncode == 0, stderr

    def test_port_in_use_exits_one(self, rig):
        _, store_dir, _, _ = rig
        with socket.socket() as sock:
            sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
            sock.bind(("127.0.0.1", 0))
            sock.listen(1)
            port = sock.getsockname()[1]
            result = run_cli(
                "--store", store_dir, "serve", "--listen", f"127.0.0.1:{port}"
            )
        assert result.returncode == 1
        assert "server failed to start" in result.stderr

    def test_bad_listen_spec(self, rig):
        _, store_dir, _, _ = rig
        result = run_cli("--store", store_dir, "serve", "--listen", "8000")
        assert result.returncode == 1
