"""HTTP streaming API over a store.

Every response is deterministic for a fixed store state: multi-file
payloads are packed as uncompressed zip archives with a fixed timestamp,
so payload size reflects true transmission cost and repeated requests are
byte-identical. The ``X-MIST-Bytes-Read`` header reports exactly how many
codestream bytes were consumed to build an image response.
"""

from __future__ import annotations

import io
import re
import zipfile
from typing import Optional

from fastapi import FastAPI, Query, Request
from fastapi.responses import JSONResponse, Response
from pydantic import BaseModel

from .convert import convert_series
from .errors import (
    HierarchyViolation,
    LevelOutOfRange,
    MistError,
    NotFound,
)
from .formats import FormatKind
from .store import Store

_ZIP_EPOCH = (1980, 1, 1, 0, 0, 0)
_RANGE_PATTERN = re.compile(r"^bytes=(\d*)-(\d*)$")


class SeriesSummary(BaseModel):
    series_id: str
    format: str
    num_slices: int
    max_level: int


class SeriesListResponse(BaseModel):
    series: list[SeriesSummary]
    total: int
    offset: int


class ErrorBody(BaseModel):
    code: str
    message: str


class BadRequest(MistError):
    """Malformed query parameter."""


def _error_response(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(
        status_code=status,
        content=ErrorBody(code=code, message=message).model_dump(),
    )


def _zip_payloads(payloads) -> bytes:
    buffer = io.BytesIO()
    with zipfile.ZipFile(buffer, "w", compression=zipfile.ZIP_STORED) as archive:
        for name, blob in payloads:
            info = zipfile.ZipInfo(name, date_time=_ZIP_EPOCH)
            info.external_attr = 0o644 << 16
            archive.writestr(info, blob)
    return buffer.getvalue()


def _parse_format(value: str) -> FormatKind:
    try:
        return FormatKind(value.lower())
    except ValueError:
        raise BadRequest(
            f"unknown format {value!r}; expected dicom, nifti, or raster"
        ) from None


def create_app(store: Store) -> FastAPI:
    app = FastAPI(title="mist", version="1", docs_url=None, redoc_url=None)

    @app.exception_handler(NotFound)
    async def _not_found(_: Request, err: NotFound):
        return _error_response(404, "NotFound", str(err))

    @app.exception_handler(LevelOutOfRange)
    async def _bad_level(_: Request, err: LevelOutOfRange):
        return _error_response(400, "LevelOutOfRange", str(err))

    @app.exception_handler(HierarchyViolation)
    async def _hierarchy(_: Request, err: HierarchyViolation):
        return _error_response(409, "HierarchyViolation", str(err))

    @app.exception_handler(BadRequest)
    async def _bad_request(_: Request, err: BadRequest):
        return _error_response(400, "BadRequest", str(err))

    @app.exception_handler(MistError)
    async def _other(_: Request, err: MistError):
        return _error_response(400, type(err).__name__, str(err))

    @app.get("/v1/series", response_model=SeriesListResponse)
    def list_series(
        offset: int = Query(default=0, ge=0),
        limit: int = Query(default=100, ge=1, le=1000),
    ) -> SeriesListResponse:
        ids = store.series_ids()
        window = ids[offset : offset + limit]
        summaries = []
        for series_id in window:
            manifest = store.manifest(series_id)
            summaries.append(
                SeriesSummary(
                    series_id=series_id,
                    format=manifest["format"],
                    num_slices=manifest["num_slices"],
                    max_level=manifest["max_level"],
                )
            )
        return SeriesListResponse(series=summaries, total=len(ids), offset=offset)

    @app.get("/v1/series/{series_id}/manifest")
    def manifest(series_id: str) -> Response:
        return Response(
            content=store.manifest_bytes(series_id), media_type="application/json"
        )

    @app.get("/v1/series/{series_id}/image")
    def image(
        series_id: str,
        format: Optional[str] = Query(default=None),
        level: Optional[int] = Query(default=None),
    ) -> Response:
        source = store.manifest(series_id)["format"]
        target = _parse_format(format) if format else FormatKind(source)
        converted = convert_series(store, series_id, target, level)
        headers = {"X-MIST-Bytes-Read": str(converted.bytes_read)}
        stem = f"{series_id[:12]}.l{converted.level}"

        if target is FormatKind.NIFTI:
            name, blob = converted.payloads[0]
            headers["Content-Disposition"] = f'attachment; filename="{name}"'
            return Response(
                content=blob, media_type="application/octet-stream", headers=headers
            )
        if target is FormatKind.RASTER and len(converted.series.planes) == 1:
            name, blob = converted.payloads[0]
            headers["Content-Disposition"] = f'attachment; filename="{name}"'
            return Response(content=blob, media_type="image/png", headers=headers)

        blob = _zip_payloads(converted.payloads)
        headers["Content-Disposition"] = (
            f'attachment; filename="{stem}.{target.value}.zip"'
        )
        return Response(content=blob, media_type="application/zip", headers=headers)

    @app.get("/v1/series/{series_id}/slices/{index}/raw")
    def raw_slice(
        series_id: str,
        index: int,
        request: Request,
        level: Optional[int] = Query(default=None),
    ) -> Response:
        prefix = store.get_slice_prefix(series_id, index, level)
        total = len(prefix)
        headers = {
            "Accept-Ranges": "bytes",
            "X-MIST-Bytes-Read": str(total),
        }
        range_header = request.headers.get("range")
        if range_header is None:
            return Response(
                content=prefix,
                media_type="application/octet-stream",
                headers=headers,
            )

        match = _RANGE_PATTERN.match(range_header.strip())
        if match is None or (not match.group(1) and not match.group(2)):
            return _error_response(
                416, "RangeNotSatisfiable", f"cannot satisfy range {range_header!r}"
            )
        first, last = match.group(1), match.group(2)
        if first:
            start = int(first)
            end = min(int(last), total - 1) if last else total - 1
        else:
            # suffix form: last N bytes
            start = max(total - int(last), 0)
            end = total - 1
        if start >= total or start > end:
            body = _error_response(
                416, "RangeNotSatisfiable", f"cannot satisfy range {range_header!r}"
            )
            body.headers["Content-Range"] = f"bytes */{total}"
            return body
        chunk = prefix[start : end + 1]
        headers["Content-Range"] = f"bytes {start}-{end}/{total}"
        headers["X-MIST-Bytes-Read"] = str(len(chunk))
        return Response(
            status_code=206,
            content=chunk,
            media_type="application/octet-stream",
            headers=headers,
        )

    return app
