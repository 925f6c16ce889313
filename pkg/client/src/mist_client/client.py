"""HTTP client for progressive image stores.

The server exposes per-slice codestreams whose byte layout is progressive:
a prefix of the stream decodes to a coarser resolution of the same image.
This client downloads exactly the prefix a requested level needs (lengths
always come from the series manifest, never guesses), decodes it locally,
and rescales the geometry tags to match the smaller pixel grid.
"""

from __future__ import annotations

import json
import random
import time
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Iterable, Iterator, Optional

import httpx
import numpy as np

from .codestream import DecodedSlice, decode_prefix
from .errors import LevelOutOfRange, NotFound, ProtocolError

_TRANSIENT_STATUSES = frozenset({429, 500, 502, 503, 504})


@dataclass(frozen=True)
class SeriesSummary:
    """One row of the server's series listing."""

    series_id: str
    format: str
    num_slices: int
    max_level: int


@dataclass(frozen=True)
class FetchedSlice:
    """A decoded slice plus its transfer accounting and geometry.

    ``spacing`` is (row, col) millimetres and ``affine`` maps
    ``[col, row, slice, 1]`` to world millimetres, both already rescaled for
    the fetched level; either is None when the source format carries no
    geometry.
    """

    series_id: str
    index: int
    level: int
    decoded: DecodedSlice
    bytes_read: int
    spacing: Optional[tuple[float, float]] = None
    affine: Optional[np.ndarray] = None

    @property
    def samples(self) -> np.ndarray:
        return self.decoded.samples

    def signal(self) -> np.ndarray:
        return self.decoded.signal()


@dataclass(frozen=True)
class DatasetItem:
    """One yielded element of :func:`iter_dataset`: a slice or its error."""

    series_id: str
    index: int
    result: Optional[FetchedSlice] = None
    error: Optional[Exception] = None

    @property
    def ok(self) -> bool:
        return self.error is None


def _expect(mapping: Any, key: str, kind: type) -> Any:
    if not isinstance(mapping, dict) or key not in mapping:
        raise ProtocolError(f"response is missing {key!r}")
    value = mapping[key]
    if kind is int and isinstance(value, bool) or not isinstance(value, kind):
        raise ProtocolError(f"response field {key!r} is not {kind.__name__}")
    return value


class MistClient:
    """Talks to one store service; retries transient failures with backoff."""

    def __init__(
        self,
        base_url: str,
        *,
        retries: int = 3,
        backoff: float = 0.25,
        timeout: float = 30.0,
        transport: httpx.BaseTransport | None = None,
    ):
        self._retries = int(retries)
        self._backoff = float(backoff)
        self._http = httpx.Client(
            base_url=base_url.rstrip("/"), timeout=timeout, transport=transport
        )

    def close(self) -> None:
        self._http.close()

    def __enter__(self) -> "MistClient":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()

    # -- transport ----------------------------------------------------------

    def _get(self, path: str, params: dict | None = None) -> httpx.Response:
        """GET with retry on transport errors, 429, and 5xx."""
        last_failure: str = ""
        for attempt in range(self._retries + 1):
            try:
                response = self._http.get(path, params=params)
            except httpx.HTTPError as err:
                last_failure = f"{type(err).__name__}: {err}"
            else:
                if response.status_code not in _TRANSIENT_STATUSES:
                    return self._raise_for_application_error(response)
                last_failure = f"HTTP {response.status_code}"
            if attempt < self._retries:
                time.sleep(self._backoff * (2**attempt) * (0.5 + random.random()))
        raise ConnectionError(f"{path} failed after {self._retries + 1} attempts ({last_failure})")

    @staticmethod
    def _raise_for_application_error(response: httpx.Response) -> httpx.Response:
        if response.status_code < 400:
            return response
        try:
            body = response.json()
            code, message = body["code"], body["message"]
        except Exception:
            raise ProtocolError(
                f"HTTP {response.status_code} without a structured error body"
            ) from None
        if code == "NotFound":
            raise NotFound(message)
        if code == "LevelOutOfRange":
            raise LevelOutOfRange(message)
        raise ProtocolError(f"{code}: {message}")

    def _get_json(self, path: str, params: dict | None = None) -> Any:
        response = self._get(path, params)
        try:
            return response.json()
        except (json.JSONDecodeError, ValueError):
            raise ProtocolError(f"{path} returned a non-JSON body") from None

    # -- operations ----------------------------------------------------------

    def list_series(self) -> list[SeriesSummary]:
        """Every stored series, paging through the listing endpoint."""
        summaries: list[SeriesSummary] = []
        offset = 0
        while True:
            body = self._get_json("/v1/series", {"offset": offset, "limit": 200})
            rows = _expect(body, "series", list)
            total = _expect(body, "total", int)
            for row in rows:
                summaries.append(
                    SeriesSummary(
                        series_id=_expect(row, "series_id", str),
                        format=_expect(row, "format", str),
                        num_slices=_expect(row, "num_slices", int),
                        max_level=_expect(row, "max_level", int),
                    )
                )
            offset += len(rows)
            if offset >= total or not rows:
                break
        return summaries

    def series(self, series_id: str) -> "RemoteSeries":
        return RemoteSeries(self, series_id)


@dataclass
class RemoteSeries:
    """One stored series; manifest fetched lazily and cached."""

    client: MistClient
    series_id: str
    _manifest: Optional[dict] = field(default=None, repr=False)

    @property
    def manifest(self) -> dict:
        if self._manifest is None:
            body = self.client._get_json(f"/v1/series/{self.series_id}/manifest")
            for key, kind in (
                ("series_id", str),
                ("num_slices", int),
                ("max_level", int),
                ("slices", list),
                ("metadata", dict),
            ):
                _expect(body, key, kind)
            self._manifest = body
        return self._manifest

    @property
    def num_slices(self) -> int:
        return self.manifest["num_slices"]

    @property
    def max_level(self) -> int:
        return self.manifest["max_level"]

    def prefix_length(self, index: int, level: int) -> int:
        """Byte length of the prefix covering ``level``, per the manifest."""
        entry = self._slice_entry(index)
        for extent in entry["offsets"]:
            if extent["level"] == level:
                return extent["end"]
        raise LevelOutOfRange(
            f"level {level} outside [1, {self.max_level}] for series {self.series_id}"
        )

    def _slice_entry(self, index: int) -> dict:
        slices = self.manifest["slices"]
        if not (0 <= index < len(slices)):
            raise NotFound(f"series {self.series_id} has no slice {index}")
        return slices[index]

    def fetch_slice(self, index: int, level: int | None = None) -> FetchedSlice:
        """Download the minimal prefix for ``level`` and decode it locally."""
        params = {} if level is None else {"level": level}
        response = self.client._get(
            f"/v1/series/{self.series_id}/slices/{index}/raw", params
        )
        prefix = response.content
        effective = self.max_level if level is None else int(level)
        if level is not None and len(prefix) != self.prefix_length(index, effective):
            raise ProtocolError(
                f"server sent {len(prefix)} bytes where the manifest "
                f"pins {self.prefix_length(index, effective)}"
            )
        decoded = decode_prefix(prefix, level)
        spacing, affine = self._geometry(effective)
        return FetchedSlice(
            series_id=self.series_id,
            index=index,
            level=effective,
            decoded=decoded,
            bytes_read=len(prefix),
            spacing=spacing,
            affine=affine,
        )

    def _geometry(
        self, level: int
    ) -> tuple[Optional[tuple[float, float]], Optional[np.ndarray]]:
        """Spacing/affine from the manifest, rescaled for ``level``.

        The grid a sub-resolution decode produces is a ceil-div shrink by
        ``s = 2**(max_level - level)``; pixel pitch grows by ``s`` and the
        affine translation shifts so the image center stays fixed in world
        space. Slice direction and spacing are untouched.
        """
        tags = self.manifest["metadata"].get("tags", {})
        scale = 1 << (self.max_level - level)

        spacing = None
        row_pitch, col_pitch = tags.get("pixel_spacing_row"), tags.get("pixel_spacing_col")
        if row_pitch is not None and col_pitch is not None:
            spacing = (float(row_pitch) * scale, float(col_pitch) * scale)

        affine = None
        rows, cols = tags.get("rows"), tags.get("cols")
        if tags.get("affine") is not None and rows and cols:
            affine = np.asarray(tags["affine"], dtype=np.float64)
            if scale > 1:
                out_rows = (rows + scale - 1) // scale
                out_cols = (cols + scale - 1) // scale
                rescaled = affine.copy()
                rescaled[:3, 0] = affine[:3, 0] * scale
                rescaled[:3, 1] = affine[:3, 1] * scale
                rescaled[:3, 3] = (
                    affine[:3, 3]
                    + affine[:3, 0] * ((cols - 1) - scale * (out_cols - 1)) / 2.0
                    + affine[:3, 1] * ((rows - 1) - scale * (out_rows - 1)) / 2.0
                )
                affine = rescaled
        return spacing, affine


def iter_dataset(
    series_list: Iterable[RemoteSeries],
    level: int | None = None,
    *,
    max_prefetch: int = 4,
) -> Iterator[DatasetItem]:
    """Stream every slice of every series, in order, with bounded prefetch.

    Yields one :class:`DatasetItem` per (series, slice) in the deterministic
    order given: series as listed, slices ascending. At most ``max_prefetch``
    fetches are in flight. A failing fetch yields an item carrying its error
    and the iteration continues.
    """
    if max_prefetch < 1:
        raise ValueError("max_prefetch must be at least 1")

    work: list[tuple[RemoteSeries, int, Optional[Exception]]] = []
    for series in series_list:
        try:
            count = series.num_slices
        except Exception as err:  # noqa: BLE001 - surfaced as an error item
            work.append((series, 0, err))
            continue
        work.extend((series, k, None) for k in range(count))

    def fetch(series: RemoteSeries, index: int, failure: Optional[Exception]) -> FetchedSlice:
        if failure is not None:
            raise failure
        return series.fetch_slice(index, level)

    with ThreadPoolExecutor(max_workers=max_prefetch) as pool:
        queue: deque = deque()
        pending = iter(work)

        def submit_one() -> None:
            try:
                series, index, failure = next(pending)
            except StopIteration:
                return
            queue.append(
                (series.series_id, index, pool.submit(fetch, series, index, failure))
            )

        for _ in range(max_prefetch):
            submit_one()
        while queue:
            series_id, index, future = queue.popleft()
            submit_one()
            try:
                yield DatasetItem(series_id, index, result=future.result())
            except Exception as err:  # noqa: BLE001 - per-item error contract
                yield DatasetItem(series_id, index, error=err)
