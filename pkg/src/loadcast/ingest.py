"""Trace-log ingestion.

Decodes fixed-size binary access-log records (optionally gzip compressed) or
plain text epoch-per-line files, counts requests per second and aggregates
per-file totals into per-day totals.

Binary record layout (20 bytes, big-endian)::

    offset  width  field
    0       4      timestamp (seconds since the Unix epoch)
    4       4      client id
    8       4      object id
    12      4      size (bytes)
    16      1      method
    17      1      status
    18      1      type
    19      1      server
"""

from __future__ import annotations

import gzip
import os
import re
import struct
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping, NamedTuple, Sequence

import numpy as np

RECORD_SIZE = 20
GZIP_MAGIC = b"\x1f\x8b"
_RECORD = struct.Struct(">IIIIBBBB")
# Records per read; keeps memory bounded regardless of file size.
CHUNK_RECORDS = 1 << 16

EPOCH_HEADER = ("EPOCH", "REQUESTS")
DAY_HEADER = ("DAY", "REQUESTS", "MATCHES", "ISMATCH")
CALENDAR_HEADER = ("DAY", "MATCHES")

TRACE_NAME = re.compile(r"^wc_day(\d+)_(\d+)(?:\.gz)?(?:\.count\.txt)?$")


class IngestError(ValueError):
    """Base class for trace ingestion failures."""


class TruncatedRecordError(IngestError):
    def __init__(self, offset: int, size: int):
        super().__init__(
            f"truncated record at byte offset {offset}: {size} of {RECORD_SIZE} bytes"
        )
        self.offset = offset
        self.size = size


class TraceFormatError(IngestError):
    pass


class TraceRecord(NamedTuple):
    timestamp: int
    client_id: int
    object_id: int
    size: int
    method: int
    status: int
    doc_type: int
    server: int


@dataclass(frozen=True)
class RecordLayout:
    """Where the timestamp lives inside a binary record.

    Only the timestamp is consumed downstream, so this is the one field whose
    position has to be right. Override it if an archive uses another layout.
    """

    record_size: int = RECORD_SIZE
    timestamp_offset: int = 0
    timestamp_width: int = 4
    byteorder: str = "big"

    def __post_init__(self):
        if self.timestamp_width not in (1, 2, 4, 8):
            raise ValueError(f"unsupported timestamp width {self.timestamp_width}")
        if self.timestamp_offset + self.timestamp_width > self.record_size:
            raise ValueError("timestamp field does not fit inside the record")
        if self.byteorder not in ("big", "little"):
            raise ValueError(f"byteorder must be 'big' or 'little', got {self.byteorder!r}")

    def dtype(self) -> np.dtype:
        code = (">" if self.byteorder == "big" else "<") + f"u{self.timestamp_width}"
        return np.dtype(
            {"names": ["ts"], "formats": [code], "offsets": [self.timestamp_offset],
             "itemsize": self.record_size}
        )


DEFAULT_LAYOUT = RecordLayout()


def decode_record(block: bytes, offset: int = 0) -> TraceRecord:
    """Decode one 20-byte record. ``offset`` is only used in error messages."""
    if len(block) != RECORD_SIZE:
        raise TruncatedRecordError(offset, len(block))
    return TraceRecord(*_RECORD.unpack(block))


def _open_payload(path: Path):
    with open(path, "rb") as fh:
        magic = fh.read(2)
    if magic == GZIP_MAGIC:
        return gzip.open(path, "rb")
    return open(path, "rb")


def _binary_chunks(path: Path, layout: RecordLayout) -> Iterator[np.ndarray]:
    dtype = layout.dtype()
    size = layout.record_size
    want = size * CHUNK_RECORDS
    consumed = 0
    with _open_payload(path) as fh:
        pending = b""
        while True:
            data = fh.read(want)
            if not data:
                break
            if pending:
                data = pending + data
            usable = len(data) - len(data) % size
            pending = data[usable:]
            if usable:
                yield np.frombuffer(data, dtype=dtype, count=usable // size)["ts"].astype(np.int64)
                consumed += usable
        if pending:
            raise TruncatedRecordError(consumed, len(pending))


def _text_chunks(path: Path) -> Iterator[np.ndarray]:
    buf: list[int] = []
    with open(path, "rb") as raw:
        compressed = raw.read(2) == GZIP_MAGIC
        raw.seek(0)
        fh = gzip.open(raw) if compressed else raw
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text:
                continue
            try:
                value = int(text)
            except ValueError:
                raise TraceFormatError(
                    f"{path}: line {lineno}: not a decimal epoch: {text[:40]!r}"
                ) from None
            if value < 0:
                raise TraceFormatError(f"{path}: line {lineno}: negative epoch {value}")
            buf.append(value)
            if len(buf) >= CHUNK_RECORDS:
                yield np.asarray(buf, dtype=np.int64)
                buf = []
    if buf:
        yield np.asarray(buf, dtype=np.int64)


def epoch_chunks(path, format: str = "binary", layout: RecordLayout = DEFAULT_LAYOUT) -> Iterator[np.ndarray]:
    """Yield epochs from a trace file as int64 arrays of bounded size."""
    path = Path(path)
    if not path.is_file():
        raise IngestError(f"cannot read trace file: {path}")
    if format == "binary":
        return _binary_chunks(path, layout)
    if format == "text":
        return _text_chunks(path)
    raise ValueError(f"unknown trace format {format!r} (expected 'binary' or 'text')")


def stream_epochs(path, format: str = "binary", layout: RecordLayout = DEFAULT_LAYOUT) -> Iterator[int]:
    """Yield one epoch per record (binary) or line (text), in file order.

    Gzip input is detected by its magic bytes, independent of the file name.
    """
    for chunk in epoch_chunks(path, format, layout):
        yield from chunk.tolist()


@dataclass
class EpochRequestsSeries:
    epochs: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    requests: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __len__(self):
        return len(self.epochs)

    def rows(self) -> list[tuple[int, int]]:
        return list(zip(self.epochs.tolist(), self.requests.tolist()))

    @property
    def total(self) -> int:
        return int(self.requests.sum())


def count_duplicates(epochs: Iterable[int]) -> EpochRequestsSeries:
    """Count how many times each epoch occurs; rows come out sorted by epoch.

    The input order does not matter.
    """
    counts = Counter(epochs)
    keys = sorted(counts)
    return EpochRequestsSeries(
        np.asarray(keys, dtype=np.int64),
        np.asarray([counts[k] for k in keys], dtype=np.int64),
    )


def count_file(path, format: str = "binary", layout: RecordLayout = DEFAULT_LAYOUT) -> EpochRequestsSeries:
    """Vectorised ``count_duplicates(stream_epochs(path))``."""
    acc: dict[int, int] = {}
    for chunk in epoch_chunks(path, format, layout):
        uniq, cnt = np.unique(chunk, return_counts=True)
        for k, c in zip(uniq.tolist(), cnt.tolist()):
            acc[k] = acc.get(k, 0) + c
    keys = sorted(acc)
    return EpochRequestsSeries(
        np.asarray(keys, dtype=np.int64), np.asarray([acc[k] for k in keys], dtype=np.int64)
    )


def count_requests(path, format: str = "binary", layout: RecordLayout = DEFAULT_LAYOUT) -> int:
    return sum(len(chunk) for chunk in epoch_chunks(path, format, layout))


def fill_gaps(series: EpochRequestsSeries) -> EpochRequestsSeries:
    """Insert explicit zero rows for unobserved seconds between first and last epoch."""
    if len(series) == 0:
        return EpochRequestsSeries()
    start, stop = int(series.epochs[0]), int(series.epochs[-1])
    epochs = np.arange(start, stop + 1, dtype=np.int64)
    requests = np.zeros(len(epochs), dtype=np.int64)
    requests[series.epochs - start] = series.requests
    return EpochRequestsSeries(epochs, requests)


# --- per-day aggregation -------------------------------------------------------


@dataclass
class DayRequestsSeries:
    days: np.ndarray
    requests: np.ndarray
    matches: np.ndarray
    is_match: np.ndarray

    def __len__(self):
        return len(self.days)

    def rows(self) -> list[tuple[int, int, int, int]]:
        return list(
            zip(self.days.tolist(), self.requests.tolist(), self.matches.tolist(), self.is_match.tolist())
        )


class MatchCalendar(dict):
    """Day number -> matches played. Missing days mean no matches."""

    def __init__(self, entries: Mapping[int, int] | None = None):
        super().__init__()
        for day, n in (entries or {}).items():
            if int(n) < 0:
                raise ValueError(f"negative match count {n} for day {day}")
            self[int(day)] = int(n)

    def matches(self, day: int) -> int:
        return self.get(day, 0)


def parse_trace_name(name: str) -> tuple[int, int]:
    """Return (day, part) for names like ``wc_day38_2``, ``wc_day38_2.gz`` or
    ``wc_day38_2.gz.count.txt``."""
    m = TRACE_NAME.match(os.path.basename(str(name)))
    if not m or int(m.group(1)) < 1:
        raise IngestError(f"file name does not match wc_day<D>_<P>: {name}")
    return int(m.group(1)), int(m.group(2))


def aggregate_days(
    file_counts: Sequence[tuple[str, int]],
    calendar: Mapping[int, int] | None = None,
    total_days: int = 92,
) -> DayRequestsSeries:
    if total_days < 1:
        raise ValueError("total_days must be positive")
    calendar = MatchCalendar(calendar)
    requests = np.zeros(total_days, dtype=np.int64)
    for name, count in file_counts:
        day, _ = parse_trace_name(name)
        if day > total_days:
            raise IngestError(f"{name}: day {day} outside 1..{total_days}")
        requests[day - 1] += int(count)
    days = np.arange(1, total_days + 1, dtype=np.int64)
    matches = np.asarray([calendar.matches(d) for d in days.tolist()], dtype=np.int64)
    return DayRequestsSeries(days, requests, matches, (matches >= 1).astype(np.int64))


# --- TSV formats ---------------------------------------------------------------


def _read_tsv(path, header: Sequence[str]) -> list[list[int]]:
    rows = []
    with open(path) as fh:
        first = fh.readline().rstrip("\n").split("\t")
        if tuple(first) != tuple(header):
            raise TraceFormatError(f"{path}: expected header {'/'.join(header)}, got {'/'.join(first)}")
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != len(header):
                raise TraceFormatError(f"{path}: line {lineno}: expected {len(header)} columns")
            try:
                rows.append([int(p) for p in parts])
            except ValueError:
                raise TraceFormatError(f"{path}: line {lineno}: non-integer field") from None
    return rows


def write_epoch_requests(series: EpochRequestsSeries, path) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write("\t".join(EPOCH_HEADER) + "\n")
        for e, r in series.rows():
            fh.write(f"{e}\t{r}\n")


def read_epoch_requests(path) -> EpochRequestsSeries:
    rows = _read_tsv(path, EPOCH_HEADER)
    arr = np.asarray(rows, dtype=np.int64).reshape(-1, 2)
    return EpochRequestsSeries(arr[:, 0].copy(), arr[:, 1].copy())


def write_day_requests(series: DayRequestsSeries, path) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write("\t".join(DAY_HEADER) + "\n")
        for row in series.rows():
            fh.write("\t".join(str(v) for v in row) + "\n")


def read_day_requests(path) -> DayRequestsSeries:
    arr = np.asarray(_read_tsv(path, DAY_HEADER), dtype=np.int64).reshape(-1, 4)
    return DayRequestsSeries(*(arr[:, i].copy() for i in range(4)))


def read_calendar(path) -> MatchCalendar:
    return MatchCalendar({d: m for d, m in _read_tsv(path, CALENDAR_HEADER)})


def write_calendar(calendar: Mapping[int, int], path) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write("\t".join(CALENDAR_HEADER) + "\n")
        for day in sorted(calendar):
            fh.write(f"{day}\t{calendar[day]}\n")


# --- directory pipeline --------------------------------------------------------


@dataclass
class ManifestEntry:
    input: str
    output: str | None
    records: int | None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


MANIFEST_HEADER = ("INPUT", "OUTPUT", "RECORDS", "ERROR")


def output_name(trace_name: str) -> str:
    """``wc_day38_2.gz`` -> ``wc_day38_2.count.txt``."""
    base = os.path.basename(trace_name)
    if base.endswith(".gz"):
        base = base[:-3]
    return base + ".count.txt"


def _process_one(args) -> ManifestEntry:
    src, out_dir, format, layout = args
    out = Path(out_dir) / output_name(src.name)
    try:
        series = count_file(src, format, layout)
        write_epoch_requests(series, out)
    except (IngestError, OSError, EOFError, gzip.BadGzipFile) as exc:
        return ManifestEntry(str(src), None, None, f"{type(exc).__name__}: {exc}")
    return ManifestEntry(str(src), str(out), series.total)


def list_trace_files(input_dir) -> list[Path]:
    files = []
    for p in Path(input_dir).iterdir():
        if not p.is_file() or p.name.endswith(".count.txt"):
            continue
        if TRACE_NAME.match(p.name):
            files.append(p)
    return sorted(files, key=lambda p: (*parse_trace_name(p.name), p.name))


def run_pipeline(
    input_dir,
    output_dir,
    format: str = "binary",
    layout: RecordLayout = DEFAULT_LAYOUT,
    jobs: int = 1,
) -> list[ManifestEntry]:
    """Count requests per second for every ``wc_day<D>_<P>[.gz]`` file in a directory.

    Each file gets a ``.count.txt`` next to it in ``output_dir``. A failing file
    is recorded in the manifest and does not stop the others. The manifest is
    ordered by (day, part) whatever the completion order.
    """
    input_dir = Path(input_dir)
    if not input_dir.is_dir():
        raise IngestError(f"input directory not readable: {input_dir}")
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    work = [(p, output_dir, format, layout) for p in list_trace_files(input_dir)]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_process_one, work))
    return [_process_one(w) for w in work]


def write_manifest(entries: Sequence[ManifestEntry], path) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write("\t".join(MANIFEST_HEADER) + "\n")
        for e in entries:
            fh.write(
                f"{e.input}\t{e.output or ''}\t{'' if e.records is None else e.records}\t{e.error or ''}\n"
            )


def counts_from_directory(count_dir) -> list[tuple[str, int]]:
    """(file name, total requests) for every ``*.count.txt`` in a directory."""
    out = []
    for p in sorted(Path(count_dir).glob("*.count.txt")):
        if not TRACE_NAME.match(p.name):
            continue
        out.append((p.name, read_epoch_requests(p).total))
    return out
