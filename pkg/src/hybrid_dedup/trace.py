"""Block I/O trace records and the line-oriented trace file format.

A trace file is UTF-8 text.  The first line is a ``#`` header carrying
comma-separated ``key=value`` pairs (``M``, ``bs``, ``n``, optional ``seed``
and ``types``); every following line is one record::

    # M=2,bs=4096,n=3,seed=7
    0,0,W,100,00112233445566778899aabbccddeeff
    15,1,R,7,
    15,0,W,101,ffeeddccbbaa99887766554433221100
"""

from __future__ import annotations

import enum
import os
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional, Sequence

BLOCK_SIZE = 4096
FINGERPRINT_BYTES = 16
LBA_MAX = 2**64 - 1


class TraceError(ValueError):
    """Malformed or inconsistent trace data."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class Op(str, enum.Enum):
    READ = "R"
    WRITE = "W"


class StreamType(str, enum.Enum):
    """Content-class hint attached to a stream (used by the file-type gate)."""

    U = "U"  # unpredictable
    H = "H"  # highly deduplicable
    P = "P"  # compressed / encrypted / media


@dataclass(frozen=True, slots=True)
class TraceRecord:
    timestamp: int
    stream: int
    op: Op
    lba: int
    fingerprint: Optional[bytes] = None

    def __post_init__(self):
        if self.op is Op.WRITE:
            if self.fingerprint is None or len(self.fingerprint) != FINGERPRINT_BYTES:
                raise TraceError("WRITE record requires a 16-byte fingerprint")
        elif self.fingerprint is not None:
            raise TraceError("READ record must not carry a fingerprint")

    @property
    def is_write(self) -> bool:
        return self.op is Op.WRITE


@dataclass
class TraceHeader:
    stream_count: int
    record_count: int
    block_size: int = BLOCK_SIZE
    generator_seed: Optional[int] = None
    stream_types: list[StreamType] = field(default_factory=list)

    def type_of(self, stream: int) -> StreamType:
        if stream < len(self.stream_types):
            return self.stream_types[stream]
        return StreamType.U

    def to_line(self) -> str:
        parts = [f"M={self.stream_count}", f"bs={self.block_size}", f"n={self.record_count}"]
        if self.generator_seed is not None:
            parts.append(f"seed={self.generator_seed}")
        if self.stream_types:
            parts.append("types=" + ":".join(t.value for t in self.stream_types))
        return "# " + ",".join(parts)

    @classmethod
    def from_line(cls, line: str) -> "TraceHeader":
        if not line.startswith("#"):
            raise TraceError("missing '#' header", 1)
        fields: dict[str, str] = {}
        for part in line[1:].strip().split(","):
            if not part:
                continue
            key, sep, value = part.partition("=")
            if not sep:
                raise TraceError(f"bad header field {part!r}", 1)
            fields[key.strip()] = value.strip()
        try:
            m = int(fields["M"])
            n = int(fields["n"])
            bs = int(fields.get("bs", BLOCK_SIZE))
            seed = int(fields["seed"]) if "seed" in fields else None
            types = [StreamType(t) for t in fields["types"].split(":")] if fields.get("types") else []
        except KeyError as exc:
            raise TraceError(f"header missing key {exc.args[0]}", 1) from None
        except ValueError as exc:
            raise TraceError(f"bad header value: {exc}", 1) from None
        if m < 1 or n < 0:
            raise TraceError("header needs M >= 1 and n >= 0", 1)
        if bs != BLOCK_SIZE:
            raise TraceError(f"block size must be {BLOCK_SIZE}, got {bs}", 1)
        if types and len(types) != m:
            raise TraceError("types list length must equal M", 1)
        return cls(m, n, bs, seed, types)


def format_record(rec: TraceRecord) -> str:
    fp = rec.fingerprint.hex() if rec.fingerprint is not None else ""
    return f"{rec.timestamp},{rec.stream},{rec.op.value},{rec.lba},{fp}"


def parse_record(line: str, lineno: int, stream_count: int) -> TraceRecord:
    parts = line.split(",")
    if len(parts) != 5:
        raise TraceError(f"expected 5 fields, got {len(parts)}", lineno)
    ts_s, stream_s, op_s, lba_s, fp_s = parts
    try:
        ts = int(ts_s)
        stream = int(stream_s)
        lba = int(lba_s)
    except ValueError:
        raise TraceError("non-integer timestamp/stream/lba", lineno) from None
    try:
        op = Op(op_s)
    except ValueError:
        raise TraceError(f"unknown op {op_s!r}", lineno) from None
    if ts < 0:
        raise TraceError("negative timestamp", lineno)
    if not 0 <= stream < stream_count:
        raise TraceError(f"stream {stream} outside [0, {stream_count})", lineno)
    if not 0 <= lba <= LBA_MAX:
        raise TraceError("lba outside 64-bit range", lineno)
    fp = None
    if fp_s:
        try:
            fp = bytes.fromhex(fp_s)
        except ValueError:
            raise TraceError("fingerprint is not hex", lineno) from None
    try:
        return TraceRecord(ts, stream, op, lba, fp)
    except TraceError as exc:
        raise TraceError(str(exc), lineno) from None


class TraceReader:
    """Iterate the records of a trace file; the header is read eagerly."""

    def __init__(self, path: str | os.PathLike):
        self.path = path
        with open(path, encoding="utf-8") as fh:
            first = fh.readline()
        if not first:
            raise TraceError("empty file", 1)
        self.header = TraceHeader.from_line(first.rstrip("\n"))

    def __iter__(self) -> Iterator[TraceRecord]:
        header = self.header
        last_ts = -1
        count = 0
        with open(self.path, encoding="utf-8") as fh:
            fh.readline()
            for lineno, line in enumerate(fh, start=2):
                line = line.rstrip("\n")
                if not line:
                    continue
                rec = parse_record(line, lineno, header.stream_count)
                if rec.timestamp < last_ts:
                    raise TraceError("timestamp goes backwards", lineno)
                last_ts = rec.timestamp
                count += 1
                yield rec
        if count != header.record_count:
            raise TraceError(f"header declares n={header.record_count} but body has {count} records")


def parse_trace(path: str | os.PathLike) -> tuple[TraceHeader, Iterator[TraceRecord]]:
    reader = TraceReader(path)
    return reader.header, iter(reader)


def load_trace(path: str | os.PathLike) -> tuple[TraceHeader, list[TraceRecord]]:
    header, records = parse_trace(path)
    return header, list(records)


def check_sorted(records: Sequence[TraceRecord]) -> None:
    for i in range(1, len(records)):
        if records[i].timestamp < records[i - 1].timestamp:
            raise TraceError(f"records out of timestamp order at index {i}")


def write_trace(
    records: Sequence[TraceRecord],
    path: str | os.PathLike,
    stream_count: Optional[int] = None,
    seed: Optional[int] = None,
    stream_types: Iterable[StreamType] = (),
) -> TraceHeader:
    check_sorted(records)
    if stream_count is None:
        stream_count = max((r.stream for r in records), default=0) + 1
    header = TraceHeader(stream_count, len(records), BLOCK_SIZE, seed, list(stream_types))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header.to_line() + "\n")
        for rec in records:
            fh.write(format_record(rec) + "\n")
    return header
