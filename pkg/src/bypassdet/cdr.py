"""CDR schema, CSV parsing/serialization and stage-1 cleaning."""

from __future__ import annotations

import csv
import enum
import io
import json
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Iterable, Mapping

CDR_COLUMNS: tuple[str, ...] = (
    "record_id",
    "timestamp",
    "sim_id",
    "imei",
    "imsi",
    "peer_id",
    "cell_id",
    "direction",
    "service",
    "duration_sec",
    "peer_is_international",
)
LABEL_COLUMNS: tuple[str, ...] = ("sim_id", "label")

TIMESTAMP_FORMAT = "%Y-%m-%dT%H:%M:%SZ"
EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)
_MIN_TS = datetime.min.replace(tzinfo=timezone.utc)


class SchemaError(ValueError):
    """Header of a CDR or label file does not match the canonical schema."""


class Direction(str, enum.Enum):
    MO = "MO"
    MT = "MT"


class Service(str, enum.Enum):
    VOICE = "VOICE"
    SMS = "SMS"
    DATA = "DATA"


class Label(str, enum.Enum):
    NORMAL = "NORMAL"
    FRAUD = "FRAUD"


@dataclass(frozen=True, slots=True)
class CdrRecord:
    """One network event leg.

    String identifiers may be empty and typed fields may be ``None`` when the
    source row had an empty value; :func:`clean` drops such records.
    """

    record_id: str
    timestamp: datetime | None
    sim_id: str
    imei: str
    imsi: str
    peer_id: str
    cell_id: str
    direction: Direction | None
    service: Service | None
    duration_sec: int | None
    peer_is_international: bool | None

    def is_complete(self) -> bool:
        return all(getattr(self, name) not in ("", None) for name in CDR_COLUMNS)

    def sort_key(self) -> tuple[datetime, str]:
        return (self.timestamp or _MIN_TS, self.record_id)


@dataclass(frozen=True)
class Dataset:
    records: tuple[CdrRecord, ...]
    window_start: datetime
    window_end: datetime

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @classmethod
    def from_records(
        cls,
        records: Iterable[CdrRecord],
        window_start: datetime | None = None,
        window_end: datetime | None = None,
    ) -> "Dataset":
        """Sort ``records`` and build a dataset.

        Missing bounds default to the tightest window covering the records,
        with the end one second past the last timestamp so that half-open
        slicing over ``[window_start, window_end)`` keeps every record.
        """
        recs = tuple(sorted(records, key=CdrRecord.sort_key))
        stamps = [r.timestamp for r in recs if r.timestamp is not None]
        if window_start is None:
            window_start = min(stamps) if stamps else EPOCH
        if window_end is None:
            window_end = max(stamps) + timedelta(seconds=1) if stamps else window_start
        return cls(recs, window_start, window_end)


@dataclass(frozen=True)
class CleanStats:
    missing: int = 0
    duplicates: int = 0
    extra_columns: int = 0

    def to_json(self) -> str:
        return json.dumps(
            {"missing": self.missing, "duplicates": self.duplicates, "extra_columns": self.extra_columns}
        )


@dataclass
class ParseResult:
    dataset: Dataset
    rejected: list[tuple[int, str]] = field(default_factory=list)
    extra_columns: int = 0

    def __iter__(self):
        # allows ``dataset, rejected = parse_cdr_file(path)``
        return iter((self.dataset, self.rejected))


def format_timestamp(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).strftime(TIMESTAMP_FORMAT)


def parse_timestamp(text: str) -> datetime:
    return datetime.strptime(text, TIMESTAMP_FORMAT).replace(tzinfo=timezone.utc)


def _parse_row(row: list[str]) -> CdrRecord:
    (record_id, ts, sim_id, imei, imsi, peer_id, cell_id, direction, service, duration, intl) = row

    def opt(text, conv, what):
        if text == "":
            return None
        try:
            return conv(text)
        except ValueError:
            raise ValueError(f"invalid {what}: {text!r}") from None

    timestamp = opt(ts, parse_timestamp, "timestamp")
    dir_ = opt(direction, Direction, "enum direction")
    svc = opt(service, Service, "enum service")
    dur = opt(duration, int, "duration_sec")
    if dur is not None and dur < 0:
        raise ValueError(f"negative duration_sec: {dur}")
    if intl not in ("", "0", "1"):
        raise ValueError(f"invalid boolean peer_is_international: {intl!r}")
    is_intl = None if intl == "" else intl == "1"
    if svc is Service.SMS and dur not in (None, 0):
        raise ValueError("SMS record with non-zero duration_sec")
    return CdrRecord(record_id, timestamp, sim_id, imei, imsi, peer_id, cell_id, dir_, svc, dur, is_intl)


def parse_cdr_text(text: str) -> ParseResult:
    reader = csv.reader(io.StringIO(text, newline=""))
    header = next(reader, None)
    if header is None:
        raise SchemaError("missing header")
    if tuple(header[: len(CDR_COLUMNS)]) != CDR_COLUMNS:
        raise SchemaError(f"unknown header: {','.join(header)}")
    width = len(header)
    records: list[CdrRecord] = []
    rejected: list[tuple[int, str]] = []
    for line_no, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != width:
            rejected.append((line_no, f"expected {width} fields, got {len(row)}"))
            continue
        try:
            records.append(_parse_row(row[: len(CDR_COLUMNS)]))
        except ValueError as exc:
            rejected.append((line_no, str(exc)))
    return ParseResult(Dataset.from_records(records), rejected, width - len(CDR_COLUMNS))


def parse_cdr_file(path: str | Path) -> ParseResult:
    """Parse a CDR CSV file; malformed rows are reported in ``rejected``."""
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_cdr_text(fh.read())


def _format_row(r: CdrRecord) -> list[str]:
    return [
        r.record_id,
        "" if r.timestamp is None else format_timestamp(r.timestamp),
        r.sim_id,
        r.imei,
        r.imsi,
        r.peer_id,
        r.cell_id,
        "" if r.direction is None else r.direction.value,
        "" if r.service is None else r.service.value,
        "" if r.duration_sec is None else str(r.duration_sec),
        "" if r.peer_is_international is None else str(int(r.peer_is_international)),
    ]


def serialize_cdr(records: Iterable[CdrRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CDR_COLUMNS)
    for r in records:
        writer.writerow(_format_row(r))
    return buf.getvalue()


def write_cdr_file(path: str | Path, records: Iterable[CdrRecord]) -> None:
    Path(path).write_text(serialize_cdr(records), encoding="utf-8", newline="")


def clean(dataset: Dataset, extra_columns: int = 0) -> tuple[Dataset, CleanStats]:
    """Drop records with empty fields, then duplicate record ids (first kept)."""
    complete = [r for r in dataset.records if r.is_complete()]
    seen: set[str] = set()
    kept: list[CdrRecord] = []
    for r in complete:
        if r.record_id in seen:
            continue
        seen.add(r.record_id)
        kept.append(r)
    stats = CleanStats(
        missing=len(dataset.records) - len(complete),
        duplicates=len(complete) - len(kept),
        extra_columns=extra_columns,
    )
    return Dataset(tuple(kept), dataset.window_start, dataset.window_end), stats


def slice_window(dataset: Dataset, start: datetime, end: datetime) -> Dataset:
    """Records with ``start <= timestamp < end``."""
    if start >= end:
        raise ValueError(f"slice_window requires start < end (got {start} >= {end})")
    kept = tuple(r for r in dataset.records if r.timestamp is not None and start <= r.timestamp < end)
    return Dataset(kept, start, end)


def read_labels(path: str | Path) -> dict[str, Label]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != LABEL_COLUMNS:
            raise SchemaError(f"label file header must be {','.join(LABEL_COLUMNS)}")
        labels: dict[str, Label] = {}
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise ValueError(f"line {line_no}: expected 2 fields")
            sim_id, label = row
            try:
                value = Label(label)
            except ValueError:
                raise ValueError(f"line {line_no}: invalid label {label!r}") from None
            if labels.get(sim_id, value) is not value:
                raise ValueError(f"line {line_no}: conflicting labels for {sim_id}")
            labels[sim_id] = value
    return labels


def serialize_labels(labels: Mapping[str, Label]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(LABEL_COLUMNS)
    for sim_id in sorted(labels):
        writer.writerow([sim_id, Label(labels[sim_id]).value])
    return buf.getvalue()


def write_labels(path: str | Path, labels: Mapping[str, Label]) -> None:
    Path(path).write_text(serialize_labels(labels), encoding="utf-8", newline="")
