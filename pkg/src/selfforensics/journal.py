"""Append-only, hash-chained evidence journal and story ingestion.

One record per line, UTF-8::

    {"seq":0,"ts":0,"sensor":"S1","subsystem":"pump","values":{"power":1},"event":null,"prev_hash":"000…","hash":"…"}

Keys appear in that fixed order, ``values`` keys are sorted and there is no
insignificant whitespace.  ``hash`` is the SHA-256 of the line bytes with
the trailing ``,"hash":"…"`` member removed; ``prev_hash`` links each record
to its predecessor (64 zeros for record 0).
"""

from __future__ import annotations

import hashlib
import json
import os
import re
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping

from .model import (
    Cmp,
    EventIs,
    EvidentialStatement,
    Observation,
    ObservationSequence,
    SystemModel,
    Value,
    conjunction,
    kind_of,
)

GENESIS = "0" * 64
LEVELS = ("off", "events", "full")
_HEX64 = re.compile(r"[0-9a-f]{64}")
_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")


class JournalError(Exception):
    """Refused or failed journal operation."""


class JournalIOError(JournalError, OSError):
    """The journal storage could not be read or written."""


class IngestError(JournalError):
    pass


@dataclass(frozen=True)
class JournalRecord:
    seq: int
    ts: int
    sensor: str
    subsystem: str
    values: Mapping[str, Value]
    event: str | None
    prev_hash: str
    hash: str


def _body(seq, ts, sensor, subsystem, values, event, prev_hash) -> str:
    doc = {
        "seq": seq,
        "ts": ts,
        "sensor": sensor,
        "subsystem": subsystem,
        "values": dict(sorted(values.items())),
        "event": event,
        "prev_hash": prev_hash,
    }
    return json.dumps(doc, ensure_ascii=False, separators=(",", ":"))


def digest(body: str) -> str:
    return hashlib.sha256(body.encode("utf-8")).hexdigest()


def canonical_line(record: JournalRecord) -> str:
    """Serialized record without the newline."""
    body = _body(record.seq, record.ts, record.sensor, record.subsystem, record.values, record.event, record.prev_hash)
    return body[:-1] + f',"hash":"{record.hash}"}}'


def make_record(seq: int, prev_hash: str, ts: int, sensor: str, subsystem: str,
                values: Mapping[str, Value], event: str | None = None) -> JournalRecord:
    _check_payload(ts, sensor, subsystem, values, event)
    body = _body(seq, ts, sensor, subsystem, values, event, prev_hash)
    return JournalRecord(seq, ts, sensor, subsystem, dict(sorted(values.items())), event, prev_hash, digest(body))


def _check_payload(ts, sensor, subsystem, values, event) -> None:
    if isinstance(ts, bool) or not isinstance(ts, int):
        raise JournalError("ts must be an integer (microseconds)")
    for label, name in (("sensor", sensor), ("subsystem", subsystem)):
        if not isinstance(name, str) or not _IDENT.fullmatch(name):
            raise JournalError(f"{label} must be an identifier, got {name!r}")
    for key, value in values.items():
        if not isinstance(key, str):
            raise JournalError("value keys must be strings")
        try:
            kind_of(value)
        except ValueError as exc:
            raise JournalError(f"value {key}: {exc}") from None
    if event is not None and not isinstance(event, str):
        raise JournalError("event must be a string or None")


class _BadRecord(Exception):
    pass


def _parse_line(raw: bytes) -> JournalRecord:
    try:
        text = raw.decode("utf-8")
        doc = json.loads(text)
    except (UnicodeDecodeError, ValueError) as exc:
        raise _BadRecord(f"unparseable record: {exc}") from None
    keys = ["seq", "ts", "sensor", "subsystem", "values", "event", "prev_hash", "hash"]
    if not isinstance(doc, dict) or list(doc) != keys:
        raise _BadRecord("record keys are missing or out of order")
    if not isinstance(doc["values"], dict) or not isinstance(doc["seq"], int) or isinstance(doc["seq"], bool):
        raise _BadRecord("malformed record fields")
    if not (isinstance(doc["hash"], str) and _HEX64.fullmatch(doc["hash"])):
        raise _BadRecord("hash is not 64 lowercase hex digits")
    if not (isinstance(doc["prev_hash"], str) and _HEX64.fullmatch(doc["prev_hash"])):
        raise _BadRecord("prev_hash is not 64 lowercase hex digits")
    try:
        _check_payload(doc["ts"], doc["sensor"], doc["subsystem"], doc["values"], doc["event"])
    except Exception as exc:
        raise _BadRecord(str(exc)) from None
    record = JournalRecord(**doc)
    if canonical_line(record) != text:
        raise _BadRecord("record is not in canonical form")
    body = _body(record.seq, record.ts, record.sensor, record.subsystem, record.values, record.event, record.prev_hash)
    if digest(body) != record.hash:
        raise _BadRecord("hash mismatch")
    return record


# --------------------------------------------------------------------------
# verification


@dataclass(frozen=True)
class VerifyReport:
    status: str  # ok | truncated | corrupt
    records_ok: int
    first_bad_seq: int | None = None
    detail: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def to_dict(self) -> dict:
        return {"status": self.status, "records_ok": self.records_ok,
                "first_bad_seq": self.first_bad_seq, "detail": self.detail}


def _read_bytes(path, missing_ok: bool = False) -> bytes:
    try:
        return Path(path).read_bytes()
    except FileNotFoundError:
        if missing_ok:
            return b""
        raise JournalIOError(f"journal {path} does not exist") from None
    except OSError as exc:
        raise JournalIOError(f"cannot read journal {path}: {exc}") from exc


def scan(data: bytes) -> tuple[VerifyReport, list[JournalRecord]]:
    """Verify journal bytes; returns the report and the good prefix."""
    lines = data.split(b"\n")
    tail = lines.pop()  # bytes after the last newline
    records: list[JournalRecord] = []
    prev = GENESIS
    for index, raw in enumerate(lines):
        try:
            record = _parse_line(raw)
        except _BadRecord as exc:
            return VerifyReport("corrupt", index, index, f"record {index}: {exc}"), records
        if record.seq != index:
            return VerifyReport("corrupt", index, index, f"record {index}: seq is {record.seq}"), records
        if record.prev_hash != prev:
            return VerifyReport("corrupt", index, index, f"record {index}: chain broken"), records
        records.append(record)
        prev = record.hash
    if tail:
        n = len(records)
        return VerifyReport("truncated", n, None, f"partial record after record {n - 1}: {len(tail)} bytes"), records
    return VerifyReport("ok", len(records), None, f"{len(records)} records"), records


def verify(path) -> VerifyReport:
    return scan(_read_bytes(path))[0]


def read_records(path) -> list[JournalRecord]:
    """All records of a journal that verifies ok."""
    report, records = scan(_read_bytes(path))
    if not report.ok:
        raise JournalError(f"journal {path} is {report.status}: {report.detail}")
    return records


def verify_mirrors(primary, mirror) -> VerifyReport:
    """Verify *primary* and report divergence from *mirror* as corruption."""
    a, b = _read_bytes(primary), _read_bytes(mirror, missing_ok=True)
    report = scan(a)[0]
    if a == b or not report.ok:
        return report
    common = 0
    for la, lb in zip(a.split(b"\n"), b.split(b"\n")):
        if la != lb:
            break
        common += 1
    return VerifyReport("corrupt", common, common, f"mirror {mirror} diverges at record {common}")


# --------------------------------------------------------------------------
# writing


class Journal:
    """Single-writer handle.  ``append`` returns once the line is fsynced."""

    def __init__(self, path, mirror=None, *, repair: bool = False) -> None:
        self.path = Path(path)
        self.mirror = Path(mirror) if mirror is not None else None
        data = _read_bytes(self.path, missing_ok=True)
        report, records = scan(data)
        if report.status == "truncated" and repair:
            # the partial tail was never acknowledged
            keep = len(data) - len(data.split(b"\n")[-1])
            with open(self.path, "r+b") as fh:
                fh.truncate(keep)
                fh.flush()
                os.fsync(fh.fileno())
            report = VerifyReport("ok", len(records))
        if not report.ok:
            raise JournalError(f"refusing to write to {self.path}: {report.status} ({report.detail})")
        if self.mirror is not None and _read_bytes(self.mirror, missing_ok=True) != _read_bytes(self.path, missing_ok=True):
            raise JournalError(f"refusing to write: mirror {self.mirror} diverges from {self.path}")
        self.report = report
        self._next = len(records)
        self._prev = records[-1].hash if records else GENESIS

    def __len__(self) -> int:
        return self._next

    def append(self, ts: int, sensor: str, subsystem: str, values: Mapping[str, Value],
               event: str | None = None) -> JournalRecord:
        record = make_record(self._next, self._prev, ts, sensor, subsystem, values, event)
        line = (canonical_line(record) + "\n").encode("utf-8")
        for target in (self.path, self.mirror):
            if target is not None:
                _durable_append(target, line)
        self._next += 1
        self._prev = record.hash
        return record

    def extend(self, payloads: Iterable[Mapping]) -> list[JournalRecord]:
        return [self.append(**p) for p in payloads]


def _durable_append(path: Path, line: bytes) -> None:
    created = not path.exists()
    try:
        fd = os.open(path, os.O_WRONLY | os.O_APPEND | os.O_CREAT, 0o644)
        try:
            written = os.write(fd, line)
            if written != len(line):
                raise JournalIOError(f"short write to {path}")
            os.fsync(fd)
        finally:
            os.close(fd)
        if created:
            dfd = os.open(path.parent if str(path.parent) else ".", os.O_RDONLY)
            try:
                os.fsync(dfd)
            finally:
                os.close(dfd)
    except OSError as exc:
        raise JournalIOError(f"append to {path} failed: {exc}") from exc


# --------------------------------------------------------------------------
# ingestion


@dataclass(frozen=True)
class SensorSettings:
    weight: Fraction = Fraction(1)
    level: str = "full"


@dataclass
class SensorConfig:
    sensors: dict[str, SensorSettings] = field(default_factory=dict)
    default: SensorSettings = SensorSettings()

    def __getitem__(self, sensor: str) -> SensorSettings:
        return self.sensors.get(sensor, self.default)

    @classmethod
    def from_settings(cls, settings: Mapping[str, object]) -> "SensorConfig":
        """Read ``sensor_<id>_weight`` / ``sensor_<id>_level`` and ``default_weight``."""
        weights: dict[str, Fraction] = {}
        levels: dict[str, str] = {}
        for key, value in settings.items():
            m = re.fullmatch(r"sensor_(.+)_(weight|level)", key)
            if not m:
                continue
            if m.group(2) == "weight":
                weights[m.group(1)] = _weight(value, key)
            else:
                if value not in LEVELS:
                    raise JournalError(f"{key} must be one of {', '.join(LEVELS)}")
                levels[m.group(1)] = value
        default = SensorSettings(_weight(settings.get("default_weight", 1), "default_weight"))
        sensors = {
            s: SensorSettings(weights.get(s, default.weight), levels.get(s, "full"))
            for s in sorted(set(weights) | set(levels))
        }
        return cls(sensors, default)


def _weight(value, key: str) -> Fraction:
    try:
        return Observation(conjunction([]), 0, 0, value).w
    except Exception:
        raise JournalError(f"{key} must be a number in [0, 1]") from None


def ingest(records: Iterable[JournalRecord], model: SystemModel, sensors: SensorConfig | None = None,
           name: str = "journal") -> tuple[list[ObservationSequence], EvidentialStatement]:
    """Collapse each sensor's records into a story of exact-duration observations.

    Consecutive records of one sensor with equal values and the same event
    presence (with or without an event) form one observation with ``min`` =
    group size and ``max`` = 0; ``event == x`` joins the property when every
    record of the group carries ``x``.  At level ``events`` values are
    dropped and records are grouped by event name alone.
    """
    sensors = sensors or SensorConfig()
    by_sensor: dict[str, list[JournalRecord]] = {}
    for record in records:
        for fname, value in record.values.items():
            kind = model.schema.get(fname)
            if kind is None:
                raise IngestError(f"sensor {record.sensor}, seq {record.seq}: field {fname} not in model {model.name}")
            if kind_of(value) != kind:
                raise IngestError(f"sensor {record.sensor}, seq {record.seq}: field {fname} is {kind}, got {kind_of(value)}")
        by_sensor.setdefault(record.sensor, []).append(record)

    stories = []
    for sensor in sorted(by_sensor):
        conf = sensors[sensor]
        if conf.level == "off":
            continue
        observations = []
        group: list[JournalRecord] = []

        def key(r: JournalRecord):
            if conf.level == "events":
                return (r.event,)
            return (tuple(sorted(r.values.items())), r.event is not None)

        for record in sorted(by_sensor[sensor], key=lambda r: r.seq):
            if group and key(group[-1]) != key(record):
                observations.append(_collapse(group, conf))
                group = []
            group.append(record)
        observations.append(_collapse(group, conf))
        stories.append(ObservationSequence(sensor, tuple(observations), "seq"))
    return stories, EvidentialStatement(name, tuple(s.name for s in stories))


def _collapse(group: list[JournalRecord], conf: SensorSettings) -> Observation:
    first = group[0]
    parts = []
    if conf.level == "full":
        parts = [Cmp(f, "==", v) for f, v in sorted(first.values.items())]
    if first.event is not None and all(r.event == first.event for r in group):
        parts.append(EventIs(first.event))
    return Observation(conjunction(parts), len(group), 0, conf.weight, first.ts)


def statement_name(path) -> str:
    """Identifier derived from a journal file name."""
    stem = re.sub(r"[^A-Za-z0-9_]", "_", Path(path).stem) or "journal"
    return stem if _IDENT.fullmatch(stem) else f"j_{stem}"
