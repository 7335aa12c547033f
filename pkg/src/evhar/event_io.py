"""Reading and writing DVS event streams.

Two on-disk formats are supported:

* AEDAT 2.0: optional ``#`` ASCII header lines followed by 8-byte big-endian
  records (32-bit address word, 32-bit timestamp in microseconds). How x, y
  and polarity are packed into the address word depends on the sensor, so
  decoding is driven by a :class:`SensorProfile`.
* CSV: one ``t,x,y,p`` record per line (``p`` is 1 for ON), optional
  ``t_us,x,y,p`` header.

Streams are held column-wise in numpy arrays; :class:`Event` is only used for
convenient element access.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field, replace
from typing import Iterator, NamedTuple

import numpy as np

from .errors import (
    AddressOutOfRange,
    MalformedLine,
    MonotonicityViolation,
    TruncatedRecord,
    UnencodableEvent,
    UnsupportedFormat,
)

log = logging.getLogger(__name__)

AEDAT2_MAGIC = b"#!AER-DAT2.0\r\n"
CSV_HEADER = "t_us,x,y,p"
WRAP = 1 << 32


class Polarity(enum.IntEnum):
    OFF = 0
    ON = 1


class Event(NamedTuple):
    t: int
    x: int
    y: int
    polarity: Polarity


@dataclass(frozen=True)
class SensorProfile:
    """Bit layout of the AEDAT address word for one sensor model."""

    name: str
    width: int
    height: int
    x_shift: int
    x_bits: int
    y_shift: int
    y_bits: int
    pol_shift: int
    on_bit: int = 1
    # address bits that mark non-DVS packets (APS frames, IMU samples)
    skip_mask: int = 0

    def __post_init__(self):
        if self.on_bit not in (0, 1):
            raise ValueError("on_bit must be 0 or 1")
        if self.width < 1 or self.height < 1:
            raise ValueError("sensor geometry must be positive")

    @property
    def geometry(self) -> tuple[int, int]:
        return (self.width, self.height)

    def with_geometry(self, width: int, height: int) -> "SensorProfile":
        return replace(self, width=width, height=height)


DVS128 = SensorProfile("DVS128", 128, 128, x_shift=1, x_bits=7, y_shift=8, y_bits=7, pol_shift=0)
DAVIS240 = SensorProfile(
    "DAVIS240", 240, 180, x_shift=12, x_bits=10, y_shift=22, y_bits=9, pol_shift=11, skip_mask=1 << 31
)
PROFILES = {p.name: p for p in (DVS128, DAVIS240)}


def get_profile(name: str) -> SensorProfile:
    try:
        return PROFILES[name.upper()]
    except KeyError:
        raise UnsupportedFormat(f"unknown sensor profile {name!r}; known: {sorted(PROFILES)}") from None


@dataclass(frozen=True, eq=False)
class EventStream:
    """Time-ordered events on a ``width x height`` sensor.

    Columns are read-only numpy arrays: ``t`` (int64, microseconds), ``x``,
    ``y`` (int32) and ``on`` (bool, True for ON events).
    """

    width: int
    height: int
    t: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    x: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int32))
    y: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int32))
    on: np.ndarray = field(default_factory=lambda: np.zeros(0, bool))

    def __post_init__(self):
        cols = {
            "t": np.asarray(self.t, dtype=np.int64),
            "x": np.asarray(self.x, dtype=np.int32),
            "y": np.asarray(self.y, dtype=np.int32),
            "on": np.asarray(self.on, dtype=bool),
        }
        n = len(cols["t"])
        for name, arr in cols.items():
            if arr.ndim != 1 or len(arr) != n:
                raise ValueError(f"column {name} must be 1-D with {n} entries")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        _check_bounds(self.x, self.y, self.width, self.height)
        if n and self.t[0] < 0:
            raise MonotonicityViolation("negative timestamp")
        _check_monotone(self.t)

    @classmethod
    def from_events(cls, events, width: int, height: int) -> "EventStream":
        events = list(events)
        if not events:
            return cls(width, height)
        t, x, y, p = zip(*events)
        return cls(width, height, np.array(t), np.array(x), np.array(y), np.array(p) == Polarity.ON)

    @property
    def geometry(self) -> tuple[int, int]:
        return (self.width, self.height)

    @property
    def duration_us(self) -> int:
        return int(self.t[-1] - self.t[0]) if len(self) else 0

    def __len__(self) -> int:
        return len(self.t)

    def __getitem__(self, i: int) -> Event:
        return Event(int(self.t[i]), int(self.x[i]), int(self.y[i]), Polarity(int(self.on[i])))

    def __iter__(self) -> Iterator[Event]:
        for i in range(len(self)):
            yield self[i]

    def __eq__(self, other) -> bool:
        if not isinstance(other, EventStream):
            return NotImplemented
        return (
            self.geometry == other.geometry
            and np.array_equal(self.t, other.t)
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.on, other.on)
        )

    def __repr__(self) -> str:
        return f"EventStream({self.width}x{self.height}, {len(self)} events, {self.duration_us} us)"


def _check_bounds(x, y, width, height):
    bad = (x < 0) | (x >= width) | (y < 0) | (y >= height)
    if bad.any():
        i = int(np.argmax(bad))
        raise AddressOutOfRange(f"event {i}: ({x[i]}, {y[i]}) outside {width}x{height}")


def _check_monotone(t):
    if len(t) > 1:
        dec = np.diff(t) < 0
        if dec.any():
            i = int(np.argmax(dec)) + 1
            raise MonotonicityViolation(f"event {i}: timestamp {t[i]} < {t[i - 1]}")


def _unwrap(t: np.ndarray) -> np.ndarray:
    """Undo 32-bit timestamp wrap-around; other decreases are left in place."""
    d = np.diff(t)
    wraps = np.concatenate([[0], np.cumsum(d < -(1 << 31))])
    return t + wraps * WRAP


def _is_header_line(line: bytes) -> bool:
    body = line.rstrip(b"\r\n")
    return all(32 <= b < 127 or b == 9 for b in body)


def _split_header(data: bytes) -> tuple[list[bytes], int]:
    lines = []
    pos = 0
    while pos < len(data) and data[pos] == ord("#"):
        end = data.find(b"\n", pos)
        end = len(data) if end < 0 else end + 1
        line = data[pos:end]
        if not _is_header_line(line):
            break
        lines.append(line)
        pos = end
    return lines, pos


def parse_aedat(data: bytes, profile: SensorProfile = DVS128, allow_wrap: bool = False) -> EventStream:
    """Decode an AEDAT 2.0 byte string into an :class:`EventStream`.

    Records flagged by ``profile.skip_mask`` are dropped and counted in a
    warning. Raises one of the :class:`~evhar.errors.EventIOError` subclasses
    on malformed input.
    """
    data = bytes(data)
    header, start = _split_header(data)
    if header and header[0].startswith(b"#!AER-DAT"):
        version = header[0][len(b"#!AER-DAT"):].strip()
        if not version.startswith(b"2."):
            raise UnsupportedFormat(f"AEDAT version {version.decode(errors='replace')} not supported")
    body = data[start:]
    if len(body) % 8:
        raise TruncatedRecord(f"{len(body) % 8} trailing bytes after {len(body) // 8} records")
    words = np.frombuffer(body, dtype=">u4").reshape(-1, 2).astype(np.int64)
    addr, ts = words[:, 0], words[:, 1]
    if profile.skip_mask:
        keep = (addr & profile.skip_mask) == 0
        if not keep.all():
            log.warning("skipped %d non-DVS records", int((~keep).sum()))
            addr, ts = addr[keep], ts[keep]
    x = (addr >> profile.x_shift) & ((1 << profile.x_bits) - 1)
    y = (addr >> profile.y_shift) & ((1 << profile.y_bits) - 1)
    on = ((addr >> profile.pol_shift) & 1) == profile.on_bit
    if allow_wrap:
        ts = _unwrap(ts)
    return EventStream(profile.width, profile.height, ts, x, y, on)


def parse_csv_events(text, geometry: tuple[int, int]) -> EventStream:
    """Parse ``t,x,y,p`` lines. ``geometry`` is ``(width, height)``."""
    if isinstance(text, (bytes, bytearray)):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedLine(f"not UTF-8: {exc}") from None
    rows = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if not rows and line.replace(" ", "") == CSV_HEADER:
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise MalformedLine(f"line {lineno}: expected 4 fields, got {len(parts)}")
        try:
            t, x, y, p = (int(s) for s in parts)
        except ValueError:
            raise MalformedLine(f"line {lineno}: non-integer field in {line!r}") from None
        if p not in (0, 1):
            raise MalformedLine(f"line {lineno}: polarity must be 0 or 1, got {p}")
        if t < 0:
            raise MalformedLine(f"line {lineno}: negative timestamp")
        rows.append((t, x, y, p))
    width, height = geometry
    if not rows:
        return EventStream(width, height)
    arr = np.array(rows, dtype=np.int64)
    return EventStream(width, height, arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3] == 1)


def serialize_events(stream: EventStream, fmt: str = "AEDAT2", profile: SensorProfile = DVS128) -> bytes:
    """Encode a stream as AEDAT 2.0 (``fmt="AEDAT2"``) or CSV (``fmt="CSV"``) bytes."""
    fmt = fmt.upper()
    if fmt == "CSV":
        p = stream.on.astype(np.int64)
        lines = [f"{t},{x},{y},{q}\n" for t, x, y, q in zip(stream.t.tolist(), stream.x.tolist(), stream.y.tolist(), p.tolist())]
        return "".join(lines).encode("utf-8")
    if fmt != "AEDAT2":
        raise UnsupportedFormat(f"unknown event format {fmt!r}")
    if len(stream) == 0:
        return AEDAT2_MAGIC
    x = stream.x.astype(np.int64)
    y = stream.y.astype(np.int64)
    if x.max() >= 1 << profile.x_bits or y.max() >= 1 << profile.y_bits:
        raise UnencodableEvent(f"coordinates do not fit the {profile.name} address layout")
    if stream.t.max() >= WRAP:
        raise UnencodableEvent("timestamp does not fit in 32 bits")
    polbit = np.where(stream.on, profile.on_bit, 1 - profile.on_bit).astype(np.int64)
    addr = (x << profile.x_shift) | (y << profile.y_shift) | (polbit << profile.pol_shift)
    if (addr & profile.skip_mask).any():
        raise UnencodableEvent("address collides with the profile's non-DVS marker bits")
    words = np.empty((len(stream), 2), dtype=">u4")
    words[:, 0] = addr
    words[:, 1] = stream.t
    return AEDAT2_MAGIC + words.tobytes()


def read_events(path, fmt: str, profile: SensorProfile, allow_wrap: bool = False) -> EventStream:
    with open(path, "rb") as fh:
        data = fh.read()
    if fmt.upper() == "CSV":
        return parse_csv_events(data, profile.geometry)
    if fmt.upper() in ("AEDAT", "AEDAT2"):
        return parse_aedat(data, profile, allow_wrap=allow_wrap)
    raise UnsupportedFormat(f"unknown event format {fmt!r}")


def write_events(path, stream: EventStream, fmt: str, profile: SensorProfile) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize_events(stream, fmt, profile))
