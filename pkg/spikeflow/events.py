"""Change-detection event model, tick quantization and recording file I/O.

Two recording formats are supported:

* ``binary`` - 9-byte little-endian records ``u16 x, u16 y, u32 t_us, u8 p``
  with no header (``p`` is 1 for ON, 0 for OFF).
* ``text`` - CSV lines ``x,y,t_us,p``, one event per line.
"""

import logging
from dataclasses import dataclass
from enum import Enum, IntEnum
from pathlib import Path
from typing import BinaryIO, Iterable, List, NamedTuple, Optional, Sequence, Union

import numpy as np

from .exceptions import EncodeError, EventFormatError, EventOrderError, IngestError, StimulusError

logger = logging.getLogger(__name__)

US_PER_MS = 1_000

RECORD_DTYPE = np.dtype(
    [("x", "<u2"), ("y", "<u2"), ("t", "<u4"), ("p", "u1")]
)
RECORD_SIZE = RECORD_DTYPE.itemsize  # 9

U16_MAX = 0xFFFF
U32_MAX = 0xFFFFFFFF


class Polarity(IntEnum):
    OFF = 0
    ON = 1


class EventFormat(str, Enum):
    TEXT = "text"
    BINARY = "binary"


@dataclass(frozen=True)
class SensorGeometry:
    """Pixel array size. DS units need at least one neighbour per axis."""

    width: int = 304
    height: int = 240

    def __post_init__(self):
        if self.width < 2 or self.height < 2:
            raise StimulusError(
                f"sensor geometry must be at least 2x2, got {self.width}x{self.height}"
            )

    def contains(self, x: int, y: int) -> bool:
        return 0 <= x < self.width and 0 <= y < self.height

    @property
    def pixel_count(self) -> int:
        return self.width * self.height


QVGA = SensorGeometry(304, 240)


@dataclass(frozen=True)
class Event:
    x: int
    y: int
    t: int  # microseconds since recording start
    p: Polarity = Polarity.ON


class TickEvent(NamedTuple):
    x: int
    y: int
    tick: int


Source = Union[bytes, bytearray, BinaryIO]


def _as_bytes(source: Source) -> bytes:
    if isinstance(source, (bytes, bytearray)):
        return bytes(source)
    return source.read()


def read_events(
    source: Source,
    format: Union[EventFormat, str] = EventFormat.BINARY,
    geometry: Optional[SensorGeometry] = None,
) -> List[Event]:
    """Parse an event recording, verifying timestamp order.

    Raises EventFormatError for malformed records and EventOrderError for a
    timestamp that is smaller than its predecessor; both carry the byte offset
    of the offending record.
    """
    data = _as_bytes(source)
    fmt = EventFormat(format)
    if fmt is EventFormat.BINARY:
        events, offsets = _parse_binary(data)
    else:
        events, offsets = _parse_text(data)

    for i in range(1, len(events)):
        if events[i].t < events[i - 1].t:
            raise EventOrderError(
                f"timestamp {events[i].t} precedes {events[i - 1].t}", offsets[i]
            )

    if geometry is not None:
        for event, offset in zip(events, offsets):
            if not geometry.contains(event.x, event.y):
                raise EventFormatError(
                    f"pixel ({event.x}, {event.y}) outside "
                    f"{geometry.width}x{geometry.height} sensor",
                    offset,
                )
    return events


def _parse_binary(data: bytes):
    usable = len(data) - len(data) % RECORD_SIZE
    if usable != len(data):
        raise EventFormatError(
            f"truncated record: {len(data) - usable} trailing bytes", usable
        )
    records = np.frombuffer(data, dtype=RECORD_DTYPE)
    bad = np.flatnonzero(records["p"] > 1)
    if bad.size:
        idx = int(bad[0])
        raise EventFormatError(
            f"polarity byte {int(records['p'][idx])} is not 0 or 1",
            idx * RECORD_SIZE,
        )
    events = [
        Event(int(x), int(y), int(t), Polarity(int(p)))
        for x, y, t, p in zip(records["x"], records["y"], records["t"], records["p"])
    ]
    offsets = [i * RECORD_SIZE for i in range(len(events))]
    return events, offsets


def _parse_text(data: bytes):
    events: List[Event] = []
    offsets: List[int] = []
    offset = 0
    for raw_line in data.splitlines(keepends=True):
        line = raw_line.strip()
        if line:
            fields = line.split(b",")
            if len(fields) != 4:
                raise EventFormatError(
                    f"expected 4 fields, got {len(fields)}", offset
                )
            try:
                x, y, t, p = (int(f) for f in fields)
            except ValueError:
                raise EventFormatError(
                    f"non-integer field in {line.decode(errors='replace')!r}", offset
                ) from None
            if p not in (0, 1) or x < 0 or y < 0 or t < 0:
                raise EventFormatError(
                    f"field out of range in {line.decode(errors='replace')!r}", offset
                )
            events.append(Event(x, y, t, Polarity(p)))
            offsets.append(offset)
        offset += len(raw_line)
    return events, offsets


def write_events(
    events: Sequence[Event], format: Union[EventFormat, str] = EventFormat.BINARY
) -> bytes:
    """Serialize time-ordered events; read_events(write_events(e)) == e."""
    fmt = EventFormat(format)
    record_size = RECORD_SIZE if fmt is EventFormat.BINARY else 0

    previous = None
    for i, event in enumerate(events):
        if not (0 <= event.x <= U16_MAX and 0 <= event.y <= U16_MAX):
            raise EncodeError(f"pixel ({event.x}, {event.y}) outside u16 range")
        if not 0 <= event.t <= U32_MAX:
            raise EncodeError(f"timestamp {event.t} outside u32 range")
        if previous is not None and event.t < previous:
            raise EventOrderError(
                f"timestamp {event.t} precedes {previous}", i * record_size
            )
        previous = event.t

    if fmt is EventFormat.BINARY:
        records = np.array(
            [(e.x, e.y, e.t, int(e.p)) for e in events], dtype=RECORD_DTYPE
        )
        return records.tobytes()

    return "".join(
        f"{e.x},{e.y},{e.t},{int(e.p)}\n" for e in events
    ).encode("ascii")


def quantize_to_ticks(events: Iterable[Event], tick_ms: float = 1.0) -> List[TickEvent]:
    """Map each event to tick floor(t / tick); polarity is dropped."""
    if tick_ms <= 0:
        raise IngestError(f"tick_ms must be positive, got {tick_ms}")
    tick_us = tick_ms * US_PER_MS
    # Integer division when the tick is a whole number of microseconds keeps
    # boundaries exact ([k*tick, (k+1)*tick) -> k)
    if float(tick_us).is_integer():
        step = int(tick_us)
        return [TickEvent(e.x, e.y, e.t // step) for e in events]
    return [TickEvent(e.x, e.y, int(np.floor(e.t / tick_us))) for e in events]


def load_events(
    path: Path, format: Union[EventFormat, str, None] = None
) -> List[Event]:
    """Read a recording from disk; format defaults from the file suffix."""
    fmt = EventFormat(format) if format else _format_for(path)
    with open(path, "rb") as f:
        events = read_events(f, fmt)
    logger.debug("read %d events from %s", len(events), path)
    return events


def save_events(
    path: Path, events: Sequence[Event], format: Union[EventFormat, str, None] = None
) -> None:
    fmt = EventFormat(format) if format else _format_for(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(write_events(events, fmt))
    logger.debug("wrote %d events to %s", len(events), path)


def _format_for(path: Path) -> EventFormat:
    if path.suffix.lower() in (".csv", ".txt"):
        return EventFormat.TEXT
    return EventFormat.BINARY
