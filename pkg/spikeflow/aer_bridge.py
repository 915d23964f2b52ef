"""Sensor-to-fabric address translation.

Pixels are forwarded through a layer of identity relay cores, one per 16x16
pixel region, addressed by a two-phase spike word:

* phase 1 - ``dcore_x: s8``, ``dcore_y: s8`` (core offset from the link's entry core)
* phase 2 - ``axon: u8``, ``target_time: u4``, 4 zero pad bits

On disk a word is the four bytes ``dcore_x, dcore_y, axon, target_time``.
"""

import logging
import math
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np

from .events import SensorGeometry, TickEvent
from .exceptions import CodecError, IngestError, RelayCapacityError

logger = logging.getLogger(__name__)

REGION = 16
AXONS_PER_CORE = REGION * REGION
CHIP_SIDE = 64  # 64x64 = 4096 addressable cores
TARGET_PERIOD = 16
DEFAULT_LEAD = 2

WORD_DTYPE = np.dtype(
    [("dcore_x", "i1"), ("dcore_y", "i1"), ("axon", "u1"), ("target_time", "u1")]
)


@dataclass(frozen=True)
class RelayMap:
    """Row-major pixel to (relay core, axon) mapping over 16x16 regions."""

    geometry: SensorGeometry
    region: int = REGION

    @property
    def grid(self) -> Tuple[int, int]:
        return (
            math.ceil(self.geometry.width / self.region),
            math.ceil(self.geometry.height / self.region),
        )

    @property
    def core_count(self) -> int:
        gx, gy = self.grid
        return gx * gy

    def core_of(self, x: int, y: int) -> Tuple[int, int]:
        return x // self.region, y // self.region

    def axon_of(self, x: int, y: int) -> int:
        return (y % self.region) * self.region + (x % self.region)

    def locate(self, x: int, y: int) -> Tuple[Tuple[int, int], int]:
        if not self.geometry.contains(x, y):
            raise IngestError(f"pixel ({x}, {y}) outside the sensor")
        return self.core_of(x, y), self.axon_of(x, y)

    def pixel_of(self, core: Tuple[int, int], axon: int) -> Tuple[int, int]:
        return (
            core[0] * self.region + axon % self.region,
            core[1] * self.region + axon // self.region,
        )

    def core_index(self, core: Tuple[int, int]) -> int:
        """Row-major position of a relay core within the relay layer."""
        return core[1] * self.grid[0] + core[0]


def build_relay(geometry: SensorGeometry, region: int = REGION) -> RelayMap:
    relay = RelayMap(geometry, region)
    gx, gy = relay.grid
    if gx > CHIP_SIDE or gy > CHIP_SIDE:
        raise RelayCapacityError(
            f"{geometry.width}x{geometry.height} sensor needs a {gx}x{gy} relay grid, "
            f"more than the {CHIP_SIDE}x{CHIP_SIDE} addressable cores"
        )
    logger.debug("relay layer: %dx%d cores of %d axons", gx, gy, region * region)
    return relay


@dataclass(frozen=True)
class TnSpikeWord:
    dcore_x: int
    dcore_y: int
    axon: int
    target_time: int

    def __post_init__(self):
        if not (-128 <= self.dcore_x <= 127 and -128 <= self.dcore_y <= 127):
            raise CodecError(f"core offset ({self.dcore_x}, {self.dcore_y}) exceeds s8")
        if not 0 <= self.axon < AXONS_PER_CORE:
            raise CodecError(f"axon {self.axon} exceeds u8")
        if not 0 <= self.target_time < TARGET_PERIOD:
            raise CodecError(f"target time {self.target_time} exceeds u4")

    def pack(self) -> Tuple[int, int]:
        """The two 16-bit phases, low byte first."""
        phase1 = (self.dcore_x & 0xFF) | ((self.dcore_y & 0xFF) << 8)
        phase2 = self.axon | (self.target_time << 8)
        return phase1, phase2

    @classmethod
    def unpack(cls, phase1: int, phase2: int) -> "TnSpikeWord":
        if phase2 >> 12:
            raise CodecError(f"pad bits set in phase 2 word 0x{phase2:04x}")

        def s8(b: int) -> int:
            return b - 256 if b & 0x80 else b

        return cls(
            dcore_x=s8(phase1 & 0xFF),
            dcore_y=s8((phase1 >> 8) & 0xFF),
            axon=phase2 & 0xFF,
            target_time=(phase2 >> 8) & 0x0F,
        )


def _check_lead(lead: int) -> None:
    if not 1 <= lead < TARGET_PERIOD:
        raise CodecError(
            f"lead time {lead} ticks is ambiguous under a {TARGET_PERIOD}-tick target clock"
        )


def encode_spike(
    event_tick: int,
    pixel: Tuple[int, int],
    relay: RelayMap,
    lead: int = DEFAULT_LEAD,
    source: Tuple[int, int] = (0, 0),
) -> TnSpikeWord:
    _check_lead(lead)
    (cx, cy), axon = relay.locate(*pixel)
    return TnSpikeWord(
        dcore_x=cx - source[0],
        dcore_y=cy - source[1],
        axon=axon,
        target_time=(event_tick + lead) % TARGET_PERIOD,
    )


def target_core(word: TnSpikeWord, source: Tuple[int, int] = (0, 0)) -> Tuple[int, int]:
    return source[0] + word.dcore_x, source[1] + word.dcore_y


def decode_spike(
    word: TnSpikeWord,
    receiver_core: Tuple[int, int],
    current_tick: int,
    source: Tuple[int, int] = (0, 0),
) -> Tuple[int, int]:
    """(deliver_tick, axon) of a word arriving at ``receiver_core`` during ``current_tick``.

    The delivery tick is the first tick after ``current_tick`` whose value
    modulo 16 equals the word's target time.
    """
    if target_core(word, source) != tuple(receiver_core):
        raise CodecError(
            f"word addressed to core {target_core(word, source)} "
            f"arrived at {tuple(receiver_core)}"
        )
    wait = (word.target_time - current_tick) % TARGET_PERIOD
    return current_tick + (wait or TARGET_PERIOD), word.axon


def ingest_latency(relay: bool, lead: int = DEFAULT_LEAD) -> int:
    """Ticks from a sensor event to the input neuron's spike.

    Through the relay layer: the relay axon fires after ``lead`` ticks and
    the relay neuron's spike needs one more tick to reach the flow core.
    Without it the event drives the flow core's sensor axon directly.
    """
    if not relay:
        return 0
    _check_lead(lead)
    return lead + 1


def route_events(
    events: Iterable[TickEvent], relay: RelayMap, lead: int = DEFAULT_LEAD
) -> Dict[int, List[Tuple[int, int]]]:
    """Encode and decode every event; returns deliver_tick -> [(relay core index, axon)]."""
    deliveries: Dict[int, List[Tuple[int, int]]] = defaultdict(list)
    count = 0
    for ev in events:
        word = encode_spike(ev.tick, (ev.x, ev.y), relay, lead)
        core = target_core(word)
        tick, axon = decode_spike(word, core, ev.tick)
        deliveries[tick].append((relay.core_index(core), axon))
        count += 1
    logger.debug("routed %d events over %d delivery ticks", count, len(deliveries))
    return dict(deliveries)


def dump_words(words: Sequence[TnSpikeWord]) -> bytes:
    records = np.array(
        [(w.dcore_x, w.dcore_y, w.axon, w.target_time) for w in words],
        dtype=WORD_DTYPE,
    )
    return records.tobytes()


def load_words(data: bytes) -> List[TnSpikeWord]:
    if len(data) % WORD_DTYPE.itemsize:
        raise CodecError(
            f"spike word dump of {len(data)} bytes is not a whole number of words"
        )
    records = np.frombuffer(data, dtype=WORD_DTYPE)
    words = []
    for i, rec in enumerate(records):
        if rec["target_time"] >> 4:
            raise CodecError(f"pad bits set in word {i}")
        words.append(
            TnSpikeWord(
                int(rec["dcore_x"]),
                int(rec["dcore_y"]),
                int(rec["axon"]),
                int(rec["target_time"]),
            )
        )
    return words


def save_words(path: Path, events: Iterable[TickEvent], relay: RelayMap, lead: int = DEFAULT_LEAD) -> int:
    words = [encode_spike(ev.tick, (ev.x, ev.y), relay, lead) for ev in events]
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(dump_words(words))
    logger.info("wrote %d spike words to %s", len(words), path)
    return len(words)
