"""Burst extraction and burst-length velocity decoding.

A DS unit for direction d at pixel p bursts one spike per tick from the
moment p sees an edge until the neighbour p+d does, so the burst length is
the transit time in ticks. With t_x = len(+x) - len(-x) and
t_y = len(+y) - len(-y) the normal flow is

    v = (t_x, t_y) / (t_x^2 + t_y^2)    [pixels per tick]
"""

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .corenet.model import DS_POPULATIONS, Population, SpikeLog, SpikeRecord
from .exceptions import EventFormatError

logger = logging.getLogger(__name__)

FLOW_HEADER = "x,y,t_ms,vx_px_per_ms,vy_px_per_ms"
GROUP_WINDOW = 1  # ticks between burst starts that still belong together


@dataclass(frozen=True)
class Burst:
    x: int
    y: int
    population: Population
    start_tick: int
    length: int

    @property
    def pixel(self) -> Tuple[int, int]:
        return self.x, self.y


@dataclass(frozen=True)
class FlowEstimate:
    x: int
    y: int
    t: int  # tick of the earliest burst start
    vx: float  # pixels/ms
    vy: float

    @property
    def speed(self) -> float:
        return math.hypot(self.vx, self.vy)

    @property
    def direction(self) -> float:
        """Radians in [0, 2*pi)."""
        angle = math.atan2(self.vy, self.vx)
        return angle + 2 * math.pi if angle < 0 else angle


def _as_log(spikes: Union[SpikeLog, Sequence[SpikeRecord]]) -> SpikeLog:
    if isinstance(spikes, SpikeLog):
        return spikes
    return SpikeLog.from_records(list(spikes))


def extract_bursts(
    spikes: Union[SpikeLog, Sequence[SpikeRecord]],
    end_tick: Optional[int] = None,
    timeout: Optional[int] = None,
) -> List[Burst]:
    """Split each DS unit's spike train into bursts.

    Spikes at most one tick apart belong to the same burst. A burst still
    running at ``end_tick - 1`` (the last simulated tick) has a censored
    length and is dropped; ``end_tick`` defaults to the one the log carries.

    A unit stopped by its own delayed inhibition rather than by its
    neighbour runs for exactly ``timeout`` ticks (``tau_d``): frame-edge
    units and anti-preferred units re-excited after the inhibition wore
    off. Such bursts carry no transit time, so bursts of ``timeout`` ticks
    or more are dropped.
    """
    log = _as_log(spikes)
    if end_tick is None:
        end_tick = log.end_tick
    log = log.filter(DS_POPULATIONS)
    if not len(log):
        return []

    order = np.lexsort((log.tick, log.population, log.x, log.y))
    x, y = log.x[order], log.y[order]
    pop, tick = log.population[order], log.tick[order]

    same_unit = (x[1:] == x[:-1]) & (y[1:] == y[:-1]) & (pop[1:] == pop[:-1])
    continues = same_unit & (tick[1:] - tick[:-1] <= 1)
    starts = np.flatnonzero(np.concatenate([[True], ~continues]))
    stops = np.concatenate([starts[1:], [len(tick)]])
    lengths = stops - starts
    last = tick[stops - 1]

    keep = np.ones(len(starts), dtype=bool)
    if end_tick is not None:
        censored = last >= end_tick - 1
        if censored.any():
            logger.warning("dropped %d bursts still running at the end of the run", int(censored.sum()))
        keep &= ~censored
    if timeout is not None:
        timed_out = lengths >= timeout
        if timed_out.any():
            logger.debug("dropped %d bursts of %d ticks or more", int(timed_out.sum()), timeout)
        keep &= ~timed_out

    bursts = [
        Burst(int(x[s]), int(y[s]), Population(int(pop[s])), int(tick[s]), int(n))
        for s, n in zip(starts[keep], lengths[keep])
    ]
    logger.debug("extracted %d bursts from %d DS spikes", len(bursts), len(log))
    return bursts


def decode_velocity(bursts: Sequence[Burst], tick_ms: float = 1.0) -> Optional[FlowEstimate]:
    """Velocity from the bursts of one pixel that started together.

    Missing populations count as length 0; returns None when both
    differences cancel.
    """
    if not bursts:
        return None
    pixels = {b.pixel for b in bursts}
    if len(pixels) != 1:
        raise ValueError(f"bursts span several pixels: {sorted(pixels)}")
    starts = [b.start_tick for b in bursts]
    if max(starts) - min(starts) > GROUP_WINDOW:
        raise ValueError(f"burst starts {min(starts)}..{max(starts)} are not simultaneous")
    lengths: Dict[Population, int] = {}
    for b in bursts:
        if b.population in lengths:
            raise ValueError(f"two {b.population.label} bursts in one group")
        lengths[b.population] = b.length

    t_x = lengths.get(Population.DS_PX, 0) - lengths.get(Population.DS_MX, 0)
    t_y = lengths.get(Population.DS_PY, 0) - lengths.get(Population.DS_MY, 0)
    if t_x == 0 and t_y == 0:
        return None
    norm = (t_x * t_x + t_y * t_y) * tick_ms
    x, y = bursts[0].pixel
    return FlowEstimate(x, y, min(starts), t_x / norm, t_y / norm)


def group_bursts(bursts: Iterable[Burst]) -> List[List[Burst]]:
    """Group each pixel's bursts whose starts lie within one tick of the first."""
    by_pixel: Dict[Tuple[int, int], List[Burst]] = {}
    for b in bursts:
        by_pixel.setdefault(b.pixel, []).append(b)

    groups: List[List[Burst]] = []
    for pixel in sorted(by_pixel):
        current: List[Burst] = []
        for b in sorted(by_pixel[pixel], key=lambda b: (b.start_tick, b.population)):
            if current and (
                b.start_tick - current[0].start_tick > GROUP_WINDOW
                or any(c.population == b.population for c in current)
            ):
                groups.append(current)
                current = []
            current.append(b)
        if current:
            groups.append(current)
    return groups


def decode_flow(
    spikes: Union[SpikeLog, Sequence[SpikeRecord]],
    end_tick: Optional[int] = None,
    timeout: Optional[int] = None,
    tick_ms: float = 1.0,
) -> List[FlowEstimate]:
    """Spike log to flow estimates, sorted by (t, y, x)."""
    groups = group_bursts(extract_bursts(spikes, end_tick, timeout))
    estimates = [e for e in (decode_velocity(g, tick_ms) for g in groups) if e is not None]
    estimates.sort(key=lambda e: (e.t, e.y, e.x))
    logger.info(
        "decoded %d flow estimates from %d burst groups", len(estimates), len(groups)
    )
    return estimates


def write_flow(path: Path, estimates: Sequence[FlowEstimate], tick_ms: float = 1.0) -> None:
    lines = [FLOW_HEADER]
    lines.extend(f"{e.x},{e.y},{e.t * tick_ms:g},{e.vx!r},{e.vy!r}" for e in estimates)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")
    logger.debug("wrote %d flow estimates to %s", len(estimates), path)


def read_flow(path: Path, tick_ms: float = 1.0) -> List[FlowEstimate]:
    estimates = []
    offset = 0
    for n, raw in enumerate(path.read_bytes().splitlines(keepends=True)):
        text = raw.decode("utf-8", errors="replace").strip()
        if n == 0:
            if text != FLOW_HEADER:
                raise EventFormatError(f"unexpected flow header {text!r}", 0)
        elif text:
            try:
                x, y, t_ms, vx, vy = text.split(",")
                estimates.append(
                    FlowEstimate(
                        int(x), int(y), int(round(float(t_ms) / tick_ms)), float(vx), float(vy)
                    )
                )
            except ValueError:
                raise EventFormatError(f"malformed flow line {text!r}", offset) from None
        offset += len(raw)
    return estimates
