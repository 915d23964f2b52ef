"""Tick-synchronous fabric simulator and spike log files.

A spike emitted at tick t reaches its routed axon at tick t+1. Within a tick
every neuron sees the axons active in that tick and is stepped by
``neuron.step_array``; cores can be stepped in parallel, with the wait on
all blocks acting as the tick barrier.
"""

import logging
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from itertools import repeat
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sps

from ..aer_bridge import DEFAULT_LEAD, RelayMap, ingest_latency, route_events
from ..events import TickEvent
from ..exceptions import EventFormatError, IngestError
from ..neuron import NeuronParams, step_array
from .model import (
    DS_POPULATIONS,
    EXCITATORY,
    INHIBITORY,
    LABEL_POPULATIONS,
    POPULATION_LABELS,
    Layer,
    NetworkSpec,
    Population,
    SpikeLog,
)

logger = logging.getLogger(__name__)

RECORDED_BY_DEFAULT = (Population.INPUT, Population.DELAY) + DS_POPULATIONS
SPIKE_LOG_HEADER = ",".join(SpikeLog.COLUMNS)
END_TICK_PREFIX = "# end_tick="


def connectivity(spec: NetworkSpec) -> Tuple[sps.csr_matrix, sps.csr_matrix]:
    """Excitatory and inhibitory (neuron x axon) synapse count matrices."""
    shape = (spec.neuron_count, spec.axon_count)
    mats = []
    for sign in (EXCITATORY, INHIBITORY):
        m = spec.synapse_sign == sign
        ones = np.ones(int(m.sum()), dtype=np.int64)
        mats.append(
            sps.coo_matrix(
                (ones, (spec.synapse_neuron[m], spec.synapse_axon[m])),
                shape=shape,
                dtype=np.int64,
            ).tocsr()
        )
    return mats[0], mats[1]


def ingest(
    spec: NetworkSpec,
    inputs: Iterable[TickEvent],
    ticks: range,
    lead: int = DEFAULT_LEAD,
) -> Dict[int, np.ndarray]:
    """Map input events to the global axons they activate, keyed by tick."""
    events: List[TickEvent] = []
    for ev in inputs:
        if not spec.geometry.contains(ev.x, ev.y):
            raise IngestError(f"input pixel ({ev.x}, {ev.y}) outside the sensor")
        if ev.tick not in ticks:
            raise IngestError(
                f"input tick {ev.tick} outside simulated range "
                f"[{ticks.start}, {ticks.stop})"
            )
        events.append(ev)

    grouped: Dict[int, List[int]] = defaultdict(list)
    if spec.has_relay:
        relay = RelayMap(spec.geometry, spec.relay_region)
        first = next(c for c in spec.cores if c.layer == Layer.RELAY)
        for tick, hits in route_events(events, relay, lead).items():
            grouped[tick].extend(
                first.axon_offset + core * first.axon_count + axon for core, axon in hits
            )
    else:
        assert spec.sensor_axons is not None
        for ev in events:
            grouped[ev.tick].append(int(spec.sensor_axons[ev.y, ev.x]))

    dropped = [t for t in grouped if t >= ticks.stop]
    for t in dropped:
        del grouped[t]
    if dropped:
        logger.debug("%d delivery ticks fall after the simulated range", len(dropped))
    return {t: np.asarray(axons, dtype=np.int64) for t, axons in grouped.items()}


class _Block:
    """A core-aligned slice of neurons stepped by one worker."""

    def __init__(self, start: int, stop: int, exc, inh, params: NeuronParams):
        self.start, self.stop = start, stop
        self.exc = exc[start:stop]
        self.inh = inh[start:stop]
        self.params = params.slice(start, stop)

    def step(self, V: np.ndarray, active: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return step_array(
            V[self.start : self.stop], self.params, self.exc @ active, self.inh @ active
        )


def _blocks(spec: NetworkSpec, workers: int, exc, inh, params) -> List[_Block]:
    bounds = np.array([c.neuron_offset for c in spec.cores] + [spec.neuron_count])
    cuts = np.linspace(0, len(spec.cores), workers + 1).round().astype(int)
    return [
        _Block(int(bounds[a]), int(bounds[b]), exc, inh, params)
        for a, b in zip(cuts[:-1], cuts[1:])
        if b > a
    ]


def simulate(
    spec: NetworkSpec,
    inputs: Iterable[TickEvent],
    ticks: Union[int, range],
    workers: int = 0,
    populations: Optional[Sequence[Population]] = None,
    lead: int = DEFAULT_LEAD,
) -> SpikeLog:
    """Run the network and return the recorded spikes.

    ``populations`` selects what is recorded (default: input, delay and DS
    units); boundary copies are never recorded since they repeat the spikes
    of the neuron they copy. ``workers > 0`` steps core-aligned blocks in a
    thread pool and yields the same log as the single-threaded run.
    """
    if isinstance(ticks, int):
        ticks = range(ticks)
    if ticks.step != 1:
        raise IngestError("ticks must be a contiguous range")

    deliveries = ingest(spec, inputs, ticks, lead)
    exc, inh = connectivity(spec)
    params = NeuronParams.from_configs(spec.configs, spec.neuron_config)

    wanted = RECORDED_BY_DEFAULT if populations is None else tuple(populations)
    record = np.isin(spec.neuron_population, [int(p) for p in wanted]) & ~spec.neuron_copy
    route = spec.neuron_route

    V = np.zeros(spec.neuron_count, dtype=np.int64)
    pending = np.zeros(spec.axon_count, dtype=np.int64)
    fired_ids: List[np.ndarray] = []
    fired_ticks: List[np.ndarray] = []

    executor = ThreadPoolExecutor(max_workers=workers) if workers > 0 else None
    blocks = _blocks(spec, workers, exc, inh, params) if executor else []
    logger.info(
        "simulating %d ticks over %d neurons (%s, ingest latency %d)",
        len(ticks),
        spec.neuron_count,
        f"{len(blocks)} blocks" if executor else "single-threaded",
        ingest_latency(spec.has_relay, lead),
    )

    try:
        for t in ticks:
            active = pending
            if t in deliveries:
                active = pending.copy()
                np.add.at(active, deliveries[t], 1)
            if not active.any() and not V.any():
                pending = active
                continue

            if executor is not None:
                spiked = np.empty(spec.neuron_count, dtype=bool)
                V_next = np.empty_like(V)
                # map() returns in block order once every block has stepped
                steps = executor.map(_Block.step, blocks, repeat(V), repeat(active))
                for block, (v, s) in zip(blocks, steps):
                    V_next[block.start : block.stop] = v
                    spiked[block.start : block.stop] = s
                V = V_next
            else:
                V, spiked = step_array(V, params, exc @ active, inh @ active)

            fired = np.flatnonzero(spiked)
            targets = route[fired]
            pending = np.bincount(targets[targets >= 0], minlength=spec.axon_count)
            kept = fired[record[fired]]
            if len(kept):
                fired_ids.append(kept)
                fired_ticks.append(np.full(len(kept), t, dtype=np.int64))
    finally:
        if executor is not None:
            executor.shutdown()

    if not fired_ids:
        logger.info("no spikes recorded")
        return SpikeLog.empty(ticks.stop)
    gids = np.concatenate(fired_ids)
    core_x, core_y = spec.core_position(spec.neuron_core[gids])
    log = SpikeLog(
        core_x,
        core_y,
        spec.neuron_index[gids],
        spec.neuron_population[gids],
        spec.neuron_x[gids],
        spec.neuron_y[gids],
        np.concatenate(fired_ticks),
        ticks.stop,
    )
    logger.info("recorded %d spikes", len(log))
    return log


def write_spike_log(path: Path, log: SpikeLog) -> None:
    """CSV ``core_x,core_y,index,population,x,y,tick``, one spike per line.

    A known end tick goes first as ``# end_tick=N`` so a later decode can
    drop the bursts the run cut short.
    """
    labels = [POPULATION_LABELS[Population(p)] for p in range(len(POPULATION_LABELS))]
    lines = [] if log.end_tick is None else [f"{END_TICK_PREFIX}{log.end_tick}"]
    lines.append(SPIKE_LOG_HEADER)
    lines.extend(
        f"{cx},{cy},{i},{labels[p]},{x},{y},{t}"
        for cx, cy, i, p, x, y, t in zip(
            log.core_x.tolist(),
            log.core_y.tolist(),
            log.index.tolist(),
            log.population.tolist(),
            log.x.tolist(),
            log.y.tolist(),
            log.tick.tolist(),
        )
    )
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")
    logger.debug("wrote %d spikes to %s", len(log), path)


def read_spike_log(path: Path) -> SpikeLog:
    end_tick: Optional[int] = None
    header_seen = False
    rows = []
    offset = 0
    for raw in path.read_bytes().splitlines(keepends=True):
        text = raw.decode("utf-8", errors="replace").strip()
        if not header_seen:
            if text.startswith(END_TICK_PREFIX):
                try:
                    end_tick = int(text[len(END_TICK_PREFIX) :])
                except ValueError:
                    raise EventFormatError(f"malformed end tick {text!r}", offset) from None
            elif text != SPIKE_LOG_HEADER:
                raise EventFormatError(f"unexpected spike log header {text!r}", offset)
            else:
                header_seen = True
        elif text:
            fields = text.split(",")
            try:
                pop = LABEL_POPULATIONS[fields[3]]
                cx, cy, idx, x, y, t = (int(fields[k]) for k in (0, 1, 2, 4, 5, 6))
            except (IndexError, KeyError, ValueError):
                raise EventFormatError(f"malformed spike line {text!r}", offset) from None
            rows.append((cx, cy, idx, int(pop), x, y, t))
        offset += len(raw)
    if not header_seen:
        raise EventFormatError("missing spike log header", offset)
    if not rows:
        return SpikeLog.empty(end_tick)
    table = np.array(rows, dtype=np.int64)
    return SpikeLog(*(table[:, k] for k in range(7)), end_tick=end_tick)
