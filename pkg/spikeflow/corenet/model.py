"""Crossbar-core data model.

A network is held as flat numpy tables (neurons, axons, synapses) indexed by
global ids; ``CoreSpec`` is a per-core view rebuilt on demand. Flow cores are
numbered row-major over the tile grid, relay cores follow them.
"""

from dataclasses import dataclass, field
from enum import IntEnum
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union, overload

import numpy as np

from ..events import SensorGeometry
from ..exceptions import CapacityError
from ..neuron import NeuronConfig

CORE_SIZE = 256


class Population(IntEnum):
    INPUT = 0
    DELAY = 1
    DS_PX = 2
    DS_MX = 3
    DS_PY = 4
    DS_MY = 5
    RELAY = 6

    @property
    def label(self) -> str:
        return POPULATION_LABELS[self]

    @classmethod
    def from_label(cls, label: str) -> "Population":
        try:
            return LABEL_POPULATIONS[label]
        except KeyError:
            raise ValueError(f"unknown population '{label}'") from None


POPULATION_LABELS = {
    Population.INPUT: "input",
    Population.DELAY: "delay",
    Population.DS_PX: "DS+x",
    Population.DS_MX: "DS-x",
    Population.DS_PY: "DS+y",
    Population.DS_MY: "DS-y",
    Population.RELAY: "relay",
}
LABEL_POPULATIONS = {v: k for k, v in POPULATION_LABELS.items()}

DS_POPULATIONS = (Population.DS_PX, Population.DS_MX, Population.DS_PY, Population.DS_MY)

# unit step toward the inhibiting neighbour of each DS population
DS_OFFSETS: Dict[Population, Tuple[int, int]] = {
    Population.DS_PX: (1, 0),
    Population.DS_MX: (-1, 0),
    Population.DS_PY: (0, 1),
    Population.DS_MY: (0, -1),
}


class AxonKind(IntEnum):
    UNUSED = 0
    SENSOR = 1  # pixel input: fed by the relay layer or external events
    INPUT = 2  # refractory-filtered pixel signal
    DELAYED = 3  # delay-neuron output
    RELAY = 4  # relay-core input from the AER link


class Layer(IntEnum):
    FLOW = 0
    RELAY = 1


EXCITATORY = 1
INHIBITORY = -1


@dataclass(frozen=True)
class CoreInfo:
    core_id: int
    layer: Layer
    cx: int
    cy: int
    neuron_offset: int
    neuron_count: int
    axon_offset: int
    axon_count: int


@dataclass(frozen=True)
class AxonSpec:
    source: int  # global neuron id, -1 when fed from outside the fabric
    kind: AxonKind


@dataclass
class CoreSpec:
    """One crossbar core: axons, signed crossbar (axon rows, neuron columns), neurons."""

    cx: int
    cy: int
    layer: Layer
    axons: List[AxonSpec]
    crossbar: np.ndarray
    neurons: List[NeuronConfig]
    populations: List[Population]
    routes: List[int]  # global axon id per neuron, -1 when unrouted

    def __post_init__(self):
        if len(self.axons) > CORE_SIZE or len(self.neurons) > CORE_SIZE:
            raise CapacityError(
                f"{len(self.axons)} axons / {len(self.neurons)} neurons exceed {CORE_SIZE}",
                core=(self.cx, self.cy),
            )

    @property
    def excitatory(self) -> np.ndarray:
        return (self.crossbar == EXCITATORY).astype(np.uint8)

    @property
    def inhibitory(self) -> np.ndarray:
        return (self.crossbar == INHIBITORY).astype(np.uint8)

    @property
    def used_axons(self) -> int:
        return sum(1 for a in self.axons if a.kind != AxonKind.UNUSED)


@dataclass(frozen=True)
class NeuronId:
    core: Tuple[int, int]
    index: int
    population: Population
    pixel: Tuple[int, int]


@dataclass(frozen=True)
class SpikeRecord:
    neuron: NeuronId
    tick: int


@dataclass
class NetworkSpec:
    """Compiled optical-flow network.

    Neuron table columns are indexed by global neuron id, axon columns by
    global axon id. ``pixel_maps`` holds one (height, width) array of global
    neuron ids per population (input, delay and the four DS units) and
    ``sensor_axons`` / ``relay_axons`` the injection points per pixel.
    """

    geometry: SensorGeometry
    dx: int
    dy: int
    tau_r: float
    tau_d: int
    grid: Tuple[int, int]  # flow cores along x and y
    configs: Tuple[NeuronConfig, ...]
    cores: List[CoreInfo]

    neuron_config: np.ndarray
    neuron_core: np.ndarray
    neuron_index: np.ndarray
    neuron_population: np.ndarray
    neuron_x: np.ndarray
    neuron_y: np.ndarray
    neuron_copy: np.ndarray
    neuron_route: np.ndarray

    axon_core: np.ndarray
    axon_index: np.ndarray
    axon_kind: np.ndarray
    axon_source: np.ndarray

    synapse_axon: np.ndarray
    synapse_neuron: np.ndarray
    synapse_sign: np.ndarray

    pixel_maps: Dict[Population, np.ndarray] = field(default_factory=dict)
    sensor_axons: Optional[np.ndarray] = None
    relay_axons: Optional[np.ndarray] = None
    relay_region: int = 0

    @property
    def neuron_count(self) -> int:
        return len(self.neuron_config)

    @property
    def axon_count(self) -> int:
        return len(self.axon_kind)

    @property
    def has_relay(self) -> bool:
        return self.relay_axons is not None

    @property
    def flow_cores(self) -> List[CoreInfo]:
        return [c for c in self.cores if c.layer == Layer.FLOW]

    @property
    def relay_cores(self) -> List[CoreInfo]:
        return [c for c in self.cores if c.layer == Layer.RELAY]

    @property
    def neurons_per_core(self) -> int:
        """N_sigma = 6*dx*dy + 2*dx + 2*dy."""
        return neurons_per_core(self.dx, self.dy)

    def core_position(self, core_id: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        cx = np.array([c.cx for c in self.cores], dtype=np.int64)
        cy = np.array([c.cy for c in self.cores], dtype=np.int64)
        return cx[core_id], cy[core_id]

    def find_core(self, cx: int, cy: int, layer: Layer = Layer.FLOW) -> CoreInfo:
        for info in self.cores:
            if info.layer == layer and info.cx == cx and info.cy == cy:
                return info
        raise KeyError(f"no {layer.name.lower()} core at ({cx}, {cy})")

    def core(self, cx: int, cy: int, layer: Layer = Layer.FLOW) -> CoreSpec:
        """Materialize the crossbar view of one core."""
        info = self.find_core(cx, cy, layer)
        n0, n1 = info.neuron_offset, info.neuron_offset + info.neuron_count
        a0, a1 = info.axon_offset, info.axon_offset + info.axon_count

        crossbar = np.zeros((CORE_SIZE, CORE_SIZE), dtype=np.int8)
        mask = (self.synapse_axon >= a0) & (self.synapse_axon < a1)
        crossbar[
            self.synapse_axon[mask] - a0, self.synapse_neuron[mask] - n0
        ] = self.synapse_sign[mask]

        return CoreSpec(
            cx=info.cx,
            cy=info.cy,
            layer=info.layer,
            axons=[
                AxonSpec(int(self.axon_source[a]), AxonKind(int(self.axon_kind[a])))
                for a in range(a0, a1)
            ],
            crossbar=crossbar,
            neurons=[self.configs[int(k)] for k in self.neuron_config[n0:n1]],
            populations=[Population(int(p)) for p in self.neuron_population[n0:n1]],
            routes=[int(r) for r in self.neuron_route[n0:n1]],
        )

    def describe(self, gid: int) -> NeuronId:
        info = self.cores[int(self.neuron_core[gid])]
        return NeuronId(
            core=(info.cx, info.cy),
            index=int(self.neuron_index[gid]),
            population=Population(int(self.neuron_population[gid])),
            pixel=(int(self.neuron_x[gid]), int(self.neuron_y[gid])),
        )


def neurons_per_core(dx: int, dy: int) -> int:
    return 6 * dx * dy + 2 * dx + 2 * dy


def axons_per_core(dx: int, dy: int) -> int:
    return 3 * dx * dy + 2 * dx + 2 * dy


class SpikeLog(Sequence[SpikeRecord]):
    """Column store of recorded spikes, ordered by (tick, core, index).

    Iterating yields ``SpikeRecord`` objects; the numpy columns are used
    directly by the decoder and the CSV writer.
    ``end_tick`` is the tick after the last simulated one, when known.
    """

    COLUMNS = ("core_x", "core_y", "index", "population", "x", "y", "tick")

    def __init__(
        self,
        core_x: np.ndarray,
        core_y: np.ndarray,
        index: np.ndarray,
        population: np.ndarray,
        x: np.ndarray,
        y: np.ndarray,
        tick: np.ndarray,
        end_tick: Optional[int] = None,
    ):
        self.end_tick = end_tick
        self.core_x = np.asarray(core_x, dtype=np.int64)
        self.core_y = np.asarray(core_y, dtype=np.int64)
        self.index = np.asarray(index, dtype=np.int64)
        self.population = np.asarray(population, dtype=np.int64)
        self.x = np.asarray(x, dtype=np.int64)
        self.y = np.asarray(y, dtype=np.int64)
        self.tick = np.asarray(tick, dtype=np.int64)

    @classmethod
    def empty(cls, end_tick: Optional[int] = None) -> "SpikeLog":
        z = np.empty(0, dtype=np.int64)
        return cls(z, z, z, z, z, z, z, end_tick)

    @classmethod
    def from_records(cls, records: Sequence[SpikeRecord]) -> "SpikeLog":
        if not records:
            return cls.empty()
        return cls(
            np.array([r.neuron.core[0] for r in records]),
            np.array([r.neuron.core[1] for r in records]),
            np.array([r.neuron.index for r in records]),
            np.array([int(r.neuron.population) for r in records]),
            np.array([r.neuron.pixel[0] for r in records]),
            np.array([r.neuron.pixel[1] for r in records]),
            np.array([r.tick for r in records]),
        )

    def __len__(self) -> int:
        return len(self.tick)

    @overload
    def __getitem__(self, i: int) -> SpikeRecord: ...

    @overload
    def __getitem__(self, i: slice) -> "SpikeLog": ...

    def __getitem__(self, i: Union[int, slice]) -> Union[SpikeRecord, "SpikeLog"]:
        if isinstance(i, slice):
            return self.select(np.arange(len(self))[i])
        return SpikeRecord(
            NeuronId(
                core=(int(self.core_x[i]), int(self.core_y[i])),
                index=int(self.index[i]),
                population=Population(int(self.population[i])),
                pixel=(int(self.x[i]), int(self.y[i])),
            ),
            int(self.tick[i]),
        )

    def __iter__(self) -> Iterator[SpikeRecord]:
        for i in range(len(self)):
            yield self[i]

    def select(self, mask: np.ndarray) -> "SpikeLog":
        return SpikeLog(
            self.core_x[mask],
            self.core_y[mask],
            self.index[mask],
            self.population[mask],
            self.x[mask],
            self.y[mask],
            self.tick[mask],
            self.end_tick,
        )

    def filter(self, populations: Sequence[Population]) -> "SpikeLog":
        return self.select(np.isin(self.population, [int(p) for p in populations]))

    def equals(self, other: "SpikeLog") -> bool:
        return all(
            np.array_equal(getattr(self, c), getattr(other, c)) for c in self.COLUMNS
        )
