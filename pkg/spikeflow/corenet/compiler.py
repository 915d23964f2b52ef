"""Tiling compiler for the optical-flow network.

Every flow core hosts one dx x dy pixel tile and has the same neuron layout
(``TileLayout``). For each own pixel q the core holds its refractory input
neuron, its delay neuron and the units DS-x(q), DS-y(q), DS+x(q - x) and
DS+y(q - y): a DS unit sits in the core that owns the pixel it is inhibited
by, so only South and East neighbours need copies of a core's signals.

The last core column (row) has no East (South) neighbour; when the frame
ends exactly on that tile boundary, the DS+x (DS+y) units of the last pixel
column (row) take the now unused input-copy slots.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np

from ..aer_bridge import AXONS_PER_CORE, REGION, build_relay
from ..events import QVGA, SensorGeometry
from ..exceptions import CapacityError, NeuronConfigError
from ..neuron import delay_config, ds_config, identity_config, refractory_config
from .model import (
    CORE_SIZE,
    DS_OFFSETS,
    EXCITATORY,
    INHIBITORY,
    AxonKind,
    CoreInfo,
    Layer,
    NetworkSpec,
    Population,
    axons_per_core,
    neurons_per_core,
)

logger = logging.getLogger(__name__)

CFG_REFRACTORY, CFG_DELAY, CFG_DS, CFG_IDENTITY = range(4)


@dataclass(frozen=True)
class TileLayout:
    """Local neuron and axon index ranges of one flow core."""

    dx: int
    dy: int

    @property
    def cells(self) -> int:
        return self.dx * self.dy

    # neurons
    @property
    def in_own(self) -> int:
        return 0

    @property
    def in_south(self) -> int:
        return self.cells

    @property
    def in_east(self) -> int:
        return self.cells + self.dx

    @property
    def dl_own(self) -> int:
        return self.cells + self.dx + self.dy

    @property
    def dl_south(self) -> int:
        return 2 * self.cells + self.dx + self.dy

    @property
    def dl_east(self) -> int:
        return 2 * self.cells + 2 * self.dx + self.dy

    def ds(self, population: Population) -> int:
        base = 2 * self.cells + 2 * self.dx + 2 * self.dy
        order = (Population.DS_MX, Population.DS_MY, Population.DS_PX, Population.DS_PY)
        return base + order.index(population) * self.cells

    # axons
    @property
    def ax_sensor(self) -> int:
        return 0

    def ax_signal(self, kind: AxonKind) -> Tuple[int, int, int]:
        """(local, west, north) axon bases carrying input or delayed signals."""
        a = self.cells
        if kind == AxonKind.INPUT:
            return a, 2 * a, 2 * a + self.dy
        return 2 * a + self.dx + self.dy, 3 * a + self.dx + self.dy, 3 * a + self.dx + 2 * self.dy

    def neuron_template(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Per-index (config, population, copy flag) shared by all flow cores."""
        n = neurons_per_core(self.dx, self.dy)
        config = np.empty(n, dtype=np.int64)
        population = np.empty(n, dtype=np.int64)
        copy = np.zeros(n, dtype=bool)

        config[: self.dl_own] = CFG_REFRACTORY
        population[: self.dl_own] = Population.INPUT
        copy[self.in_south : self.dl_own] = True

        ds_base = self.ds(Population.DS_MX)
        config[self.dl_own : ds_base] = CFG_DELAY
        population[self.dl_own : ds_base] = Population.DELAY
        copy[self.dl_south : ds_base] = True

        for pop in (Population.DS_MX, Population.DS_MY, Population.DS_PX, Population.DS_PY):
            start = self.ds(pop)
            config[start : start + self.cells] = CFG_DS
            population[start : start + self.cells] = pop
        return config, population, copy

    def axon_template(self) -> np.ndarray:
        kinds = np.empty(axons_per_core(self.dx, self.dy), dtype=np.int64)
        kinds[: self.cells] = AxonKind.SENSOR
        in_local = self.ax_signal(AxonKind.INPUT)[0]
        dl_local = self.ax_signal(AxonKind.DELAYED)[0]
        kinds[in_local:dl_local] = AxonKind.INPUT
        kinds[dl_local:] = AxonKind.DELAYED
        return kinds


class _Builder:
    """Accumulates global neuron/axon tables for one compile."""

    def __init__(self, geometry: SensorGeometry, dx: int, dy: int):
        self.geometry = geometry
        self.layout = TileLayout(dx, dy)
        self.dx, self.dy = dx, dy
        self.nx = math.ceil(geometry.width / dx)
        self.ny = math.ceil(geometry.height / dy)
        self.ns = neurons_per_core(dx, dy)
        self.na = axons_per_core(dx, dy)
        self.flow_cores = self.nx * self.ny

        config, population, copy = self.layout.neuron_template()
        self.neuron_config = np.tile(config, self.flow_cores)
        self.neuron_population = np.tile(population, self.flow_cores)
        self.neuron_copy = np.tile(copy, self.flow_cores)
        self.neuron_core = np.repeat(np.arange(self.flow_cores), self.ns)
        self.neuron_index = np.tile(np.arange(self.ns), self.flow_cores)
        total = self.flow_cores * self.ns
        self.neuron_x = np.full(total, -1, dtype=np.int64)
        self.neuron_y = np.full(total, -1, dtype=np.int64)
        self.neuron_route = np.full(total, -1, dtype=np.int64)

        self.axon_kind = np.tile(self.layout.axon_template(), self.flow_cores)
        self.axon_core = np.repeat(np.arange(self.flow_cores), self.na)
        self.axon_index = np.tile(np.arange(self.na), self.flow_cores)
        self.axon_source = np.full(self.flow_cores * self.na, -1, dtype=np.int64)

        self.syn_axon: List[np.ndarray] = []
        self.syn_neuron: List[np.ndarray] = []
        self.syn_sign: List[np.ndarray] = []

        ys, xs = np.mgrid[0 : geometry.height, 0 : geometry.width]
        self.px = xs.ravel().astype(np.int64)
        self.py = ys.ravel().astype(np.int64)
        self.cx = self.px // dx
        self.cy = self.py // dy
        self.i = self.px % dx
        self.j = self.py % dy
        self.cell = self.j * dx + self.i
        self.core = self.cy * self.nx + self.cx

    def nid(self, core: np.ndarray, local) -> np.ndarray:
        return core * self.ns + local

    def aid(self, core: np.ndarray, local) -> np.ndarray:
        return core * self.na + local

    def place(self, gids: np.ndarray, x: np.ndarray, y: np.ndarray, route=None) -> None:
        self.neuron_x[gids] = x
        self.neuron_y[gids] = y
        if route is not None:
            self.neuron_route[gids] = route

    def connect(self, axons: np.ndarray, neurons: np.ndarray, sign: int) -> None:
        self.syn_axon.append(np.asarray(axons, dtype=np.int64))
        self.syn_neuron.append(np.asarray(neurons, dtype=np.int64))
        self.syn_sign.append(np.full(len(neurons), sign, dtype=np.int8))

    def signal_axon(
        self, kind: AxonKind, px: np.ndarray, py: np.ndarray, host: np.ndarray
    ) -> np.ndarray:
        """Global axon carrying pixel (px, py)'s signal inside core ``host``."""
        hx, hy = host % self.nx, host // self.nx
        rx, ry = px - hx * self.dx, py - hy * self.dy
        local = (rx >= 0) & (rx < self.dx) & (ry >= 0) & (ry < self.dy)
        west = (rx == -1) & (ry >= 0) & (ry < self.dy)
        north = (ry == -1) & (rx >= 0) & (rx < self.dx)
        if not np.all(local | west | north):
            raise AssertionError("signal requested outside a core's reach")
        base_local, base_west, base_north = self.layout.ax_signal(kind)
        idx = np.select(
            [local, west, north],
            [base_local + ry * self.dx + rx, base_west + ry, base_north + rx],
        )
        return self.aid(host, idx)

    def in_frame(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return (x >= 0) & (x < self.geometry.width) & (y >= 0) & (y < self.geometry.height)

    # ------------------------------------------------------------------

    def build_pixel_modules(self) -> Dict[Population, np.ndarray]:
        L = self.layout
        px, py, core, cell, i, j = self.px, self.py, self.core, self.cell, self.i, self.j
        sensor = self.aid(core, L.ax_sensor + cell)
        in_local, in_west, in_north = L.ax_signal(AxonKind.INPUT)
        dl_local, dl_west, dl_north = L.ax_signal(AxonKind.DELAYED)

        inputs = self.nid(core, L.in_own + cell)
        self.place(inputs, px, py, self.aid(core, in_local + cell))
        self.connect(sensor, inputs, EXCITATORY)

        delays = self.nid(core, L.dl_own + cell)
        self.place(delays, px, py, self.aid(core, dl_local + cell))
        self.connect(self.aid(core, in_local + cell), delays, EXCITATORY)

        south = (j == self.dy - 1) & (self.cy < self.ny - 1)
        east = (i == self.dx - 1) & (self.cx < self.nx - 1)

        # boundary copies are driven by the same axons as the neurons they copy
        g = self.nid(core[south], L.in_south + i[south])
        self.place(g, px[south], py[south], self.aid(core[south] + self.nx, in_north + i[south]))
        self.connect(sensor[south], g, EXCITATORY)
        g = self.nid(core[east], L.in_east + j[east])
        self.place(g, px[east], py[east], self.aid(core[east] + 1, in_west + j[east]))
        self.connect(sensor[east], g, EXCITATORY)

        g = self.nid(core[south], L.dl_south + i[south])
        self.place(g, px[south], py[south], self.aid(core[south] + self.nx, dl_north + i[south]))
        self.connect(self.aid(core[south], in_local + cell[south]), g, EXCITATORY)
        g = self.nid(core[east], L.dl_east + j[east])
        self.place(g, px[east], py[east], self.aid(core[east] + 1, dl_west + j[east]))
        self.connect(self.aid(core[east], in_local + cell[east]), g, EXCITATORY)

        self.sensor_mask = np.zeros(len(self.axon_kind), dtype=bool)
        self.sensor_mask[sensor] = True

        shape = (self.geometry.height, self.geometry.width)
        maps = {
            Population.INPUT: inputs.reshape(shape),
            Population.DELAY: delays.reshape(shape),
        }
        self.sensor_axons = sensor.reshape(shape)
        for pop in DS_OFFSETS:
            maps[pop] = self.build_ds(pop).reshape(shape)
        return maps

    def build_ds(self, pop: Population) -> np.ndarray:
        L = self.layout
        px, py = self.px, self.py
        ox, oy = DS_OFFSETS[pop]

        if pop in (Population.DS_MX, Population.DS_MY):
            host = self.core
            gids = self.nid(host, L.ds(pop) + self.cell)
        else:
            hx, hy = px + ox, py + oy
            inside = (hx < self.nx * self.dx) & (hy < self.ny * self.dy)
            host_x = np.where(inside, hx, px)
            host_y = np.where(inside, hy, py)
            host = (host_y // self.dy) * self.nx + host_x // self.dx
            host_cell = (host_y % self.dy) * self.dx + host_x % self.dx
            slot_base = L.in_east if pop == Population.DS_PX else L.in_south
            slot = slot_base + (self.j if pop == Population.DS_PX else self.i)
            gids = self.nid(host, np.where(inside, L.ds(pop) + host_cell, slot))
            self.neuron_config[gids] = CFG_DS
            self.neuron_population[gids] = pop
            self.neuron_copy[gids] = False
            if not inside.all():
                logger.debug(
                    "%d %s units placed in boundary-copy slots", int((~inside).sum()), pop.label
                )

        self.place(gids, px, py)
        self.connect(self.signal_axon(AxonKind.INPUT, px, py, host), gids, EXCITATORY)
        self.connect(self.signal_axon(AxonKind.DELAYED, px, py, host), gids, INHIBITORY)

        nx_, ny_ = px + ox, py + oy
        has = self.in_frame(nx_, ny_)
        self.connect(
            self.signal_axon(AxonKind.INPUT, nx_[has], ny_[has], host[has]),
            gids[has],
            INHIBITORY,
        )
        return gids

    def build_relay(self) -> np.ndarray:
        relay = build_relay(self.geometry)
        gx, gy = relay.grid
        count = gx * gy
        n_off = len(self.neuron_config)
        a_off = len(self.axon_kind)

        local = np.tile(np.arange(AXONS_PER_CORE), count)
        rcore = np.repeat(np.arange(count), AXONS_PER_CORE)
        px = (rcore % gx) * relay.region + local % relay.region
        py = (rcore // gx) * relay.region + local // relay.region
        real = self.in_frame(px, py)
        neurons = n_off + np.arange(count * AXONS_PER_CORE)
        axons = a_off + np.arange(count * AXONS_PER_CORE)

        route = np.full(len(neurons), -1, dtype=np.int64)
        route[real] = self.sensor_axons[py[real], px[real]]

        self.neuron_config = np.concatenate(
            [self.neuron_config, np.full(len(neurons), CFG_IDENTITY)]
        )
        self.neuron_population = np.concatenate(
            [self.neuron_population, np.full(len(neurons), int(Population.RELAY))]
        )
        self.neuron_copy = np.concatenate([self.neuron_copy, np.zeros(len(neurons), bool)])
        self.neuron_core = np.concatenate([self.neuron_core, self.flow_cores + rcore])
        self.neuron_index = np.concatenate([self.neuron_index, local])
        self.neuron_x = np.concatenate([self.neuron_x, np.where(real, px, -1)])
        self.neuron_y = np.concatenate([self.neuron_y, np.where(real, py, -1)])
        self.neuron_route = np.concatenate([self.neuron_route, route])

        self.axon_kind = np.concatenate(
            [self.axon_kind, np.full(len(axons), int(AxonKind.RELAY))]
        )
        self.axon_core = np.concatenate([self.axon_core, self.flow_cores + rcore])
        self.axon_index = np.concatenate([self.axon_index, local])
        self.axon_source = np.concatenate([self.axon_source, np.full(len(axons), -1)])
        self.sensor_mask = np.concatenate([self.sensor_mask, np.zeros(len(axons), bool)])
        self.connect(axons, neurons, EXCITATORY)

        self.relay_cores = [
            (int(r % gx), int(r // gx)) for r in range(count)
        ]
        relay_map = np.full((self.geometry.height, self.geometry.width), -1, dtype=np.int64)
        relay_map[py[real], px[real]] = axons[real]
        return relay_map

    def finish(self) -> None:
        routed = np.flatnonzero(self.neuron_route >= 0)
        self.axon_source[self.neuron_route[routed]] = routed
        # inputs to the frame: sensor axons of real pixels and relay axons
        external = self.sensor_mask | (self.axon_kind == AxonKind.RELAY)
        unused = (self.axon_source < 0) & ~external
        self.axon_kind[unused] = AxonKind.UNUSED


def compile_flow_network(
    geometry: SensorGeometry = QVGA,
    dx: int = 6,
    dy: int = 6,
    tau_r: float = 60,
    tau_d: int = 50,
    relay: bool = True,
) -> NetworkSpec:
    """Instantiate the tiled optical-flow network for a sensor.

    Raises CapacityError when a core would need more than 256 neurons or
    axons, and NeuronConfigError unless tau_r > tau_d.
    """
    if dx < 1 or dy < 1:
        raise CapacityError(f"tile size must be positive, got {dx}x{dy}")
    if tau_r <= tau_d:
        raise NeuronConfigError(
            f"refractory period tau_r={tau_r} must exceed the delay tau_d={tau_d}"
        )
    ns, na = neurons_per_core(dx, dy), axons_per_core(dx, dy)
    if ns > CORE_SIZE:
        raise CapacityError(
            f"{dx}x{dy} tile needs {ns} neurons, more than {CORE_SIZE}", core=(0, 0)
        )
    if na > CORE_SIZE:
        raise CapacityError(
            f"{dx}x{dy} tile needs {na} axons, more than {CORE_SIZE}", core=(0, 0)
        )

    configs = (refractory_config(tau_r), delay_config(tau_d), ds_config(), identity_config())
    b = _Builder(geometry, dx, dy)
    pixel_maps = b.build_pixel_modules()
    relay_axons = b.build_relay() if relay else None
    b.finish()

    cores = [
        CoreInfo(k, Layer.FLOW, k % b.nx, k // b.nx, k * ns, ns, k * na, na)
        for k in range(b.flow_cores)
    ]
    if relay:
        n_off, a_off = b.flow_cores * ns, b.flow_cores * na
        for r, (rx, ry) in enumerate(b.relay_cores):
            cores.append(
                CoreInfo(
                    b.flow_cores + r,
                    Layer.RELAY,
                    rx,
                    ry,
                    n_off + r * AXONS_PER_CORE,
                    AXONS_PER_CORE,
                    a_off + r * AXONS_PER_CORE,
                    AXONS_PER_CORE,
                )
            )

    spec = NetworkSpec(
        geometry=geometry,
        dx=dx,
        dy=dy,
        tau_r=tau_r,
        tau_d=tau_d,
        grid=(b.nx, b.ny),
        configs=configs,
        cores=cores,
        neuron_config=b.neuron_config,
        neuron_core=b.neuron_core,
        neuron_index=b.neuron_index,
        neuron_population=b.neuron_population,
        neuron_x=b.neuron_x,
        neuron_y=b.neuron_y,
        neuron_copy=b.neuron_copy,
        neuron_route=b.neuron_route,
        axon_core=b.axon_core,
        axon_index=b.axon_index,
        axon_kind=b.axon_kind,
        axon_source=b.axon_source,
        synapse_axon=np.concatenate(b.syn_axon),
        synapse_neuron=np.concatenate(b.syn_neuron),
        synapse_sign=np.concatenate(b.syn_sign),
        pixel_maps=pixel_maps,
        sensor_axons=b.sensor_axons,
        relay_axons=relay_axons,
        relay_region=REGION if relay else 0,
    )
    logger.info(
        "compiled %d flow cores (%dx%d tiles, %d neurons each)%s",
        b.flow_cores,
        dx,
        dy,
        ns,
        f" + {len(b.relay_cores)} relay cores" if relay else "",
    )
    return spec
