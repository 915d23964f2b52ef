"""Structured-text placement files.

One ``<core>`` element per core. Its neuron, axon and synapse tables are
whitespace-separated integer rows so large networks stay inspectable:

* neurons  - ``config population copy x y route`` (route = global axon id or -1)
* axons    - ``kind source`` (source = global neuron id or -1)
* synapses - ``axon neuron sign`` with core-local indices, sign +1 or -1
"""

import logging
import xml.etree.ElementTree as ET
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from ..events import SensorGeometry
from ..exceptions import PlacementError
from ..neuron import NeuronConfig
from .model import AxonKind, CoreInfo, Layer, NetworkSpec, Population

logger = logging.getLogger(__name__)

FORMAT_VERSION = "1"

_CONFIG_FIELDS = ("w_e", "w_i", "threshold", "leak", "v_reset", "floor")


def _rows(table: np.ndarray) -> str:
    if table.size == 0:
        return ""
    return "\n" + "\n".join(" ".join(map(str, row)) for row in table.tolist()) + "\n"


def _table(text: Optional[str], columns: int, what: str) -> np.ndarray:
    values = (text or "").split()
    if len(values) % columns:
        raise PlacementError(f"{what} table has a partial row")
    try:
        return np.array(values, dtype=np.int64).reshape(-1, columns)
    except ValueError as e:
        raise PlacementError(f"{what} table: {e}") from e


def placement_xml(spec: NetworkSpec) -> str:
    root = ET.Element(
        "network",
        version=FORMAT_VERSION,
        width=str(spec.geometry.width),
        height=str(spec.geometry.height),
        dx=str(spec.dx),
        dy=str(spec.dy),
        tau_r=repr(float(spec.tau_r)),
        tau_d=str(spec.tau_d),
        grid_x=str(spec.grid[0]),
        grid_y=str(spec.grid[1]),
        relay_region=str(spec.relay_region),
    )

    configs = ET.SubElement(root, "configs")
    for k, c in enumerate(spec.configs):
        ET.SubElement(
            configs,
            "config",
            id=str(k),
            kind=c.kind,
            **{f: str(getattr(c, f)) for f in _CONFIG_FIELDS},
        )

    syn_core = spec.axon_core[spec.synapse_axon]
    order = np.argsort(syn_core, kind="stable")
    bounds = np.searchsorted(syn_core[order], np.arange(len(spec.cores) + 1))

    for info in spec.cores:
        core = ET.SubElement(
            root,
            "core",
            id=str(info.core_id),
            layer=info.layer.name.lower(),
            x=str(info.cx),
            y=str(info.cy),
        )
        n0, n1 = info.neuron_offset, info.neuron_offset + info.neuron_count
        a0, a1 = info.axon_offset, info.axon_offset + info.axon_count
        neurons = np.column_stack(
            [
                spec.neuron_config[n0:n1],
                spec.neuron_population[n0:n1],
                spec.neuron_copy[n0:n1].astype(np.int64),
                spec.neuron_x[n0:n1],
                spec.neuron_y[n0:n1],
                spec.neuron_route[n0:n1],
            ]
        )
        ET.SubElement(core, "neurons", count=str(info.neuron_count)).text = _rows(neurons)
        axons = np.column_stack([spec.axon_kind[a0:a1], spec.axon_source[a0:a1]])
        ET.SubElement(core, "axons", count=str(info.axon_count)).text = _rows(axons)

        sel = order[bounds[info.core_id] : bounds[info.core_id + 1]]
        synapses = np.column_stack(
            [
                spec.synapse_axon[sel] - a0,
                spec.synapse_neuron[sel] - n0,
                spec.synapse_sign[sel].astype(np.int64),
            ]
        )
        ET.SubElement(core, "synapses", count=str(len(sel))).text = _rows(synapses)

    ET.indent(root, space="  ", level=0)
    return '<?xml version="1.0" encoding="utf-8"?>\n' + ET.tostring(root, encoding="unicode")


def write_placement(path: Path, spec: NetworkSpec) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        f.write(placement_xml(spec))
    logger.info("wrote placement of %d cores to %s", len(spec.cores), path)


def read_placement(path: Path) -> NetworkSpec:
    """Rebuild a NetworkSpec written by ``write_placement``."""
    try:
        root = ET.parse(path).getroot()
    except ET.ParseError as e:
        raise PlacementError(f"{path}: {e}") from e
    if root.tag != "network":
        raise PlacementError(f"{path}: root element is <{root.tag}>, expected <network>")

    try:
        geometry = SensorGeometry(int(root.attrib["width"]), int(root.attrib["height"]))
        dx, dy = int(root.attrib["dx"]), int(root.attrib["dy"])
        tau_r = float(root.attrib["tau_r"])
        tau_d = int(root.attrib["tau_d"])
        grid = (int(root.attrib["grid_x"]), int(root.attrib["grid_y"]))
        relay_region = int(root.attrib.get("relay_region", "0"))
    except (KeyError, ValueError) as e:
        raise PlacementError(f"{path}: bad network attributes ({e})") from e

    configs: List[NeuronConfig] = []
    for elem in root.findall("configs/config"):
        configs.append(
            NeuronConfig(
                kind=elem.get("kind", "custom"),
                **{f: int(elem.attrib[f]) for f in _CONFIG_FIELDS},
            )
        )

    cores: List[CoreInfo] = []
    neuron_tables, axon_tables, synapse_tables = [], [], []
    n_off = a_off = 0
    for elem in root.findall("core"):
        neurons = _table(elem.findtext("neurons"), 6, "neuron")
        axons = _table(elem.findtext("axons"), 2, "axon")
        synapses = _table(elem.findtext("synapses"), 3, "synapse")
        core_id = len(cores)
        layer = Layer[elem.get("layer", "flow").upper()]
        cores.append(
            CoreInfo(
                core_id,
                layer,
                int(elem.get("x", "0")),
                int(elem.get("y", "0")),
                n_off,
                len(neurons),
                a_off,
                len(axons),
            )
        )
        neuron_tables.append(np.column_stack([neurons, np.full(len(neurons), core_id)]))
        axon_tables.append(np.column_stack([axons, np.full(len(axons), core_id)]))
        if len(synapses):
            synapses = synapses.copy()
            synapses[:, 0] += a_off
            synapses[:, 1] += n_off
            synapse_tables.append(synapses)
        n_off += len(neurons)
        a_off += len(axons)

    if not cores:
        raise PlacementError(f"{path}: no cores")
    nt = np.concatenate(neuron_tables)
    at = np.concatenate(axon_tables)
    st = np.concatenate(synapse_tables) if synapse_tables else np.empty((0, 3), np.int64)

    neuron_index = np.concatenate([np.arange(c.neuron_count) for c in cores])
    axon_index = np.concatenate([np.arange(c.axon_count) for c in cores])

    spec = NetworkSpec(
        geometry=geometry,
        dx=dx,
        dy=dy,
        tau_r=tau_r,
        tau_d=tau_d,
        grid=grid,
        configs=tuple(configs),
        cores=cores,
        neuron_config=nt[:, 0],
        neuron_core=nt[:, 6],
        neuron_index=neuron_index,
        neuron_population=nt[:, 1],
        neuron_x=nt[:, 3],
        neuron_y=nt[:, 4],
        neuron_copy=nt[:, 2].astype(bool),
        neuron_route=nt[:, 5],
        axon_core=at[:, 2],
        axon_index=axon_index,
        axon_kind=at[:, 0],
        axon_source=at[:, 1],
        synapse_axon=st[:, 0],
        synapse_neuron=st[:, 1],
        synapse_sign=st[:, 2].astype(np.int8),
        relay_region=relay_region,
    )
    _rebuild_maps(spec)
    logger.info("read placement of %d cores from %s", len(cores), path)
    return spec


def _rebuild_maps(spec: NetworkSpec) -> None:
    shape = (spec.geometry.height, spec.geometry.width)
    real = (spec.neuron_x >= 0) & ~spec.neuron_copy
    maps: Dict[Population, np.ndarray] = {}
    for pop in Population:
        if pop == Population.RELAY:
            continue
        grid = np.full(shape, -1, dtype=np.int64)
        ids = np.flatnonzero(real & (spec.neuron_population == pop))
        grid[spec.neuron_y[ids], spec.neuron_x[ids]] = ids
        maps[pop] = grid
    spec.pixel_maps = maps

    target = spec.synapse_neuron
    kinds = spec.axon_kind[spec.synapse_axon]
    sensor = np.full(shape, -1, dtype=np.int64)
    m = (
        (kinds == AxonKind.SENSOR)
        & real[target]
        & (spec.neuron_population[target] == Population.INPUT)
    )
    sensor[spec.neuron_y[target[m]], spec.neuron_x[target[m]]] = spec.synapse_axon[m]
    spec.sensor_axons = sensor

    if spec.relay_region:
        relay = np.full(shape, -1, dtype=np.int64)
        m = (kinds == AxonKind.RELAY) & (spec.neuron_x[target] >= 0)
        relay[spec.neuron_y[target[m]], spec.neuron_x[target[m]]] = spec.synapse_axon[m]
        spec.relay_axons = relay
