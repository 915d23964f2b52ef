"""Structural checks and resource accounting for compiled networks."""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List

import numpy as np

from .model import (
    CORE_SIZE,
    DS_OFFSETS,
    EXCITATORY,
    INHIBITORY,
    AxonKind,
    Layer,
    NetworkSpec,
    Population,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CoreUsage:
    core_id: int
    layer: Layer
    cx: int
    cy: int
    neurons: int
    active_neurons: int
    axons: int


@dataclass
class ValidationReport:
    violations: List[str] = field(default_factory=list)
    flow_cores: int = 0
    relay_cores: int = 0
    neurons_per_flow_core: int = 0
    neurons_per_relay_core: int = 0
    flow_neurons: int = 0
    relay_neurons: int = 0
    usage: List[CoreUsage] = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return not self.violations

    @property
    def total_cores(self) -> int:
        return self.flow_cores + self.relay_cores

    @property
    def nominal_neurons(self) -> int:
        """Every core counted at the flow-core neuron budget."""
        return self.total_cores * self.neurons_per_flow_core

    @property
    def actual_neurons(self) -> int:
        return self.flow_neurons + self.relay_neurons

    @property
    def axons_within_neurons(self) -> bool:
        return all(
            u.axons <= u.neurons for u in self.usage if u.layer == Layer.FLOW
        )

    def to_dict(self) -> Dict[str, Any]:
        flow = [u for u in self.usage if u.layer == Layer.FLOW]
        return {
            "valid": self.valid,
            "violations": list(self.violations),
            "flow_cores": self.flow_cores,
            "relay_cores": self.relay_cores,
            "total_cores": self.total_cores,
            "neurons_per_flow_core": self.neurons_per_flow_core,
            "neurons_per_relay_core": self.neurons_per_relay_core,
            "nominal_neurons": self.nominal_neurons,
            "actual_neurons": self.actual_neurons,
            "max_axons_per_flow_core": max((u.axons for u in flow), default=0),
            "axons_within_neurons": self.axons_within_neurons,
        }


def validate(spec: NetworkSpec) -> ValidationReport:
    """Check capacity, single-output routing and DS wiring; never raises."""
    report = ValidationReport()
    _check_cores(spec, report)
    _check_routing(spec, report)
    _check_ds_wiring(spec, report)
    logger.info(
        "validated %d cores: %d violation(s)", report.total_cores, len(report.violations)
    )
    return report


def _check_cores(spec: NetworkSpec, report: ValidationReport) -> None:
    used = spec.axon_kind != AxonKind.UNUSED
    axons_used = np.bincount(
        spec.axon_core[used], minlength=len(spec.cores)
    )
    active = np.bincount(
        spec.neuron_core[spec.neuron_x >= 0], minlength=len(spec.cores)
    )
    for info in spec.cores:
        if info.neuron_count > CORE_SIZE:
            report.violations.append(
                f"core ({info.cx}, {info.cy}): {info.neuron_count} neurons exceed {CORE_SIZE}"
            )
        if info.axon_count > CORE_SIZE:
            report.violations.append(
                f"core ({info.cx}, {info.cy}): {info.axon_count} axons exceed {CORE_SIZE}"
            )
        if info.layer == Layer.FLOW:
            report.flow_cores += 1
            report.flow_neurons += info.neuron_count
            if info.neuron_count != spec.neurons_per_core:
                report.violations.append(
                    f"core ({info.cx}, {info.cy}): {info.neuron_count} neurons, "
                    f"tile layout needs {spec.neurons_per_core}"
                )
        else:
            report.relay_cores += 1
            report.relay_neurons += info.neuron_count
            report.neurons_per_relay_core = max(
                report.neurons_per_relay_core, info.neuron_count
            )
        report.usage.append(
            CoreUsage(
                core_id=info.core_id,
                layer=info.layer,
                cx=info.cx,
                cy=info.cy,
                neurons=info.neuron_count,
                active_neurons=int(active[info.core_id]),
                axons=int(axons_used[info.core_id]),
            )
        )
    report.neurons_per_flow_core = spec.neurons_per_core


def _check_routing(spec: NetworkSpec, report: ValidationReport) -> None:
    routed = np.flatnonzero(spec.neuron_route >= 0)
    targets = spec.neuron_route[routed]
    if len(targets) and targets.max() >= spec.axon_count:
        report.violations.append("neuron routed to a non-existent axon")
        return
    fan_in = np.bincount(targets, minlength=spec.axon_count)
    for axon in np.flatnonzero(fan_in > 1):
        info = spec.cores[int(spec.axon_core[axon])]
        report.violations.append(
            f"core ({info.cx}, {info.cy}) axon {int(spec.axon_index[axon])}: "
            f"driven by {int(fan_in[axon])} neurons"
        )
    mismatch = spec.axon_source[targets] != routed
    for n in routed[mismatch]:
        d = spec.describe(int(n))
        report.violations.append(
            f"core {d.core} neuron {d.index}: route disagrees with axon source table"
        )


def _check_ds_wiring(spec: NetworkSpec, report: ValidationReport) -> None:
    """Each DS unit: one own-pixel excitation, one own-pixel delayed
    inhibition, one neighbour inhibition unless the neighbour is off-frame."""
    pops = spec.neuron_population
    is_ds = np.isin(pops, [int(p) for p in DS_OFFSETS]) & (spec.neuron_x >= 0)
    syn_ds = is_ds[spec.synapse_neuron]
    axon = spec.synapse_axon[syn_ds]
    target = spec.synapse_neuron[syn_ds]
    sign = spec.synapse_sign[syn_ds]

    src = spec.axon_source[axon]
    has_src = src >= 0
    src_safe = np.where(has_src, src, 0)
    src_pop = np.where(has_src, pops[src_safe], -1)
    src_x = np.where(has_src, spec.neuron_x[src_safe], -1)
    src_y = np.where(has_src, spec.neuron_y[src_safe], -1)

    tx, ty = spec.neuron_x[target], spec.neuron_y[target]
    off_x = np.zeros(len(target), dtype=np.int64)
    off_y = np.zeros(len(target), dtype=np.int64)
    for pop, (ox, oy) in DS_OFFSETS.items():
        m = pops[target] == pop
        off_x[m], off_y[m] = ox, oy

    own = (src_x == tx) & (src_y == ty)
    neighbour = (src_x == tx + off_x) & (src_y == ty + off_y)
    excite = own & (sign == EXCITATORY) & (src_pop == Population.INPUT)
    delayed = own & (sign == INHIBITORY) & (src_pop == Population.DELAY)
    lateral = neighbour & (sign == INHIBITORY) & (src_pop == Population.INPUT)
    stray = ~(excite | delayed | lateral)

    n = spec.neuron_count
    n_exc = np.bincount(target[excite], minlength=n)
    n_del = np.bincount(target[delayed], minlength=n)
    n_lat = np.bincount(target[lateral], minlength=n)
    n_stray = np.bincount(target[stray], minlength=n)

    ds_ids = np.flatnonzero(is_ds)
    nb_x = spec.neuron_x[ds_ids].copy()
    nb_y = spec.neuron_y[ds_ids].copy()
    for pop, (ox, oy) in DS_OFFSETS.items():
        m = pops[ds_ids] == pop
        nb_x[m] += ox
        nb_y[m] += oy
    geometry = spec.geometry
    expect_lat = (
        (nb_x >= 0) & (nb_x < geometry.width) & (nb_y >= 0) & (nb_y < geometry.height)
    ).astype(np.int64)

    bad = (
        (n_exc[ds_ids] != 1)
        | (n_del[ds_ids] != 1)
        | (n_lat[ds_ids] != expect_lat)
        | (n_stray[ds_ids] != 0)
    )
    for k in np.flatnonzero(bad):
        gid = int(ds_ids[k])
        d = spec.describe(gid)
        problems = []
        if n_exc[gid] != 1:
            problems.append(f"{int(n_exc[gid])} own-pixel excitations")
        if n_del[gid] != 1:
            problems.append(f"{int(n_del[gid])} delayed inhibitions")
        if n_lat[gid] != expect_lat[k]:
            problems.append(
                f"{int(n_lat[gid])} neighbour inhibitions (expected {int(expect_lat[k])})"
            )
        if n_stray[gid]:
            problems.append(f"{int(n_stray[gid])} unexpected synapses")
        report.violations.append(
            f"core {d.core} neuron {d.index} ({d.population.label} at {d.pixel}): "
            + ", ".join(problems)
        )
