"""End-to-end driver: generate -> compile -> run -> decode -> eval -> render.

Stages talk to each other only through the artifacts they write, so each
stage can be re-run from the CLI on the files of a previous run.
"""

import json
import logging
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional

from .aer_bridge import DEFAULT_LEAD, ingest_latency
from .config import PipelineConfig
from .corenet import (
    NetworkSpec,
    SpikeLog,
    ValidationReport,
    compile_flow_network,
    simulate,
    validate,
    write_placement,
    write_spike_log,
)
from .decode import FlowEstimate, decode_flow, write_flow
from .evaluation import EvalReport, evaluate, write_error_map
from .events import Event, quantize_to_ticks, save_events
from .exceptions import StageError
from .render import save_frames
from .stimulus import SpiralModel, edge_census, generate_events, spiral_formula_discrepancy

logger = logging.getLogger(__name__)

EVENTS_FILE = "events.bin"
PLACEMENT_FILE = "placement.xml"
SPIKES_FILE = "spikes.csv"
FLOW_FILE = "flow.csv"
REPORT_FILE = "report.json"
ERROR_MAP_FILE = "error_map.csv"
FRAMES_DIR = "frames"


@dataclass
class PipelineResult:
    config: PipelineConfig
    report: EvalReport
    resources: ValidationReport
    ticks: int
    latency: int
    spikes: SpikeLog
    estimates: List[FlowEstimate]
    artifacts: Dict[str, Path] = field(default_factory=dict)
    discrepancy: Optional[Dict[str, float]] = None

    @property
    def passed(self) -> bool:
        return self.report.passes(self.config.max_aae, self.config.max_aee)

    def summary(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {
            "config": self.config.to_dict(),
            "ticks": self.ticks,
            "ingest_latency": self.latency,
            "spikes": len(self.spikes),
            "estimates": len(self.estimates),
            "evaluation": self.report.to_dict(),
            "resources": self.resources.to_dict(),
            "passed": self.passed,
        }
        if self.discrepancy is not None:
            data["spiral_formula_discrepancy"] = self.discrepancy
        return data


@contextmanager
def stage(name: str) -> Iterator[None]:
    """Re-raise any failure inside the block as StageError(name, cause)."""
    try:
        yield
    except StageError:
        raise
    except Exception as e:
        logger.debug("stage %s failed", name, exc_info=True)
        raise StageError(name, e) from e


def clip_to_run(events: List[Event], ticks: int, tick_ms: float) -> List[Event]:
    """Drop events whose tick falls at or after the end of the run."""
    limit = ticks * tick_ms * 1000
    kept = [e for e in events if e.t < limit]
    if len(kept) < len(events):
        logger.debug("%d events fall after tick %d", len(events) - len(kept), ticks)
    return kept


def compile_network(config: PipelineConfig) -> NetworkSpec:
    return compile_flow_network(
        config.geometry,
        dx=config.dx,
        dy=config.dy,
        tau_r=config.tau_r,
        tau_d=config.tau_d,
        relay=config.relay,
    )


def run_pipeline(
    config: PipelineConfig,
    output_dir: Optional[Path] = None,
    placement: bool = False,
    lead: int = DEFAULT_LEAD,
) -> PipelineResult:
    """Run every stage for ``config`` and write its artifacts.

    The result is a pure function of the config: two runs with the same
    config write byte-identical files.
    """
    with stage("config"):
        config.validate()
    out = Path(output_dir or config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    artifacts: Dict[str, Path] = {}
    ticks = config.ticks
    logger.info("running %s pipeline for %d ticks into %s", config.stimulus, ticks, out)

    with stage("generate"):
        model = config.model()
        events = generate_events(model, config.geometry, config.noise_rate, config.seed)
        events = clip_to_run(events, ticks, config.tick_ms)
        if config.noise_rate > 0:
            census = clip_to_run(edge_census(model, config.geometry), ticks, config.tick_ms)
        else:
            census = events
        artifacts["events"] = out / EVENTS_FILE
        save_events(artifacts["events"], events)

    with stage("compile"):
        spec = compile_network(config)
        resources = validate(spec)
        for violation in resources.violations:
            logger.warning("network violation: %s", violation)
        if placement:
            artifacts["placement"] = out / PLACEMENT_FILE
            write_placement(artifacts["placement"], spec)

    with stage("run"):
        latency = ingest_latency(config.relay, lead)
        spikes = simulate(
            spec,
            quantize_to_ticks(events, config.tick_ms),
            ticks,
            workers=config.parallel,
            lead=lead,
        )
        artifacts["spikes"] = out / SPIKES_FILE
        write_spike_log(artifacts["spikes"], spikes)

    with stage("decode"):
        estimates = decode_flow(
            spikes, end_tick=ticks, timeout=config.tau_d, tick_ms=config.tick_ms
        )
        artifacts["flow"] = out / FLOW_FILE
        write_flow(artifacts["flow"], estimates, config.tick_ms)

    with stage("eval"):
        report = evaluate(
            estimates,
            model,
            match_radius=config.match_radius,
            time_tolerance=config.time_tolerance,
            census=census,
            latency=latency + 1,
            tick_ms=config.tick_ms,
        )
        discrepancy = None
        if isinstance(model, SpiralModel):
            discrepancy = spiral_formula_discrepancy(model)
        artifacts["error_map"] = out / ERROR_MAP_FILE
        write_error_map(artifacts["error_map"], report)

    with stage("render"):
        frames = save_frames(
            out / FRAMES_DIR, estimates, config.geometry, config.window_ms, config.tick_ms
        )
        artifacts["frames"] = frames[0].parent

    result = PipelineResult(
        config=config,
        report=report,
        resources=resources,
        ticks=ticks,
        latency=latency,
        spikes=spikes,
        estimates=estimates,
        artifacts=artifacts,
        discrepancy=discrepancy,
    )
    artifacts["report"] = out / REPORT_FILE
    write_report(artifacts["report"], result.summary())
    logger.info(
        "pipeline finished: AAE %.2f deg, relative AEE %.3f, density %.3f",
        report.mean_abs_angular_error,
        report.relative_aee,
        report.density,
    )
    return result


def write_report(path: Path, data: Dict[str, Any]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(data, f, indent=2, sort_keys=True)
        f.write("\n")
