import json
from pathlib import Path
from typing import Any, Dict, List, Optional

import typer
from rich.console import Console
from rich.table import Table

from . import __version__
from .aer_bridge import DEFAULT_LEAD, build_relay, ingest_latency, save_words
from .config import Config, PipelineConfig
from .corenet import (
    compile_flow_network,
    read_placement,
    read_spike_log,
    simulate,
    validate,
    write_placement,
    write_spike_log,
)
from .corenet.validate import ValidationReport
from .decode import decode_flow, read_flow, write_flow
from .evaluation import EvalReport, evaluate, write_error_map
from .events import EventFormat, SensorGeometry, load_events, quantize_to_ticks, save_events
from .exceptions import ConfigError, SpikeFlowError
from .logs import setup_logging
from .pipeline import run_pipeline, write_report
from .render import save_frames
from .stimulus import STIMULI, generate_events, make_model

EXIT_THRESHOLD = 1
EXIT_ERROR = 2

_PIPELINE_KEYS = set(PipelineConfig().to_dict())


def version_callback(value: bool):
    if value:
        console = Console()
        console.print(
            f"[bold cyan]spikeflow[/bold cyan] version [bold green]{__version__}[/bold green]"
        )
        raise typer.Exit()


app = typer.Typer(
    name="spikeflow",
    help="Spiking optical-flow simulator for event cameras",
    rich_markup_mode="rich",
)
console = Console()


@app.callback()
def main(
    version: Optional[bool] = typer.Option(
        None,
        "--version",
        "-V",
        callback=version_callback,
        is_eager=True,
        help="Show version and exit",
    ),
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Debug logging on stderr"),
):
    """spikeflow - optical flow from burst lengths on a crossbar-core fabric."""
    setup_logging(verbose)


def _fail(error: Exception) -> None:
    console.print(f"Error: {error}", style="red")
    raise typer.Exit(EXIT_ERROR)


def _parse_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _stimulus_params(duration: Optional[float], params: Optional[List[str]]) -> Dict[str, Any]:
    result: Dict[str, Any] = {}
    for pair in params or []:
        if "=" not in pair:
            raise ConfigError(f"--param requires key=value, got '{pair}'")
        key, value = pair.split("=", 1)
        result[key.strip()] = _parse_value(value.strip())
    if duration is not None:
        result["duration"] = duration
    return result


def _resource_table(resources: ValidationReport) -> Table:
    table = Table(title="Resources")
    table.add_column("Metric", style="cyan")
    table.add_column("Value", style="magenta", justify="right")
    for key, value in resources.to_dict().items():
        if key != "violations":
            table.add_row(key, str(value))
    return table


def _report_table(report: EvalReport) -> Table:
    table = Table(title="Evaluation")
    table.add_column("Metric", style="cyan")
    table.add_column("Value", style="magenta", justify="right")
    table.add_row("mean abs angular error (deg)", f"{report.mean_abs_angular_error:.3f}")
    table.add_row("relative AEE (mean of ratios)", f"{report.relative_aee:.4f}")
    table.add_row("relative AEE (ratio of means)", f"{report.relative_aee_ratio_of_means:.4f}")
    table.add_row("absolute AEE (px/ms)", f"{report.absolute_aee:.5f}")
    table.add_row("density", f"{report.density:.4f}")
    table.add_row("matched", str(report.matched))
    table.add_row("unmatched (spurious)", str(report.unmatched))
    table.add_row("census", str(report.census))
    return table


def _gate(report: EvalReport, max_aae: Optional[float], max_aee: Optional[float]) -> None:
    if report.passes(max_aae, max_aee):
        console.print("Thresholds met", style="green")
        return
    console.print(
        f"Thresholds exceeded (max AAE {max_aae}, max relative AEE {max_aee})", style="red"
    )
    raise typer.Exit(EXIT_THRESHOLD)


@app.command()
def generate(
    output: Path = typer.Option(Path("events.bin"), "--output", "-o", help="Event file (.bin or .csv)"),
    fmt: Optional[EventFormat] = typer.Option(
        None, "--format", "-f", case_sensitive=False, help="Event file format (default: from the suffix)"
    ),
    stimulus: str = typer.Option("pipe", "--stimulus", "-s", help=f"One of: {', '.join(STIMULI)}"),
    duration: Optional[float] = typer.Option(None, "--duration", "-d", help="Stimulus duration in seconds"),
    param: Optional[List[str]] = typer.Option(None, "--param", "-p", help="Stimulus parameter key=value"),
    noise_rate: float = typer.Option(0.0, "--noise-rate", help="Background events per pixel per second"),
    seed: int = typer.Option(0, "--seed", help="Noise seed"),
    width: int = typer.Option(304, "--width", help="Sensor width"),
    height: int = typer.Option(240, "--height", help="Sensor height"),
    tick_ms: float = typer.Option(1.0, "--tick-ms", help="Tick length used for --dump-aer"),
    dump_aer: Optional[Path] = typer.Option(None, "--dump-aer", help="Also write the relay AER words"),
):
    """Generate a synthetic event stream."""
    try:
        model = make_model(stimulus, **_stimulus_params(duration, param))
        geometry = SensorGeometry(width, height)
        events = generate_events(model, geometry, noise_rate, seed)
        save_events(output, events, fmt)
        console.print(f"Wrote {len(events)} events to {output}", style="green")
        if dump_aer is not None:
            count = save_words(dump_aer, quantize_to_ticks(events, tick_ms), build_relay(geometry))
            console.print(f"Wrote {count} AER words to {dump_aer}", style="green")
    except (SpikeFlowError, OSError, ValueError) as e:
        _fail(e)


@app.command("compile")
def compile_cmd(
    output: Path = typer.Option(Path("placement.xml"), "--output", "-o", help="Placement file"),
    width: int = typer.Option(304, "--width", help="Sensor width"),
    height: int = typer.Option(240, "--height", help="Sensor height"),
    dx: int = typer.Option(6, "--dx", help="Tile width in pixels"),
    dy: int = typer.Option(6, "--dy", help="Tile height in pixels"),
    tau_r: float = typer.Option(60, "--tau-r", help="Refractory period in ticks"),
    tau_d: int = typer.Option(50, "--tau-d", help="Delay in ticks"),
    relay: bool = typer.Option(True, "--relay/--no-relay", help="Add the AER relay layer"),
):
    """Compile the tiled flow network and write its placement file."""
    try:
        spec = compile_flow_network(SensorGeometry(width, height), dx, dy, tau_r, tau_d, relay)
        resources = validate(spec)
        write_placement(output, spec)
    except (SpikeFlowError, OSError, ValueError) as e:
        _fail(e)
    console.print(_resource_table(resources))
    for violation in resources.violations:
        console.print(violation, style="red")
    console.print(f"Wrote placement to {output}", style="green")
    if not resources.valid:
        raise typer.Exit(EXIT_THRESHOLD)


@app.command()
def run(
    events: Path = typer.Argument(..., help="Event file from 'generate'"),
    fmt: Optional[EventFormat] = typer.Option(
        None, "--format", "-f", case_sensitive=False, help="Event file format (default: from the suffix)"
    ),
    placement: Path = typer.Option(Path("placement.xml"), "--placement", help="Placement file from 'compile'"),
    output: Path = typer.Option(Path("spikes.csv"), "--output", "-o", help="Spike log"),
    ticks: Optional[int] = typer.Option(None, "--ticks", "-t", help="Ticks to simulate"),
    tick_ms: float = typer.Option(1.0, "--tick-ms", help="Tick length in ms"),
    parallel: int = typer.Option(0, "--parallel", help="Worker threads (0 = single-threaded)"),
    lead: int = typer.Option(DEFAULT_LEAD, "--lead", help="AER target-time lead in ticks"),
):
    """Simulate a compiled network on an event stream."""
    try:
        spec = read_placement(placement)
        inputs = quantize_to_ticks(load_events(events, fmt), tick_ms)
        if ticks is None:
            last = max((ev.tick for ev in inputs), default=-1)
            ticks = last + ingest_latency(spec.has_relay, lead) + spec.tau_d + 2
        log = simulate(spec, inputs, ticks, workers=parallel, lead=lead)
        write_spike_log(output, log)
    except (SpikeFlowError, OSError, ValueError) as e:
        _fail(e)
    console.print(f"Wrote {len(log)} spikes over {ticks} ticks to {output}", style="green")


@app.command()
def decode(
    spikes: Path = typer.Argument(..., help="Spike log from 'run'"),
    output: Path = typer.Option(Path("flow.csv"), "--output", "-o", help="Flow CSV"),
    end_tick: Optional[int] = typer.Option(
        None, "--end-tick", help="Simulated tick count (default: from the spike log); drops censored bursts"
    ),
    tau_d: int = typer.Option(50, "--tau-d", help="Delay in ticks; bursts this long are dropped"),
    tick_ms: float = typer.Option(1.0, "--tick-ms", help="Tick length in ms"),
):
    """Decode DS bursts into normal-flow estimates."""
    try:
        log = read_spike_log(spikes)
        estimates = decode_flow(log, end_tick=end_tick, timeout=tau_d, tick_ms=tick_ms)
        write_flow(output, estimates, tick_ms)
    except (SpikeFlowError, OSError, ValueError) as e:
        _fail(e)
    console.print(f"Wrote {len(estimates)} flow estimates to {output}", style="green")


@app.command("eval")
def eval_cmd(
    flow: Path = typer.Argument(..., help="Flow CSV from 'decode'"),
    stimulus: str = typer.Option("pipe", "--stimulus", "-s", help=f"One of: {', '.join(STIMULI)}"),
    duration: Optional[float] = typer.Option(None, "--duration", "-d", help="Stimulus duration in seconds"),
    param: Optional[List[str]] = typer.Option(None, "--param", "-p", help="Stimulus parameter key=value"),
    census: Optional[Path] = typer.Option(None, "--census", help="Noise-free event file for density"),
    match_radius: float = typer.Option(1.5, "--match-radius", help="Pixels"),
    time_tolerance: int = typer.Option(2, "--time-tolerance", help="Ticks"),
    relay: bool = typer.Option(True, "--relay/--no-relay", help="Whether the run used the relay layer"),
    tick_ms: float = typer.Option(1.0, "--tick-ms", help="Tick length in ms"),
    max_aae: Optional[float] = typer.Option(None, "--max-aae", help="Fail above this angular error (deg)"),
    max_aee: Optional[float] = typer.Option(None, "--max-aee", help="Fail above this relative AEE"),
    report_path: Optional[Path] = typer.Option(None, "--report", help="Write the report as JSON"),
    error_map: Optional[Path] = typer.Option(None, "--error-map", help="Write the per-pixel error CSV"),
):
    """Score flow estimates against the stimulus ground truth."""
    try:
        model = make_model(stimulus, **_stimulus_params(duration, param))
        estimates = read_flow(flow, tick_ms)
        reference = load_events(census) if census is not None else None
        report = evaluate(
            estimates,
            model,
            match_radius=match_radius,
            time_tolerance=time_tolerance,
            census=reference,
            latency=ingest_latency(relay) + 1,
            tick_ms=tick_ms,
        )
        if report_path is not None:
            write_report(report_path, report.to_dict())
        if error_map is not None:
            write_error_map(error_map, report)
    except (SpikeFlowError, OSError, ValueError) as e:
        _fail(e)
    console.print(_report_table(report))
    _gate(report, max_aae, max_aee)


@app.command()
def render(
    flow: Path = typer.Argument(..., help="Flow CSV from 'decode'"),
    output: Path = typer.Option(Path("frames"), "--output", "-o", help="Frame directory"),
    width: int = typer.Option(304, "--width", help="Sensor width"),
    height: int = typer.Option(240, "--height", help="Sensor height"),
    window_ms: float = typer.Option(50.0, "--window-ms", help="Frame window in ms"),
    tick_ms: float = typer.Option(1.0, "--tick-ms", help="Tick length in ms"),
):
    """Render flow estimates as colour-coded PPM frames."""
    try:
        estimates = read_flow(flow, tick_ms)
        paths = save_frames(output, estimates, SensorGeometry(width, height), window_ms, tick_ms)
    except (SpikeFlowError, OSError, ValueError) as e:
        _fail(e)
    console.print(f"Wrote {len(paths)} frames to {output}", style="green")


@app.command()
def pipeline(
    config_file: Optional[Path] = typer.Option(None, "--config", "-c", help="Pipeline JSON file"),
    stimulus: Optional[str] = typer.Option(None, "--stimulus", "-s", help=f"One of: {', '.join(STIMULI)}"),
    duration: Optional[float] = typer.Option(None, "--duration", "-d", help="Stimulus duration in seconds"),
    param: Optional[List[str]] = typer.Option(None, "--param", "-p", help="Stimulus parameter key=value"),
    noise_rate: Optional[float] = typer.Option(None, "--noise-rate", help="Background events per pixel per second"),
    seed: Optional[int] = typer.Option(None, "--seed", help="Noise seed"),
    width: Optional[int] = typer.Option(None, "--width", help="Sensor width"),
    height: Optional[int] = typer.Option(None, "--height", help="Sensor height"),
    dx: Optional[int] = typer.Option(None, "--dx", help="Tile width"),
    dy: Optional[int] = typer.Option(None, "--dy", help="Tile height"),
    tau_r: Optional[float] = typer.Option(None, "--tau-r", help="Refractory period in ticks"),
    tau_d: Optional[int] = typer.Option(None, "--tau-d", help="Delay in ticks"),
    relay: Optional[bool] = typer.Option(None, "--relay/--no-relay", help="Use the AER relay layer"),
    parallel: Optional[int] = typer.Option(None, "--parallel", help="Worker threads"),
    max_aae: Optional[float] = typer.Option(None, "--max-aae", help="Fail above this angular error (deg)"),
    max_aee: Optional[float] = typer.Option(None, "--max-aee", help="Fail above this relative AEE"),
    output_dir: Optional[str] = typer.Option(None, "--output-dir", "-o", help="Artifact directory"),
    placement: bool = typer.Option(False, "--placement", help="Also write placement.xml"),
):
    """Run generate, compile, run, decode, eval and render in one go."""
    overrides = {
        "stimulus": stimulus,
        "noise_rate": noise_rate,
        "seed": seed,
        "width": width,
        "height": height,
        "dx": dx,
        "dy": dy,
        "tau_r": tau_r,
        "tau_d": tau_d,
        "relay": relay,
        "parallel": parallel,
        "max_aae": max_aae,
        "max_aee": max_aee,
        "output_dir": output_dir,
    }
    try:
        if config_file is not None and not config_file.exists():
            raise ConfigError(f"config file {config_file} not found")
        params = _stimulus_params(duration, param)
        cfg = Config(config_file).pipeline(stimulus_params=params, **overrides)
        result = run_pipeline(cfg, placement=placement)
    except (SpikeFlowError, OSError, ValueError) as e:
        _fail(e)

    console.print(_report_table(result.report))
    console.print(
        f"{result.ticks} ticks, {len(result.spikes)} spikes, {len(result.estimates)} estimates, "
        f"{result.resources.total_cores} cores",
        style="cyan",
    )
    console.print(f"Artifacts in {result.artifacts['report'].parent}", style="green")
    _gate(result.report, cfg.max_aae, cfg.max_aee)


@app.command()
def config(
    key: Optional[str] = typer.Argument(None, help="Configuration key to get/set"),
    value: Optional[str] = typer.Argument(None, help="Value to set (JSON or plain text)"),
    list_all: bool = typer.Option(False, "--list", "-l", help="List all configuration"),
    get: Optional[str] = typer.Option(None, "--get", "-g", help="Get configuration value"),
    set_pair: Optional[str] = typer.Option(None, "--set", help="Set configuration key=value"),
    reset: bool = typer.Option(False, "--reset", help="Reset configuration to defaults"),
    yes: bool = typer.Option(False, "--yes", "-y", help="Do not ask before resetting"),
):
    """Manage the stored pipeline settings."""
    config_manager = Config()

    if reset:
        if yes or typer.confirm("Reset all pipeline settings to defaults?"):
            config_manager.reset()
            console.print("Configuration reset to defaults", style="green")
        else:
            console.print("Reset cancelled", style="yellow")
        return

    if get:
        key = get
    if set_pair:
        if "=" not in set_pair:
            console.print("--set requires key=value format. Example: spikeflow config --set dx=6", style="red")
            raise typer.Exit(EXIT_ERROR)
        key, value = (part.strip() for part in set_pair.split("=", 1))

    if key and value is not None:
        if key not in _PIPELINE_KEYS:
            console.print(f"Unknown setting '{key}'", style="red")
            raise typer.Exit(EXIT_ERROR)
        parsed = _parse_value(value)
        config_manager.set(key, parsed)
        console.print(f"Set [cyan]{key}[/cyan] = [magenta]{parsed}[/magenta]", style="green")
        return

    if key and not list_all:
        val = config_manager.get(key)
        if val is None and key not in config_manager.get_all():
            console.print(f"Configuration key '{key}' not found", style="red")
            raise typer.Exit(EXIT_ERROR)
        console.print(f"[cyan]{key}[/cyan]: {json.dumps(val)}")
        return

    settings = config_manager.get_all()
    if not settings:
        console.print("No configuration found", style="yellow")
        return
    table = Table(title=f"Configuration ({config_manager.config_path})")
    table.add_column("Key", style="cyan")
    table.add_column("Value", style="magenta")
    for k in sorted(settings):
        table.add_row(k, json.dumps(settings[k]))
    console.print(table)


if __name__ == "__main__":
    app()
