import json
import os
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

import pytest
from typer.testing import CliRunner

from spikeflow import __version__
from spikeflow.cli import EXIT_ERROR, EXIT_THRESHOLD, app
from spikeflow.config import CONFIG_ENV
from spikeflow.events import load_events

EDGE_ARGS = ["-s", "edge", "-d", "0.4", "-p", "origin=[0,0]", "-p", "speed=0.1"]
SENSOR_ARGS = ["--width", "32", "--height", "8"]


class TestCLI:
    """Stage commands driven in-process."""

    def setup_method(self):
        """Set up test environment."""
        self.runner = CliRunner()
        self.temp_dir = Path(tempfile.mkdtemp())
        self.config_path = self.temp_dir / "config.json"

        # keep the settings file out of the home directory
        os.environ[CONFIG_ENV] = str(self.config_path)

    def teardown_method(self):
        """Clean up test environment."""
        if CONFIG_ENV in os.environ:
            del os.environ[CONFIG_ENV]
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    def invoke(self, *args):
        return self.runner.invoke(app, [str(a) for a in args])

    def test_version(self):
        """Test the version flag."""
        result = self.invoke("--version")

        assert result.exit_code == 0
        assert f"spikeflow version {__version__}" in result.stdout

    def test_staged_run(self):
        """Test generate, compile, run, decode, eval and render on each other's files."""
        t = self.temp_dir
        result = self.invoke("generate", "-o", t / "ev.bin", *EDGE_ARGS, *SENSOR_ARGS)
        assert result.exit_code == 0
        assert "Wrote 256 events" in result.stdout

        result = self.invoke(
            "compile", "-o", t / "pl.xml", *SENSOR_ARGS, "--dx", "4", "--dy", "4", "--no-relay"
        )
        assert result.exit_code == 0
        assert "Resources" in result.stdout

        result = self.invoke("run", t / "ev.bin", "--placement", t / "pl.xml", "-o", t / "spikes.csv")
        assert result.exit_code == 0
        assert "over 362 ticks" in result.stdout

        result = self.invoke("decode", t / "spikes.csv", "-o", t / "flow.csv", "--end-tick", "362")
        assert result.exit_code == 0
        assert (t / "flow.csv").exists()

        result = self.invoke(
            "eval",
            t / "flow.csv",
            *EDGE_ARGS,
            "--no-relay",
            "--census",
            t / "ev.bin",
            "--report",
            t / "report.json",
            "--error-map",
            t / "error_map.csv",
        )
        assert result.exit_code == 0
        assert "Thresholds met" in result.stdout
        report = json.loads((t / "report.json").read_text())
        assert report["census"] == 256
        assert report["matched"] > 0
        assert (t / "error_map.csv").read_text().startswith("x,y,count,")

        result = self.invoke("render", t / "flow.csv", "-o", t / "frames", *SENSOR_ARGS, "--window-ms", "100")
        assert result.exit_code == 0
        assert "Wrote 5 frames" in result.stdout

        result = self.invoke("eval", t / "flow.csv", *EDGE_ARGS, "--no-relay", "--max-aae", "0")
        assert result.exit_code == EXIT_THRESHOLD
        assert "Thresholds exceeded" in result.stdout

    def test_dump_aer(self):
        """Test the relay words are written next to the events."""
        t = self.temp_dir
        result = self.invoke(
            "generate", "-o", t / "ev.csv", *EDGE_ARGS, *SENSOR_ARGS, "--dump-aer", t / "words.bin"
        )
        assert result.exit_code == 0
        assert "Wrote 256 AER words" in result.stdout
        assert (t / "words.bin").stat().st_size == 256 * 4

    def compile_small(self):
        result = self.invoke(
            "compile", "-o", self.temp_dir / "pl.xml", *SENSOR_ARGS, "--dx", "4", "--dy", "4", "--no-relay"
        )
        assert result.exit_code == 0
        return self.temp_dir / "pl.xml"

    def test_event_format_option(self):
        """Test --format overrides the suffix when writing and reading events."""
        t = self.temp_dir
        result = self.invoke("generate", "-o", t / "ev.bin", "--format", "text", *EDGE_ARGS, *SENSOR_ARGS)
        assert result.exit_code == 0
        assert len(load_events(t / "ev.bin", "text")) == 256

        placement = self.compile_small()
        result = self.invoke(
            "run", t / "ev.bin", "--format", "TEXT", "--placement", placement, "-o", t / "spikes.csv"
        )
        assert result.exit_code == 0
        assert "over 362 ticks" in result.stdout

    def test_decode_end_tick_from_spike_log(self):
        """Test decode without --end-tick matches decoding with the simulated tick count."""
        t = self.temp_dir
        self.invoke("generate", "-o", t / "ev.bin", *EDGE_ARGS, *SENSOR_ARGS)
        placement = self.compile_small()
        self.invoke("run", t / "ev.bin", "--placement", placement, "-o", t / "spikes.csv")

        result = self.invoke("decode", t / "spikes.csv", "-o", t / "default.csv")
        assert result.exit_code == 0
        result = self.invoke("decode", t / "spikes.csv", "-o", t / "explicit.csv", "--end-tick", "362")
        assert result.exit_code == 0
        assert (t / "default.csv").read_bytes() == (t / "explicit.csv").read_bytes()

    def test_invalid_tick_length_exits_two(self):
        """Test a non-positive tick length is an input error, not a threshold failure."""
        t = self.temp_dir
        self.invoke("generate", "-o", t / "ev.bin", *EDGE_ARGS, *SENSOR_ARGS)
        placement = self.compile_small()
        result = self.invoke("run", t / "ev.bin", "--placement", placement, "--tick-ms", "0")

        assert result.exit_code == EXIT_ERROR
        assert "Error:" in result.stdout

    @pytest.mark.parametrize(
        "args",
        [
            ["generate", "-s", "checkerboard"],
            ["generate", "-s", "edge", "-p", "speed"],
            ["generate", "-s", "pipe", "-p", "radius=3"],
            ["compile", "--dx", "8", "--dy", "8"],
            ["compile", "--tau-r", "20"],
            ["run", "missing.bin", "--placement", "missing.xml"],
            ["decode", "missing.csv"],
            ["render", "missing.csv"],
        ],
    )
    def test_errors_exit_two(self, args):
        """Test failing commands print the error and exit with status 2."""
        result = self.invoke(*args)

        assert result.exit_code == EXIT_ERROR
        assert "Error:" in result.stdout

    def test_pipeline(self):
        """Test the one-shot pipeline writes its artifacts and passes without thresholds."""
        out = self.temp_dir / "out"
        result = self.invoke(
            "pipeline", *EDGE_ARGS, *SENSOR_ARGS, "--dx", "4", "--dy", "4", "--no-relay", "-o", out
        )

        assert result.exit_code == 0
        assert "Thresholds met" in result.stdout
        assert "400 ticks" in result.stdout
        report = json.loads((out / "report.json").read_text())
        assert report["config"]["relay"] is False
        assert report["ingest_latency"] == 0

    def test_pipeline_threshold(self):
        """Test an unmet threshold exits with status 1."""
        result = self.invoke(
            "pipeline", *EDGE_ARGS, *SENSOR_ARGS, "--dx", "4", "--dy", "4",
            "--max-aae", "0", "-o", self.temp_dir / "out",
        )

        assert result.exit_code == EXIT_THRESHOLD
        assert "Thresholds exceeded" in result.stdout

    def test_pipeline_config_file(self):
        """Test settings can come from a JSON file."""
        settings = self.temp_dir / "run.json"
        settings.write_text(
            json.dumps(
                {
                    "stimulus": "edge",
                    "stimulus_params": {"origin": [0, 0], "speed": 0.1, "duration": 0.4},
                    "width": 32,
                    "height": 8,
                    "dx": 4,
                    "dy": 4,
                    "output_dir": str(self.temp_dir / "from-file"),
                }
            )
        )
        result = self.invoke("pipeline", "--config", settings)

        assert result.exit_code == 0
        assert (self.temp_dir / "from-file" / "flow.csv").exists()

    def test_pipeline_missing_config_file(self):
        """Test a missing config file is a configuration error."""
        result = self.invoke("pipeline", "--config", self.temp_dir / "nope.json")

        assert result.exit_code == EXIT_ERROR
        assert "not found" in result.stdout

    def test_pipeline_invalid_setting(self):
        """Test an invalid override fails before any stage runs."""
        result = self.invoke("pipeline", *EDGE_ARGS, "--tau-r", "10", "-o", self.temp_dir / "out")

        assert result.exit_code == EXIT_ERROR
        assert "must exceed" in result.stdout
        assert not (self.temp_dir / "out" / "events.bin").exists()

    def test_config_set_get(self):
        """Test setting and reading a stored value."""
        result = self.invoke("config", "--set", "dx=4")
        assert result.exit_code == 0

        result = self.invoke("config", "--get", "dx")
        assert result.exit_code == 0
        assert "dx: 4" in result.stdout
        assert json.loads(self.config_path.read_text())["dx"] == 4

    def test_config_positional(self):
        """Test key and value given as arguments."""
        result = self.invoke("config", "stimulus_params", '{"speed": 0.2}')
        assert result.exit_code == 0
        assert json.loads(self.config_path.read_text())["stimulus_params"] == {"speed": 0.2}

    def test_config_unknown_key(self):
        """Test only pipeline settings can be stored."""
        result = self.invoke("config", "--set", "editor=nano")

        assert result.exit_code == EXIT_ERROR
        assert "Unknown setting" in result.stdout

    def test_config_missing_key(self):
        """Test reading a key that is not stored."""
        self.invoke("config", "--list")
        result = self.invoke("config", "--get", "editor")

        assert result.exit_code == EXIT_ERROR
        assert "not found" in result.stdout

    def test_config_bad_set_format(self):
        """Test --set without '=' is rejected."""
        result = self.invoke("config", "--set", "dx")

        assert result.exit_code == EXIT_ERROR

    def test_config_list_and_reset(self):
        """Test listing and resetting the settings."""
        self.invoke("config", "--set", "width=64")

        result = self.invoke("config", "--list")
        assert result.exit_code == 0
        assert "width" in result.stdout

        result = self.invoke("config", "--reset", "--yes")
        assert result.exit_code == 0
        assert "reset to defaults" in result.stdout
        assert json.loads(self.config_path.read_text())["width"] == 304

    def test_config_reset_cancelled(self):
        """Test declining the reset prompt keeps the settings."""
        self.invoke("config", "--set", "width=64")
        result = self.runner.invoke(app, ["config", "--reset"], input="n\n")

        assert result.exit_code == 0
        assert "Reset cancelled" in result.stdout
        assert json.loads(self.config_path.read_text())["width"] == 64


class TestCLIIntegration:
    """Integration tests running the installed module as a subprocess."""

    @pytest.fixture
    def temp_env(self):
        """Create temporary environment for CLI testing."""
        with tempfile.TemporaryDirectory() as tmp_dir:
            tmp_path = Path(tmp_dir)
            env = {
                **dict(os.environ),
                CONFIG_ENV: str(tmp_path / "config.json"),
                "COLUMNS": "200",
            }
            yield {"temp_dir": tmp_path, "env": env}

    def run_cli_command(self, cmd_args, temp_env):
        """Run CLI command and return result."""
        cmd = [sys.executable, "-m", "spikeflow.cli"] + [str(a) for a in cmd_args]

        try:
            return subprocess.run(
                cmd, env=temp_env["env"], capture_output=True, text=True, timeout=120
            )
        except subprocess.TimeoutExpired:
            return subprocess.CompletedProcess(cmd, 1, "", "Command timed out")

    def test_version_cli(self, temp_env):
        """Test the version flag via the module entry point."""
        result = self.run_cli_command(["--version"], temp_env)

        assert result.returncode == 0
        assert __version__ in result.stdout

    def test_pipeline_cli(self, temp_env):
        """Test a pipeline run writes its report."""
        out = temp_env["temp_dir"] / "out"
        result = self.run_cli_command(
            ["pipeline", *EDGE_ARGS, *SENSOR_ARGS, "--dx", "4", "--dy", "4", "--relay", "-o", out],
            temp_env,
        )

        assert result.returncode == 0
        report = json.loads((out / "report.json").read_text())
        assert report["ingest_latency"] == 3
        assert report["resources"]["relay_cores"] == 2

    def test_config_cli(self, temp_env):
        """Test configuration management via CLI."""
        result = self.run_cli_command(["config", "--set", "tau_d=40"], temp_env)
        assert result.returncode == 0

        result = self.run_cli_command(["config", "--get", "tau_d"], temp_env)
        assert result.returncode == 0
        assert "tau_d: 40" in result.stdout

    def test_error_exit_code(self, temp_env):
        """Test failures surface as exit status 2."""
        result = self.run_cli_command(["run", temp_env["temp_dir"] / "missing.bin"], temp_env)

        assert result.returncode == EXIT_ERROR
        assert "Error:" in result.stdout

    def test_verbose_logs_to_stderr(self, temp_env):
        """Test debug logging goes to stderr and leaves stdout for results."""
        out = temp_env["temp_dir"] / "ev.bin"
        result = self.run_cli_command(
            ["-v", "generate", "-o", out, *EDGE_ARGS, *SENSOR_ARGS], temp_env
        )

        assert result.returncode == 0
        assert "Wrote 256 events" in result.stdout
        assert "generated 256 events" in result.stderr
