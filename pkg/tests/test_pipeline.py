import json

import pytest

from spikeflow.config import PipelineConfig
from spikeflow.events import Event, load_events
from spikeflow.exceptions import ConfigError, StageError, StimulusError
from spikeflow.pipeline import clip_to_run, run_pipeline, stage


def edge_config(**changes):
    """A 32x8 sensor crossed by a vertical edge at 0.1 px/ms."""
    settings = dict(
        stimulus="edge",
        stimulus_params={"origin": [0, 0], "angle": 0.0, "speed": 0.1, "duration": 0.4},
        width=32,
        height=8,
        dx=4,
        dy=4,
        relay=False,
        window_ms=100.0,
    )
    settings.update(changes)
    return PipelineConfig(**settings)


def interior(estimates, config):
    return [
        e
        for e in estimates
        if 1 <= e.x <= config.width - 2 and 1 <= e.y <= config.height - 2
    ]


class TestStage:
    """Stage error wrapping."""

    def test_wraps_cause(self):
        """Test failures inside a stage carry the stage name and cause."""
        with pytest.raises(StageError) as exc:
            with stage("decode"):
                raise ValueError("boom")
        assert exc.value.stage == "decode"
        assert isinstance(exc.value.cause, ValueError)
        assert "stage 'decode' failed: boom" in str(exc.value)

    def test_stage_errors_pass_through(self):
        """Test nested stages keep the innermost stage name."""
        with pytest.raises(StageError) as exc:
            with stage("outer"):
                with stage("inner"):
                    raise StimulusError("bad")
        assert exc.value.stage == "inner"


class TestClipToRun:
    def test_clip(self):
        """Test events at or past the last tick are dropped."""
        events = [Event(0, 0, 999), Event(0, 0, 9_999), Event(0, 0, 10_000)]
        assert clip_to_run(events, 10, 1.0) == events[:2]


class TestRunPipeline:
    """Whole runs on a small sensor."""

    def test_edge_run(self, temp_dir):
        """Test a direct-ingest edge run decodes the edge exactly in the interior."""
        config = edge_config()
        result = run_pipeline(config, temp_dir)

        assert result.ticks == 400
        assert result.latency == 0
        assert result.resources.valid
        inner = interior(result.estimates, config)
        assert len(inner) == 30 * 6
        for est in inner:
            assert est.vx == pytest.approx(0.1)
            assert est.vy == 0
            assert est.t == 10 * est.x + 1
        assert result.report.census == 32 * 8
        assert result.report.matched > 0
        assert 0.0 < result.report.density <= 1.0

    def test_relay_run(self, temp_dir):
        """Test the relay layer shifts estimates by its latency only."""
        config = edge_config(relay=True)
        result = run_pipeline(config, temp_dir)

        assert result.latency == 3
        inner = interior(result.estimates, config)
        assert len(inner) == 30 * 6
        assert all(est.t == 10 * est.x + 4 for est in inner)
        assert all(est.vx == pytest.approx(0.1) for est in inner)

    def test_artifacts(self, temp_dir):
        """Test every stage leaves its file behind."""
        result = run_pipeline(edge_config(), temp_dir, placement=True)

        for name in ("events.bin", "placement.xml", "spikes.csv", "flow.csv", "report.json", "error_map.csv"):
            assert (temp_dir / name).exists(), name
        assert (temp_dir / "frames" / "flow.ppm").exists()
        assert (temp_dir / "frames" / "frame_0003.ppm").exists()
        assert len(load_events(result.artifacts["events"])) == 32 * 8

        report = json.loads((temp_dir / "report.json").read_text())
        assert report["config"]["stimulus"] == "edge"
        assert report["estimates"] == len(result.estimates)
        assert report["resources"]["flow_cores"] == 16
        assert report["passed"] is True
        assert "spiral_formula_discrepancy" not in report

    def test_deterministic(self, temp_dir):
        """Test two runs of one config write byte-identical files."""
        config = edge_config(noise_rate=20.0, seed=4)
        run_pipeline(config, temp_dir / "a")
        run_pipeline(config, temp_dir / "b")

        files = sorted(p.relative_to(temp_dir / "a") for p in (temp_dir / "a").rglob("*") if p.is_file())
        assert files
        for rel in files:
            assert (temp_dir / "a" / rel).read_bytes() == (temp_dir / "b" / rel).read_bytes(), rel

    def test_noise_keeps_clean_census(self, temp_dir):
        """Test the density denominator excludes noise events."""
        result = run_pipeline(edge_config(noise_rate=50.0, seed=1), temp_dir)
        assert result.report.census == 32 * 8
        assert len(load_events(result.artifacts["events"])) > 32 * 8

    def test_parallel_same_result(self, temp_dir):
        """Test block-parallel stepping gives the same estimates."""
        serial = run_pipeline(edge_config(), temp_dir / "serial")
        parallel = run_pipeline(edge_config(parallel=3), temp_dir / "parallel")
        assert parallel.estimates == serial.estimates

    def test_threshold_gate(self, temp_dir):
        """Test the pass flag follows the configured thresholds."""
        assert not run_pipeline(edge_config(max_aae=0.0), temp_dir).passed

    def test_spiral_reports_formula_discrepancy(self, temp_dir):
        """Test spiral runs carry the closed-form speed comparison."""
        config = PipelineConfig(
            stimulus="spiral",
            stimulus_params={"center": [24, 24], "theta_max": 12.0, "duration": 0.05},
            width=48,
            height=48,
            dx=6,
            dy=6,
            relay=False,
        )
        result = run_pipeline(config, temp_dir)
        assert result.discrepancy is not None
        assert result.discrepancy["speed_ratio_mean"] > 1.0
        report = json.loads((temp_dir / "report.json").read_text())
        assert "spiral_formula_discrepancy" in report

    def test_invalid_config_fails_config_stage(self, temp_dir):
        """Test a bad config stops the run in the config stage."""
        with pytest.raises(StageError) as exc:
            run_pipeline(edge_config(tau_r=10), temp_dir)
        assert exc.value.stage == "config"
        assert isinstance(exc.value.cause, ConfigError)
        assert not (temp_dir / "events.bin").exists()
