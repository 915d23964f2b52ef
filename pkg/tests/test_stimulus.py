import math

import numpy as np
import pytest

from spikeflow.events import QVGA, Polarity, SensorGeometry
from spikeflow.exceptions import StimulusError
from spikeflow.stimulus import (
    LN2_OVER_PI,
    EdgeModel,
    PipeModel,
    SpiralModel,
    edge_census,
    generate_events,
    generate_pipe_events,
    generate_spiral_events,
    ground_truth_at,
    ground_truth_oracle_fd,
    make_model,
    spiral_formula_discrepancy,
    wrap_angle,
)


def angle_gap(a, b):
    d = wrap_angle(a - b)
    return min(d, 2 * math.pi - d)


def arm_pixels(spiral, geometry):
    """Mask of pixels within the radial extent of the arm."""
    ys, xs = np.mgrid[0 : geometry.height, 0 : geometry.width]
    rho = np.hypot(xs - spiral.center[0], ys - spiral.center[1])
    with np.errstate(divide="ignore"):
        theta0 = math.pi * np.log2(rho)
    return (rho > 0) & (theta0 >= spiral.theta_min) & (theta0 <= spiral.theta_max)


def crossing_counts(spiral, geometry, margin_us=20):
    """Events per pixel, plus pixels with an event too close to either end of the run."""
    counts = np.zeros((geometry.height, geometry.width), dtype=int)
    ambiguous = np.zeros_like(counts, dtype=bool)
    end_us = spiral.duration * 1e6
    for ev in generate_events(spiral, geometry):
        counts[ev.y, ev.x] += 1
        if ev.t < margin_us or ev.t > end_us - margin_us:
            ambiguous[ev.y, ev.x] = True
    return counts, ambiguous


def trace_spiral(spiral, geometry, step_us=10, chunk=250):
    """Count arm passages per pixel by marching time and watching the arm's bearing."""
    mask = arm_pixels(spiral, geometry)
    ys, xs = np.nonzero(mask)
    dx, dy = xs - spiral.center[0], ys - spiral.center[1]
    psi = np.arctan2(dy, dx)
    theta0 = math.pi * np.log2(np.hypot(dx, dy))

    times = np.arange(0, int(spiral.duration * 1e6) + 1, step_us) / 1e6
    passes = np.zeros(len(xs), dtype=int)
    previous = None
    for start in range(0, len(times), chunk):
        t = times[start : start + chunk, None]
        # bearing of the pixel relative to the arm point at the same radius
        gap = psi[None, :] - (-theta0[None, :] + spiral.omega * t)
        side = np.signbit(np.sin(gap))
        ahead = np.cos(gap) > 0
        if previous is not None:
            side = np.vstack([previous[0], side])
            ahead = np.vstack([previous[1], ahead])
        passes += ((side[1:] != side[:-1]) & ahead[1:]).sum(axis=0)
        previous = (side[-1:], ahead[-1:])

    traced = np.zeros((geometry.height, geometry.width), dtype=int)
    traced[ys, xs] = passes
    return traced


class TestPipeModel:
    """Rotating pipe."""

    def test_point_speed(self):
        """Test speed grows linearly with the distance from the centre."""
        pipe = PipeModel()
        assert pipe.analytic_velocity(100, 0.0)[0] == pytest.approx(0.221)
        assert pipe.analytic_velocity(50, 0.3)[0] == pytest.approx(0.1105)

    def test_direction_flips_across_centre(self):
        """Test the two halves of the pipe move in opposite directions."""
        pipe = PipeModel()
        _, d_pos = pipe.analytic_velocity(40, 0.2)
        _, d_neg = pipe.analytic_velocity(-40, 0.2)
        assert angle_gap(d_pos, d_neg) == pytest.approx(math.pi)

    def test_invalid_parameters(self):
        """Test degenerate pipes are rejected."""
        with pytest.raises(StimulusError):
            PipeModel(omega=0)
        with pytest.raises(StimulusError):
            PipeModel(width=0.5)
        with pytest.raises(StimulusError):
            PipeModel(half_length=-1)

    def test_fd_oracle_agrees_with_analytic(self):
        """Test finite differences reproduce the analytic velocity."""
        pipe = PipeModel()
        for l in (-120.0, -35.5, 12.0, 90.0, 149.0):
            for t in (0.1, 0.7, 1.3):
                speed, direction = pipe.analytic_velocity(l, t)
                fd_speed, fd_direction = ground_truth_oracle_fd(pipe, l, t)
                assert abs(fd_speed - speed) < 1e-6
                assert angle_gap(fd_direction, direction) < 1e-6

    def test_fd_step_order(self):
        """Test halving h changes the estimate by at most O(h^2)."""
        pipe = PipeModel()
        coarse, _ = ground_truth_oracle_fd(pipe, 80.0, 0.4, h=1e-3)
        fine, _ = ground_truth_oracle_fd(pipe, 80.0, 0.4, h=5e-4)
        assert abs(coarse - fine) < 1e-6

    def test_fd_step_must_be_positive(self):
        """Test a zero finite-difference step is refused."""
        with pytest.raises(StimulusError):
            ground_truth_oracle_fd(PipeModel(), 80.0, 0.4, h=0)

    def test_centre_pixel_never_crossed(self):
        """Test no events are generated at the rotation centre."""
        geometry = SensorGeometry(40, 40)
        pipe = PipeModel(center=(20.0, 20.0), half_length=15, width=4, omega=3.0, duration=0.5)
        events = generate_pipe_events(pipe, geometry)
        assert events
        assert not any((e.x, e.y) == (20, 20) for e in events)

    def test_events_lie_on_the_edges(self):
        """Test every event pixel is on an edge at its timestamp."""
        geometry = SensorGeometry(40, 40)
        pipe = PipeModel(center=(20.0, 20.0), half_length=15, width=4, omega=3.0, duration=0.5)
        for ev in generate_pipe_events(pipe, geometry):
            _, dist = pipe.nearest_edge(ev.x, ev.y, ev.t / 1e6)
            assert dist < 0.01
            assert 0 <= ev.t <= 500_000

    def test_matches_ray_trace(self):
        """Test closed-form crossings against a 10 us march of the edges."""
        geometry = SensorGeometry(24, 24)
        pipe = PipeModel(center=(12.0, 12.0), half_length=9, width=3, omega=20.0, duration=0.1)
        counts = np.zeros((24, 24), dtype=int)
        for ev in generate_events(pipe, geometry):
            counts[ev.y, ev.x] += 1

        t = np.arange(0, 100_001, 10) / 1e6
        ys, xs = np.mgrid[0:24, 0:24]
        dx = (xs - 12.0).ravel()
        dy = (ys - 12.0).ravel()
        c, s = np.cos(pipe.omega * t)[:, None], np.sin(pipe.omega * t)[:, None]
        a = c * dx + s * dy
        l = -s * dx + c * dy
        traced = np.zeros(24 * 24, dtype=int)
        for side in (1, -1):
            d = a - side * pipe.width / 2
            flips = np.signbit(d[1:]) != np.signbit(d[:-1])
            flips &= np.abs(l[1:]) <= pipe.half_length
            traced += flips.sum(axis=0)
        assert np.array_equal(counts.ravel(), traced)

    def test_polarity_marks_entering_edge(self):
        """Test both polarities occur as pixels enter and leave the pipe."""
        geometry = SensorGeometry(40, 40)
        pipe = PipeModel(center=(20.0, 20.0), half_length=15, width=4, omega=3.0, duration=0.5)
        polarities = {e.p for e in generate_events(pipe, geometry)}
        assert polarities == {Polarity.ON, Polarity.OFF}


class TestSpiralModel:
    """Rotating logarithmic spiral."""

    def test_radius(self):
        """Test r = 2^(theta0 / pi)."""
        assert SpiralModel.radius(0) == 1
        assert SpiralModel.radius(math.pi) == pytest.approx(2)
        assert SpiralModel.radius(20) == pytest.approx(82.7, rel=1e-2)

    def test_invalid_parameters(self):
        """Test the theta range and angular velocity are validated."""
        with pytest.raises(StimulusError):
            SpiralModel(theta_min=5, theta_max=1)
        with pytest.raises(StimulusError):
            SpiralModel(omega=0)

    def test_centre_must_be_on_sensor(self):
        """Test a spiral centred off the sensor is rejected."""
        with pytest.raises(StimulusError):
            generate_spiral_events(SpiralModel(center=(500.0, 10.0)), SensorGeometry(64, 64))

    def test_events_lie_on_the_spiral(self):
        """Test sampled event pixels sit on the curve at their timestamp."""
        geometry = SensorGeometry(64, 64)
        spiral = SpiralModel(center=(32.0, 32.0), theta_max=15, duration=0.1)
        events = generate_spiral_events(spiral, geometry)
        assert events
        for ev in events[:: max(1, len(events) // 50)]:
            _, dist = spiral.nearest_edge(ev.x, ev.y, ev.t / 1e6)
            assert dist < 0.01

    def test_printed_formula_discrepancy(self):
        """Test the closed-form speed overshoots the normal speed by sqrt(1 + k^2)."""
        report = spiral_formula_discrepancy(SpiralModel())
        k = LN2_OVER_PI
        assert report["speed_ratio_mean"] == pytest.approx(math.sqrt(1 + k * k), rel=1e-3)
        assert set(report) == {
            "speed_ratio_mean",
            "speed_ratio_max",
            "direction_diff_mean_deg",
            "direction_diff_max_deg",
        }

    def test_matches_ray_trace(self):
        """Test closed-form crossings against a 10 us march of the arm over a full turn."""
        geometry = SensorGeometry(64, 64)
        spiral = SpiralModel(center=(31.5, 32.25), theta_max=15.0)
        counts, ambiguous = crossing_counts(spiral, geometry)
        traced = trace_spiral(spiral, geometry)

        assert counts.sum() > 0
        assert np.array_equal(counts[~ambiguous], traced[~ambiguous])

    def test_every_arm_pixel_crossed_each_turn(self):
        """Test every pixel the arm sweeps over sees it once or twice in one rotation."""
        spiral = SpiralModel()
        counts, _ = crossing_counts(spiral, QVGA)
        on_arm = arm_pixels(spiral, QVGA)

        assert on_arm.sum() > 20_000
        assert counts[on_arm].min() >= 1
        assert counts[on_arm].max() <= 2
        assert not counts[~on_arm].any()

    @pytest.mark.parametrize("omega", [12.57, -12.57])
    def test_rotation_sense(self, omega):
        """Test both rotation directions cover the outer winding."""
        geometry = SensorGeometry(64, 64)
        spiral = SpiralModel(center=(31.5, 32.25), theta_max=15.0, omega=omega)
        counts, _ = crossing_counts(spiral, geometry)
        assert counts[arm_pixels(spiral, geometry)].min() >= 1

    @pytest.mark.acceptance
    def test_matches_ray_trace_full_frame(self):
        """Test the default spiral against a 10 us march on the full sensor."""
        spiral = SpiralModel()
        counts, ambiguous = crossing_counts(spiral, QVGA)
        traced = trace_spiral(spiral, QVGA)
        assert np.array_equal(counts[~ambiguous], traced[~ambiguous])


class TestEdgeModel:
    """Translating straight edge."""

    def test_crossing_times(self):
        """Test a vertical edge at 0.5 px/ms reaches column x at 2x ms."""
        geometry = SensorGeometry(16, 4)
        edge = EdgeModel(origin=(0.0, 0.0), angle=0.0, speed=0.5, duration=0.019)
        events = generate_events(edge, geometry)
        assert len(events) == 10 * 4
        for ev in events:
            assert ev.t == ev.x * 2000
            assert ev.p == Polarity.OFF

    def test_sorted_by_time_then_row(self):
        """Test output ordering is (t, y, x)."""
        geometry = SensorGeometry(16, 4)
        edge = EdgeModel(speed=0.5, duration=0.019)
        events = generate_events(edge, geometry)
        keys = [(e.t, e.y, e.x) for e in events]
        assert keys == sorted(keys)

    def test_ground_truth(self):
        """Test the edge reports its own speed and direction near the edge."""
        edge = EdgeModel(angle=math.pi / 2, speed=0.25, duration=0.1)
        sample = ground_truth_at(edge, 3.0, 5.0, 20_000, radius=1.5)
        assert sample is not None
        assert sample.speed == 0.25
        assert sample.direction == pytest.approx(math.pi / 2)

    def test_speed_must_be_positive(self):
        """Test a stationary edge is rejected."""
        with pytest.raises(StimulusError):
            EdgeModel(speed=0)


class TestGroundTruth:
    """Ground-truth queries."""

    def test_far_from_edges_is_absent(self):
        """Test a query 10 px from any edge returns None."""
        pipe = PipeModel()
        # at t=0 the pipe is vertical through the centre
        assert ground_truth_at(pipe, 152 + 15, 120, 0, radius=1.5) is None

    def test_on_edge(self):
        """Test a point on the pipe edge yields the analytic speed."""
        pipe = PipeModel()
        sample = ground_truth_at(pipe, 152 + 5, 120 + 50, 0, radius=1.5)
        assert sample is not None
        assert sample.speed == pytest.approx(0.1105)

    def test_outside_duration(self):
        """Test queries after the stimulus ends are absent."""
        pipe = PipeModel(duration=1.0)
        assert ground_truth_at(pipe, 157, 170, 1_000_001) is None

    def test_radius_must_be_positive(self):
        """Test the match radius is validated."""
        with pytest.raises(StimulusError):
            ground_truth_at(PipeModel(), 0, 0, 0, radius=0)


class TestGenerateEvents:
    """Generator options."""

    def test_noise_is_seeded(self):
        """Test the same seed gives the same noisy stream."""
        geometry = SensorGeometry(16, 16)
        edge = EdgeModel(speed=0.5, duration=0.03)
        a = generate_events(edge, geometry, noise_rate=200, seed=5)
        b = generate_events(edge, geometry, noise_rate=200, seed=5)
        c = generate_events(edge, geometry, noise_rate=200, seed=6)
        assert a == b
        assert a != c
        assert len(a) > len(edge_census(edge, geometry))

    def test_off_sensor_stimulus_is_empty(self):
        """Test an edge that never reaches the sensor gives no events."""
        edge = EdgeModel(origin=(100.0, 0.0), speed=0.1, duration=0.01)
        assert generate_events(edge, SensorGeometry(8, 8)) == []


class TestMakeModel:
    """Model factory."""

    def test_by_name(self):
        """Test names map to models and list centres become tuples."""
        model = make_model("spiral", center=[10, 12], duration=0.2)
        assert isinstance(model, SpiralModel)
        assert model.center == (10.0, 12.0)
        assert isinstance(make_model("pipe"), PipeModel)

    def test_unknown_kind(self):
        """Test unknown stimulus names are rejected."""
        with pytest.raises(StimulusError):
            make_model("checkerboard")

    def test_unknown_parameter(self):
        """Test unexpected parameters raise a stimulus error."""
        with pytest.raises(StimulusError):
            make_model("pipe", radius=4)
