"""Synthetic event streams with analytic ground truth.

Three moving-edge stimuli are modelled in image coordinates (x to the right,
y down, pixel centres on integer coordinates):

* ``PipeModel`` - two parallel edges ``width`` apart rotating about the centre
* ``SpiralModel`` - a logarithmic spiral r = 2^(theta0/pi) rotating about the centre
* ``EdgeModel`` - a straight edge translating at constant normal speed

Generators solve pixel-centre crossing times in closed form, so every edge
passage over a pixel yields exactly one event at microsecond resolution.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import optimize

from .events import Event, Polarity, SensorGeometry, QVGA
from .exceptions import StimulusError

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
LN2_OVER_PI = math.log(2.0) / math.pi


@dataclass(frozen=True)
class GroundTruthSample:
    x: float
    y: float
    t: int  # microseconds
    speed: float  # pixels/ms, normal to the edge
    direction: float  # radians in [0, 2*pi)


def wrap_angle(angle: float) -> float:
    """Wrap to [0, 2*pi)."""
    wrapped = math.fmod(angle, TWO_PI)
    if wrapped < 0:
        wrapped += TWO_PI
    # fmod of a value just below 0 can round up to exactly 2*pi
    return 0.0 if wrapped >= TWO_PI else wrapped


@dataclass(frozen=True)
class PipeModel:
    center: Tuple[float, float] = (152.0, 120.0)
    half_length: float = 150.0
    width: float = 10.0
    omega: float = 2.21  # rad/s
    duration: float = 1.5  # s

    def __post_init__(self):
        if self.omega == 0:
            raise StimulusError("pipe angular velocity must be non-zero")
        if self.half_length <= 0:
            raise StimulusError("pipe half_length must be positive")
        if self.width < 1:
            raise StimulusError("pipe width must be at least 1 pixel")
        if self.duration <= 0:
            raise StimulusError("pipe duration must be positive")

    def location(self, l: float, t: float, side: int = 1) -> np.ndarray:
        """Pixel position of the point at ``l`` along edge ``side`` (+1/-1) at time t (s)."""
        c, s = math.cos(self.omega * t), math.sin(self.omega * t)
        a = side * self.width / 2.0
        return np.array(
            [self.center[0] + c * a - s * l, self.center[1] + s * a + c * l]
        )

    def analytic_velocity(self, l: float, t: float) -> Tuple[float, float]:
        """Normal speed (px/ms) and direction (rad) of the edges at ``l``."""
        speed = abs(l * self.omega) / 1000.0
        # normal velocity is -omega * l along (cos wt, sin wt)
        direction = self.omega * t
        if self.omega * l > 0:
            direction += math.pi
        return speed, wrap_angle(direction)

    def nearest_edge(
        self, x: float, y: float, t: float
    ) -> Tuple[Tuple[float, int], float]:
        """((l, side), distance) of the closest edge point at time t (s)."""
        dx, dy = x - self.center[0], y - self.center[1]
        c, s = math.cos(self.omega * t), math.sin(self.omega * t)
        a = c * dx + s * dy
        l = -s * dx + c * dy
        l_clamped = min(max(l, -self.half_length), self.half_length)
        best: Optional[Tuple[Tuple[float, int], float]] = None
        for side in (1, -1):
            da = a - side * self.width / 2.0
            dist = math.hypot(da, l - l_clamped)
            if best is None or dist < best[1]:
                best = ((l_clamped, side), dist)
        assert best is not None
        return best

    def crossings(
        self, geometry: SensorGeometry
    ) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Pixel-centre crossing times of both edges: (x, y, t_seconds, polarity)."""
        xs, ys = _pixel_grid(geometry)
        dx, dy = xs - self.center[0], ys - self.center[1]
        rho = np.hypot(dx, dy)
        psi = np.arctan2(dy, dx)
        half_w = self.width / 2.0

        # pixels closer than w/2 to the axis of rotation are never crossed
        reach = np.sqrt(np.maximum(rho**2 - half_w**2, 0.0))
        valid = (rho > half_w) & (reach <= self.half_length)
        xs, ys, rho, psi = xs[valid], ys[valid], rho[valid], psi[valid]

        if not len(xs):
            return _concat([], [], [], [])

        out_x, out_y, out_t, out_p = [], [], [], []
        for side in (1, -1):
            alpha = np.arccos(np.clip(side * half_w / rho, -1.0, 1.0))
            for branch in (1, -1):
                # l has the sign of branch at the crossing
                phase = psi - branch * alpha
                for k in _windings(phase, self.omega, self.duration):
                    t = (phase + TWO_PI * k) / self.omega
                    hit = (t >= 0) & (t < self.duration)
                    if not hit.any():
                        continue
                    # pixel enters the pipe when a * da/dt < 0, da/dt = l * omega
                    entering = side * branch * self.omega < 0
                    out_x.append(xs[hit])
                    out_y.append(ys[hit])
                    out_t.append(t[hit])
                    out_p.append(
                        np.full(int(hit.sum()), Polarity.OFF if entering else Polarity.ON)
                    )
        return _concat(out_x, out_y, out_t, out_p)


@dataclass(frozen=True)
class SpiralModel:
    center: Tuple[float, float] = (152.0, 120.0)
    theta_min: float = 0.0
    theta_max: float = 20.0
    omega: float = -12.57  # rad/s
    duration: float = 0.5  # s

    def __post_init__(self):
        if self.omega == 0:
            raise StimulusError("spiral angular velocity must be non-zero")
        if not 0 <= self.theta_min < self.theta_max:
            raise StimulusError("spiral theta range must satisfy 0 <= min < max")
        if self.duration <= 0:
            raise StimulusError("spiral duration must be positive")

    @staticmethod
    def radius(theta0: float) -> float:
        return 2.0 ** (theta0 / math.pi)

    def location(self, theta0: float, t: float) -> np.ndarray:
        r = self.radius(theta0)
        phi = -theta0 + t * self.omega
        return np.array(
            [self.center[0] + r * math.cos(phi), self.center[1] + r * math.sin(phi)]
        )

    def printed_velocity(self, theta0: float, t: float) -> Tuple[float, float]:
        """Speed (px/ms) and direction (rad) exactly as the closed-form model states them."""
        correction = LN2_OVER_PI / self.omega
        speed = (
            self.radius(theta0) * LN2_OVER_PI * self.omega / math.cos(correction)
        ) / 1000.0
        direction = -theta0 + t * self.omega + math.sin(correction)
        return speed, wrap_angle(direction)

    def nearest_edge(self, x: float, y: float, t: float) -> Tuple[float, float]:
        """(theta0, distance) of the closest spiral point at time t (s)."""
        dx, dy = x - self.center[0], y - self.center[1]
        psi = math.atan2(dy, dx)
        target = np.array([x, y])

        def dist2(theta0: float) -> float:
            d = self.location(theta0, t) - target
            return float(d @ d)

        base = self.omega * t - psi
        k_lo = math.floor((self.theta_min - 1.0 - base) / TWO_PI)
        k_hi = math.ceil((self.theta_max + 1.0 - base) / TWO_PI)
        best_theta, best_d2 = self.theta_min, dist2(self.theta_min)
        d2 = dist2(self.theta_max)
        if d2 < best_d2:
            best_theta, best_d2 = self.theta_max, d2

        rho = math.hypot(dx, dy)
        guesses = sorted(
            (base + TWO_PI * k for k in range(k_lo, k_hi + 1)),
            key=lambda g: abs(rho - self.radius(g)),
        )
        # only the two windings radially closest to the point can hold the minimum
        for guess in guesses[:2]:
            lo = max(self.theta_min, guess - 1.0)
            hi = min(self.theta_max, guess + 1.0)
            if lo >= hi:
                continue
            res = optimize.minimize_scalar(
                dist2, bounds=(lo, hi), method="bounded", options={"xatol": 1e-9}
            )
            if res.fun < best_d2:
                best_theta, best_d2 = float(res.x), float(res.fun)
        return best_theta, math.sqrt(best_d2)

    def crossings(
        self, geometry: SensorGeometry
    ) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        xs, ys = _pixel_grid(geometry)
        dx, dy = xs - self.center[0], ys - self.center[1]
        rho = np.hypot(dx, dy)
        valid = rho > 0
        xs, ys, rho = xs[valid], ys[valid], rho[valid]
        psi = np.arctan2(dy[valid], dx[valid])
        theta0 = math.pi * np.log2(rho)
        inside = (theta0 >= self.theta_min) & (theta0 <= self.theta_max)
        xs, ys, theta0, psi = xs[inside], ys[inside], theta0[inside], psi[inside]
        if not len(xs):
            return _concat([], [], [], [])

        # a pixel sits on the arm when psi + theta0 + 2*pi*k = omega * t
        phase = psi + theta0
        out_x, out_y, out_t, out_p = [], [], [], []
        for k in _windings(phase, self.omega, self.duration):
            t = (phase + TWO_PI * k) / self.omega
            hit = (t >= 0) & (t < self.duration)
            if not hit.any():
                continue
            out_x.append(xs[hit])
            out_y.append(ys[hit])
            out_t.append(t[hit])
            out_p.append(np.full(int(hit.sum()), Polarity.ON))
        return _concat(out_x, out_y, out_t, out_p)


@dataclass(frozen=True)
class EdgeModel:
    """Straight edge through ``origin`` at t=0, moving along ``angle`` at ``speed`` px/ms."""

    origin: Tuple[float, float] = (0.0, 0.0)
    angle: float = 0.0  # rad, direction of motion
    speed: float = 0.1  # pixels/ms
    duration: float = 1.0  # s

    def __post_init__(self):
        if self.speed <= 0:
            raise StimulusError("edge speed must be positive")
        if self.duration <= 0:
            raise StimulusError("edge duration must be positive")

    @property
    def center(self) -> Tuple[float, float]:
        return self.origin

    @property
    def normal(self) -> Tuple[float, float]:
        return math.cos(self.angle), math.sin(self.angle)

    def location(self, s: float, t: float) -> np.ndarray:
        """Point ``s`` pixels along the edge at time t (s)."""
        nx, ny = self.normal
        travel = self.speed * t * 1000.0
        return np.array(
            [
                self.origin[0] + nx * travel - ny * s,
                self.origin[1] + ny * travel + nx * s,
            ]
        )

    def analytic_velocity(self, s: float, t: float) -> Tuple[float, float]:
        return self.speed, wrap_angle(self.angle)

    def nearest_edge(self, x: float, y: float, t: float) -> Tuple[float, float]:
        nx, ny = self.normal
        dx, dy = x - self.origin[0], y - self.origin[1]
        along = -ny * dx + nx * dy
        across = nx * dx + ny * dy - self.speed * t * 1000.0
        return along, abs(across)

    def crossings(
        self, geometry: SensorGeometry
    ) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        xs, ys = _pixel_grid(geometry)
        nx, ny = self.normal
        t_ms = (nx * (xs - self.origin[0]) + ny * (ys - self.origin[1])) / self.speed
        t = t_ms / 1000.0
        hit = (t >= 0) & (t < self.duration)
        return (
            xs[hit],
            ys[hit],
            t[hit],
            np.full(int(hit.sum()), Polarity.OFF),
        )


StimulusModel = Union[PipeModel, SpiralModel, EdgeModel]

STIMULI: Dict[str, type] = {
    "pipe": PipeModel,
    "spiral": SpiralModel,
    "edge": EdgeModel,
}


def make_model(kind: str, **params) -> StimulusModel:
    """Build a stimulus model by name; tuple-valued params may be given as lists."""
    if kind not in STIMULI:
        raise StimulusError(
            f"unknown stimulus '{kind}', expected one of {', '.join(STIMULI)}"
        )
    for key in ("center", "origin"):
        if key in params and params[key] is not None:
            params[key] = tuple(float(v) for v in params[key])
    try:
        return STIMULI[kind](**params)
    except TypeError as e:
        raise StimulusError(f"invalid {kind} parameters: {e}") from e


def _pixel_grid(geometry: SensorGeometry) -> Tuple[np.ndarray, np.ndarray]:
    ys, xs = np.mgrid[0 : geometry.height, 0 : geometry.width]
    return xs.ravel().astype(np.float64), ys.ravel().astype(np.float64)


def _windings(phase: np.ndarray, omega: float, duration: float) -> range:
    """Every k for which phase + 2*pi*k can fall in the angle swept over [0, duration)."""
    swept = omega * duration
    lo, hi = min(0.0, swept), max(0.0, swept)
    return range(
        math.floor((lo - float(phase.max())) / TWO_PI),
        math.ceil((hi - float(phase.min())) / TWO_PI) + 1,
    )


def _concat(out_x, out_y, out_t, out_p):
    if not out_x:
        empty = np.empty(0)
        return empty, empty, empty, np.empty(0, dtype=np.int64)
    return (
        np.concatenate(out_x),
        np.concatenate(out_y),
        np.concatenate(out_t),
        np.concatenate(out_p).astype(np.int64),
    )


def _check_center(model: StimulusModel, geometry: SensorGeometry) -> None:
    cx, cy = model.center
    if isinstance(model, EdgeModel):
        return
    if not (0 <= cx < geometry.width and 0 <= cy < geometry.height):
        raise StimulusError(
            f"stimulus centre ({cx}, {cy}) outside "
            f"{geometry.width}x{geometry.height} sensor"
        )


def generate_events(
    model: StimulusModel,
    geometry: SensorGeometry = QVGA,
    noise_rate: float = 0.0,
    seed: int = 0,
) -> List[Event]:
    """Time-sorted events for any stimulus model plus optional Poisson noise.

    ``noise_rate`` is background events per pixel per second.
    """
    _check_center(model, geometry)
    xs, ys, ts, ps = model.crossings(geometry)
    t_us = np.rint(ts * 1e6).astype(np.int64)

    if noise_rate > 0:
        rng = np.random.default_rng(seed)
        count = rng.poisson(noise_rate * geometry.pixel_count * model.duration)
        noise_x = rng.integers(0, geometry.width, count)
        noise_y = rng.integers(0, geometry.height, count)
        noise_t = rng.integers(0, int(round(model.duration * 1e6)), count)
        noise_p = rng.integers(0, 2, count)
        xs = np.concatenate([xs, noise_x])
        ys = np.concatenate([ys, noise_y])
        t_us = np.concatenate([t_us, noise_t])
        ps = np.concatenate([ps, noise_p])
        logger.debug("injected %d noise events", count)

    xs = xs.astype(np.int64)
    ys = ys.astype(np.int64)
    ps = ps.astype(np.int64)
    order = np.lexsort((ps, xs, ys, t_us))
    events = [
        Event(int(xs[i]), int(ys[i]), int(t_us[i]), Polarity(int(ps[i])))
        for i in order
    ]
    if not events:
        logger.warning("%s projects entirely off the sensor: empty stream", model)
    else:
        logger.info("generated %d events from %s", len(events), type(model).__name__)
    return events


def generate_pipe_events(
    model: PipeModel,
    geometry: SensorGeometry = QVGA,
    noise_rate: float = 0.0,
    seed: int = 0,
) -> List[Event]:
    return generate_events(model, geometry, noise_rate, seed)


def generate_spiral_events(
    model: SpiralModel,
    geometry: SensorGeometry = QVGA,
    noise_rate: float = 0.0,
    seed: int = 0,
) -> List[Event]:
    return generate_events(model, geometry, noise_rate, seed)


def ground_truth_oracle_fd(
    model: StimulusModel, param: float, t: float, h: float = 1e-6, side: int = 1
) -> Tuple[float, float]:
    """Normal speed (px/ms) and direction (rad) by central differences.

    The edge velocity is the central difference of ``location`` over t,
    projected onto the unit normal of the curve tangent (itself a central
    difference over the curve parameter).
    """
    if h <= 0:
        raise StimulusError("finite-difference step must be positive")

    def loc(p: float, tt: float) -> np.ndarray:
        if isinstance(model, PipeModel):
            return model.location(p, tt, side)
        return model.location(p, tt)

    velocity = (loc(param, t + h) - loc(param, t - h)) / (2.0 * h)
    dp = 1e-4
    tangent = loc(param + dp, t) - loc(param - dp, t)
    normal = np.array([tangent[1], -tangent[0]])
    normal /= np.linalg.norm(normal)
    component = float(velocity @ normal)
    if component < 0:
        normal = -normal
        component = -component
    direction = math.atan2(normal[1], normal[0])
    return component / 1000.0, wrap_angle(direction)


def ground_truth_at(
    model: StimulusModel, x: float, y: float, t: int, radius: float = 1.5
) -> Optional[GroundTruthSample]:
    """Normal flow of the nearest edge point within ``radius`` of (x, y) at t (µs)."""
    if radius <= 0:
        raise StimulusError("radius must be positive")
    t_s = t / 1e6
    if not 0 <= t_s <= model.duration:
        return None

    if isinstance(model, PipeModel):
        (l, _side), dist = model.nearest_edge(x, y, t_s)
        if dist > radius:
            return None
        speed, direction = model.analytic_velocity(l, t_s)
    elif isinstance(model, SpiralModel):
        theta0, dist = model.nearest_edge(x, y, t_s)
        if dist > radius:
            return None
        speed, direction = ground_truth_oracle_fd(model, theta0, t_s)
    else:
        s, dist = model.nearest_edge(x, y, t_s)
        if dist > radius:
            return None
        speed, direction = model.analytic_velocity(s, t_s)
    return GroundTruthSample(x, y, t, speed, direction)


def spiral_formula_discrepancy(
    model: SpiralModel, thetas: Optional[Sequence[float]] = None, t: float = 0.0
) -> Dict[str, float]:
    """Compare the closed-form spiral speed/direction with the finite-difference oracle."""
    if thetas is None:
        thetas = np.linspace(model.theta_min, model.theta_max, 41)
    ratios, angle_diffs = [], []
    for theta0 in thetas:
        printed_speed, printed_dir = model.printed_velocity(float(theta0), t)
        fd_speed, fd_dir = ground_truth_oracle_fd(model, float(theta0), t)
        ratios.append(abs(printed_speed) / fd_speed)
        diff = wrap_angle(printed_dir - fd_dir)
        angle_diffs.append(min(diff, TWO_PI - diff))
    report = {
        "speed_ratio_mean": float(np.mean(ratios)),
        "speed_ratio_max": float(np.max(ratios)),
        "direction_diff_mean_deg": math.degrees(float(np.mean(angle_diffs))),
        "direction_diff_max_deg": math.degrees(float(np.max(angle_diffs))),
    }
    logger.warning(
        "spiral closed-form vs finite-difference: speed ratio %.4f, direction offset %.2f deg",
        report["speed_ratio_mean"],
        report["direction_diff_mean_deg"],
    )
    return report


def edge_census(model: StimulusModel, geometry: SensorGeometry = QVGA) -> List[Event]:
    """Noise-free stimulus events: one per (pixel, edge passage)."""
    return generate_events(model, geometry, noise_rate=0.0)
