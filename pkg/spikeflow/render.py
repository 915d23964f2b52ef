"""Colour-coded flow frames written as binary portable pixmaps (P6).

Hue encodes the direction of motion (0 rad is hue 0, increasing linearly
to a full turn), value encodes speed up to 1 px/ms. Pixels without an
estimate stay black.
"""

import hashlib
import logging
import math
from pathlib import Path
from typing import List, Sequence

import matplotlib.colors as colors
import numpy as np

from .decode import FlowEstimate
from .events import SensorGeometry

logger = logging.getLogger(__name__)

SPEED_CEILING = 1.0  # px/ms


def render_frame(estimates: Sequence[FlowEstimate], geometry: SensorGeometry) -> np.ndarray:
    """(height, width, 3) uint8 image; later estimates overwrite earlier ones."""
    hsv = np.zeros((geometry.height, geometry.width, 3), dtype=np.float64)
    for est in sorted(estimates, key=lambda e: (e.t, e.y, e.x)):
        if not geometry.contains(est.x, est.y):
            continue
        hsv[est.y, est.x] = (
            est.direction / (2 * math.pi),
            1.0,
            min(est.speed / SPEED_CEILING, 1.0),
        )
    rgb = colors.hsv_to_rgb(hsv)
    return np.round(rgb * 255).astype(np.uint8)


def render_flow(
    estimates: Sequence[FlowEstimate],
    geometry: SensorGeometry,
    window_ms: float,
    tick_ms: float = 1.0,
) -> List[np.ndarray]:
    """One frame per ``window_ms`` slice of estimate start times."""
    if window_ms <= 0:
        raise ValueError(f"window_ms must be positive, got {window_ms}")
    if not estimates:
        return [render_frame([], geometry)]
    window_ticks = window_ms / tick_ms
    last = max(e.t for e in estimates)
    count = int(last // window_ticks) + 1
    buckets: List[List[FlowEstimate]] = [[] for _ in range(count)]
    for est in estimates:
        buckets[int(est.t // window_ticks)].append(est)
    return [render_frame(bucket, geometry) for bucket in buckets]


def ppm_bytes(image: np.ndarray) -> bytes:
    height, width = image.shape[:2]
    header = f"P6\n{width} {height}\n255\n".encode("ascii")
    return header + np.ascontiguousarray(image, dtype=np.uint8).tobytes()


def write_ppm(path: Path, image: np.ndarray) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(ppm_bytes(image))


def read_ppm(path: Path) -> np.ndarray:
    data = path.read_bytes()
    fields: List[bytes] = []
    pos = 0
    while len(fields) < 4 and pos < len(data):
        while data[pos : pos + 1].isspace():
            pos += 1
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        fields.append(data[start:pos])
    if len(fields) < 4 or fields[0] != b"P6" or fields[3] != b"255":
        raise ValueError(f"{path} is not an 8-bit binary PPM")
    width, height = int(fields[1]), int(fields[2])
    # exactly one whitespace byte separates the header from the raster
    pixels = np.frombuffer(data, dtype=np.uint8, count=width * height * 3, offset=pos + 1)
    return pixels.reshape(height, width, 3)


def image_hash(image: np.ndarray) -> str:
    return hashlib.sha256(ppm_bytes(image)).hexdigest()


def save_frames(
    directory: Path,
    estimates: Sequence[FlowEstimate],
    geometry: SensorGeometry,
    window_ms: float,
    tick_ms: float = 1.0,
) -> List[Path]:
    """Write ``flow.ppm`` (whole run) and ``frame_NNNN.ppm`` per window."""
    directory.mkdir(parents=True, exist_ok=True)
    paths = [directory / "flow.ppm"]
    write_ppm(paths[0], render_frame(estimates, geometry))
    for k, frame in enumerate(render_flow(estimates, geometry, window_ms, tick_ms)):
        path = directory / f"frame_{k:04d}.ppm"
        write_ppm(path, frame)
        paths.append(path)
    logger.info("rendered %d frames to %s", len(paths), directory)
    return paths
