"""Flow accuracy against analytic ground truth."""

import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .decode import FlowEstimate
from .events import Event, US_PER_MS
from .stimulus import StimulusModel, ground_truth_at

logger = logging.getLogger(__name__)

SPEED_EPSILON = 1e-12
ERROR_MAP_HEADER = "x,y,count,angular_error_deg,aee_px_per_ms,relative_aee"


@dataclass(frozen=True)
class PixelError:
    x: int
    y: int
    count: int
    angular_error: float  # degrees, mean over the pixel's matched estimates
    aee: float  # px/ms
    relative_aee: Optional[float]


@dataclass
class EvalReport:
    mean_abs_angular_error: float = 0.0  # degrees
    relative_aee: float = 0.0  # mean of per-sample ratios
    relative_aee_ratio_of_means: float = 0.0
    absolute_aee: float = 0.0  # px/ms
    density: float = 0.0
    matched: int = 0
    unmatched: int = 0
    census: int = 0
    census_matched: int = 0
    relative_samples: int = 0
    error_map: List[PixelError] = field(default_factory=list)

    def passes(self, max_aae: Optional[float] = None, max_aee: Optional[float] = None) -> bool:
        """Threshold gate on mean angular error (deg) and relative AEE (fraction)."""
        if max_aae is not None and self.mean_abs_angular_error > max_aae:
            return False
        if max_aee is not None and self.relative_aee > max_aee:
            return False
        return True

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data.pop("error_map")
        return data


def angular_error(v_est: Tuple[float, float], direction: float) -> float:
    """|wrapped(angle(v_est) - direction)| in degrees, within [0, 180]."""
    diff = math.atan2(v_est[1], v_est[0]) - direction
    wrapped = math.atan2(math.sin(diff), math.cos(diff))
    return abs(math.degrees(wrapped))


def _tick_offsets(tolerance: int) -> List[int]:
    offsets = [0]
    for k in range(1, tolerance + 1):
        offsets.extend((-k, k))
    return offsets


def evaluate(
    estimates: Sequence[FlowEstimate],
    model: StimulusModel,
    match_radius: float = 1.5,
    time_tolerance: int = 2,
    census: Optional[Sequence[Event]] = None,
    latency: int = 1,
    tick_ms: float = 1.0,
) -> EvalReport:
    """Match each estimate to the ground truth and aggregate the errors.

    An estimate at burst-start tick t describes the edge that reached its
    pixel at tick ``t - latency``; the ground truth is queried at the middle
    of that tick, then up to ``time_tolerance`` ticks either side.
    ``census`` (the noise-free stimulus events) is the density denominator.
    """
    if match_radius <= 0:
        raise ValueError(f"match_radius must be positive, got {match_radius}")
    tick_us = tick_ms * US_PER_MS
    ordered = sorted(estimates, key=lambda e: (e.t, e.y, e.x, e.vx, e.vy))
    offsets = _tick_offsets(time_tolerance)

    census_ticks: Dict[Tuple[int, int], List[int]] = {}
    for ev in census or ():
        census_ticks.setdefault((ev.x, ev.y), []).append(int(ev.t // tick_us))
    claimed = set()
    matched: List[Tuple[int, int, float, float, float, float]] = []
    unmatched = 0

    for est in ordered:
        event_tick = est.t - latency
        sample = None
        for off in offsets:
            t_us = int(round((event_tick + off + 0.5) * tick_us))
            if t_us < 0:
                continue
            sample = ground_truth_at(model, est.x, est.y, t_us, match_radius)
            if sample is not None:
                break
        if sample is None:
            unmatched += 1
            continue

        matched.append((est.x, est.y, est.vx, est.vy, sample.speed, sample.direction))
        for k, tick in enumerate(census_ticks.get((est.x, est.y), ())):
            if abs(tick - event_tick) <= time_tolerance:
                claimed.add((est.x, est.y, k))

    report = EvalReport(
        unmatched=unmatched,
        census=len(census) if census is not None else 0,
        census_matched=len(claimed),
    )
    if report.census:
        report.density = report.census_matched / report.census
    if matched:
        _aggregate(report, np.array(matched, dtype=np.float64))

    logger.info(
        "evaluated %d estimates: %d matched, AAE %.2f deg, relative AEE %.3f, density %.3f",
        len(ordered),
        report.matched,
        report.mean_abs_angular_error,
        report.relative_aee,
        report.density,
    )
    return report


def _aggregate(report: EvalReport, table: np.ndarray) -> None:
    """Fill the error statistics from rows of (x, y, vx, vy, gt_speed, gt_direction)."""
    x, y = table[:, 0].astype(np.int64), table[:, 1].astype(np.int64)
    vx, vy, speed, direction = table[:, 2], table[:, 3], table[:, 4], table[:, 5]

    diff = np.arctan2(vy, vx) - direction
    angular = np.abs(np.degrees(np.arctan2(np.sin(diff), np.cos(diff))))
    aee = np.hypot(vx - speed * np.cos(direction), vy - speed * np.sin(direction))
    has_speed = speed > SPEED_EPSILON
    relative = aee[has_speed] / speed[has_speed]

    report.matched = len(table)
    report.relative_samples = int(has_speed.sum())
    report.mean_abs_angular_error = float(angular.mean())
    report.absolute_aee = float(aee.mean())
    if len(relative):
        report.relative_aee = float(relative.mean())
        report.relative_aee_ratio_of_means = float(aee[has_speed].sum() / speed[has_speed].sum())

    # unique (y, x) rows come out in row-major order
    pixels, inverse = np.unique(np.stack([y, x], axis=1), axis=0, return_inverse=True)
    inverse = inverse.ravel()
    n = len(pixels)
    counts = np.bincount(inverse, minlength=n)
    ang_sum = np.bincount(inverse, weights=angular, minlength=n)
    aee_sum = np.bincount(inverse, weights=aee, minlength=n)
    rel_count = np.bincount(inverse[has_speed], minlength=n)
    rel_sum = np.bincount(inverse[has_speed], weights=relative, minlength=n)
    report.error_map = [
        PixelError(
            x=int(px),
            y=int(py),
            count=int(c),
            angular_error=float(a / c),
            aee=float(e / c),
            relative_aee=float(r / rc) if rc else None,
        )
        for (py, px), c, a, e, r, rc in zip(pixels, counts, ang_sum, aee_sum, rel_sum, rel_count)
    ]


def write_error_map(path: Path, report: EvalReport) -> None:
    lines = [ERROR_MAP_HEADER]
    for p in report.error_map:
        rel = "" if p.relative_aee is None else f"{p.relative_aee:.6f}"
        lines.append(f"{p.x},{p.y},{p.count},{p.angular_error:.6f},{p.aee:.6f},{rel}")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")
    logger.debug("wrote error map of %d pixels to %s", len(report.error_map), path)
