"""Vehicle dynamics snapshots and the condition-1 thresholds."""

from __future__ import annotations

import math
from dataclasses import dataclass, field


def normalize_heading(heading: float) -> float:
    """
    Wrap a heading into ``[0, 360)`` degrees.

    :argument heading: Heading in degrees, any range
    :returns: Equivalent heading in ``[0, 360)``
    """
    wrapped = math.fmod(heading, 360.0)
    if wrapped < 0:
        wrapped += 360.0
    # fmod of tiny negatives can round up to exactly 360
    return 0.0 if wrapped >= 360.0 else wrapped


def heading_difference(a: float, b: float) -> float:
    """
    Get the shorter angular arc between two headings.

    :argument a: First heading in degrees
    :argument b: Second heading in degrees
    :returns: Arc length in degrees, within ``[0, 180]``
    """
    delta = abs(normalize_heading(a) - normalize_heading(b))
    return min(delta, 360.0 - delta)


@dataclass(frozen=True, slots=True)
class VehicleDynamics:
    """
    Snapshot of the state the CA service compares between generations.

    Attributes:
        x: Position east, meters
        y: Position north, meters
        speed: Ground speed, m/s
        acceleration: Longitudinal acceleration, m/s^2
        heading: Heading in degrees, normalized to [0, 360)
    """

    x: float = 0.0
    y: float = 0.0
    speed: float = 0.0
    acceleration: float = 0.0
    heading: float = 0.0

    def __post_init__(self) -> None:
        """
        Normalize the heading and reject negative speeds.

        :returns: None
        :raises ValueError: If speed is negative
        """
        if self.speed < 0:
            raise ValueError(f"speed must be >= 0, got {self.speed}")
        object.__setattr__(self, "heading", normalize_heading(self.heading))

    def distance_to(self, other: VehicleDynamics) -> float:
        """Euclidean distance between the two positions, meters."""
        return math.hypot(self.x - other.x, self.y - other.y)


@dataclass(frozen=True, slots=True)
class TriggerThresholds:
    """
    Dynamics deltas that trigger a condition-1 CAM.

    Attributes:
        position_delta: Position shift, meters
        speed_delta: Speed change, m/s
        heading_delta: Heading change, degrees
    """

    position_delta: float = field(default=4.0)
    speed_delta: float = field(default=0.5)
    heading_delta: float = field(default=4.0)

    def __post_init__(self) -> None:
        """
        Reject non-positive thresholds.

        :returns: None
        :raises ValueError: If any threshold is not strictly positive
        """
        for name in ("position_delta", "speed_delta", "heading_delta"):
            value = getattr(self, name)
            if value <= 0:
                raise ValueError(f"{name} must be > 0, got {value}")

    def exceeded(
        self, baseline: VehicleDynamics, current: VehicleDynamics
    ) -> bool:
        """
        Check whether any delta against the baseline exceeds its threshold.

        :argument baseline: Dynamics stored at the last generation
        :argument current: Dynamics sampled now
        :returns: True if position, speed or heading moved too far
        """
        return (
            baseline.distance_to(current) > self.position_delta
            or abs(current.speed - baseline.speed) > self.speed_delta
            or heading_difference(baseline.heading, current.heading)
            > self.heading_delta
        )
