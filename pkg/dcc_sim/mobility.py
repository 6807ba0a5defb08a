"""Vehicle positions and dynamics for the static line and the ring road."""

from __future__ import annotations

import math
from abc import ABC, abstractmethod

import numpy as np

from dcc_sim.clock import SimTime, to_seconds
from dcc_sim.dynamics import VehicleDynamics

MEASUREMENT_RANGE = 400.0


class Scenario(ABC):
    """Closed-form mobility: every query is a pure function of time."""

    is_static: bool = False
    n_vehicles: int

    @abstractmethod
    def positions_at(self, t: SimTime) -> np.ndarray:
        """
        Get every vehicle position at ``t``.

        :argument t: Simulation time
        :returns: Array of shape (n_vehicles, 2), meters
        """

    @abstractmethod
    def dynamics_at(self, vehicle_id: int, t: SimTime) -> VehicleDynamics:
        """
        Get the dynamics of one vehicle at ``t``.

        :argument vehicle_id: Vehicle index
        :argument t: Simulation time
        :returns: Position, speed, acceleration and heading
        :raises KeyError: If the vehicle does not exist
        """

    @property
    @abstractmethod
    def mean_speed(self) -> float:
        """Average vehicle speed, m/s."""

    def in_measurement_range(
        self, a: int, b: int, t: SimTime, limit: float = MEASUREMENT_RANGE
    ) -> bool:
        """
        Check whether two vehicles are close enough to be measured.

        :argument a: First vehicle
        :argument b: Second vehicle
        :argument t: Simulation time
        :argument limit: Maximum distance, meters
        :returns: True if their distance at t is at most limit
        """
        return self.dynamics_at(a, t).distance_to(
            self.dynamics_at(b, t)
        ) <= limit

    def _check(self, vehicle_id: int) -> None:
        if not 0 <= vehicle_id < self.n_vehicles:
            raise KeyError(
                f"Unknown vehicle {vehicle_id}, scenario has "
                f"{self.n_vehicles} vehicles."
            )


class StaticScenario(Scenario):
    """Immobile vehicles on a straight line at equal spacing."""

    is_static = True

    def __init__(self, n_vehicles: int = 300, spacing: float = 200.0) -> None:
        """
        :argument n_vehicles: Number of vehicles
        :argument spacing: Distance between neighbours, meters
        :raises ValueError: On a non-positive count or spacing
        """
        if n_vehicles < 1 or spacing <= 0:
            raise ValueError(
                f"Need n_vehicles >= 1 and spacing > 0, got {n_vehicles} "
                f"and {spacing}"
            )
        self.n_vehicles = n_vehicles
        self.spacing = spacing
        self._positions = np.column_stack(
            (np.arange(n_vehicles) * spacing, np.zeros(n_vehicles))
        )
        self._positions.flags.writeable = False

    @property
    def mean_speed(self) -> float:
        """Always zero."""
        return 0.0

    def positions_at(self, t: SimTime) -> np.ndarray:
        """Return the fixed positions."""
        return self._positions

    def dynamics_at(self, vehicle_id: int, t: SimTime) -> VehicleDynamics:
        """Return the fixed dynamics of the vehicle."""
        self._check(vehicle_id)
        return VehicleDynamics(x=vehicle_id * self.spacing)


class RingScenario(Scenario):
    """
    Kinematic multi-lane oval.

    The centreline is a stadium: two straights joined by two semicircles
    whose total length is ``(1 - straight_fraction)`` of the circumference.
    Half of the lanes run counter-clockwise on the outside, the other half
    clockwise on the inside. Vehicles keep their lane and a constant speed.
    """

    def __init__(
        self,
        rng: np.random.Generator,
        density: float = 10.0,
        circumference: float = 7750.0,
        lanes: int = 8,
        mean_speed: float = 14.27,
        speed_jitter: float = 1.0,
        straight_fraction: float = 0.85,
        lane_width: float = 3.5,
    ) -> None:
        """
        Place the vehicles.

        :argument rng: Random stream for placement and speeds
        :argument density: Vehicles per km per lane
        :argument circumference: Centreline length, meters
        :argument lanes: Total lanes, split evenly between directions
        :argument mean_speed: Mean speed, m/s
        :argument speed_jitter: Half-width of the uniform speed spread
        :argument straight_fraction: Share of the centreline that is straight
        :argument lane_width: Lane width, meters
        :raises ValueError: On inconsistent geometry
        """
        if lanes < 2 or lanes % 2:
            raise ValueError(f"lanes must be even and >= 2, got {lanes}")
        if not 0 <= straight_fraction < 1:
            raise ValueError(
                f"straight_fraction must lie in [0, 1), "
                f"got {straight_fraction}"
            )
        if circumference <= 0 or density <= 0:
            raise ValueError("circumference and density must be positive")
        self.circumference = circumference
        self.lanes = lanes
        self.density = density
        self._straight = circumference * straight_fraction / 2
        self._radius = circumference * (1 - straight_fraction) / (2 * math.pi)
        self.n_vehicles = round(density * circumference / 1000 * lanes)
        if self.n_vehicles < 1:
            raise ValueError(
                f"{density} vehicles/km on {lanes} lanes of {circumference} m "
                "place no vehicle"
            )

        ids = np.arange(self.n_vehicles)
        lane = ids % lanes
        per_lane = np.bincount(lane, minlength=lanes)
        slot = ids // lanes
        jitter = rng.uniform(0.0, 0.5, self.n_vehicles)
        self._s0 = (slot + jitter) * circumference / per_lane[lane]
        half = lanes // 2
        self._direction = np.where(lane < half, 1.0, -1.0)
        self._offset = np.where(
            lane < half, lane % half + 0.5, -(lane % half + 0.5)
        ) * lane_width
        speeds = mean_speed + rng.uniform(
            -speed_jitter, speed_jitter, self.n_vehicles
        )
        self._speed = np.clip(speeds, 0.0, None)

    @property
    def mean_speed(self) -> float:
        """Average of the vehicle speeds."""
        return float(self._speed.mean())

    def arc_length_at(self, vehicle_id: int, t: SimTime) -> float:
        """
        Get the unwrapped distance travelled since time zero.

        :argument vehicle_id: Vehicle index
        :argument t: Simulation time
        :returns: Meters along the lane
        """
        self._check(vehicle_id)
        return float(self._speed[vehicle_id] * to_seconds(t))

    def positions_at(self, t: SimTime) -> np.ndarray:
        """Compute every vehicle position at ``t``."""
        s = np.mod(
            self._s0 + self._direction * self._speed * to_seconds(t),
            self.circumference,
        )
        x, y, tangent = self._centreline(s)
        # outward normal is the tangent rotated clockwise
        return np.column_stack(
            (
                x + self._offset * np.sin(tangent),
                y - self._offset * np.cos(tangent),
            )
        )

    def dynamics_at(self, vehicle_id: int, t: SimTime) -> VehicleDynamics:
        """Compute the dynamics of one vehicle at ``t``."""
        travelled = self.arc_length_at(vehicle_id, t)
        direction = self._direction[vehicle_id]
        s = math.fmod(
            self._s0[vehicle_id] + direction * travelled,
            self.circumference,
        )
        if s < 0:
            s += self.circumference
        x, y, tangent = self._centreline_point(s)
        offset = self._offset[vehicle_id]
        heading = math.degrees(tangent) + (180.0 if direction < 0 else 0.0)
        return VehicleDynamics(
            x=x + offset * math.sin(tangent),
            y=y - offset * math.cos(tangent),
            speed=float(self._speed[vehicle_id]),
            acceleration=0.0,
            heading=heading,
        )

    def _centreline(
        self, s: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        length, radius = self._straight, self._radius
        arc = math.pi * radius
        x = np.empty_like(s)
        y = np.empty_like(s)
        tangent = np.empty_like(s)

        bottom = s < length
        x[bottom], y[bottom], tangent[bottom] = s[bottom], -radius, 0.0

        right = (s >= length) & (s < length + arc)
        phi = -math.pi / 2 + (s[right] - length) / radius
        x[right] = length + radius * np.cos(phi)
        y[right] = radius * np.sin(phi)
        tangent[right] = phi + math.pi / 2

        top = (s >= length + arc) & (s < 2 * length + arc)
        x[top] = length - (s[top] - length - arc)
        y[top], tangent[top] = radius, math.pi

        left = s >= 2 * length + arc
        phi = math.pi / 2 + (s[left] - 2 * length - arc) / radius
        x[left] = radius * np.cos(phi)
        y[left] = radius * np.sin(phi)
        tangent[left] = phi + math.pi / 2
        return x, y, tangent

    def _centreline_point(self, s: float) -> tuple[float, float, float]:
        length, radius = self._straight, self._radius
        arc = math.pi * radius
        if s < length:
            return s, -radius, 0.0
        if s < length + arc:
            phi = -math.pi / 2 + (s - length) / radius
            return (
                length + radius * math.cos(phi),
                radius * math.sin(phi),
                phi + math.pi / 2,
            )
        if s < 2 * length + arc:
            return length - (s - length - arc), radius, math.pi
        phi = math.pi / 2 + (s - 2 * length - arc) / radius
        return (
            radius * math.cos(phi),
            radius * math.sin(phi),
            phi + math.pi / 2,
        )
