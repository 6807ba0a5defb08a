"""Non-CAM traffic sources sharing the DCC gate with the CA service."""

from __future__ import annotations

import logging
from abc import ABC, abstractmethod
from collections.abc import Iterable

import numpy as np

from dcc_sim.clock import SECOND, SimTime
from dcc_sim.dcc import DccGate
from dcc_sim.engine import EventKind, Simulator
from dcc_sim.message_definitions import (
    TC3_SIZE,
    GenericMessage,
    QueuedMessage,
)
from dcc_sim.traffic_class import TrafficClass

logger = logging.getLogger(__name__)

BURST_SIZE = 300


class TrafficSource(ABC):
    """A generator of generic messages for one vehicle."""

    def __init__(
        self,
        engine: Simulator,
        gate: DccGate,
        vehicle_id: int,
        traffic_class: TrafficClass,
        size: int,
    ) -> None:
        """
        :argument engine: Scheduler of the run
        :argument gate: Gate receiving the messages
        :argument vehicle_id: Owning vehicle
        :argument traffic_class: Class of every generated message
        :argument size: Message size in bytes
        """
        self._engine = engine
        self._gate = gate
        self.vehicle_id = vehicle_id
        self.traffic_class = traffic_class
        self.size = size
        self._sequence = 0

    @abstractmethod
    def start(self) -> None:
        """Schedule or enqueue the first messages."""

    def on_transmitted(self, message: QueuedMessage, now: SimTime) -> None:
        """React to a transmission of the owning vehicle; no-op here."""

    def _emit(self) -> None:
        self._sequence += 1
        now = self._engine.now
        message = GenericMessage(
            self.vehicle_id, self._sequence, now, self.traffic_class, self.size
        )
        self._gate.enqueue(QueuedMessage.wrap(message, now))


class SaturatingSource(TrafficSource):
    """Keeps exactly one message of its class waiting at the gate."""

    def start(self) -> None:
        """Queue the first message."""
        self._emit()

    def on_transmitted(self, message: QueuedMessage, now: SimTime) -> None:
        """Refill as soon as the queued message leaves."""
        if (
            not message.is_cam
            and message.traffic_class is self.traffic_class
        ):
            self._emit()


class PoissonSource(TrafficSource):
    """Messages with exponential inter-arrival times."""

    def __init__(
        self,
        engine: Simulator,
        gate: DccGate,
        vehicle_id: int,
        rate_hz: float,
        rng: np.random.Generator,
        traffic_class: TrafficClass = TrafficClass.TC3,
        size: int = TC3_SIZE,
    ) -> None:
        """
        :argument rate_hz: Mean arrival rate
        :argument rng: Random stream owned by this source
        :raises ValueError: If the rate is not positive
        """
        super().__init__(engine, gate, vehicle_id, traffic_class, size)
        if rate_hz <= 0:
            raise ValueError(f"rate_hz must be > 0, got {rate_hz}")
        self._mean_gap = SECOND / rate_hz
        self._rng = rng

    def start(self) -> None:
        """Schedule the first arrival."""
        self._schedule_next()

    def _arrival(self) -> None:
        self._emit()
        self._schedule_next()

    def _schedule_next(self) -> None:
        gap = max(1, round(self._rng.exponential(self._mean_gap)))
        self._engine.schedule(
            self._engine.now + gap,
            EventKind.TRAFFIC,
            self._arrival,
            self.vehicle_id,
        )


class BurstSource(TrafficSource):
    """Scripted bursts of ``count`` messages at fixed instants."""

    def __init__(
        self,
        engine: Simulator,
        gate: DccGate,
        vehicle_id: int,
        bursts: Iterable[tuple[SimTime, int]],
        traffic_class: TrafficClass = TrafficClass.TC1,
        size: int = BURST_SIZE,
    ) -> None:
        """
        :argument bursts: Pairs of burst time and message count
        """
        super().__init__(engine, gate, vehicle_id, traffic_class, size)
        self._bursts = sorted(bursts)

    def start(self) -> None:
        """Schedule every burst."""
        for time, count in self._bursts:
            self._engine.schedule(
                time,
                EventKind.TRAFFIC,
                lambda count=count: self._burst(count),
                self.vehicle_id,
            )

    def _burst(self, count: int) -> None:
        for _ in range(count):
            self._emit()
