"""Deterministic discrete-event scheduler."""

from __future__ import annotations

import heapq
import logging
from collections.abc import Callable
from dataclasses import dataclass, field
from enum import Enum
from typing import TextIO

from dcc_sim.clock import SimTime
from dcc_sim.exceptions import SchedulingError

logger = logging.getLogger(__name__)

NO_VEHICLE = -1


class EventKind(Enum):
    """Tags carried by scheduled events, written to the event trace."""

    TRIGGER_EVALUATION = "trigger-evaluation"
    GATE_OPEN = "gate-open"
    DELIVERY = "delivery"
    GOT_WAKEUP = "got-wakeup"
    CBR_WINDOW = "cbr-window"
    TRAFFIC = "traffic"


@dataclass(slots=True)
class Event:
    """
    A scheduled callback; also serves as the cancellation handle.

    Attributes:
        fire_at: Time the event fires
        seq: Insertion sequence number, breaks ties between equal times
        kind: Event tag
        vehicle_id: Owning vehicle, or NO_VEHICLE
        action: Callback run when the event fires
        cancelled: Set by cancel(); cancelled events never fire
    """

    fire_at: SimTime
    seq: int
    kind: EventKind
    vehicle_id: int
    action: Callable[[], None] = field(repr=False)
    cancelled: bool = False

    def cancel(self) -> None:
        """Prevent the event from firing."""
        self.cancelled = True


class Simulator:
    """
    Single event queue ordered by ``(fire_at, seq)``.

    Handlers observe a clock that never decreases. When ``trace`` is set,
    every processed event is written as ``time_us,vehicle_id,kind``.
    """

    def __init__(self, trace: TextIO | None = None) -> None:
        """
        Create an empty scheduler at time zero.

        :argument trace: Optional text stream for the event trace
        :returns: None
        """
        self._queue: list[tuple[SimTime, int, Event]] = []
        self._seq = 0
        self._now: SimTime = 0
        self._trace = trace

    @property
    def now(self) -> SimTime:
        """Current simulation time."""
        return self._now

    def __len__(self) -> int:
        """Number of queued events, cancelled ones included."""
        return len(self._queue)

    def schedule(
        self,
        fire_at: SimTime,
        kind: EventKind,
        action: Callable[[], None],
        vehicle_id: int = NO_VEHICLE,
    ) -> Event:
        """
        Queue a callback.

        :argument fire_at: Absolute firing time, not before now
        :argument kind: Event tag
        :argument action: Callback without arguments
        :argument vehicle_id: Owning vehicle for the trace
        :returns: The event, usable as a cancellation handle
        :raises SchedulingError: If fire_at lies in the past
        """
        if fire_at < self._now:
            raise SchedulingError(
                f"Cannot schedule {kind.value} at {fire_at} us, "
                f"clock is already at {self._now} us."
            )
        event = Event(fire_at, self._seq, kind, vehicle_id, action)
        self._seq += 1
        heapq.heappush(self._queue, (fire_at, event.seq, event))
        return event

    def run_until(self, t_end: SimTime) -> int:
        """
        Process every event with ``fire_at <= t_end``.

        :argument t_end: Horizon, not before now
        :returns: Number of events processed (cancelled ones excluded)
        :raises SchedulingError: If t_end lies in the past
        """
        if t_end < self._now:
            raise SchedulingError(
                f"Cannot run until {t_end} us, clock is at {self._now} us."
            )
        processed = 0
        queue = self._queue
        while queue and queue[0][0] <= t_end:
            fire_at, _, event = heapq.heappop(queue)
            if event.cancelled:
                continue
            self._now = fire_at
            if self._trace is not None:
                self._trace.write(
                    f"{fire_at},{event.vehicle_id},{event.kind.value}\n"
                )
            event.action()
            processed += 1
        self._now = t_end
        logger.debug("Processed %d events up to %d us", processed, t_end)
        return processed
