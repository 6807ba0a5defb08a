"""Access-layer DCC: rate controllers, per-class queues and the gate."""

from __future__ import annotations

import bisect
import logging
from abc import ABC, abstractmethod
from collections import deque
from collections.abc import Callable, Iterable
from dataclasses import dataclass
from enum import Enum

from dcc_sim.clock import SECOND, Duration, SimTime, clamp, ms
from dcc_sim.engine import EventKind, Simulator
from dcc_sim.exceptions import SimulationError
from dcc_sim.message_definitions import QueuedMessage
from dcc_sim.traffic_class import TrafficClass

logger = logging.getLogger(__name__)

T_DCC_MIN: Duration = ms(25)
T_DCC_MAX: Duration = ms(1000)


def check_t_dcc(t_dcc: Duration) -> Duration:
    """
    Validate a gate interval against the gatekeeper contract.

    :argument t_dcc: Interval between gate openings
    :returns: The same interval
    :raises ValueError: If t_dcc lies outside [25 ms, 1000 ms]
    """
    if not T_DCC_MIN <= t_dcc <= T_DCC_MAX:
        raise ValueError(
            f"t_dcc must lie within [{T_DCC_MIN}, {T_DCC_MAX}] us, "
            f"got {t_dcc} us"
        )
    return t_dcc


class RateController(ABC):
    """Source of the gate interval ``t_dcc``."""

    needs_cbr: bool = False

    @abstractmethod
    def t_dcc(self, now: SimTime) -> Duration:
        """
        Get the gate interval in force at ``now``.

        :argument now: Current simulation time
        :returns: Interval within [25 ms, 1000 ms]
        """

    def observe_cbr(self, cbr: float, now: SimTime) -> None:
        """Feed a channel busy ratio sample; ignored by default."""


class ConstantRateController(RateController):
    """Fixed gate interval."""

    def __init__(self, t_dcc: Duration) -> None:
        """
        :argument t_dcc: Interval between gate openings
        :raises ValueError: If t_dcc violates the gatekeeper contract
        """
        self._t_dcc = check_t_dcc(t_dcc)

    def t_dcc(self, now: SimTime) -> Duration:
        """Return the configured interval."""
        return self._t_dcc


class ScriptedRateController(RateController):
    """
    Piecewise-constant gate interval from a ``(time, t_dcc)`` trace.

    Before the first entry the first interval applies.
    """

    def __init__(self, schedule: Iterable[tuple[SimTime, Duration]]) -> None:
        """
        :argument schedule: Pairs of change time and new interval
        :raises ValueError: If the trace is empty or holds a bad interval
        """
        entries = sorted(schedule)
        if not entries:
            raise ValueError("A scripted rate trace needs at least one entry")
        self._times = [time for time, _ in entries]
        self._values = [check_t_dcc(value) for _, value in entries]

    def t_dcc(self, now: SimTime) -> Duration:
        """Return the interval of the latest entry not after ``now``."""
        index = bisect.bisect_right(self._times, now) - 1
        return self._values[max(index, 0)]


class LoadProportionalRateController(RateController):
    """
    Gate interval rising linearly with the smoothed channel busy ratio.

    ``t_dcc = clamp(base * (1 + gain * cbr), 25 ms, 1000 ms)`` where
    ``cbr`` is exponentially smoothed with weight ``smoothing`` on the
    previous value.
    """

    needs_cbr = True

    def __init__(
        self, base: Duration, gain: float, smoothing: float = 0.5
    ) -> None:
        """
        :argument base: Interval on an idle channel
        :argument gain: Slope of the interval against CBR
        :argument smoothing: Weight of the previous CBR estimate
        :raises ValueError: On a negative gain or smoothing outside [0, 1)
        """
        if gain < 0:
            raise ValueError(f"gain must be >= 0, got {gain}")
        if not 0 <= smoothing < 1:
            raise ValueError(f"smoothing must lie in [0, 1), got {smoothing}")
        self._base = check_t_dcc(base)
        self._gain = gain
        self._smoothing = smoothing
        self.cbr = 0.0

    def observe_cbr(self, cbr: float, now: SimTime) -> None:
        """Blend a new CBR sample into the estimate."""
        self.cbr = self._smoothing * self.cbr + (1 - self._smoothing) * cbr

    def t_dcc(self, now: SimTime) -> Duration:
        """Return the interval for the current CBR estimate."""
        raw = round(self._base * (1 + self._gain * self.cbr))
        return clamp(raw, T_DCC_MIN, T_DCC_MAX)


RATE_CONTROLLERS: dict[str, type[RateController]] = {
    "constant": ConstantRateController,
    "scripted": ScriptedRateController,
    "load_proportional": LoadProportionalRateController,
}


@dataclass(frozen=True, slots=True)
class RateBreakdown:
    """
    Per-vehicle message rates in Hz.

    Attributes:
        r_total: Gate openings per second
        r_cam: CAMs per second
        r_tc3: Openings left to lower-priority traffic
    """

    r_total: float
    r_cam: float
    r_tc3: float


def compute_rates(t_dcc: Duration, t_cam: Duration) -> RateBreakdown:
    """
    Split the gate supply between CAMs and TC3 traffic.

    :argument t_dcc: Gate interval, microseconds
    :argument t_cam: CAM interval, microseconds
    :returns: Total, CAM and TC3 rates; the TC3 share never goes negative
    :raises ValueError: If either duration is not positive
    """
    if t_dcc <= 0 or t_cam <= 0:
        raise ValueError(
            f"Durations must be positive, got t_dcc={t_dcc}, t_cam={t_cam}"
        )
    r_total = SECOND / t_dcc
    r_cam = SECOND / t_cam
    return RateBreakdown(r_total, r_cam, max(0.0, r_total - r_cam))


class EnqueueOutcome(Enum):
    """Result of handing a message to the gate."""

    QUEUED = "queued"
    REPLACED_OLDER = "replaced_older"
    DROPPED = "dropped"


@dataclass(slots=True)
class QueueStats:
    """Counters for one traffic class of one vehicle."""

    enqueued: int = 0
    replaced: int = 0
    dropped: int = 0
    transmitted: int = 0


TransmitCallback = Callable[[QueuedMessage, SimTime, Duration], None]
GateListener = Callable[[SimTime, Duration], None]
OpeningHook = Callable[[SimTime], None]


class DccGate:
    """
    Gatekeeper dequeuing at most one message per opening.

    After each transmission the next opening is ``t_tx + t_dcc``. An
    opening that finds every queue empty leaves the gate open, and the
    next arrival goes out at its arrival instant. Listeners (the
    Management Entity towards the CA service) are told the new ``t_go``
    and ``t_dcc`` whenever either changes. Opening hooks run at each
    scheduled opening before the dequeue, so work due at that very
    instant can still place a message in the queue.
    """

    def __init__(
        self,
        engine: Simulator,
        controller: RateController,
        transmit: TransmitCallback,
        vehicle_id: int = 0,
        first_opening: SimTime = 0,
        queue_capacity: int = 100,
        replace_cam: bool = True,
    ) -> None:
        """
        Create the gate and schedule its first opening.

        :argument engine: Scheduler of the run
        :argument controller: Source of t_dcc
        :argument transmit: Called with (message, t_tx, t_dcc) on dequeue
        :argument vehicle_id: Owning vehicle
        :argument first_opening: Time of the first opening
        :argument queue_capacity: Drop-tail capacity of each FIFO queue
        :argument replace_cam: Keep only the newest CAM in TC2
        :returns: None
        """
        if queue_capacity < 1:
            raise ValueError(
                f"queue_capacity must be >= 1, got {queue_capacity}"
            )
        self._engine = engine
        self._controller = controller
        self._transmit = transmit
        self.vehicle_id = vehicle_id
        self._capacity = queue_capacity
        self._replace_cam = replace_cam
        self._queues: dict[TrafficClass, deque[QueuedMessage]] = {
            tc: deque() for tc in TrafficClass.by_priority()
        }
        self.stats: dict[TrafficClass, QueueStats] = {
            tc: QueueStats() for tc in TrafficClass
        }
        self._listeners: list[GateListener] = []
        self._opening_hooks: list[OpeningHook] = []
        self._t_go: SimTime = first_opening
        self._t_dcc: Duration = controller.t_dcc(first_opening)
        self._idle = False
        self.last_tx: SimTime | None = None
        engine.schedule(
            first_opening, EventKind.GATE_OPEN, self._opening, vehicle_id
        )

    @property
    def controller(self) -> RateController:
        """The rate controller feeding this gate."""
        return self._controller

    @property
    def t_dcc(self) -> Duration:
        """Interval applied at the last transmission."""
        return self._t_dcc

    def subscribe(self, listener: GateListener) -> None:
        """
        Register a Management Entity listener.

        :argument listener: Called with (t_go, t_dcc) on every change
        :returns: None
        """
        self._listeners.append(listener)

    def before_opening(self, hook: OpeningHook) -> None:
        """
        Register a callback run at every scheduled opening.

        :argument hook: Called with the opening time, before the dequeue
        :returns: None
        """
        self._opening_hooks.append(hook)

    def backlog(self, traffic_class: TrafficClass | None = None) -> int:
        """
        Count queued messages.

        :argument traffic_class: Restrict to one class, or None for all
        :returns: Number of queued messages
        """
        if traffic_class is not None:
            return len(self._queues[traffic_class])
        return sum(len(queue) for queue in self._queues.values())

    def enqueue(self, message: QueuedMessage) -> EnqueueOutcome:
        """
        Place a message in the queue of its traffic class.

        :argument message: Queue entry stamped with the current time
        :returns: Whether it was queued, replaced an older CAM or dropped
        """
        tc = message.traffic_class
        queue = self._queues[tc]
        stats = self.stats[tc]
        stats.enqueued += 1
        if tc is TrafficClass.TC2 and self._replace_cam and queue:
            queue.popleft()
            queue.append(message)
            stats.replaced += 1
            return EnqueueOutcome.REPLACED_OLDER
        if len(queue) >= self._capacity:
            stats.dropped += 1
            return EnqueueOutcome.DROPPED
        queue.append(message)
        if self._idle:
            self._dispatch(self._engine.now)
        elif tc.outranks(TrafficClass.TC2):
            # pushes back the opening a queued CAM would get
            self._notify()
        return EnqueueOutcome.QUEUED

    def on_gate_open(self, now: SimTime) -> QueuedMessage | None:
        """
        Handle a scheduled opening.

        :argument now: Current time, equal to t_go
        :returns: The dequeued message, or None if every queue was empty
        :raises SimulationError: If called off schedule
        """
        if now != self._t_go:
            raise SimulationError(
                f"Gate of vehicle {self.vehicle_id} opened at {now} us, "
                f"expected {self._t_go} us."
            )
        for hook in self._opening_hooks:
            hook(now)
        if self.backlog() == 0:
            self._idle = True
            return None
        return self._dispatch(now)

    def next_gate_time(self) -> SimTime:
        """Return the next permitted dequeue instant ``t_go``."""
        return self._t_go

    def next_gate_time_for(self, traffic_class: TrafficClass) -> SimTime:
        """
        Predict the opening a new message of ``traffic_class`` would take.

        Every queued message of strictly higher priority consumes one
        opening first.

        :argument traffic_class: Class of the message about to be queued
        :returns: Predicted dequeue instant
        """
        ahead = sum(
            len(self._queues[tc])
            for tc in TrafficClass
            if tc.outranks(traffic_class)
        )
        if ahead == 0:
            return self._t_go
        step = self._controller.t_dcc(self._engine.now)
        return self._t_go + ahead * step

    def _opening(self) -> None:
        self.on_gate_open(self._engine.now)

    def _dispatch(self, now: SimTime) -> QueuedMessage:
        message = next(
            queue.popleft() for queue in self._queues.values() if queue
        )
        t_dcc = self._controller.t_dcc(now)
        if not T_DCC_MIN <= t_dcc <= T_DCC_MAX:
            raise SimulationError(
                f"Rate controller of vehicle {self.vehicle_id} returned "
                f"t_dcc={t_dcc} us at {now} us, outside "
                f"[{T_DCC_MIN}, {T_DCC_MAX}] us."
            )
        self.stats[message.traffic_class].transmitted += 1
        self.last_tx = now
        self._t_dcc = t_dcc
        self._t_go = now + t_dcc
        self._idle = False
        self._engine.schedule(
            self._t_go, EventKind.GATE_OPEN, self._opening, self.vehicle_id
        )
        self._transmit(message, now, t_dcc)
        self._notify()
        return message

    def _notify(self) -> None:
        for listener in self._listeners:
            listener(self._t_go, self._t_dcc)
