"""Broadcast medium with a fixed access-plus-propagation delay."""

from __future__ import annotations

import logging
from collections.abc import Iterator
from dataclasses import dataclass

import numpy as np

from dcc_sim.clock import SECOND, Duration, SimTime, ms, seconds
from dcc_sim.message_definitions import QueuedMessage
from dcc_sim.mobility import Scenario

logger = logging.getLogger(__name__)

_EMPTY = np.iinfo(np.int64).min
_NONE = np.empty(0, dtype=np.int64)
_NO_DISTANCE = np.empty(0)


@dataclass(frozen=True, slots=True)
class ChannelConfig:
    """
    Radio settings.

    Attributes:
        range: Reception range, meters
        mac_phy_delay: Access plus propagation delay
        loss_probability: Independent per-reception loss
        data_rate: Bit rate used for busy-time accounting, bit/s
    """

    range: float = 750.0
    mac_phy_delay: Duration = ms(1)
    loss_probability: float = 0.0
    data_rate: float = 6_000_000.0

    def __post_init__(self) -> None:
        """
        Validate the settings.

        :returns: None
        :raises ValueError: On a non-positive range or rate, a negative
            delay or a loss probability outside [0, 1]
        """
        if self.range <= 0:
            raise ValueError(f"range must be > 0, got {self.range}")
        if self.data_rate <= 0:
            raise ValueError(f"data_rate must be > 0, got {self.data_rate}")
        if self.mac_phy_delay < 0:
            raise ValueError(
                f"mac_phy_delay must be >= 0, got {self.mac_phy_delay}"
            )
        if not 0 <= self.loss_probability <= 1:
            raise ValueError(
                "loss_probability must lie in [0, 1], "
                f"got {self.loss_probability}"
            )

    def airtime(self, size: int) -> float:
        """
        Get the time a message occupies the channel.

        :argument size: Message size in bytes
        :returns: Seconds on air
        """
        return size * 8 / self.data_rate


@dataclass(frozen=True, slots=True)
class Delivery:
    """
    One reception of a broadcast.

    Attributes:
        message: The transmitted queue entry
        sender_id: Transmitting vehicle
        receiver_id: Receiving vehicle
        tx_time: Dequeue instant at the sender
        rx_time: Reception instant
        distance: Sender-receiver distance at tx_time, meters
    """

    message: QueuedMessage
    sender_id: int
    receiver_id: int
    tx_time: SimTime
    rx_time: SimTime
    distance: float


@dataclass(frozen=True, slots=True, eq=False)
class Broadcast:
    """
    Every reception of one transmission, kept as arrays.

    Iterating yields one Delivery per receiver in ascending id order.

    Attributes:
        message: The transmitted queue entry
        sender_id: Transmitting vehicle
        tx_time: Dequeue instant at the sender
        rx_time: Reception instant shared by every receiver
        receivers: Receiving vehicle ids
        distances: Sender-receiver distances at tx_time, meters
    """

    message: QueuedMessage
    sender_id: int
    tx_time: SimTime
    rx_time: SimTime
    receivers: np.ndarray
    distances: np.ndarray

    def __len__(self) -> int:
        """Number of receptions."""
        return int(self.receivers.size)

    def __iter__(self) -> Iterator[Delivery]:
        """Yield the receptions one by one."""
        for receiver, distance in zip(
            self.receivers.tolist(), self.distances.tolist(), strict=True
        ):
            yield Delivery(
                self.message,
                self.sender_id,
                receiver,
                self.tx_time,
                self.rx_time,
                distance,
            )


class Channel:
    """
    Delivers broadcasts to every vehicle in range.

    Every transmission is logged with its position and airtime so that
    each vehicle can measure the channel busy ratio of a sliding window.
    On a static scenario the receivers of each sender are computed once.
    """

    def __init__(
        self,
        config: ChannelConfig,
        scenario: Scenario,
        seed: int = 0,
        retention: Duration = seconds(1),
    ) -> None:
        """
        :argument config: Radio settings
        :argument scenario: Mobility answering position queries
        :argument seed: Root of the per-broadcast loss streams
        :argument retention: How long transmissions stay in the CBR log
        """
        self.config = config
        self._scenario = scenario
        self._seed = seed
        self._retention = retention
        self._ids = np.arange(scenario.n_vehicles)
        self._links: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        self.busy_time = 0.0
        self._allocate(1024)

    def broadcast(
        self,
        message: QueuedMessage,
        sender_id: int,
        tx_time: SimTime,
        deliver: bool = True,
    ) -> Broadcast:
        """
        Transmit a message.

        :argument message: Dequeued queue entry
        :argument sender_id: Transmitting vehicle
        :argument tx_time: Transmission instant
        :argument deliver: False only accounts the busy time
        :returns: The receptions at every vehicle in range that did not
            lose the message; none when deliver is False
        """
        airtime = self.config.airtime(message.size)
        rx_time = tx_time + self.config.mac_phy_delay
        if not deliver:
            self._log(
                tx_time, sender_id, self._position(sender_id, tx_time), airtime
            )
            return Broadcast(
                message, sender_id, tx_time, rx_time, _NONE, _NO_DISTANCE
            )
        positions = self._scenario.positions_at(tx_time)
        self._log(tx_time, sender_id, positions[sender_id], airtime)
        receivers, distances = self._receivers(sender_id, positions)
        p_loss = self.config.loss_probability
        if p_loss > 0 and receivers.size:
            # keyed on the broadcast so paired runs lose the same receptions
            rng = np.random.default_rng([self._seed, sender_id, tx_time])
            kept = rng.random(receivers.size) >= p_loss
            receivers, distances = receivers[kept], distances[kept]
        return Broadcast(
            message, sender_id, tx_time, rx_time, receivers, distances
        )

    def measure_cbr(
        self, receiver_id: int, window: Duration, now: SimTime
    ) -> float:
        """
        Get the share of the last window occupied by audible transmissions.

        The window is open at both ends: a transmission starting exactly
        at ``now`` is not counted.

        :argument receiver_id: Measuring vehicle
        :argument window: Window length, not longer than the retention
        :argument now: End of the window
        :returns: Busy ratio clamped to [0, 1]
        :raises ValueError: If the window is not positive
        """
        if window <= 0:
            raise ValueError(f"window must be > 0, got {window}")
        here = self._scenario.dynamics_at(receiver_id, now)
        audible = (
            (self._times > now - window)
            & (self._times < now)
            & (self._senders != receiver_id)
            & (
                np.hypot(self._xs - here.x, self._ys - here.y)
                <= self.config.range
            )
        )
        busy = float(self._airtimes[audible].sum())
        return min(1.0, busy * SECOND / window)

    def measure_cbr_all(self, window: Duration, now: SimTime) -> np.ndarray:
        """
        Measure the busy ratio at every vehicle at once.

        :argument window: Window length, not longer than the retention
        :argument now: End of the window
        :returns: Array of busy ratios indexed by vehicle
        :raises ValueError: If the window is not positive
        """
        if window <= 0:
            raise ValueError(f"window must be > 0, got {window}")
        recent = (self._times > now - window) & (self._times < now)
        positions = self._scenario.positions_at(now)
        distances = np.hypot(
            positions[:, 0, None] - self._xs[recent],
            positions[:, 1, None] - self._ys[recent],
        )
        audible = (distances <= self.config.range) & (
            self._senders[recent] != self._ids[:, None]
        )
        busy = audible @ self._airtimes[recent]
        return np.minimum(1.0, busy * SECOND / window)

    def _position(
        self, vehicle_id: int, t: SimTime
    ) -> np.ndarray | tuple[float, float]:
        if self._scenario.is_static:
            return self._scenario.positions_at(t)[vehicle_id]
        here = self._scenario.dynamics_at(vehicle_id, t)
        return here.x, here.y

    def _receivers(
        self, sender_id: int, positions: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray]:
        if self._scenario.is_static and sender_id in self._links:
            return self._links[sender_id]
        origin = positions[sender_id]
        distances = np.hypot(
            positions[:, 0] - origin[0], positions[:, 1] - origin[1]
        )
        receivers = np.flatnonzero(
            (distances <= self.config.range) & (self._ids != sender_id)
        )
        links = (receivers, distances[receivers])
        if self._scenario.is_static:
            self._links[sender_id] = links
        return links

    def _allocate(self, capacity: int) -> None:
        self._times = np.full(capacity, _EMPTY, dtype=np.int64)
        self._senders = np.full(capacity, -1, dtype=np.int64)
        self._xs = np.zeros(capacity)
        self._ys = np.zeros(capacity)
        self._airtimes = np.zeros(capacity)
        self._cursor = 0

    def _log(
        self,
        tx_time: SimTime,
        sender_id: int,
        origin: np.ndarray | tuple[float, float],
        airtime: float,
    ) -> None:
        self.busy_time += airtime
        capacity = self._times.size
        if self._times[self._cursor] > tx_time - self._retention:
            # oldest slot still in use: double the log
            order = np.r_[self._cursor : capacity, 0 : self._cursor]
            columns = (
                self._times[order],
                self._senders[order],
                self._xs[order],
                self._ys[order],
                self._airtimes[order],
            )
            self._allocate(capacity * 2)
            for target, source in zip(
                (
                    self._times,
                    self._senders,
                    self._xs,
                    self._ys,
                    self._airtimes,
                ),
                columns,
                strict=True,
            ):
                target[:capacity] = source
            self._cursor = capacity
        index = self._cursor
        self._times[index] = tx_time
        self._senders[index] = sender_id
        self._xs[index] = origin[0]
        self._ys[index] = origin[1]
        self._airtimes[index] = airtime
        self._cursor = (index + 1) % self._times.size
