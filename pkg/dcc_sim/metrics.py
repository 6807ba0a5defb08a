"""Measurement records, analytic oracles and summary statistics."""

from __future__ import annotations

import csv
import logging
from collections import defaultdict
from collections.abc import Iterable, Iterator, Sequence
from dataclasses import dataclass, field, fields
from itertools import pairwise
from pathlib import Path
from typing import Generic, TypeVar

import numpy as np

from dcc_sim.channel import Broadcast, Delivery
from dcc_sim.clock import SECOND, Duration, SimTime, ms
from dcc_sim.dcc import RateBreakdown
from dcc_sim.message_definitions import CamMessage, QueuedMessage
from dcc_sim.traffic_class import TrafficClass

logger = logging.getLogger(__name__)

DELAY_BIN: Duration = ms(10)
INTERVAL_BIN: Duration = ms(25)

R = TypeVar("R")
_NO_VALUE = -1
_NEVER = np.iinfo(np.int64).min
RX_DTYPES: dict[str, type] = {
    "sender_id": np.int32,
    "receiver_id": np.int32,
    "gen_timestamp": np.int64,
    "rx_time": np.int64,
    "e2e_delay": np.int64,
    "ipg": np.int64,
    "distance": np.float64,
}
AGE_DTYPES: dict[str, type] = {
    "sender_id": np.int32,
    "receiver_id": np.int32,
    "refresh_time": np.int64,
    "age": np.int64,
}

TX_HEADER = (
    "run_id",
    "mode",
    "vehicle_id",
    "tc",
    "gen_us",
    "enqueue_us",
    "tx_us",
    "queue_wait_us",
)
RX_HEADER = (
    "run_id",
    "mode",
    "sender",
    "receiver",
    "gen_us",
    "rx_us",
    "e2e_us",
    "ipg_us",
    "distance_m",
)
AGE_HEADER = ("run_id", "mode", "sender", "receiver", "refresh_us", "age_us")
SUMMARY_HEADER = (
    "run_id",
    "mode",
    "metric",
    "count",
    "mean_us",
    "sd_us",
    "p50_us",
    "p95_us",
    "p99_us",
    "min_us",
    "max_us",
)
GEN_HEADER = (
    "run_id",
    "mode",
    "vehicle_id",
    "condition",
    "trigger_us",
    "gen_us",
)


@dataclass(frozen=True, slots=True)
class TxRecord:
    """
    One dequeue at a gate.

    Attributes:
        sender_id: Transmitting vehicle
        gen_timestamp: Generation time of the payload
        enqueue_time: Arrival at the DCC queue
        tx_time: Dequeue instant
        queue_wait: ``tx_time - enqueue_time``
        traffic_class: Queue the message came from
    """

    sender_id: int
    gen_timestamp: SimTime
    enqueue_time: SimTime
    tx_time: SimTime
    queue_wait: Duration
    traffic_class: TrafficClass

    def __post_init__(self) -> None:
        """
        Check the timestamp ordering.

        :returns: None
        :raises ValueError: If generation, enqueue and dequeue are unordered
        """
        if not self.gen_timestamp <= self.enqueue_time <= self.tx_time:
            raise ValueError(
                f"Unordered timestamps gen={self.gen_timestamp} "
                f"enqueue={self.enqueue_time} tx={self.tx_time}"
            )


@dataclass(frozen=True, slots=True)
class RxRecord:
    """
    One CAM reception.

    Attributes:
        sender_id: Generating vehicle
        receiver_id: Receiving vehicle
        gen_timestamp: Timestamp carried by the CAM
        rx_time: Reception instant
        e2e_delay: ``rx_time - gen_timestamp``
        ipg: Gap to the previous reception from the sender, None at first
        distance: Sender-receiver distance, meters
    """

    sender_id: int
    receiver_id: int
    gen_timestamp: SimTime
    rx_time: SimTime
    e2e_delay: Duration
    ipg: Duration | None
    distance: float


@dataclass(frozen=True, slots=True)
class AgeRecord:
    """
    Information age at a refresh.

    Attributes:
        sender_id: Generating vehicle
        receiver_id: Receiving vehicle
        refresh_time: Reception of the newer CAM
        age: ``refresh_time`` minus the previous CAM's timestamp
    """

    sender_id: int
    receiver_id: int
    refresh_time: SimTime
    age: Duration


@dataclass(frozen=True, slots=True)
class GenRecord:
    """
    One CAM generation.

    Attributes:
        sender_id: Generating vehicle
        condition: Trigger condition name
        trigger_time: Trigger baseline (``t``)
        gen_timestamp: Timestamp written into the CAM (``t'`` under GoT)
    """

    sender_id: int
    condition: str
    trigger_time: SimTime
    gen_timestamp: SimTime


class RecordTable(Generic[R]):
    """
    Append-only columns backing one record type.

    Rows live in numpy arrays that double when full. Indexing and
    iteration build record objects on demand; integer columns named in
    ``optional`` hold -1 for None.
    """

    def __init__(
        self,
        record_type: type[R],
        dtypes: dict[str, type],
        optional: Iterable[str] = (),
        capacity: int = 256,
    ) -> None:
        """
        :argument record_type: Dataclass built from each row
        :argument dtypes: numpy dtype of every field, in field order
        :argument optional: Fields that may be None
        :argument capacity: Initial number of rows
        :raises ValueError: If the columns do not match the fields
        """
        names = [item.name for item in fields(record_type)]
        if list(dtypes) != names:
            raise ValueError(
                f"Columns {list(dtypes)} do not match fields {names}"
            )
        self._record_type = record_type
        self._names = names
        self._optional = [name in set(optional) for name in names]
        self._size = 0
        self._columns = {
            name: np.empty(max(capacity, 1), dtype=dtype)
            for name, dtype in dtypes.items()
        }

    def __len__(self) -> int:
        """Number of rows."""
        return self._size

    def __getitem__(self, index: int) -> R:
        """
        Build the record of one row.

        :argument index: Row number, negative counts from the end
        :returns: The record
        :raises IndexError: If the row does not exist
        """
        if index < 0:
            index += self._size
        if not 0 <= index < self._size:
            raise IndexError(f"Row {index} out of range")
        return self._record_type(
            *self._decode(
                self._columns[name][index].item() for name in self._names
            )
        )

    def __iter__(self) -> Iterator[R]:
        """Yield every record in insertion order."""
        for row in self.rows():
            yield self._record_type(*row)

    def rows(self) -> Iterator[tuple[object, ...]]:
        """
        Yield plain value tuples in field order.

        :returns: Iterator over rows, None in empty optional fields
        """
        columns = [self.column(name).tolist() for name in self._names]
        for row in zip(*columns, strict=True):
            yield self._decode(row)

    def column(self, name: str) -> np.ndarray:
        """
        Get one column.

        :argument name: Field name
        :returns: Read-only view over the filled rows
        """
        view = self._columns[name][: self._size]
        view.flags.writeable = False
        return view

    def extend(self, count: int, **values: object) -> None:
        """
        Append rows.

        :argument count: Number of rows
        :argument values: One array of ``count`` items or one scalar per
            field
        :returns: None
        :raises ValueError: If a field is missing or unknown
        """
        if set(values) != set(self._names):
            raise ValueError(
                f"Expected values for {self._names}, got {sorted(values)}"
            )
        if count == 0:
            return
        end = self._size + count
        capacity = next(iter(self._columns.values())).size
        if end > capacity:
            while capacity < end:
                capacity *= 2
            for name, column in self._columns.items():
                grown = np.empty(capacity, dtype=column.dtype)
                grown[: self._size] = column[: self._size]
                self._columns[name] = grown
        for name, value in values.items():
            self._columns[name][self._size : end] = value
        self._size = end

    def _decode(self, row: Iterable[object]) -> tuple[object, ...]:
        return tuple(
            None if optional and value == _NO_VALUE else value
            for value, optional in zip(row, self._optional, strict=True)
        )


def expected_queue_wait(t_dcc: Duration) -> float:
    """
    Mean DCC queue wait of unsynchronized CAMs, ``t_dcc / 2``.

    :argument t_dcc: Gate interval, microseconds
    :returns: Expected wait, microseconds
    :raises ValueError: If t_dcc is not positive
    """
    if t_dcc <= 0:
        raise ValueError(f"t_dcc must be > 0, got {t_dcc}")
    return t_dcc / 2


def min_info_age(t_q_n: Duration, t_cam_n: Duration) -> Duration:
    """
    Minimum age of the previous CAM when the next one arrives.

    :argument t_q_n: Queue wait of the arriving CAM
    :argument t_cam_n: Interval between the two generations
    :returns: ``t_q_n + t_cam_n``
    :raises ValueError: On negative inputs
    """
    if t_q_n < 0 or t_cam_n < 0:
        raise ValueError(
            f"Inputs must be >= 0, got t_q={t_q_n}, t_cam={t_cam_n}"
        )
    return t_q_n + t_cam_n


def position_error(e2e: Duration, speed: float) -> float:
    """
    Distance a vehicle covers while its CAM is in flight.

    :argument e2e: End-to-end delay, microseconds
    :argument speed: Vehicle speed, m/s
    :returns: Meters
    :raises ValueError: On negative inputs
    """
    if e2e < 0 or speed < 0:
        raise ValueError(f"Inputs must be >= 0, got e2e={e2e}, speed={speed}")
    return e2e / SECOND * speed


@dataclass(frozen=True, slots=True)
class SummaryStats:
    """
    Distribution summary of one metric, microseconds.

    Attributes:
        count: Number of samples
        mean: Arithmetic mean
        sd: Population standard deviation
        minimum: Smallest sample
        maximum: Largest sample
        p50: Median
        p95: 95th percentile
        p99: 99th percentile
        bin_width: Histogram bin width
        histogram: Non-empty closed-open bins, keyed by bin start
    """

    count: int
    mean: float
    sd: float
    minimum: float
    maximum: float
    p50: float
    p95: float
    p99: float
    bin_width: Duration
    histogram: dict[int, int] = field(default_factory=dict)


def summarize(
    values: Sequence[float] | np.ndarray, bin_width: Duration = DELAY_BIN
) -> SummaryStats:
    """
    Summarize a metric.

    :argument values: Samples, microseconds
    :argument bin_width: Histogram bin width
    :returns: Count, moments, extremes, percentiles and histogram
    :raises ValueError: If there are no samples or the bin width is bad
    """
    samples = np.asarray(values, dtype=float)
    if samples.size == 0:
        raise ValueError("Cannot summarize an empty record set")
    if bin_width <= 0:
        raise ValueError(f"bin_width must be > 0, got {bin_width}")
    p50, p95, p99 = np.percentile(samples, [50, 95, 99])
    bins, counts = np.unique(
        np.floor_divide(samples, bin_width).astype(np.int64),
        return_counts=True,
    )
    return SummaryStats(
        count=int(samples.size),
        mean=float(samples.mean()),
        sd=float(samples.std()),
        minimum=float(samples.min()),
        maximum=float(samples.max()),
        p50=float(p50),
        p95=float(p95),
        p99=float(p99),
        bin_width=bin_width,
        histogram={
            int(b) * bin_width: int(c)
            for b, c in zip(bins, counts, strict=True)
        },
    )


def time_average_age(receptions: Sequence[RxRecord]) -> float | None:
    """
    Time-averaged information age of one sender at one receiver.

    Between receptions the age grows linearly from the e2e delay of the
    last CAM; the sawtooth area is divided by the observation span.

    :argument receptions: Receptions of one pair in arrival order
    :returns: Mean age in microseconds, None with fewer than two
    """
    if len(receptions) < 2:
        return None
    area = 0.0
    for previous, current in pairwise(receptions):
        start = previous.rx_time - previous.gen_timestamp
        end = current.rx_time - previous.gen_timestamp
        area += (current.rx_time - previous.rx_time) * (start + end) / 2
    span = receptions[-1].rx_time - receptions[0].rx_time
    return area / span if span else None


def pair_time_average_ages(receptions: RecordTable[RxRecord]) -> np.ndarray:
    """
    Time-averaged information age of every (sender, receiver) pair.

    Applies the sawtooth of ``time_average_age`` to all pairs at once.

    :argument receptions: Reception table of a run
    :returns: One mean age per pair with a positive span, microseconds,
        ordered by sender then receiver
    """
    if len(receptions) < 2:
        return np.empty(0)
    sender = receptions.column("sender_id")
    receiver = receptions.column("receiver_id")
    order = np.lexsort((receptions.column("rx_time"), receiver, sender))
    sender, receiver = sender[order], receiver[order]
    gen = receptions.column("gen_timestamp")[order]
    rx = receptions.column("rx_time")[order]

    same = (sender[1:] == sender[:-1]) & (receiver[1:] == receiver[:-1])
    start = rx[:-1] - gen[:-1]
    end = rx[1:] - gen[:-1]
    area = np.where(same, (rx[1:] - rx[:-1]) * (start + end) / 2, 0.0)
    pair = np.concatenate(([0], np.cumsum(~same)))
    totals = np.bincount(pair[:-1], weights=area, minlength=pair[-1] + 1)
    first = np.flatnonzero(np.concatenate(([True], ~same)))
    last = np.concatenate((first[1:] - 1, [rx.size - 1]))
    span = rx[last] - rx[first]
    observed = span > 0
    return totals[observed] / span[observed]


def measured_rates(
    records: Iterable[TxRecord], duration: Duration
) -> dict[int, RateBreakdown]:
    """
    Count per-vehicle transmissions by kind over a run.

    :argument records: Transmissions of every class
    :argument duration: Observation span
    :returns: Per vehicle, total, CAM and TC3 rates in Hz
    :raises ValueError: If the duration is not positive
    """
    if duration <= 0:
        raise ValueError(f"duration must be > 0, got {duration}")
    counts: dict[int, dict[TrafficClass, int]] = defaultdict(
        lambda: defaultdict(int)
    )
    for record in records:
        counts[record.sender_id][record.traffic_class] += 1
    span = duration / SECOND
    return {
        vehicle: RateBreakdown(
            r_total=sum(by_class.values()) / span,
            r_cam=by_class[TrafficClass.TC2] / span,
            r_tc3=by_class[TrafficClass.TC3] / span,
        )
        for vehicle, by_class in sorted(counts.items())
    }


class MetricsCollector:
    """
    Collects the records of one run.

    The neighbour table follows every CAM a receiver gets; reception and
    age rows are kept only for pairs within ``distance_filter`` when one
    is set. Receptions and ages are stored as columns, transmissions and
    generations as record lists.
    """

    def __init__(
        self, distance_filter: float | None = None, n_vehicles: int = 1
    ) -> None:
        """
        :argument distance_filter: Maximum pair distance, None keeps all
        :argument n_vehicles: Expected fleet size; the table grows past it
        """
        self.distance_filter = distance_filter
        self.tx: list[TxRecord] = []
        self.rx: RecordTable[RxRecord] = RecordTable(
            RxRecord, RX_DTYPES, optional=("ipg",)
        )
        self.age: RecordTable[AgeRecord] = RecordTable(AgeRecord, AGE_DTYPES)
        self.generations: list[GenRecord] = []
        self.t_dcc_samples: list[Duration] = []
        self._last_gen = np.empty((0, 0), dtype=np.int64)
        self._last_rx = np.empty((0, 0), dtype=np.int64)
        self._allocate(max(n_vehicles, 1))

    def record_generation(self, cam: CamMessage, condition: str) -> None:
        """Log a generated CAM, transmitted or not."""
        self.generations.append(
            GenRecord(
                cam.sender_id, condition, cam.trigger_time, cam.gen_timestamp
            )
        )

    def record_tx(
        self, message: QueuedMessage, tx_time: SimTime, t_dcc: Duration
    ) -> TxRecord:
        """
        Log a dequeue.

        :argument message: Dequeued entry
        :argument tx_time: Dequeue instant
        :argument t_dcc: Interval the gate applied after it
        :returns: The record
        """
        record = TxRecord(
            message.payload.sender_id,
            message.gen_timestamp,
            message.enqueue_time,
            tx_time,
            tx_time - message.enqueue_time,
            message.traffic_class,
        )
        self.tx.append(record)
        self.t_dcc_samples.append(t_dcc)
        return record

    def record_broadcast(self, broadcast: Broadcast) -> None:
        """
        Log every reception of one CAM and refresh the neighbour table.

        :argument broadcast: Receptions of the CAM
        :returns: None
        """
        receivers = broadcast.receivers
        if receivers.size == 0:
            return
        sender = broadcast.sender_id
        self._allocate(max(sender, int(receivers.max())) + 1)
        gen = broadcast.message.gen_timestamp
        rx_time = broadcast.rx_time
        last_gen = self._last_gen[sender]
        last_rx = self._last_rx[sender]
        previous_gen = last_gen[receivers]
        previous_rx = last_rx[receivers]
        last_gen[receivers] = gen
        last_rx[receivers] = rx_time

        distances = broadcast.distances
        if self.distance_filter is not None:
            kept = distances <= self.distance_filter
            receivers, distances = receivers[kept], distances[kept]
            previous_gen, previous_rx = previous_gen[kept], previous_rx[kept]
        seen = previous_rx != _NEVER
        ipg = np.full(receivers.size, _NO_VALUE, dtype=np.int64)
        ipg[seen] = rx_time - previous_rx[seen]
        self.rx.extend(
            receivers.size,
            sender_id=sender,
            receiver_id=receivers,
            gen_timestamp=gen,
            rx_time=rx_time,
            e2e_delay=rx_time - gen,
            ipg=ipg,
            distance=distances,
        )
        self.age.extend(
            int(seen.sum()),
            sender_id=sender,
            receiver_id=receivers[seen],
            refresh_time=rx_time,
            age=rx_time - previous_gen[seen],
        )

    def record_reception(
        self, delivery: Delivery
    ) -> tuple[RxRecord | None, AgeRecord | None]:
        """
        Log a single CAM reception and refresh the neighbour table.

        :argument delivery: Reception of a CAM
        :returns: The reception record and, if a previous CAM from the
            sender exists, the age record; None for pairs filtered out
        """
        rx_count, age_count = len(self.rx), len(self.age)
        self.record_broadcast(
            Broadcast(
                delivery.message,
                delivery.sender_id,
                delivery.tx_time,
                delivery.rx_time,
                np.array([delivery.receiver_id]),
                np.array([delivery.distance]),
            )
        )
        rx = self.rx[rx_count] if len(self.rx) > rx_count else None
        age = self.age[age_count] if len(self.age) > age_count else None
        return rx, age

    def _allocate(self, size: int) -> None:
        known = self._last_gen.shape[0]
        if known >= size:
            return
        last_gen = np.full((size, size), _NEVER, dtype=np.int64)
        last_rx = np.full((size, size), _NEVER, dtype=np.int64)
        last_gen[:known, :known] = self._last_gen
        last_rx[:known, :known] = self._last_rx
        self._last_gen = last_gen
        self._last_rx = last_rx


def write_csv(
    path: Path, header: Sequence[str], rows: Iterable[Sequence[object]]
) -> None:
    """
    Write rows with a header, ``\\n`` line endings, UTF-8.

    :argument path: Destination file
    :argument header: Column names
    :argument rows: Row values
    :returns: None
    """
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def summary_row(
    run_id: str, mode: str, metric: str, stats: SummaryStats
) -> tuple[object, ...]:
    """Format one ``summary.csv`` row."""
    return (
        run_id,
        mode,
        metric,
        stats.count,
        f"{stats.mean:.3f}",
        f"{stats.sd:.3f}",
        f"{stats.p50:.3f}",
        f"{stats.p95:.3f}",
        f"{stats.p99:.3f}",
        f"{stats.minimum:.3f}",
        f"{stats.maximum:.3f}",
    )
