"""Run orchestration: one station per vehicle sharing a channel."""

from __future__ import annotations

import logging
from collections import defaultdict
from collections.abc import Callable, Iterable
from dataclasses import dataclass, field
from itertools import pairwise
from pathlib import Path
from typing import TextIO

import numpy as np

from dcc_sim.ca_service import CaService, Mode, TriggerDecision
from dcc_sim.channel import Broadcast, Channel
from dcc_sim.clock import Duration, SimTime, ms
from dcc_sim.dcc import DccGate, QueueStats
from dcc_sim.engine import EventKind, Simulator
from dcc_sim.exceptions import ConfigError, SimulationError
from dcc_sim.message_definitions import CamMessage, QueuedMessage
from dcc_sim.metrics import (
    DELAY_BIN,
    INTERVAL_BIN,
    GenRecord,
    MetricsCollector,
    SummaryStats,
    pair_time_average_ages,
    summarize,
)
from dcc_sim.mobility import RingScenario, Scenario, StaticScenario
from dcc_sim.settings import ScenarioConfig
from dcc_sim.traffic import (
    BurstSource,
    PoissonSource,
    SaturatingSource,
    TrafficSource,
)
from dcc_sim.traffic_class import TrafficClass

logger = logging.getLogger(__name__)

# metric name -> histogram bin width
METRIC_BINS: dict[str, Duration] = {
    "queue_wait": DELAY_BIN,
    "e2e": DELAY_BIN,
    "ipg": INTERVAL_BIN,
    "age": INTERVAL_BIN,
    "age_time_average": INTERVAL_BIN,
    "cam_gen_interval": INTERVAL_BIN,
    "cam_tx_interval": INTERVAL_BIN,
    "t_cam": INTERVAL_BIN,
    "t_dcc": INTERVAL_BIN,
}


def build_scenario(
    config: ScenarioConfig, rng: np.random.Generator
) -> Scenario:
    """
    Create the mobility of a run.

    :argument config: Resolved configuration
    :argument rng: Stream for vehicle placement and speeds
    :returns: Static line or ring road
    """
    if config.get("scenario.kind") == "static":
        return StaticScenario(
            config.get("scenario.n_vehicles"),
            config.get("scenario.spacing_m"),
        )
    return RingScenario(
        rng,
        density=config.get("scenario.density"),
        circumference=config.get("scenario.circumference_m"),
        lanes=config.get("scenario.lanes"),
        mean_speed=config.get("scenario.mean_speed"),
        speed_jitter=config.get("scenario.speed_jitter"),
        straight_fraction=config.get("scenario.straight_fraction"),
        lane_width=config.get("scenario.lane_width_m"),
    )


def stratified_phases(
    rng: np.random.Generator, count: int, period: Duration
) -> np.ndarray:
    """
    Spread ``count`` offsets evenly over ``[0, period)`` in random order.

    One offset is drawn inside each of ``count`` equal strata.

    :argument rng: Random stream
    :argument count: Number of offsets
    :argument period: Length of the interval, microseconds
    :returns: Integer offsets, shuffled
    """
    strata = (np.arange(count) + rng.uniform(0.0, 1.0, count)) * period
    offsets = np.floor(strata / count).astype(np.int64)
    return rng.permutation(np.minimum(offsets, period - 1))


def _diffs(times: Iterable[SimTime]) -> list[Duration]:
    return [b - a for a, b in pairwise(times)]


@dataclass
class RunResult:
    """
    Everything one run produced.

    Attributes:
        run_id: Run label written to every CSV row
        mode: CA mode of the run
        duration: Simulated span
        metrics: Collected records
        queue_stats: Gate counters per vehicle and class
        backlog: Messages still queued at the end per vehicle and class
        mean_speed: Average vehicle speed, m/s
        mac_phy_delay: Channel delay of the run
        events: Processed events
        busy_time: Total airtime on the channel, seconds
    """

    run_id: str
    mode: Mode
    duration: Duration
    metrics: MetricsCollector
    queue_stats: dict[int, dict[TrafficClass, QueueStats]]
    backlog: dict[int, dict[TrafficClass, int]]
    mean_speed: float
    mac_phy_delay: Duration
    events: int = 0
    busy_time: float = 0.0
    _samples: dict[str, np.ndarray] | None = field(
        default=None, repr=False
    )

    def cam_queue_waits(self) -> list[Duration]:
        """Queue wait ``t_q`` of every transmitted CAM."""
        return [
            record.queue_wait
            for record in self.metrics.tx
            if record.traffic_class is TrafficClass.TC2
        ]

    def cam_tx_intervals(self) -> list[Duration]:
        """Intervals between consecutive CAM transmissions per vehicle."""
        by_vehicle: dict[int, list[SimTime]] = defaultdict(list)
        for record in self.metrics.tx:
            if record.traffic_class is TrafficClass.TC2:
                by_vehicle[record.sender_id].append(record.tx_time)
        return [
            gap for times in by_vehicle.values() for gap in _diffs(times)
        ]

    def t_cam_intervals(self) -> list[Duration]:
        """Intervals between consecutive trigger baselines per vehicle."""
        return self._generation_intervals(lambda record: record.trigger_time)

    def gen_intervals(self) -> list[Duration]:
        """Intervals between consecutive CAM timestamps per vehicle."""
        return self._generation_intervals(
            lambda record: record.gen_timestamp
        )

    def time_average_ages(self) -> np.ndarray:
        """Time-averaged age of every observed (sender, receiver) pair."""
        return pair_time_average_ages(self.metrics.rx)

    def samples(self) -> dict[str, np.ndarray]:
        """
        Collect the samples of every reported metric.

        :returns: Samples keyed by metric name, microseconds
        """
        if self._samples is None:
            ipg = self.metrics.rx.column("ipg")
            self._samples = {
                "queue_wait": np.asarray(self.cam_queue_waits()),
                "e2e": self.metrics.rx.column("e2e_delay"),
                "ipg": ipg[ipg >= 0],
                "age": self.metrics.age.column("age"),
                "age_time_average": self.time_average_ages(),
                "cam_gen_interval": np.asarray(self.gen_intervals()),
                "cam_tx_interval": np.asarray(self.cam_tx_intervals()),
                "t_cam": np.asarray(self.t_cam_intervals()),
                "t_dcc": np.asarray(self.metrics.t_dcc_samples),
            }
        return self._samples

    def summaries(self) -> dict[str, SummaryStats]:
        """Summaries of every metric that has samples."""
        return {
            name: summarize(values, METRIC_BINS[name])
            for name, values in self.samples().items()
            if len(values)
        }

    def mean(self, metric: str) -> float:
        """Mean of a metric, NaN without samples."""
        values = self.samples()[metric]
        return float(values.mean()) if len(values) else float("nan")

    def _generation_intervals(
        self, key: Callable[[GenRecord], SimTime]
    ) -> list[Duration]:
        by_vehicle: dict[int, list[SimTime]] = defaultdict(list)
        for record in self.metrics.generations:
            by_vehicle[record.sender_id].append(key(record))
        return [
            gap for times in by_vehicle.values() for gap in _diffs(times)
        ]


class Station:
    """One vehicle: its gate, CA service and traffic sources."""

    def __init__(
        self,
        simulation: Simulation,
        vehicle_id: int,
        gate_phase: SimTime,
        activation: SimTime,
    ) -> None:
        """
        Wire the vehicle into the run.

        :argument simulation: Owning run
        :argument vehicle_id: Vehicle index
        :argument gate_phase: First gate opening
        :argument activation: Start of the CA evaluation grid
        :returns: None
        """
        config = simulation.config
        self.vehicle_id = vehicle_id
        self._simulation = simulation
        self._engine = simulation.engine
        self.gate = DccGate(
            simulation.engine,
            config.build_rate_controller(),
            self._transmit,
            vehicle_id=vehicle_id,
            first_opening=gate_phase,
            queue_capacity=config.get("dcc.queue_capacity"),
            replace_cam=config.get("dcc.replace_cam"),
        )
        self.sources: list[TrafficSource] = []
        self.ca = CaService(
            vehicle_id,
            simulation.engine,
            self.gate,
            simulation.scenario,
            config.ca_config(simulation.mode),
            self._on_cam,
            activation=activation,
        )

    def add_source(self, source: TrafficSource) -> None:
        """Attach and start a traffic source."""
        self.sources.append(source)
        source.start()

    def _on_cam(self, cam: CamMessage, decision: TriggerDecision) -> None:
        self._simulation.metrics.record_generation(cam, decision.value)
        self.gate.enqueue(QueuedMessage.wrap(cam, self._engine.now))

    def _transmit(
        self, message: QueuedMessage, t_tx: SimTime, t_dcc: Duration
    ) -> None:
        simulation = self._simulation
        simulation.metrics.record_tx(message, t_tx, t_dcc)
        broadcast = simulation.channel.broadcast(
            message, self.vehicle_id, t_tx, deliver=message.is_cam
        )
        if len(broadcast):
            self._engine.schedule(
                broadcast.rx_time,
                EventKind.DELIVERY,
                lambda: simulation.deliver(broadcast),
                self.vehicle_id,
            )
        for source in self.sources:
            source.on_transmitted(message, t_tx)


class Simulation:
    """
    A single run of one CA mode.

    Randomness comes from independent streams spawned from the run seed
    for placement, phases and traffic, so an ETSI and a GoT run of the
    same configuration see identical stimuli.
    """

    def __init__(
        self,
        config: ScenarioConfig,
        mode: Mode,
        trace: TextIO | None = None,
    ) -> None:
        """
        Build every station.

        :argument config: Validated configuration
        :argument mode: CA mode of this run
        :argument trace: Optional event trace stream
        :returns: None
        """
        self.config = config
        self.mode = mode
        seed = config.get("run.seed")
        placement, phases, traffic = np.random.SeedSequence(seed).spawn(3)
        self.engine = Simulator(trace)
        self.scenario = build_scenario(
            config, np.random.default_rng(placement)
        )
        self.channel = Channel(config.channel_config(), self.scenario, seed)
        self.metrics = MetricsCollector(
            config.distance_filter, self.scenario.n_vehicles
        )
        self.stations = self._build_stations(np.random.default_rng(phases))
        self._add_traffic(traffic)
        if any(s.gate.controller.needs_cbr for s in self.stations):
            self._window = ms(config.get("dcc.cbr_window_ms"))
            self.engine.schedule(
                self._window, EventKind.CBR_WINDOW, self._measure_cbr
            )

    def deliver(self, broadcast: Broadcast) -> None:
        """Hand the receptions of one CAM to the metrics collector."""
        self.metrics.record_broadcast(broadcast)

    def run(self) -> RunResult:
        """
        Process every event up to the configured duration.

        :returns: The records and counters of the run
        """
        logger.info(
            "Running %s mode with %d vehicles for %.1f s",
            self.mode.value,
            self.scenario.n_vehicles,
            self.config.get("run.duration_s"),
        )
        events = self.engine.run_until(self.config.duration)
        logger.info(
            "%s run finished: %d events, %d transmissions, %d receptions",
            self.mode.value,
            events,
            len(self.metrics.tx),
            len(self.metrics.rx),
        )
        return RunResult(
            run_id=self.config.get("run.run_id"),
            mode=self.mode,
            duration=self.config.duration,
            metrics=self.metrics,
            queue_stats={
                station.vehicle_id: station.gate.stats
                for station in self.stations
            },
            backlog={
                station.vehicle_id: {
                    tc: station.gate.backlog(tc) for tc in TrafficClass
                }
                for station in self.stations
            },
            mean_speed=self.scenario.mean_speed,
            mac_phy_delay=self.channel.config.mac_phy_delay,
            events=events,
            busy_time=self.channel.busy_time,
        )

    def _build_stations(self, rng: np.random.Generator) -> list[Station]:
        count = self.scenario.n_vehicles
        if self.config.get("scenario.randomize_phases"):
            period = self.config.build_rate_controller().t_dcc(0)
            step = ms(self.config.get("ca.eval_step_ms"))
            activations = rng.integers(0, step, count)
            # stratify the gate-to-trigger offset, not the raw phase
            offsets = stratified_phases(rng, count, period)
            gate_phases = (activations + offsets) % period
        else:
            gate_phases = np.zeros(count, dtype=np.int64)
            activations = np.zeros(count, dtype=np.int64)
        return [
            Station(self, vehicle, int(gate_phases[vehicle]), int(start))
            for vehicle, start in enumerate(activations)
        ]

    def _add_traffic(self, seed: np.random.SeedSequence) -> None:
        config = self.config
        load = config.get("traffic.tc3_load")
        size = config.get("traffic.tc3_size")
        bursts: dict[TrafficClass, list[tuple[SimTime, int]]] = defaultdict(
            list
        )
        for time, count, tc in config.bursts:
            bursts[tc].append((time, count))
        streams = seed.spawn(len(self.stations))
        for station, stream in zip(self.stations, streams, strict=True):
            vehicle = station.vehicle_id
            if load == "saturating":
                station.add_source(
                    SaturatingSource(
                        self.engine,
                        station.gate,
                        vehicle,
                        TrafficClass.TC3,
                        size,
                    )
                )
            elif load == "rate":
                station.add_source(
                    PoissonSource(
                        self.engine,
                        station.gate,
                        vehicle,
                        config.get("traffic.tc3_rate_hz"),
                        np.random.default_rng(stream),
                        size=size,
                    )
                )
            for tc, entries in bursts.items():
                station.add_source(
                    BurstSource(
                        self.engine,
                        station.gate,
                        vehicle,
                        entries,
                        tc,
                        config.get("traffic.burst_size"),
                    )
                )

    def _measure_cbr(self) -> None:
        now = self.engine.now
        ratios = self.channel.measure_cbr_all(self._window, now)
        for station in self.stations:
            station.gate.controller.observe_cbr(
                float(ratios[station.vehicle_id]), now
            )
        self.engine.schedule(
            now + self._window, EventKind.CBR_WINDOW, self._measure_cbr
        )


def execute_run(
    config: ScenarioConfig, mode: Mode, trace_path: Path | None = None
) -> RunResult:
    """
    Build and run one simulation.

    Top-level so that it can be sent to a worker process.

    :argument config: Validated configuration
    :argument mode: CA mode
    :argument trace_path: Event trace destination, None for no trace
    :returns: The run result
    :raises SimulationError: If a component rejects a value mid-run
    """
    try:
        if trace_path is None:
            return Simulation(config, mode).run()
        with trace_path.open("w", encoding="utf-8") as trace:
            return Simulation(config, mode, trace).run()
    except ConfigError:
        raise
    except ValueError as error:
        raise SimulationError(f"{mode.value} run failed: {error}") from error
