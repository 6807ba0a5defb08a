"""Tests for the traffic module."""

from collections.abc import Callable

import numpy as np
import pytest

from dcc_sim.clock import ms, seconds
from dcc_sim.dcc import ConstantRateController, DccGate
from dcc_sim.engine import Simulator
from dcc_sim.message_definitions import GenericMessage, QueuedMessage
from dcc_sim.traffic import (
    BURST_SIZE,
    BurstSource,
    PoissonSource,
    SaturatingSource,
)
from dcc_sim.traffic_class import TrafficClass


class TestSaturatingSource:
    """Test the always-backlogged TC3 source."""

    def test_one_message_per_opening(self, engine: Simulator) -> None:
        """
        Test that every opening carries a TC3 message.

        :param engine: Empty scheduler
        :return: None
        """
        sent: list[tuple[QueuedMessage, int]] = []

        def transmit(message: QueuedMessage, t_tx: int, t_dcc: int) -> None:
            sent.append((message, t_tx))
            source.on_transmitted(message, t_tx)

        gate = DccGate(engine, ConstantRateController(ms(200)), transmit)
        source = SaturatingSource(engine, gate, 0, TrafficClass.TC3, 332)
        source.start()

        engine.run_until(seconds(1))

        assert [t_tx for _, t_tx in sent] == [
            ms(0),
            ms(200),
            ms(400),
            ms(600),
            ms(800),
            ms(1000),
        ]
        assert gate.backlog(TrafficClass.TC3) == 1

    def test_ignores_other_transmissions(
        self,
        engine: Simulator,
        make_gate: Callable[..., DccGate],
        cam_entry: Callable[..., QueuedMessage],
    ) -> None:
        """
        Test that a CAM leaving the gate does not refill the queue.

        :param engine: Empty scheduler
        :param make_gate: Gate factory
        :param cam_entry: CAM queue entry factory
        :return: None
        """
        gate = make_gate(first_opening=seconds(5))
        source = SaturatingSource(engine, gate, 0, TrafficClass.TC3, 332)
        source.start()

        source.on_transmitted(cam_entry(), 0)

        assert gate.backlog() == 1


class TestPoissonSource:
    """Test the Poisson TC3 source."""

    def test_mean_rate(
        self, engine: Simulator, make_gate: Callable[..., DccGate]
    ) -> None:
        """
        Test that roughly rate * duration messages arrive.

        :param engine: Empty scheduler
        :param make_gate: Gate factory
        :return: None
        """
        gate = make_gate(first_opening=seconds(20), queue_capacity=5000)
        PoissonSource(
            engine, gate, 0, 100.0, np.random.default_rng(3)
        ).start()

        engine.run_until(seconds(10))

        assert 850 <= gate.backlog(TrafficClass.TC3) <= 1150

    def test_reproducible(self) -> None:
        """
        Test that equal seeds give equal arrival counts.

        :return: None
        """
        counts = []
        for _ in range(2):
            engine = Simulator()
            gate = DccGate(
                engine,
                ConstantRateController(ms(200)),
                lambda *args: None,
                first_opening=seconds(20),
                queue_capacity=5000,
            )
            PoissonSource(
                engine, gate, 0, 50.0, np.random.default_rng(11)
            ).start()
            engine.run_until(seconds(4))
            counts.append(gate.backlog())

        assert counts[0] == counts[1]

    def test_rate_must_be_positive(
        self, engine: Simulator, make_gate: Callable[..., DccGate]
    ) -> None:
        """
        Test that a non-positive rate raises ValueError.

        :param engine: Empty scheduler
        :param make_gate: Gate factory
        :return: None
        """
        with pytest.raises(ValueError, match="rate_hz must be > 0"):
            PoissonSource(
                engine, make_gate(), 0, 0.0, np.random.default_rng(0)
            )


class TestBurstSource:
    """Test the scripted bursts."""

    def test_burst_backlog(
        self, engine: Simulator, make_gate: Callable[..., DccGate]
    ) -> None:
        """
        Test that a burst queues all of its messages at once.

        :param engine: Empty scheduler
        :param make_gate: Gate factory
        :return: None
        """
        gate = make_gate(first_opening=seconds(1))
        BurstSource(engine, gate, 0, [(ms(100), 3)]).start()

        engine.run_until(ms(100))

        assert gate.backlog(TrafficClass.TC1) == 3

    def test_burst_messages(
        self,
        engine: Simulator,
        make_gate: Callable[..., DccGate],
        sent: list,
    ) -> None:
        """
        Test the class, size and timing of burst messages.

        :param engine: Empty scheduler
        :param make_gate: Gate factory
        :param sent: Transmission log
        :return: None
        """
        gate = make_gate(first_opening=ms(50))
        BurstSource(
            engine, gate, 2, [(ms(400), 1), (ms(120), 1)], TrafficClass.TC0
        ).start()

        engine.run_until(ms(500))

        assert [t_tx for _, t_tx, _ in sent] == [ms(120), ms(400)]
        for message, _, _ in sent:
            assert isinstance(message.payload, GenericMessage)
            assert message.traffic_class is TrafficClass.TC0
            assert message.size == BURST_SIZE
            assert message.payload.sender_id == 2
