"""Pytest setup for simulator tests."""

from collections.abc import Callable
from typing import Any

import pytest

from dcc_sim.clock import Duration, SimTime, ms
from dcc_sim.dcc import ConstantRateController, DccGate
from dcc_sim.dynamics import VehicleDynamics
from dcc_sim.engine import Simulator
from dcc_sim.message_definitions import (
    CamMessage,
    GenericMessage,
    QueuedMessage,
)
from dcc_sim.mobility import StaticScenario
from dcc_sim.settings import ScenarioConfig
from dcc_sim.traffic_class import TrafficClass

Sent = list[tuple[QueuedMessage, SimTime, Duration]]


@pytest.fixture
def engine() -> Simulator:
    """
    Fixture for an empty scheduler.

    :return: A Simulator at time zero
    """
    return Simulator()


@pytest.fixture
def sent() -> Sent:
    """
    Fixture collecting the transmissions of a gate.

    :return: An empty list of (message, t_tx, t_dcc)
    """
    return []


@pytest.fixture
def make_gate(
    engine: Simulator, sent: Sent
) -> Callable[..., DccGate]:
    """
    Fixture building gates that record into ``sent``.

    :return: A factory accepting DccGate keyword arguments
    """

    def factory(t_dcc: Duration = ms(200), **kwargs: Any) -> DccGate:
        return DccGate(
            engine,
            ConstantRateController(t_dcc),
            lambda message, t_tx, applied: sent.append(
                (message, t_tx, applied)
            ),
            **kwargs,
        )

    return factory


@pytest.fixture
def generic() -> Callable[..., QueuedMessage]:
    """
    Fixture for queue entries of generic messages.

    :return: A factory taking the class and the enqueue time
    """

    def factory(
        traffic_class: TrafficClass = TrafficClass.TC3, now: SimTime = 0
    ) -> QueuedMessage:
        return QueuedMessage.wrap(
            GenericMessage(0, 0, now, traffic_class), now
        )

    return factory


@pytest.fixture
def cam_entry() -> Callable[..., QueuedMessage]:
    """
    Fixture for queue entries of CAMs.

    :return: A factory taking the generation and enqueue times
    """

    def factory(
        gen: SimTime = 0, now: SimTime | None = None, sender: int = 0
    ) -> QueuedMessage:
        cam = CamMessage(sender, 0, gen, gen, VehicleDynamics())
        return QueuedMessage.wrap(cam, gen if now is None else now)

    return factory


@pytest.fixture
def line() -> StaticScenario:
    """
    Fixture for five immobile vehicles 200 m apart.

    :return: A StaticScenario instance
    """
    return StaticScenario(n_vehicles=5, spacing=200.0)


@pytest.fixture
def static_settings() -> dict[str, Any]:
    """
    Fixture for a small static scenario file.

    :return: Configuration layer as read from TOML
    """
    return {
        "run": {"duration_s": 3.0, "run_id": "test"},
        "scenario": {"kind": "static", "n_vehicles": 6},
        "ca": {"trigger": "fixed", "trigger_interval_ms": 300.0},
        "dcc": {"rate_controller": "constant", "t_dcc_ms": 200.0},
    }


@pytest.fixture
def static_config(static_settings: dict[str, Any]) -> ScenarioConfig:
    """
    Fixture for a resolved small static configuration.

    :return: A ScenarioConfig instance
    """
    return ScenarioConfig(static_settings)
