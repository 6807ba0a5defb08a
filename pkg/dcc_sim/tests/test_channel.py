"""Tests for the channel module."""

from collections.abc import Callable

import numpy as np
import pytest

from dcc_sim.channel import Channel, ChannelConfig
from dcc_sim.clock import ms, seconds
from dcc_sim.message_definitions import CAM_SIZE, QueuedMessage
from dcc_sim.mobility import StaticScenario

CAM_AIRTIME = CAM_SIZE * 8 / 6_000_000


class TestChannelConfig:
    """Test the radio settings."""

    def test_airtime(self) -> None:
        """
        Test the airtime of a CAM at 6 Mbit/s.

        :return: None
        """
        assert ChannelConfig().airtime(CAM_SIZE) == pytest.approx(
            446.667e-6, rel=1e-4
        )

    @pytest.mark.parametrize(
        ("kwargs", "message"),
        [
            ({"range": 0.0}, "range must be > 0"),
            ({"data_rate": -1.0}, "data_rate must be > 0"),
            ({"mac_phy_delay": -1}, "mac_phy_delay must be >= 0"),
            ({"loss_probability": 1.5}, "loss_probability must lie"),
        ],
    )
    def test_invalid(self, kwargs: dict, message: str) -> None:
        """
        Test that invalid settings raise ValueError.

        :param kwargs: Settings to apply
        :param message: Expected error text
        :return: None
        """
        with pytest.raises(ValueError, match=message):
            ChannelConfig(**kwargs)


class TestBroadcast:
    """Test the deliveries of a broadcast."""

    def test_receivers_in_range(
        self,
        line: StaticScenario,
        cam_entry: Callable[..., QueuedMessage],
    ) -> None:
        """
        Test that vehicles within 750 m receive after the fixed delay.

        :param line: Five vehicles 200 m apart
        :param cam_entry: CAM queue entry factory
        :return: None
        """
        channel = Channel(ChannelConfig(), line)

        deliveries = list(channel.broadcast(cam_entry(), 0, ms(10)))

        assert [d.receiver_id for d in deliveries] == [1, 2, 3]
        assert {d.rx_time for d in deliveries} == {ms(11)}
        assert [d.distance for d in deliveries] == [200.0, 400.0, 600.0]

    def test_everyone_in_range(
        self, cam_entry: Callable[..., QueuedMessage]
    ) -> None:
        """
        Test that each of N vehicles in range reaches the other N - 1.

        :param cam_entry: CAM queue entry factory
        :return: None
        """
        channel = Channel(ChannelConfig(), StaticScenario(5, 100.0))

        for sender in range(5):
            broadcast = channel.broadcast(cam_entry(), sender, ms(10))

            assert len(broadcast) == 4
            assert sender not in broadcast.receivers.tolist()

    def test_links_are_symmetric(
        self,
        line: StaticScenario,
        cam_entry: Callable[..., QueuedMessage],
    ) -> None:
        """
        Test that a hears b exactly when b hears a, at the same distance.

        :param line: Five vehicles 200 m apart
        :param cam_entry: CAM queue entry factory
        :return: None
        """
        channel = Channel(ChannelConfig(), line)
        links = {
            (d.sender_id, d.receiver_id): d.distance
            for sender in range(5)
            for d in channel.broadcast(cam_entry(), sender, ms(10))
        }

        assert links
        for (a, b), distance in links.items():
            assert links[(b, a)] == distance

    def test_receptions_keep_transmission_order(
        self,
        line: StaticScenario,
        cam_entry: Callable[..., QueuedMessage],
    ) -> None:
        """
        Test that a fixed delay delivers in the order of transmission.

        :param line: Five vehicles 200 m apart
        :param cam_entry: CAM queue entry factory
        :return: None
        """
        channel = Channel(ChannelConfig(), line)
        tx_times = [ms(10), ms(10) + 1, ms(12), ms(40)]

        rx_times = [
            channel.broadcast(cam_entry(), 0, t).rx_time for t in tx_times
        ]

        assert rx_times == [t + ms(1) for t in tx_times]
        assert rx_times == sorted(rx_times)

    def test_static_links_are_reused(
        self,
        line: StaticScenario,
        cam_entry: Callable[..., QueuedMessage],
    ) -> None:
        """
        Test that repeated broadcasts of one sender reach the same set.

        :param line: Five vehicles 200 m apart
        :param cam_entry: CAM queue entry factory
        :return: None
        """
        channel = Channel(ChannelConfig(), line)

        first = channel.broadcast(cam_entry(), 2, ms(10))
        second = channel.broadcast(cam_entry(), 2, ms(500))

        assert first.receivers.tolist() == [0, 1, 3, 4]
        assert second.receivers.tolist() == [0, 1, 3, 4]
        assert second.distances.tolist() == [400.0, 200.0, 200.0, 400.0]

    def test_total_loss(
        self,
        line: StaticScenario,
        cam_entry: Callable[..., QueuedMessage],
    ) -> None:
        """
        Test that lost receptions still occupy the channel.

        :param line: Five vehicles 200 m apart
        :param cam_entry: CAM queue entry factory
        :return: None
        """
        channel = Channel(ChannelConfig(loss_probability=1.0), line)

        assert len(channel.broadcast(cam_entry(), 2, ms(10))) == 0
        assert channel.busy_time == pytest.approx(CAM_AIRTIME)

    def test_loss_is_keyed_by_broadcast(
        self, cam_entry: Callable[..., QueuedMessage]
    ) -> None:
        """
        Test that two channels with one seed lose the same receptions.

        :param cam_entry: CAM queue entry factory
        :return: None
        """
        scenario = StaticScenario(n_vehicles=40, spacing=10.0)
        received = []
        for _ in range(2):
            channel = Channel(
                ChannelConfig(loss_probability=0.5), scenario, seed=9
            )
            received.append(
                [
                    d.receiver_id
                    for t in range(5)
                    for d in channel.broadcast(cam_entry(), 0, ms(t))
                ]
            )

        assert received[0] == received[1]
        assert 0 < len(received[0]) < 5 * 39

    def test_accounting_only(
        self,
        line: StaticScenario,
        cam_entry: Callable[..., QueuedMessage],
    ) -> None:
        """
        Test that deliver=False returns nothing but logs the airtime.

        :param line: Five vehicles 200 m apart
        :param cam_entry: CAM queue entry factory
        :return: None
        """
        channel = Channel(ChannelConfig(), line)

        broadcast = channel.broadcast(cam_entry(), 0, ms(10), deliver=False)

        assert len(broadcast) == 0
        assert channel.measure_cbr(1, ms(100), ms(50)) > 0


class TestMeasureCbr:
    """Test the channel busy ratio."""

    def test_single_transmission(
        self,
        line: StaticScenario,
        cam_entry: Callable[..., QueuedMessage],
    ) -> None:
        """
        Test the busy ratio seen by neighbours, the sender and far nodes.

        :param line: Five vehicles 200 m apart
        :param cam_entry: CAM queue entry factory
        :return: None
        """
        channel = Channel(ChannelConfig(), line)
        channel.broadcast(cam_entry(), 0, ms(10))

        assert channel.measure_cbr(1, ms(100), ms(50)) == pytest.approx(
            0.0044667, rel=1e-4
        )
        assert channel.measure_cbr(0, ms(100), ms(50)) == 0.0
        assert channel.measure_cbr(4, ms(100), ms(50)) == 0.0

    def test_window_is_open(
        self,
        line: StaticScenario,
        cam_entry: Callable[..., QueuedMessage],
    ) -> None:
        """
        Test that neither window end is counted.

        :param line: Five vehicles 200 m apart
        :param cam_entry: CAM queue entry factory
        :return: None
        """
        channel = Channel(ChannelConfig(), line)
        channel.broadcast(cam_entry(), 0, ms(10))

        assert channel.measure_cbr(1, ms(100), ms(10)) == 0.0
        assert channel.measure_cbr(1, ms(100), ms(110)) == 0.0

    def test_all_matches_single(
        self,
        line: StaticScenario,
        cam_entry: Callable[..., QueuedMessage],
    ) -> None:
        """
        Test that the vectorised measurement equals per-vehicle calls.

        :param line: Five vehicles 200 m apart
        :param cam_entry: CAM queue entry factory
        :return: None
        """
        channel = Channel(ChannelConfig(), line)
        for sender in range(5):
            channel.broadcast(cam_entry(), sender, ms(10 + sender))

        expected = [
            channel.measure_cbr(vehicle, ms(100), ms(60))
            for vehicle in range(5)
        ]

        np.testing.assert_allclose(
            channel.measure_cbr_all(ms(100), ms(60)), expected
        )

    def test_log_grows(
        self,
        line: StaticScenario,
        cam_entry: Callable[..., QueuedMessage],
    ) -> None:
        """
        Test that retained transmissions survive the log resizing.

        :param line: Five vehicles 200 m apart
        :param cam_entry: CAM queue entry factory
        :return: None
        """
        channel = Channel(ChannelConfig(), line)
        for k in range(2000):
            channel.broadcast(cam_entry(), 0, k * 400, deliver=False)

        assert channel.measure_cbr(
            1, seconds(1), ms(800)
        ) == pytest.approx(2000 * CAM_AIRTIME)

    @pytest.mark.parametrize("window", [0, -1])
    def test_window_must_be_positive(
        self, line: StaticScenario, window: int
    ) -> None:
        """
        Test that a non-positive window raises ValueError.

        :param line: Five vehicles 200 m apart
        :param window: Window length
        :return: None
        """
        channel = Channel(ChannelConfig(), line)

        with pytest.raises(ValueError, match="window must be > 0"):
            channel.measure_cbr(0, window, ms(10))
        with pytest.raises(ValueError, match="window must be > 0"):
            channel.measure_cbr_all(window, ms(10))
