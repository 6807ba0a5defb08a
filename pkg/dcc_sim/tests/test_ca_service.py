"""Tests for the ca_service module."""

from dataclasses import replace

import pytest

from dcc_sim.ca_service import (
    CaConfig,
    CaService,
    CaState,
    Defer,
    GenerateNow,
    Mode,
    PendingTrigger,
    TriggerDecision,
    evaluate_trigger,
    generate_cam_etsi,
    got_complete,
    got_on_trigger,
    rearm_wakeup_time,
    set_dcc_feedback,
    update_after_generation,
)
from dcc_sim.clock import Duration, SimTime, ms, seconds
from dcc_sim.dcc import ConstantRateController, DccGate
from dcc_sim.dynamics import TriggerThresholds, VehicleDynamics
from dcc_sim.engine import Simulator
from dcc_sim.exceptions import SimulationError
from dcc_sim.message_definitions import CamMessage, QueuedMessage
from dcc_sim.mobility import StaticScenario
from dcc_sim.traffic import SaturatingSource
from dcc_sim.traffic_class import TrafficClass

THRESHOLDS = TriggerThresholds()
ORIGIN = VehicleDynamics()


def state_at(
    baseline: SimTime = 0,
    t_gen_cam: Duration = ms(1000),
    t_gen_cam_dcc: Duration = ms(100),
    streak: int = 0,
) -> CaState:
    """Build a CA state with a zero baseline position."""
    return CaState(baseline, ORIGIN, t_gen_cam, t_gen_cam_dcc, streak)


class TestCaState:
    """Test the CaState invariants."""

    def test_defaults(self) -> None:
        """
        Test the initial intervals.

        :return: None
        """
        state = CaState(0)

        assert state.t_gen_cam == ms(1000)
        assert state.t_gen_cam_dcc == ms(100)
        assert state.pending is None

    @pytest.mark.parametrize(
        "field", ["t_gen_cam", "t_gen_cam_dcc"]
    )
    def test_interval_bounds(self, field: str) -> None:
        """
        Test that intervals outside [100 ms, 1000 ms] are rejected.

        :param field: Interval to corrupt
        :return: None
        """
        with pytest.raises(ValueError, match=field):
            CaState(0, **{field: ms(50)})

    def test_streak_bounds(self) -> None:
        """
        Test that the condition-2 streak never exceeds three.

        :return: None
        """
        with pytest.raises(ValueError, match="cond2_streak"):
            CaState(0, cond2_streak=4)


class TestEvaluateTrigger:
    """Test the CAM generation conditions."""

    def test_nothing_before_dcc_interval(self) -> None:
        """
        Test that no condition fires before T_GenCam_DCC.

        :return: None
        """
        moved = VehicleDynamics(x=50.0)

        assert (
            evaluate_trigger(state_at(), moved, ms(90), THRESHOLDS)
            is TriggerDecision.NONE
        )

    @pytest.mark.parametrize(
        ("current", "expected"),
        [
            (VehicleDynamics(x=4.0), TriggerDecision.NONE),
            (VehicleDynamics(x=4.5), TriggerDecision.CONDITION_1),
            (VehicleDynamics(speed=0.6), TriggerDecision.CONDITION_1),
            (VehicleDynamics(heading=3.0), TriggerDecision.NONE),
            (VehicleDynamics(heading=355.0), TriggerDecision.CONDITION_1),
        ],
    )
    def test_condition_1(
        self, current: VehicleDynamics, expected: TriggerDecision
    ) -> None:
        """
        Test the dynamics thresholds after T_GenCam_DCC.

        :param current: Dynamics at the evaluation
        :param expected: Resulting decision
        :return: None
        """
        assert (
            evaluate_trigger(state_at(), current, ms(200), THRESHOLDS)
            is expected
        )

    def test_condition_2_is_strict(self) -> None:
        """
        Test that condition 2 needs T_Elapsed strictly above T_GenCam.

        :return: None
        """
        state = state_at(t_gen_cam=ms(500))

        assert (
            evaluate_trigger(state, ORIGIN, ms(500), THRESHOLDS)
            is TriggerDecision.NONE
        )
        assert (
            evaluate_trigger(state, ORIGIN, ms(500) + 1, THRESHOLDS)
            is TriggerDecision.CONDITION_2
        )

    def test_fixed_interval_counts_as_condition_1(self) -> None:
        """
        Test the scripted stimulus.

        :return: None
        """
        state = state_at(baseline=ms(1000), t_gen_cam_dcc=ms(200))

        assert (
            evaluate_trigger(state, ORIGIN, ms(1299), THRESHOLDS, ms(300))
            is TriggerDecision.NONE
        )
        assert (
            evaluate_trigger(state, ORIGIN, ms(1300), THRESHOLDS, ms(300))
            is TriggerDecision.CONDITION_1
        )

    def test_fixed_interval_below_dcc_interval(self) -> None:
        """
        Test that a 100 ms stimulus is gated to T_GenCam_DCC.

        :return: None
        """
        state = state_at(t_gen_cam_dcc=ms(200))

        assert (
            evaluate_trigger(state, ORIGIN, ms(150), THRESHOLDS, ms(100))
            is TriggerDecision.NONE
        )
        assert (
            evaluate_trigger(state, ORIGIN, ms(200), THRESHOLDS, ms(100))
            is TriggerDecision.CONDITION_1
        )


class TestUpdateAfterGeneration:
    """Test the T_GenCam bookkeeping."""

    def test_condition_1_sets_interval(self) -> None:
        """
        Test that condition 1 sets T_GenCam to T_Elapsed.

        :return: None
        """
        moved = VehicleDynamics(x=9.0)
        state = update_after_generation(
            state_at(streak=2), TriggerDecision.CONDITION_1, ms(300), moved
        )

        assert state.t_gen_cam == ms(300)
        assert state.cond2_streak == 0
        assert state.baseline_time == ms(300)
        assert state.baseline_dynamics == moved

    def test_condition_1_clamps_interval(self) -> None:
        """
        Test that T_GenCam stays within [100 ms, 1000 ms].

        :return: None
        """
        state = update_after_generation(
            state_at(), TriggerDecision.CONDITION_1, ms(50), ORIGIN
        )

        assert state.t_gen_cam == ms(100)

    def test_three_condition_2_restore_default(self) -> None:
        """
        Test that the third consecutive condition 2 resets T_GenCam.

        :return: None
        """
        state = state_at(t_gen_cam=ms(300))
        intervals = []
        for k in range(1, 5):
            state = update_after_generation(
                state, TriggerDecision.CONDITION_2, ms(400) * k, ORIGIN
            )
            intervals.append((state.t_gen_cam, state.cond2_streak))

        assert intervals == [
            (ms(300), 1),
            (ms(300), 2),
            (ms(1000), 3),
            (ms(1000), 3),
        ]

    def test_none_rejected(self) -> None:
        """
        Test that a NONE decision raises ValueError.

        :return: None
        """
        with pytest.raises(ValueError, match="NONE"):
            update_after_generation(
                state_at(), TriggerDecision.NONE, ms(100), ORIGIN
            )


class TestSetDccFeedback:
    """Test the DCC feedback."""

    @pytest.mark.parametrize(
        ("t_dcc", "expected"),
        [(ms(25), ms(100)), (ms(200), ms(200)), (ms(1000), ms(1000))],
    )
    def test_clamps(self, t_dcc: int, expected: int) -> None:
        """
        Test T_GenCam_DCC = clamp(t_dcc, 100 ms, 1000 ms).

        :param t_dcc: Gate interval
        :param expected: Resulting lower bound
        :return: None
        """
        assert set_dcc_feedback(state_at(), t_dcc).t_gen_cam_dcc == expected

    def test_out_of_range(self) -> None:
        """
        Test that t_dcc outside the gate range raises ValueError.

        :return: None
        """
        with pytest.raises(ValueError, match="t_dcc must lie within"):
            set_dcc_feedback(state_at(), ms(20))


class TestEtsiGeneration:
    """Test immediate generation."""

    def test_timestamps_equal_trigger(self) -> None:
        """
        Test that the CAM carries the trigger instant and dynamics.

        :return: None
        """
        current = VehicleDynamics(x=5.0, speed=1.0)
        state, cam = generate_cam_etsi(
            state_at(),
            TriggerDecision.CONDITION_1,
            current,
            ms(300),
            sender_id=7,
            sequence=3,
        )

        assert cam.gen_timestamp == cam.trigger_time == ms(300)
        assert cam.dynamics == current
        assert (cam.sender_id, cam.sequence) == (7, 3)
        assert state.baseline_time == ms(300)


class TestGenerateOnTime:
    """Test the deferred generation."""

    def test_generate_now_when_gate_is_close(self) -> None:
        """
        Test that (t_go - t) - epsilon <= 0 generates immediately.

        :return: None
        """
        for t_go in (ms(105), ms(115)):
            action = got_on_trigger(
                state_at(),
                TriggerDecision.CONDITION_1,
                ORIGIN,
                ms(100),
                t_go,
                ms(15),
            )
            assert isinstance(action, GenerateNow)

    def test_defer_until_gate(self) -> None:
        """
        Test the wakeup at t_go - epsilon.

        :return: None
        """
        action = got_on_trigger(
            state_at(),
            TriggerDecision.CONDITION_2,
            ORIGIN,
            ms(100),
            ms(300),
            ms(15),
        )

        assert isinstance(action, Defer)
        assert action.wakeup_at == ms(285)
        assert action.pending.stored_time == ms(100)
        assert action.pending.decision is TriggerDecision.CONDITION_2

    def test_trigger_while_pending_raises(self) -> None:
        """
        Test that only one trigger may be pending.

        :return: None
        """
        pending = PendingTrigger(0, ORIGIN, TriggerDecision.CONDITION_1)
        state = replace(state_at(), pending=pending)

        with pytest.raises(SimulationError, match="already pending"):
            got_on_trigger(
                state, TriggerDecision.CONDITION_1, ORIGIN, ms(100), ms(300)
            )

    def test_complete_uses_fresh_data(self) -> None:
        """
        Test that the CAM carries t' and D' while the baseline keeps t, D.

        :return: None
        """
        stored = VehicleDynamics(x=10.0)
        fresh = VehicleDynamics(x=12.5)
        pending = PendingTrigger(ms(100), stored, TriggerDecision.CONDITION_1)
        state = replace(state_at(), pending=pending)

        state, cam = got_complete(state, fresh, ms(285), sender_id=4)

        assert cam.gen_timestamp == ms(285)
        assert cam.trigger_time == ms(100)
        assert cam.dynamics == fresh
        assert state.baseline_time == ms(100)
        assert state.baseline_dynamics == stored
        assert state.t_gen_cam == ms(100)
        assert state.pending is None

    def test_complete_without_pending_raises(self) -> None:
        """
        Test that a wakeup without a trigger is a runtime error.

        :return: None
        """
        with pytest.raises(SimulationError, match="without a pending"):
            got_complete(state_at(), ORIGIN, ms(285))

    @pytest.mark.parametrize(
        ("new_t_go", "now", "expected"),
        [(ms(500), ms(200), ms(485)), (ms(210), ms(200), ms(200))],
    )
    def test_rearm_wakeup_time(
        self, new_t_go: int, now: int, expected: int
    ) -> None:
        """
        Test that re-arming never moves the wakeup into the past.

        :param new_t_go: Announced opening
        :param now: Current time
        :param expected: Wakeup instant
        :return: None
        """
        assert rearm_wakeup_time(new_t_go, ms(15), now) == expected


class TestCaService:
    """Test the event-driven CA service on one immobile vehicle."""

    def build(
        self,
        engine: Simulator,
        mode: Mode,
        fixed_interval: Duration | None,
        first_opening: SimTime,
        saturate: bool,
        epsilon: Duration = ms(15),
    ) -> tuple[list[CamMessage], list[tuple[QueuedMessage, SimTime]]]:
        """Wire one vehicle with a 200 ms gate and return its logs."""
        cams: list[CamMessage] = []
        sent: list[tuple[QueuedMessage, SimTime]] = []
        sources: list[SaturatingSource] = []

        def transmit(message: QueuedMessage, t_tx: int, t_dcc: int) -> None:
            sent.append((message, t_tx))
            for source in sources:
                source.on_transmitted(message, t_tx)

        gate = DccGate(
            engine,
            ConstantRateController(ms(200)),
            transmit,
            first_opening=first_opening,
        )

        def sink(cam: CamMessage, decision: TriggerDecision) -> None:
            cams.append(cam)
            gate.enqueue(QueuedMessage.wrap(cam, engine.now))

        CaService(
            0,
            engine,
            gate,
            StaticScenario(1),
            CaConfig(
                mode=mode, fixed_interval=fixed_interval, epsilon=epsilon
            ),
            sink,
        )
        if saturate:
            sources.append(
                SaturatingSource(engine, gate, 0, TrafficClass.TC3, 332)
            )
            sources[0].start()
        return cams, sent

    def test_etsi_fixed_interval(self, engine: Simulator) -> None:
        """
        Test ETSI generation every 300 ms on an idle gate.

        :param engine: Empty scheduler
        :return: None
        """
        cams, sent = self.build(engine, Mode.ETSI, ms(300), 0, False)

        engine.run_until(seconds(1))

        assert [cam.gen_timestamp for cam in cams] == [
            ms(300),
            ms(600),
            ms(900),
        ]
        assert [t_tx for _, t_tx in sent] == [ms(300), ms(600), ms(900)]

    def test_etsi_condition_2_only(self, engine: Simulator) -> None:
        """
        Test that an immobile vehicle falls back to condition 2.

        :param engine: Empty scheduler
        :return: None
        """
        cams, _ = self.build(engine, Mode.ETSI, None, 0, False)

        engine.run_until(seconds(2.5))

        assert [cam.gen_timestamp for cam in cams] == [ms(1010), ms(2020)]

    def test_got_waits_for_gate(self, engine: Simulator) -> None:
        """
        Test that GoT CAMs wait exactly epsilon on a busy gate.

        :param engine: Empty scheduler
        :return: None
        """
        cams, sent = self.build(engine, Mode.GOT, ms(300), ms(50), True)

        engine.run_until(seconds(1.1))

        assert [cam.trigger_time for cam in cams] == [
            ms(300),
            ms(600),
            ms(900),
        ]
        assert [cam.gen_timestamp for cam in cams] == [
            ms(435),
            ms(635),
            ms(1035),
        ]
        cam_waits = [
            t_tx - message.enqueue_time
            for message, t_tx in sent
            if message.is_cam
        ]
        assert cam_waits == [ms(15)] * 3

    def test_got_zero_epsilon_takes_the_opening(
        self, engine: Simulator
    ) -> None:
        """
        Test that a wakeup falling on the opening still sends its CAM.

        :param engine: Empty scheduler
        :return: None
        """
        cams, sent = self.build(
            engine, Mode.GOT, ms(300), ms(50), True, epsilon=0
        )

        engine.run_until(seconds(1.1))

        assert [cam.gen_timestamp for cam in cams] == [
            ms(450),
            ms(650),
            ms(1050),
        ]
        cam_tx = [
            (t_tx, message.enqueue_time)
            for message, t_tx in sent
            if message.is_cam
        ]
        assert cam_tx == [
            (ms(450), ms(450)),
            (ms(650), ms(650)),
            (ms(1050), ms(1050)),
        ]

    def test_etsi_waits_for_gate(self, engine: Simulator) -> None:
        """
        Test that ETSI CAMs wait for the next opening.

        :param engine: Empty scheduler
        :return: None
        """
        cams, sent = self.build(engine, Mode.ETSI, ms(300), ms(50), True)

        engine.run_until(seconds(1.1))

        assert [cam.gen_timestamp for cam in cams] == [
            ms(300),
            ms(600),
            ms(900),
        ]
        cam_waits = [
            t_tx - message.enqueue_time
            for message, t_tx in sent
            if message.is_cam
        ]
        assert cam_waits == [ms(150), ms(50), ms(150)]
