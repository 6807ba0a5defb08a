"""
Cooperative Awareness service: ETSI CAM trigger rules and Generate-on-Time.

The pure functions operate on an immutable ``CaState``; ``CaService``
drives them for one vehicle from the event queue.
"""

from __future__ import annotations

import logging
from collections.abc import Callable
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Protocol

from dcc_sim.clock import Duration, SimTime, clamp, ms
from dcc_sim.dcc import T_DCC_MAX, T_DCC_MIN, DccGate
from dcc_sim.dynamics import TriggerThresholds, VehicleDynamics
from dcc_sim.engine import Event, EventKind, Simulator
from dcc_sim.exceptions import SimulationError
from dcc_sim.message_definitions import CAM_SIZE, CamMessage
from dcc_sim.traffic_class import TrafficClass

logger = logging.getLogger(__name__)

T_GEN_CAM_MIN: Duration = ms(100)
T_GEN_CAM_MAX: Duration = ms(1000)
CONDITION_2_LIMIT = 3
DEFAULT_EPSILON: Duration = ms(15)


class Mode(Enum):
    """CAM generation algorithm."""

    ETSI = "etsi"
    GOT = "got"


class TriggerDecision(Enum):
    """Outcome of a trigger evaluation."""

    NONE = "none"
    CONDITION_1 = "condition1"
    CONDITION_2 = "condition2"


@dataclass(frozen=True, slots=True)
class PendingTrigger:
    """
    A GoT trigger waiting for the gate to approach.

    Attributes:
        stored_time: Trigger instant ``t``
        stored_dynamics: Dynamics ``D`` at the trigger
        decision: Condition that fired
        wakeup: Handle of the scheduled wakeup, if any
    """

    stored_time: SimTime
    stored_dynamics: VehicleDynamics
    decision: TriggerDecision
    wakeup: Event | None = None


@dataclass(frozen=True, slots=True)
class CaState:
    """
    Per-vehicle CAM rule state.

    Attributes:
        baseline_time: Origin of T_Elapsed (the stored ``t`` under GoT)
        baseline_dynamics: Dynamics compared against for condition 1
        t_gen_cam: Upper bound of the generation interval
        t_gen_cam_dcc: DCC-imposed lower bound of the generation interval
        cond2_streak: Consecutive condition-2 generations, 0..3
        pending: Deferred GoT trigger, never set in ETSI mode
    """

    baseline_time: SimTime
    baseline_dynamics: VehicleDynamics = field(
        default_factory=VehicleDynamics
    )
    t_gen_cam: Duration = T_GEN_CAM_MAX
    t_gen_cam_dcc: Duration = T_GEN_CAM_MIN
    cond2_streak: int = 0
    pending: PendingTrigger | None = None

    def __post_init__(self) -> None:
        """
        Check the interval bounds.

        :returns: None
        :raises ValueError: If an interval or the streak is out of range
        """
        for name in ("t_gen_cam", "t_gen_cam_dcc"):
            value = getattr(self, name)
            if not T_GEN_CAM_MIN <= value <= T_GEN_CAM_MAX:
                raise ValueError(
                    f"{name} must lie within [{T_GEN_CAM_MIN}, "
                    f"{T_GEN_CAM_MAX}] us, got {value} us"
                )
        if not 0 <= self.cond2_streak <= CONDITION_2_LIMIT:
            raise ValueError(
                f"cond2_streak must lie within 0..{CONDITION_2_LIMIT}, "
                f"got {self.cond2_streak}"
            )


@dataclass(frozen=True, slots=True)
class GenerateNow:
    """GoT lets the CAM be generated at the trigger instant."""


@dataclass(frozen=True, slots=True)
class Defer:
    """
    GoT postpones the generation.

    Attributes:
        wakeup_at: Instant ``t_go - epsilon`` to complete the generation
        pending: Trigger to store until then
    """

    wakeup_at: SimTime
    pending: PendingTrigger


GotAction = GenerateNow | Defer


def evaluate_trigger(
    state: CaState,
    current: VehicleDynamics,
    now: SimTime,
    thresholds: TriggerThresholds,
    fixed_interval: Duration | None = None,
) -> TriggerDecision:
    """
    Apply the CAM generation conditions.

    A fixed-interval stimulus counts as a condition-1 trigger once
    T_Elapsed reaches it.

    :argument state: CA state of the vehicle
    :argument current: Dynamics sampled now
    :argument now: Evaluation instant, not before the baseline
    :argument thresholds: Condition-1 dynamics thresholds
    :argument fixed_interval: Optional scripted trigger interval
    :returns: The condition that fires, or NONE
    """
    elapsed = now - state.baseline_time
    if elapsed < state.t_gen_cam_dcc:
        return TriggerDecision.NONE
    if thresholds.exceeded(state.baseline_dynamics, current) or (
        fixed_interval is not None and elapsed >= fixed_interval
    ):
        return TriggerDecision.CONDITION_1
    if elapsed > state.t_gen_cam:
        return TriggerDecision.CONDITION_2
    return TriggerDecision.NONE


def update_after_generation(
    state: CaState,
    decision: TriggerDecision,
    trigger_time: SimTime,
    trigger_dynamics: VehicleDynamics,
) -> CaState:
    """
    Move the baseline and adapt T_GenCam after a generation.

    :argument state: CA state before the generation
    :argument decision: Condition that fired, not NONE
    :argument trigger_time: New baseline time
    :argument trigger_dynamics: New baseline dynamics
    :returns: Updated state
    :raises ValueError: If decision is NONE
    """
    if decision is TriggerDecision.NONE:
        raise ValueError("Cannot update after a NONE trigger decision")
    if decision is TriggerDecision.CONDITION_1:
        elapsed = trigger_time - state.baseline_time
        t_gen_cam = clamp(elapsed, T_GEN_CAM_MIN, T_GEN_CAM_MAX)
        streak = 0
    else:
        streak = min(state.cond2_streak + 1, CONDITION_2_LIMIT)
        t_gen_cam = (
            T_GEN_CAM_MAX if streak == CONDITION_2_LIMIT else state.t_gen_cam
        )
    return replace(
        state,
        baseline_time=trigger_time,
        baseline_dynamics=trigger_dynamics,
        t_gen_cam=t_gen_cam,
        cond2_streak=streak,
    )


def set_dcc_feedback(state: CaState, t_dcc: Duration) -> CaState:
    """
    Derive T_GenCam_DCC from the gate interval.

    :argument state: CA state
    :argument t_dcc: Gate interval reported by the Management Entity
    :returns: State with ``t_gen_cam_dcc = clamp(t_dcc, 100, 1000 ms)``
    :raises ValueError: If t_dcc lies outside [25 ms, 1000 ms]
    """
    if not T_DCC_MIN <= t_dcc <= T_DCC_MAX:
        raise ValueError(
            f"t_dcc must lie within [{T_DCC_MIN}, {T_DCC_MAX}] us, "
            f"got {t_dcc} us"
        )
    return replace(
        state, t_gen_cam_dcc=clamp(t_dcc, T_GEN_CAM_MIN, T_GEN_CAM_MAX)
    )


def generate_cam_etsi(
    state: CaState,
    decision: TriggerDecision,
    current: VehicleDynamics,
    now: SimTime,
    sender_id: int = 0,
    sequence: int = 0,
    size: int = CAM_SIZE,
) -> tuple[CaState, CamMessage]:
    """
    Generate a CAM at the trigger instant.

    :argument state: CA state
    :argument decision: Condition that fired
    :argument current: Dynamics sampled now
    :argument now: Trigger instant
    :argument sender_id: Generating vehicle
    :argument sequence: Generation counter
    :argument size: CAM size in bytes
    :returns: Updated state and the CAM
    """
    cam = CamMessage(sender_id, sequence, now, now, current, size)
    return update_after_generation(state, decision, now, current), cam


def got_on_trigger(
    state: CaState,
    decision: TriggerDecision,
    current: VehicleDynamics,
    now: SimTime,
    t_go: SimTime,
    epsilon: Duration = DEFAULT_EPSILON,
) -> GotAction:
    """
    Decide whether a GoT trigger generates now or waits for the gate.

    :argument state: CA state, without a pending trigger
    :argument decision: Condition that fired
    :argument current: Dynamics ``D`` sampled now
    :argument now: Trigger instant ``t``
    :argument t_go: Next gate opening available to the CAM
    :argument epsilon: CAM construction margin
    :returns: GenerateNow, or Defer until ``t_go - epsilon``
    :raises SimulationError: If a trigger is already pending
    """
    if state.pending is not None:
        raise SimulationError("A GoT trigger is already pending")
    if (t_go - now) - epsilon <= 0:
        return GenerateNow()
    return Defer(t_go - epsilon, PendingTrigger(now, current, decision))


def got_complete(
    state: CaState,
    fresh: VehicleDynamics,
    t_prime: SimTime,
    sender_id: int = 0,
    sequence: int = 0,
    size: int = CAM_SIZE,
) -> tuple[CaState, CamMessage]:
    """
    Complete a deferred generation with fresh dynamics.

    The CAM carries ``t'`` and ``D'``; the baseline moves to the stored
    ``t`` and ``D``.

    :argument state: CA state holding the pending trigger
    :argument fresh: Dynamics ``D'`` sampled at the wakeup
    :argument t_prime: Wakeup instant
    :argument sender_id: Generating vehicle
    :argument sequence: Generation counter
    :argument size: CAM size in bytes
    :returns: Updated state without pending trigger, and the CAM
    :raises SimulationError: If nothing is pending
    """
    pending = state.pending
    if pending is None:
        raise SimulationError(
            f"Vehicle {sender_id} completed a GoT generation at "
            f"{t_prime} us without a pending trigger."
        )
    cam = CamMessage(
        sender_id, sequence, t_prime, pending.stored_time, fresh, size
    )
    updated = update_after_generation(
        state, pending.decision, pending.stored_time, pending.stored_dynamics
    )
    return replace(updated, pending=None), cam


def rearm_wakeup_time(
    new_t_go: SimTime, epsilon: Duration, now: SimTime
) -> SimTime:
    """
    Recompute a GoT wakeup after the gate announced a new ``t_go``.

    :argument new_t_go: Opening the CAM will now get
    :argument epsilon: CAM construction margin
    :argument now: Current time
    :returns: ``max(now, new_t_go - epsilon)``
    """
    return max(now, new_t_go - epsilon)


class DynamicsSource(Protocol):
    """Anything answering vehicle dynamics queries."""

    is_static: bool

    def dynamics_at(self, vehicle_id: int, t: SimTime) -> VehicleDynamics:
        """Return the dynamics of ``vehicle_id`` at ``t``."""


@dataclass(frozen=True, slots=True)
class CaConfig:
    """
    CA service settings shared by every vehicle of a run.

    Attributes:
        mode: ETSI rules or Generate-on-Time
        thresholds: Condition-1 thresholds
        fixed_interval: Scripted trigger interval, None for dynamics only
        eval_step: Trigger evaluation period
        epsilon: GoT construction margin
        cam_size: CAM size in bytes
    """

    mode: Mode = Mode.ETSI
    thresholds: TriggerThresholds = field(default_factory=TriggerThresholds)
    fixed_interval: Duration | None = None
    eval_step: Duration = ms(10)
    epsilon: Duration = DEFAULT_EPSILON
    cam_size: int = CAM_SIZE


CamSink = Callable[[CamMessage, TriggerDecision], None]


class CaService:
    """
    Drives the CAM rules of one vehicle.

    Evaluations run on the grid ``activation + k * eval_step``; grid
    points that cannot trigger are skipped. The gate's Management Entity
    pushes every new ``t_go``/``t_dcc``, which updates T_GenCam_DCC and
    re-arms a pending GoT wakeup.
    """

    def __init__(
        self,
        vehicle_id: int,
        engine: Simulator,
        gate: DccGate,
        mobility: DynamicsSource,
        config: CaConfig,
        sink: CamSink,
        activation: SimTime = 0,
    ) -> None:
        """
        Activate the service and schedule its first evaluation.

        :argument vehicle_id: Owning vehicle
        :argument engine: Scheduler of the run
        :argument gate: DCC gate of the vehicle
        :argument mobility: Source of vehicle dynamics
        :argument config: CA settings
        :argument sink: Receives every generated CAM with its condition
        :argument activation: Start of the service and of its grid
        :returns: None
        """
        self.vehicle_id = vehicle_id
        self._engine = engine
        self._gate = gate
        self._mobility = mobility
        self.config = config
        self._sink = sink
        self._activation = activation
        self._sequence = 0
        self._last_eval: SimTime = activation - 1
        self._eval_event: Event | None = None
        self.state = set_dcc_feedback(
            CaState(activation, mobility.dynamics_at(vehicle_id, activation)),
            gate.t_dcc,
        )
        gate.subscribe(self._on_gate_change)
        if config.mode is Mode.GOT:
            gate.before_opening(self._complete_due)
        self._schedule_evaluation(activation)

    def got_rearm(self, new_t_go: SimTime) -> None:
        """
        Move a pending GoT wakeup to ``new_t_go - epsilon``.

        :argument new_t_go: Opening the CAM will now get
        :returns: None
        """
        pending = self.state.pending
        if pending is None:
            return
        now = self._engine.now
        wakeup_at = rearm_wakeup_time(new_t_go, self.config.epsilon, now)
        if pending.wakeup is not None:
            if pending.wakeup.fire_at == wakeup_at:
                return
            pending.wakeup.cancel()
        wakeup = self._engine.schedule(
            wakeup_at, EventKind.GOT_WAKEUP, self._wakeup, self.vehicle_id
        )
        self.state = replace(
            self.state, pending=replace(pending, wakeup=wakeup)
        )

    def _evaluate(self) -> None:
        now = self._engine.now
        self._last_eval = now
        self._eval_event = None
        current = self._mobility.dynamics_at(self.vehicle_id, now)
        decision = evaluate_trigger(
            self.state,
            current,
            now,
            self.config.thresholds,
            self.config.fixed_interval,
        )
        if decision is TriggerDecision.NONE:
            self._schedule_evaluation(now + 1)
        elif self.config.mode is Mode.ETSI:
            self._generate(decision, current, now)
        else:
            t_go = self._gate.next_gate_time_for(TrafficClass.TC2)
            action = got_on_trigger(
                self.state, decision, current, now, t_go, self.config.epsilon
            )
            if isinstance(action, Defer):
                wakeup = self._engine.schedule(
                    action.wakeup_at,
                    EventKind.GOT_WAKEUP,
                    self._wakeup,
                    self.vehicle_id,
                )
                self.state = replace(
                    self.state, pending=replace(action.pending, wakeup=wakeup)
                )
            else:
                self._generate(decision, current, now)

    def _generate(
        self,
        decision: TriggerDecision,
        current: VehicleDynamics,
        now: SimTime,
    ) -> None:
        self.state, cam = generate_cam_etsi(
            self.state,
            decision,
            current,
            now,
            self.vehicle_id,
            self._next_sequence(),
            self.config.cam_size,
        )
        self._sink(cam, decision)
        self._schedule_evaluation(now + 1)

    def _wakeup(self) -> None:
        now = self._engine.now
        pending = self.state.pending
        fresh = self._mobility.dynamics_at(self.vehicle_id, now)
        self.state, cam = got_complete(
            self.state,
            fresh,
            now,
            self.vehicle_id,
            self._next_sequence(),
            self.config.cam_size,
        )
        self._sink(cam, pending.decision)
        self._schedule_evaluation(max(now, self._last_eval + 1))

    def _complete_due(self, now: SimTime) -> None:
        # a wakeup due at this opening must queue its CAM before the dequeue
        pending = self.state.pending
        if (
            pending is not None
            and pending.wakeup is not None
            and pending.wakeup.fire_at <= now
        ):
            pending.wakeup.cancel()
            self._wakeup()

    def _on_gate_change(self, t_go: SimTime, t_dcc: Duration) -> None:
        previous = self.state.t_gen_cam_dcc
        if clamp(t_dcc, T_GEN_CAM_MIN, T_GEN_CAM_MAX) != previous:
            self.state = set_dcc_feedback(self.state, t_dcc)
        if self.state.pending is not None:
            self.got_rearm(self._gate.next_gate_time_for(TrafficClass.TC2))
        elif (
            self.state.t_gen_cam_dcc < previous
            and self._eval_event is not None
        ):
            now = self._engine.now
            candidate = self._grid_at_or_after(
                max(self._earliest_trigger(), self._last_eval + 1, now)
            )
            if candidate < self._eval_event.fire_at:
                self._eval_event.cancel()
                self._eval_event = self._engine.schedule(
                    candidate,
                    EventKind.TRIGGER_EVALUATION,
                    self._evaluate,
                    self.vehicle_id,
                )

    def _schedule_evaluation(self, not_before: SimTime) -> None:
        fire_at = self._grid_at_or_after(
            max(self._earliest_trigger(), not_before)
        )
        self._eval_event = self._engine.schedule(
            fire_at,
            EventKind.TRIGGER_EVALUATION,
            self._evaluate,
            self.vehicle_id,
        )

    def _earliest_trigger(self) -> SimTime:
        """First instant any condition can fire from the current state."""
        state = self.state
        earliest = state.baseline_time + state.t_gen_cam_dcc
        if self._mobility.is_static:
            # dynamics never change; only the timers can fire
            timers = [state.baseline_time + state.t_gen_cam + 1]
            if self.config.fixed_interval is not None:
                timers.append(state.baseline_time + self.config.fixed_interval)
            earliest = max(earliest, min(timers))
        return earliest

    def _grid_at_or_after(self, t: SimTime) -> SimTime:
        step = self.config.eval_step
        offset = max(t - self._activation, 0)
        return self._activation + -(-offset // step) * step

    def _next_sequence(self) -> int:
        self._sequence += 1
        return self._sequence
