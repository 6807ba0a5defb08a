"""Message definitions exchanged between the layers."""

from __future__ import annotations

from dataclasses import dataclass, field

from dcc_sim.clock import SimTime
from dcc_sim.dynamics import VehicleDynamics
from dcc_sim.traffic_class import TrafficClass

CAM_SIZE = 335
TC3_SIZE = 332


@dataclass(frozen=True, slots=True)
class CamMessage:
    """
    Cooperative Awareness Message handed from the CA service to DCC.

    Attributes:
        sender_id: Generating vehicle
        sequence: Per-sender generation counter
        gen_timestamp: Generation timestamp (t' under GoT)
        trigger_time: Trigger baseline the generation is referred to (t)
        dynamics: Dynamics carried in the message (D' under GoT)
        size: Bytes on air, certificates included
        traffic_class: Always TC2
    """

    sender_id: int
    sequence: int
    gen_timestamp: SimTime
    trigger_time: SimTime
    dynamics: VehicleDynamics = field(default_factory=VehicleDynamics)
    size: int = CAM_SIZE
    traffic_class: TrafficClass = TrafficClass.TC2

    def __post_init__(self) -> None:
        """
        Reject CAMs outside TC2.

        :returns: None
        :raises ValueError: If traffic_class is not TC2
        """
        if self.traffic_class is not TrafficClass.TC2:
            raise ValueError(
                f"CAMs use TC2, got {self.traffic_class.name}"
            )


@dataclass(frozen=True, slots=True)
class GenericMessage:
    """
    Any non-CAM message (DENM-like TC0/TC1 bursts, TC3 data).

    Attributes:
        sender_id: Generating vehicle
        sequence: Per-sender counter for this source
        created_at: Creation time
        traffic_class: DCC traffic class
        size: Bytes on air
    """

    sender_id: int
    sequence: int
    created_at: SimTime
    traffic_class: TrafficClass = TrafficClass.TC3
    size: int = TC3_SIZE


Message = CamMessage | GenericMessage


@dataclass(frozen=True, slots=True)
class QueuedMessage:
    """
    A message sitting in one of the DCC queues.

    Attributes:
        payload: The queued message
        enqueue_time: Time it reached the access layer
        traffic_class: Queue it was placed in
        size: Bytes on air
    """

    payload: Message
    enqueue_time: SimTime
    traffic_class: TrafficClass
    size: int

    @classmethod
    def wrap(cls, payload: Message, now: SimTime) -> QueuedMessage:
        """
        Build the queue entry for a message arriving now.

        :argument payload: CAM or generic message
        :argument now: Enqueue time
        :returns: The queue entry
        """
        return cls(payload, now, payload.traffic_class, payload.size)

    @property
    def is_cam(self) -> bool:
        """True if the payload is a CAM."""
        return isinstance(self.payload, CamMessage)

    @property
    def gen_timestamp(self) -> SimTime:
        """Generation time of the payload."""
        if isinstance(self.payload, CamMessage):
            return self.payload.gen_timestamp
        return self.payload.created_at
