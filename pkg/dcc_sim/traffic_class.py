"""TrafficClass Enum."""

from enum import Enum


class TrafficClass(Enum):
    """Enumeration of the DCC access-layer traffic classes.

    Lower values carry higher priority; CAMs always use TC2.

    Attributes:
        TC0: Highest priority (e.g. high-priority DENM)
        TC1: High priority
        TC2: Cooperative awareness
        TC3: Background data traffic

    """

    TC0 = 0
    TC1 = 1
    TC2 = 2
    TC3 = 3

    def outranks(self, other: "TrafficClass") -> bool:
        """
        Check whether this class is dequeued before ``other``.

        :argument other: The class to compare against
        :returns: True if this class has strictly higher priority
        """
        return self.value < other.value

    @classmethod
    def by_priority(cls) -> list["TrafficClass"]:
        """Return the classes from highest to lowest priority."""
        return sorted(cls, key=lambda tc: tc.value)
