"""Integer microsecond clock helpers."""

SimTime = int
Duration = int

MICROSECOND: Duration = 1
MILLISECOND: Duration = 1_000
SECOND: Duration = 1_000_000


def ms(value: float) -> Duration:
    """
    Convert milliseconds to simulator ticks.

    :argument value: Milliseconds, may be fractional
    :returns: Whole microseconds
    """
    return round(value * MILLISECOND)


def seconds(value: float) -> Duration:
    """
    Convert seconds to simulator ticks.

    :argument value: Seconds, may be fractional
    :returns: Whole microseconds
    """
    return round(value * SECOND)


def to_seconds(ticks: Duration) -> float:
    """Convert simulator ticks to seconds."""
    return ticks / SECOND


def clamp(value: int, lower: int, upper: int) -> int:
    """Clamp ``value`` into ``[lower, upper]``."""
    return max(lower, min(upper, value))
