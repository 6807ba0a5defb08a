"""Exceptions raised by the simulator."""

from __future__ import annotations

from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from dcc_sim.settings import Diagnostic


class SimulationError(RuntimeError):
    """A runtime invariant of the simulation was broken."""


class SchedulingError(SimulationError):
    """An event was scheduled before the current simulation time."""


class ConfigError(ValueError):
    """
    A scenario configuration cannot be run.

    Attributes:
        diagnostics: The blocking diagnostics found by validation
    """

    def __init__(self, diagnostics: list[Diagnostic]) -> None:
        """
        Build the error from validation diagnostics.

        :argument diagnostics: Diagnostics with ERROR severity
        :returns: None
        """
        self.diagnostics = diagnostics
        lines = "; ".join(f"{d.field}: {d.reason}" for d in diagnostics)
        super().__init__(f"Invalid configuration. {lines}")
