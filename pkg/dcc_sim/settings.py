"""Configuration management for simulation scenarios."""

from __future__ import annotations

import copy
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import Any

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import tomli_w

from dcc_sim.ca_service import CaConfig, Mode
from dcc_sim.channel import ChannelConfig
from dcc_sim.clock import ms, seconds
from dcc_sim.dcc import RATE_CONTROLLERS, RateController
from dcc_sim.dynamics import TriggerThresholds
from dcc_sim.exceptions import ConfigError
from dcc_sim.traffic_class import TrafficClass

RUN_MODES = ("etsi", "got", "paired")
SCENARIO_KINDS = ("static", "ring")
TRIGGERS = ("fixed", "dynamics")
TC3_LOADS = ("saturating", "rate", "off")

CONFIG_DEFAULTS: dict[str, dict[str, Any]] = {
    "default": {
        "run": {
            "seed": 1,
            "duration_s": 300.0,
            "mode": "paired",
            "run_id": "run",
            "output_dir": "results",
            "trace": False,
            "parallel": False,
        },
        "scenario": {
            "kind": "static",
            "n_vehicles": 300,
            "spacing_m": 200.0,
            "circumference_m": 7750.0,
            "lanes": 8,
            "density": 10.0,
            "mean_speed": 14.27,
            "speed_jitter": 1.0,
            "straight_fraction": 0.85,
            "lane_width_m": 3.5,
            "randomize_phases": True,
        },
        "ca": {
            "trigger": "fixed",
            "trigger_interval_ms": 300.0,
            "eval_step_ms": 10.0,
            "epsilon_ms": 15.0,
            "position_delta_m": 4.0,
            "speed_delta": 0.5,
            "heading_delta_deg": 4.0,
            "cam_size": 335,
        },
        "dcc": {
            "rate_controller": "constant",
            "t_dcc_ms": 200.0,
            "schedule": [[0.0, 200.0]],
            "base_ms": 100.0,
            "gain": 4.0,
            "smoothing": 0.5,
            "cbr_window_ms": 100.0,
            "replace_cam": True,
            "queue_capacity": 100,
        },
        "traffic": {
            "tc3_load": "saturating",
            "tc3_rate_hz": 10.0,
            "tc3_size": 332,
            "bursts": [],
            "burst_size": 300,
        },
        "channel": {
            "range_m": 750.0,
            "mac_phy_delay_ms": 1.0,
            "loss_probability": 0.0,
            "data_rate_bps": 6_000_000.0,
        },
        "metrics": {
            # 0 keeps every pair in range
            "distance_filter_m": 0.0,
        },
    },
    "static": {},
    "ring": {
        "run": {"duration_s": 30.0},
        "ca": {"trigger": "dynamics"},
        "dcc": {"rate_controller": "load_proportional"},
        "metrics": {"distance_filter_m": 400.0},
    },
}


class Severity(Enum):
    """How a diagnostic affects a run."""

    ERROR = "error"
    WARNING = "warning"


@dataclass(frozen=True, slots=True)
class Diagnostic:
    """
    A finding of configuration validation.

    Attributes:
        field: Dotted path of the offending key
        reason: Human-readable explanation
        severity: ERROR blocks the run, WARNING does not
    """

    field: str
    reason: str
    severity: Severity = Severity.ERROR

    def __str__(self) -> str:
        """Render as ``severity: field: reason``."""
        return f"{self.severity.value}: {self.field}: {self.reason}"


def merge(base: dict[str, Any], layer: dict[str, Any]) -> dict[str, Any]:
    """
    Recursively overlay ``layer`` on a copy of ``base``.

    :argument base: Lower-priority configuration
    :argument layer: Higher-priority configuration
    :returns: A new merged dictionary; inputs are left untouched
    """
    merged = copy.deepcopy(base)
    for key, value in layer.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def get_config(user_config: dict[str, Any] | None = None) -> dict[str, Any]:
    """
    Get the layered defaults for the simulator.

    Combine default layers with user-provided layers.

    :argument user_config: Extra or replacement layers keyed by name
    :returns: Dictionary containing every configuration layer
    """
    config = copy.deepcopy(CONFIG_DEFAULTS)
    config.update(copy.deepcopy(user_config or {}))
    return config


def _import_from_string(import_string: str) -> type:
    """
    Import a class from a string path.

    :argument import_string: String like 'module.path.ClassName'
    :returns: The imported class
    """
    module_path, class_name = import_string.rsplit(".", 1)
    module = __import__(module_path, fromlist=[class_name])
    return getattr(module, class_name)


class ScenarioConfig:
    """
    Configuration of one scenario.

    Resolve configuration based on hierarchy:
    overrides > file > scenario-kind defaults > defaults
    """

    config: dict[str, Any]

    def __init__(
        self,
        file_config: dict[str, Any] | None = None,
        overrides: dict[str, Any] | None = None,
        layers: dict[str, Any] | None = None,
    ) -> None:
        """
        Resolve the configuration.

        :argument file_config: Values read from a scenario file
        :argument overrides: Values given on the command line
        :argument layers: Default layers, get_config() when omitted
        :returns: None
        """
        layers = layers if layers is not None else get_config()
        file_config = file_config or {}
        overrides = overrides or {}
        self.config = merge(layers["default"], {})
        kind = self._kind(file_config, overrides)
        if isinstance(layers.get(kind), dict):
            self.config = merge(self.config, layers[kind])
        self.config = merge(self.config, file_config)
        self.config = merge(self.config, overrides)

    @classmethod
    def from_file(
        cls, path: Path | str, overrides: dict[str, Any] | None = None
    ) -> ScenarioConfig:
        """
        Load a TOML scenario file.

        :argument path: Scenario file
        :argument overrides: Values given on the command line
        :returns: The resolved configuration
        :raises ConfigError: If the file is not valid TOML
        """
        path = Path(path)
        try:
            file_config = tomllib.loads(path.read_text(encoding="utf-8"))
        except OSError as error:
            raise ConfigError(
                [Diagnostic(str(path), f"cannot be read ({error.strerror})")]
            ) from error
        except tomllib.TOMLDecodeError as error:
            raise ConfigError(
                [Diagnostic(str(path), f"not valid TOML ({error})")]
            ) from error
        return cls(file_config, overrides)

    def get(self, value: str) -> Any:
        """
        Get a value from config by dotted path.

        :argument value: Path like 'dcc.t_dcc_ms'
        :returns: The value for the specified configuration key
        :raises KeyError: If the key is not found in the configuration
        """
        node: Any = self.config
        try:
            for part in value.split("."):
                node = node[part]
        except (KeyError, TypeError) as error:
            raise KeyError(f"Invalid value provided. {error}") from None
        return node

    def to_toml(self) -> str:
        """Serialize every resolved key, defaults included."""
        return tomli_w.dumps(self.config)

    @property
    def mode(self) -> str:
        """Run mode: etsi, got or paired."""
        return self.get("run.mode")

    @property
    def modes(self) -> list[Mode]:
        """CA modes executed by this configuration, ETSI first."""
        if self.mode == "paired":
            return [Mode.ETSI, Mode.GOT]
        return [Mode(self.mode)]

    @property
    def duration(self) -> int:
        """Run horizon in microseconds."""
        return seconds(self.get("run.duration_s"))

    @cached_property
    def rate_controller_class(self) -> type[RateController]:
        """
        Lazily resolve the rate_controller name or import string.

        :returns: The resolved controller class
        """
        reference = self.get("dcc.rate_controller")
        if reference in RATE_CONTROLLERS:
            return RATE_CONTROLLERS[reference]
        try:
            resolved = _import_from_string(reference)
        except (ImportError, AttributeError, ValueError) as e:
            raise ValueError(
                f"Invalid rate controller reference '{reference}'. "
                f"Expected one of {sorted(RATE_CONTROLLERS)} or "
                f"'module.path.ClassName'"
            ) from e
        if not (
            isinstance(resolved, type) and issubclass(resolved, RateController)
        ):
            raise ValueError(f"'{reference}' is not a RateController")
        return resolved

    def build_rate_controller(self) -> RateController:
        """
        Create a fresh controller for one vehicle.

        :returns: The configured rate controller
        """
        controller_class = self.rate_controller_class
        name = self.get("dcc.rate_controller")
        if name == "constant":
            return controller_class(ms(self.get("dcc.t_dcc_ms")))
        if name == "scripted":
            return controller_class(
                [
                    (ms(time), ms(value))
                    for time, value in self.get("dcc.schedule")
                ]
            )
        if name == "load_proportional":
            return controller_class(
                ms(self.get("dcc.base_ms")),
                self.get("dcc.gain"),
                self.get("dcc.smoothing"),
            )
        return controller_class()

    def ca_config(self, mode: Mode) -> CaConfig:
        """
        Build the CA service settings for one mode.

        :argument mode: ETSI or GoT
        :returns: The CA settings
        """
        fixed = None
        if self.get("ca.trigger") == "fixed":
            fixed = ms(self.get("ca.trigger_interval_ms"))
        return CaConfig(
            mode=mode,
            thresholds=TriggerThresholds(
                self.get("ca.position_delta_m"),
                self.get("ca.speed_delta"),
                self.get("ca.heading_delta_deg"),
            ),
            fixed_interval=fixed,
            eval_step=ms(self.get("ca.eval_step_ms")),
            epsilon=ms(self.get("ca.epsilon_ms")),
            cam_size=self.get("ca.cam_size"),
        )

    def channel_config(self) -> ChannelConfig:
        """Build the radio settings."""
        return ChannelConfig(
            range=self.get("channel.range_m"),
            mac_phy_delay=ms(self.get("channel.mac_phy_delay_ms")),
            loss_probability=self.get("channel.loss_probability"),
            data_rate=self.get("channel.data_rate_bps"),
        )

    @property
    def distance_filter(self) -> float | None:
        """Measurement distance filter in meters, None when disabled."""
        limit = self.get("metrics.distance_filter_m")
        return float(limit) if limit > 0 else None

    @property
    def bursts(self) -> list[tuple[int, int, TrafficClass]]:
        """Scripted priority bursts as (time, count, class)."""
        return [
            (ms(time), int(count), TrafficClass(int(tc)))
            for time, count, tc in self.get("traffic.bursts")
        ]

    def validate(self) -> list[Diagnostic]:
        """
        Check every key of the resolved configuration.

        :returns: Diagnostics; the run may proceed iff none is an ERROR
        """
        return _Validator(self).run()

    def raise_for_errors(self) -> list[Diagnostic]:
        """
        Validate and reject blocking problems.

        :returns: The non-blocking diagnostics
        :raises ConfigError: If any diagnostic is an ERROR
        """
        diagnostics = self.validate()
        errors = [d for d in diagnostics if d.severity is Severity.ERROR]
        if errors:
            raise ConfigError(errors)
        return diagnostics

    @staticmethod
    def _kind(file_config: dict[str, Any], overrides: dict[str, Any]) -> str:
        for layer in (overrides, file_config):
            scenario = layer.get("scenario")
            if isinstance(scenario, dict) and "kind" in scenario:
                return scenario["kind"]
        return CONFIG_DEFAULTS["default"]["scenario"]["kind"]


def _is_number(value: Any) -> bool:
    return isinstance(value, int | float) and not isinstance(value, bool)


class _Validator:
    """Collects diagnostics for one configuration."""

    def __init__(self, scenario_config: ScenarioConfig) -> None:
        self.scenario_config = scenario_config
        self.config = scenario_config.config
        self.diagnostics: list[Diagnostic] = []

    def run(self) -> list[Diagnostic]:
        self._check_keys()
        if any(d.severity is Severity.ERROR for d in self.diagnostics):
            return self.diagnostics
        self._check_run()
        self._check_scenario()
        self._check_ca()
        self._check_dcc()
        self._check_traffic()
        self._check_channel()
        self._number("metrics.distance_filter_m", minimum=0.0)
        return self.diagnostics

    def error(self, path: str, reason: str) -> None:
        self.diagnostics.append(Diagnostic(path, reason))

    def warn(self, path: str, reason: str) -> None:
        self.diagnostics.append(Diagnostic(path, reason, Severity.WARNING))

    def _check_keys(self) -> None:
        reference = CONFIG_DEFAULTS["default"]
        for section, values in self.config.items():
            if section not in reference:
                self.error(section, "unknown section")
            elif not isinstance(values, dict):
                self.error(section, "must be a table")
            else:
                for key in values:
                    if key not in reference[section]:
                        self.error(f"{section}.{key}", "unknown key")

    def _number(
        self,
        path: str,
        minimum: float | None = None,
        maximum: float | None = None,
        exclusive: bool = False,
        integer: bool = False,
    ) -> float | None:
        value = self.scenario_config.get(path)
        if not _is_number(value) or (integer and not isinstance(value, int)):
            kind = "an integer" if integer else "a number"
            self.error(path, f"must be {kind}, got {value!r}")
            return None
        if minimum is not None and (
            value <= minimum if exclusive else value < minimum
        ):
            bound = ">" if exclusive else ">="
            self.error(path, f"must be {bound} {minimum}, got {value}")
            return None
        if maximum is not None and value > maximum:
            self.error(path, f"must be <= {maximum}, got {value}")
            return None
        return value

    def _choice(self, path: str, choices: tuple[str, ...]) -> str | None:
        value = self.scenario_config.get(path)
        if value not in choices:
            self.error(path, f"must be one of {list(choices)}, got {value!r}")
            return None
        return value

    def _flag(self, path: str) -> None:
        if not isinstance(self.scenario_config.get(path), bool):
            self.error(path, "must be true or false")

    def _check_run(self) -> None:
        self._number("run.seed", minimum=0, integer=True)
        self._number("run.duration_s", minimum=0.0, exclusive=True)
        self._choice("run.mode", RUN_MODES)
        for path in ("run.run_id", "run.output_dir"):
            value = self.scenario_config.get(path)
            if not isinstance(value, str) or not value:
                self.error(path, "must be a non-empty string")
        self._flag("run.trace")
        self._flag("run.parallel")

    def _check_scenario(self) -> None:
        kind = self._choice("scenario.kind", SCENARIO_KINDS)
        self._number("scenario.n_vehicles", minimum=1, integer=True)
        self._number("scenario.spacing_m", minimum=0.0, exclusive=True)
        circumference = self._number(
            "scenario.circumference_m", minimum=0.0, exclusive=True
        )
        lanes = self._number("scenario.lanes", minimum=2, integer=True)
        if lanes is not None and lanes % 2:
            self.error("scenario.lanes", f"must be even, got {lanes}")
        density = self._number("scenario.density", minimum=0.0, exclusive=True)
        if (
            kind == "ring"
            and circumference is not None
            and lanes is not None
            and density is not None
            and round(density * circumference / 1000 * lanes) < 1
        ):
            self.error(
                "scenario.density",
                f"places no vehicle on {lanes} lanes of {circumference} m",
            )
        self._number("scenario.mean_speed", minimum=0.0)
        self._number("scenario.speed_jitter", minimum=0.0)
        fraction = self._number("scenario.straight_fraction", minimum=0.0)
        if fraction is not None and fraction >= 1:
            self.error("scenario.straight_fraction", "must be < 1")
        self._number("scenario.lane_width_m", minimum=0.0, exclusive=True)
        self._flag("scenario.randomize_phases")

    def _check_ca(self) -> None:
        self._choice("ca.trigger", TRIGGERS)
        self._number("ca.trigger_interval_ms", minimum=0.0, exclusive=True)
        self._number("ca.eval_step_ms", minimum=0.001)
        epsilon = self._number("ca.epsilon_ms", minimum=0.0)
        if epsilon == 0:
            self.warn(
                "ca.epsilon_ms",
                "0 leaves no time to build the CAM before the gate opens",
            )
        for path in (
            "ca.position_delta_m",
            "ca.speed_delta",
            "ca.heading_delta_deg",
        ):
            self._number(path, minimum=0.0, exclusive=True)
        self._number("ca.cam_size", minimum=1, integer=True)

    def _gate_interval(self, path: str) -> float | None:
        value = self._number(path)
        if value is not None and not 25 <= value <= 1000:
            self.error(
                path,
                f"must lie within the 25..1000 ms gate range, got {value}",
            )
            return None
        return value

    def _check_dcc(self) -> None:
        try:
            self.scenario_config.rate_controller_class
        except ValueError as error:
            self.error("dcc.rate_controller", str(error))
        t_dcc = self._gate_interval("dcc.t_dcc_ms")
        epsilon = self.scenario_config.get("ca.epsilon_ms")
        if (
            self.scenario_config.get("dcc.rate_controller") == "constant"
            and t_dcc is not None
            and _is_number(epsilon)
            and epsilon >= t_dcc
        ):
            self.warn(
                "ca.epsilon_ms",
                "not below t_dcc: GoT always generates at the trigger",
            )
        self._check_schedule()
        self._gate_interval("dcc.base_ms")
        self._number("dcc.gain", minimum=0.0)
        smoothing = self._number("dcc.smoothing", minimum=0.0)
        if smoothing is not None and smoothing >= 1:
            self.error("dcc.smoothing", "must be < 1")
        self._number(
            "dcc.cbr_window_ms", minimum=0.0, maximum=1000.0, exclusive=True
        )
        self._flag("dcc.replace_cam")
        self._number("dcc.queue_capacity", minimum=1, integer=True)

    def _check_schedule(self) -> None:
        schedule = self.scenario_config.get("dcc.schedule")
        if not isinstance(schedule, list) or not schedule:
            self.error("dcc.schedule", "must be a non-empty list")
            return
        for index, entry in enumerate(schedule):
            path = f"dcc.schedule[{index}]"
            if (
                not isinstance(entry, list)
                or len(entry) != 2
                or not all(_is_number(item) for item in entry)
            ):
                self.error(path, "must be [time_ms, t_dcc_ms]")
            elif entry[0] < 0:
                self.error(path, f"time must be >= 0, got {entry[0]}")
            elif not 25 <= entry[1] <= 1000:
                self.error(
                    path, f"t_dcc must lie within 25..1000 ms, got {entry[1]}"
                )

    def _check_traffic(self) -> None:
        load = self._choice("traffic.tc3_load", TC3_LOADS)
        if load == "rate":
            self._number("traffic.tc3_rate_hz", minimum=0.0, exclusive=True)
        self._number("traffic.tc3_size", minimum=1, integer=True)
        self._number("traffic.burst_size", minimum=1, integer=True)
        bursts = self.scenario_config.get("traffic.bursts")
        if not isinstance(bursts, list):
            self.error("traffic.bursts", "must be a list")
            return
        for index, entry in enumerate(bursts):
            path = f"traffic.bursts[{index}]"
            if (
                not isinstance(entry, list)
                or len(entry) != 3
                or not all(_is_number(item) for item in entry)
            ):
                self.error(path, "must be [time_ms, count, tc]")
            elif entry[0] < 0 or entry[1] < 1:
                self.error(path, "needs time >= 0 and count >= 1")
            elif entry[2] not in (0, 1, 3):
                self.error(path, f"tc must be 0, 1 or 3, got {entry[2]}")

    def _check_channel(self) -> None:
        self._number("channel.range_m", minimum=0.0, exclusive=True)
        self._number("channel.mac_phy_delay_ms", minimum=0.0)
        self._number("channel.loss_probability", minimum=0.0, maximum=1.0)
        self._number("channel.data_rate_bps", minimum=0.0, exclusive=True)
