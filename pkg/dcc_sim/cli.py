"""Command-line entry point for single and paired runs."""

from __future__ import annotations

import argparse
import logging
import math
import sys
from collections.abc import Iterable, Sequence
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any

from dcc_sim.ca_service import Mode
from dcc_sim.exceptions import ConfigError, SimulationError
from dcc_sim.metrics import (
    AGE_HEADER,
    GEN_HEADER,
    RX_HEADER,
    SUMMARY_HEADER,
    TX_HEADER,
    expected_queue_wait,
    measured_rates,
    min_info_age,
    position_error,
    summary_row,
    write_csv,
)
from dcc_sim.settings import ScenarioConfig
from dcc_sim.simulation import RunResult, execute_run
from dcc_sim.traffic_class import TrafficClass

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2

QUEUE_HEADER = (
    "run_id",
    "mode",
    "vehicle_id",
    "tc",
    "enqueued",
    "replaced",
    "dropped",
    "transmitted",
    "queued",
)
RATE_HEADER = (
    "run_id",
    "mode",
    "vehicle_id",
    "r_total_hz",
    "r_cam_hz",
    "r_tc3_hz",
)
HISTOGRAM_HEADER = ("run_id", "mode", "metric", "bin_start_us", "count")
COMPARISON_HEADER = (
    "run_id",
    "mode",
    "mean_e2e_us",
    "mean_age_us",
    "mean_age_time_average_us",
    "mean_ipg_us",
    "mean_t_dcc_us",
    "mean_t_q_us",
    "oracle_e2e_us",
    "oracle_age_us",
    "position_error_m",
)
DIFFERENCE_MODE = "got-etsi"


def build_parser() -> argparse.ArgumentParser:
    """Create the argument parser."""
    parser = argparse.ArgumentParser(
        prog="dcc-sim",
        description=(
            "Simulate CAM generation under DCC gating and compare ETSI "
            "rules with Generate-on-Time."
        ),
    )
    parser.add_argument(
        "--config", type=Path, help="TOML scenario file (defaults if omitted)"
    )
    parser.add_argument("--seed", type=int, help="override run.seed")
    parser.add_argument("--out", type=Path, help="override run.output_dir")
    parser.add_argument(
        "--mode",
        choices=("etsi", "got", "paired"),
        help="override run.mode",
    )
    parser.add_argument(
        "--trace",
        action="store_true",
        help="write trace_<mode>.log with every processed event",
    )
    parser.add_argument(
        "--quiet", action="store_true", help="only log warnings and errors"
    )
    return parser


def configure_logging(quiet: bool) -> None:
    """Install the root handler."""
    logging.basicConfig(
        level=logging.WARNING if quiet else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        force=True,
    )


def overrides_from(args: argparse.Namespace) -> dict[str, Any]:
    """
    Turn command-line flags into a configuration layer.

    :argument args: Parsed arguments
    :returns: Layer holding only the flags that were given
    """
    run: dict[str, Any] = {}
    if args.seed is not None:
        run["seed"] = args.seed
    if args.out is not None:
        run["output_dir"] = str(args.out)
    if args.mode is not None:
        run["mode"] = args.mode
    if args.trace:
        run["trace"] = True
    return {"run": run} if run else {}


def load_config(args: argparse.Namespace) -> ScenarioConfig:
    """
    Resolve and validate the configuration.

    :argument args: Parsed arguments
    :returns: A runnable configuration
    :raises ConfigError: If the file is unreadable or any key is invalid
    """
    overrides = overrides_from(args)
    if args.config is None:
        config = ScenarioConfig(overrides=overrides)
    else:
        config = ScenarioConfig.from_file(args.config, overrides)
    for diagnostic in config.raise_for_errors():
        logger.warning("%s", diagnostic)
    return config


def run_modes(config: ScenarioConfig, out_dir: Path) -> list[RunResult]:
    """
    Execute every mode of the configuration.

    Runs share nothing but the configuration, so they may execute in
    separate processes; results come back ETSI first.

    :argument config: Validated configuration
    :argument out_dir: Directory for event traces
    :returns: One result per mode
    """
    modes = config.modes
    tracing = config.get("run.trace")
    traces = [
        out_dir / f"trace_{mode.value}.log" if tracing else None
        for mode in modes
    ]
    if config.get("run.parallel") and len(modes) > 1:
        with ProcessPoolExecutor(max_workers=len(modes)) as pool:
            futures = [
                pool.submit(execute_run, config, mode, trace)
                for mode, trace in zip(modes, traces, strict=True)
            ]
            return [future.result() for future in futures]
    return [
        execute_run(config, mode, trace)
        for mode, trace in zip(modes, traces, strict=True)
    ]


def _fmt(value: float | None) -> str:
    if value is None:
        return ""
    return f"{value:.3f}"


def comparison_rows(results: Sequence[RunResult]) -> list[tuple[Any, ...]]:
    """
    Build the mode comparison with the analytic oracles.

    When both modes ran, a final row holds the GoT minus ETSI
    differences of the delay and age means.

    :argument results: Run results, ETSI first
    :returns: Rows matching COMPARISON_HEADER
    """
    rows: list[tuple[Any, ...]] = []
    means: dict[Mode, dict[str, float]] = {}
    for result in results:
        delay = result.mac_phy_delay
        mean = {
            metric: result.mean(metric)
            for metric in (
                "e2e",
                "age",
                "age_time_average",
                "ipg",
                "t_dcc",
                "queue_wait",
                "t_cam",
            )
        }
        means[result.mode] = mean
        rows.append(
            (
                result.run_id,
                result.mode.value,
                _fmt(mean["e2e"]),
                _fmt(mean["age"]),
                _fmt(mean["age_time_average"]),
                _fmt(mean["ipg"]),
                _fmt(mean["t_dcc"]),
                _fmt(mean["queue_wait"]),
                _fmt(_oracle_e2e(mean["t_dcc"], delay)),
                _fmt(_oracle_age(mean["queue_wait"], mean["t_cam"], delay)),
                _fmt(
                    None
                    if math.isnan(mean["e2e"])
                    else position_error(mean["e2e"], result.mean_speed)
                ),
            )
        )
    if Mode.ETSI in means and Mode.GOT in means:
        etsi, got = means[Mode.ETSI], means[Mode.GOT]
        rows.append(
            (
                results[0].run_id,
                DIFFERENCE_MODE,
                _fmt(got["e2e"] - etsi["e2e"]),
                _fmt(got["age"] - etsi["age"]),
                _fmt(got["age_time_average"] - etsi["age_time_average"]),
                _fmt(got["ipg"] - etsi["ipg"]),
                "",
                _fmt(got["queue_wait"] - etsi["queue_wait"]),
                "",
                "",
                "",
            )
        )
    return rows


def _oracle_e2e(mean_t_dcc: float, delay: int) -> float | None:
    if math.isnan(mean_t_dcc):
        return None
    return expected_queue_wait(mean_t_dcc) + delay


def _oracle_age(
    mean_t_q: float, mean_t_cam: float, delay: int
) -> float | None:
    if math.isnan(mean_t_q) or math.isnan(mean_t_cam):
        return None
    return min_info_age(mean_t_q, mean_t_cam) + delay


def write_results(results: Sequence[RunResult], out_dir: Path) -> None:
    """
    Write every CSV of the runs, ETSI rows first.

    :argument results: Run results
    :argument out_dir: Existing output directory
    :returns: None
    """
    write_csv(out_dir / "tx.csv", TX_HEADER, _tx_rows(results))
    write_csv(out_dir / "rx.csv", RX_HEADER, _rx_rows(results))
    write_csv(out_dir / "age.csv", AGE_HEADER, _age_rows(results))
    write_csv(out_dir / "gen.csv", GEN_HEADER, _gen_rows(results))
    write_csv(out_dir / "queues.csv", QUEUE_HEADER, _queue_rows(results))
    write_csv(out_dir / "rates.csv", RATE_HEADER, _rate_rows(results))
    summaries = [(result, result.summaries()) for result in results]
    write_csv(
        out_dir / "summary.csv",
        SUMMARY_HEADER,
        (
            summary_row(result.run_id, result.mode.value, metric, stats)
            for result, by_metric in summaries
            for metric, stats in by_metric.items()
        ),
    )
    write_csv(
        out_dir / "histograms.csv",
        HISTOGRAM_HEADER,
        (
            (result.run_id, result.mode.value, metric, start, count)
            for result, by_metric in summaries
            for metric, stats in by_metric.items()
            for start, count in stats.histogram.items()
        ),
    )
    write_csv(
        out_dir / "comparison.csv",
        COMPARISON_HEADER,
        comparison_rows(results),
    )


def _tx_rows(results: Iterable[RunResult]) -> Iterable[tuple[Any, ...]]:
    for result in results:
        for record in result.metrics.tx:
            yield (
                result.run_id,
                result.mode.value,
                record.sender_id,
                record.traffic_class.value,
                record.gen_timestamp,
                record.enqueue_time,
                record.tx_time,
                record.queue_wait,
            )


def _rx_rows(results: Iterable[RunResult]) -> Iterable[tuple[Any, ...]]:
    for result in results:
        for *values, ipg, distance in result.metrics.rx.rows():
            yield (
                result.run_id,
                result.mode.value,
                *values,
                "" if ipg is None else ipg,
                f"{distance:.3f}",
            )


def _age_rows(results: Iterable[RunResult]) -> Iterable[tuple[Any, ...]]:
    for result in results:
        for values in result.metrics.age.rows():
            yield (result.run_id, result.mode.value, *values)


def _gen_rows(results: Iterable[RunResult]) -> Iterable[tuple[Any, ...]]:
    for result in results:
        for record in result.metrics.generations:
            yield (
                result.run_id,
                result.mode.value,
                record.sender_id,
                record.condition,
                record.trigger_time,
                record.gen_timestamp,
            )


def _queue_rows(results: Iterable[RunResult]) -> Iterable[tuple[Any, ...]]:
    for result in results:
        for vehicle, by_class in result.queue_stats.items():
            for tc in TrafficClass:
                stats = by_class[tc]
                yield (
                    result.run_id,
                    result.mode.value,
                    vehicle,
                    tc.value,
                    stats.enqueued,
                    stats.replaced,
                    stats.dropped,
                    stats.transmitted,
                    result.backlog[vehicle][tc],
                )


def _rate_rows(results: Iterable[RunResult]) -> Iterable[tuple[Any, ...]]:
    for result in results:
        rates = measured_rates(result.metrics.tx, result.duration)
        for vehicle, breakdown in rates.items():
            yield (
                result.run_id,
                result.mode.value,
                vehicle,
                _fmt(breakdown.r_total),
                _fmt(breakdown.r_cam),
                _fmt(breakdown.r_tc3),
            )


def format_table(results: Sequence[RunResult]) -> str:
    """
    Render the comparison for the terminal, in milliseconds.

    Starred columns are the analytic expectations of e2e delay and age.

    :argument results: Run results, ETSI first
    :returns: Multi-line table
    """
    columns = (
        ("mode", 9),
        ("e2e", 9),
        ("age", 9),
        ("avg age", 9),
        ("ipg", 9),
        ("t_dcc", 9),
        ("t_q", 9),
        ("e2e*", 9),
        ("age*", 9),
        ("pos err m", 10),
    )
    lines = [" ".join(name.rjust(width) for name, width in columns)]
    for row in comparison_rows(results):
        cells = [row[1]]
        for value in row[2:10]:
            cells.append(f"{float(value) / 1000:.2f}" if value else "-")
        cells.append(row[10] or "-")
        lines.append(
            " ".join(
                str(cell).rjust(width)
                for cell, (_, width) in zip(cells, columns, strict=True)
            )
        )
    return "\n".join(lines)


def main(argv: Sequence[str] | None = None) -> int:
    """
    Run the simulator from the command line.

    :argument argv: Arguments without the program name
    :returns: 0 on success, 1 on a configuration error, 2 when a run
        breaks a runtime invariant
    """
    args = build_parser().parse_args(argv)
    configure_logging(args.quiet)
    try:
        config = load_config(args)
    except ConfigError as error:
        for diagnostic in error.diagnostics:
            logger.error("%s", diagnostic)
        return EXIT_CONFIG
    out_dir = Path(config.get("run.output_dir"))
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.toml").write_text(config.to_toml(), encoding="utf-8")
    try:
        results = run_modes(config, out_dir)
    except SimulationError as error:
        logger.error("Simulation failed: %s", error)
        return EXIT_RUNTIME
    write_results(results, out_dir)
    if not args.quiet:
        print(format_table(results))
    logger.info("Results written to %s", out_dir)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
