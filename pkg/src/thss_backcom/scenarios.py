"""Named scenarios pairing each analytic metric with its Monte Carlo estimate."""

from __future__ import annotations

import csv
import io
import json
import math
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Literal

import numpy as np
from fastmcp.utilities.logging import get_logger
from pydantic import BaseModel, ConfigDict, Field

from thss_backcom import analytic
from thss_backcom.errors import ScenarioError
from thss_backcom.simulator import MetricsReport, SimulationMode, run_trials
from thss_backcom.topology import (
    ChannelModel,
    SystemConfig,
    load_config,
    make_config,
    path_loss_coefficients,
    with_overrides,
    with_sequence_length,
)

logger = get_logger(__name__)

METRICS = ("reader_ber", "tag_ber", "etr", "outage")
SWEEP_PARAMETERS = ("rho", "N", "beta", "K", "P", "E0")
CSV_HEADER = (
    "scenario",
    "param",
    "param_value",
    "metric",
    "analytic",
    "mc_mean",
    "mc_stderr",
    "n_trials",
    "seed",
)

SweepParameter = Literal["rho", "N", "beta", "K", "P", "E0"]
Metric = Literal["reader_ber", "tag_ber", "etr", "outage"]


class SweepSpec(BaseModel):
    """One swept parameter and the values it takes, in row order."""

    model_config = ConfigDict(frozen=True)

    parameter: SweepParameter
    values: tuple[float, ...] = Field(min_length=1)


class ResultRow(BaseModel):
    model_config = ConfigDict(frozen=True)

    scenario: str
    param: str | None = None
    param_value: float | None = None
    metric: Metric
    analytic: float
    mc_mean: float
    mc_stderr: float
    n_trials: int
    seed: int


@dataclass(frozen=True)
class Scenario:
    name: str
    mode: SimulationMode
    metrics: dict[str, Callable[[SystemConfig], float]]
    prepare: Callable[[SystemConfig], SystemConfig]
    description: str


def _two_links(cfg: SystemConfig) -> SystemConfig:
    if cfg.K == 2:
        return cfg
    logger.info("two-link scenario: K=%d pinned to 2", cfg.K)
    return with_overrides(cfg, K=2)


def _static_two_links(cfg: SystemConfig) -> SystemConfig:
    cfg = _two_links(cfg)
    changes: dict[str, Any] = {"channel_model": ChannelModel.STATIC}
    if cfg.static_coeffs is None:
        changes["static_coeffs"] = path_loss_coefficients(cfg)
    return with_overrides(cfg, **changes)


def _klink_etr(cfg: SystemConfig) -> float:
    return analytic.klink_et_asymptotics(cfg).etr


def _klink_outage(cfg: SystemConfig) -> float:
    return analytic.klink_et_asymptotics(cfg).outage


SCENARIOS: dict[str, Scenario] = {
    scenario.name: scenario
    for scenario in (
        Scenario(
            name="two_link_sync",
            mode=SimulationMode.SYNC,
            metrics={
                "reader_ber": analytic.reader_ber_sync,
                "tag_ber": analytic.tag_ber_sync,
                "etr": analytic.etr_sync,
                "outage": analytic.outage_sync,
            },
            prepare=_two_links,
            description="two links on a common chip grid",
        ),
        Scenario(
            name="two_link_static",
            mode=SimulationMode.SYNC,
            metrics={
                "reader_ber": analytic.reader_ber_sync,
                "tag_ber": lambda cfg: analytic.tag_ber_static(cfg, high_snr=False),
                "etr": analytic.etr_static,
                "outage": analytic.outage_static,
            },
            prepare=_static_two_links,
            description="two links over fixed channel coefficients",
        ),
        Scenario(
            name="two_link_async",
            mode=SimulationMode.ASYNC,
            metrics={
                "reader_ber": analytic.reader_ber_async,
                "tag_ber": analytic.tag_ber_async,
                "etr": analytic.etr_async,
            },
            prepare=_two_links,
            description="link 2 lags link 1 by beta chips",
        ),
        Scenario(
            name="k_link",
            mode=SimulationMode.SYNC,
            metrics={
                "reader_ber": analytic.reader_ber_klink,
                "tag_ber": analytic.tag_ber_klink,
                "etr": _klink_etr,
                "outage": _klink_outage,
            },
            prepare=lambda cfg: cfg,
            description="K synchronous links, large-N approximations",
        ),
    )
}


def get_scenario(name: str) -> Scenario:
    try:
        return SCENARIOS[name]
    except KeyError:
        valid = ", ".join(sorted(SCENARIOS))
        raise ScenarioError(f"unknown scenario '{name}'; valid scenarios: {valid}") from None


# --- sweeps ---


def _float(text: str, expr: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ScenarioError(f"bad number '{text}' in sweep '{expr}'") from None


def parse_sweep(expr: str) -> SweepSpec:
    """Parse ``param=start:stop:steps`` or ``param=v1,v2,...``."""
    name, sep, body = expr.partition("=")
    name = name.strip()
    if not sep or not body.strip():
        raise ScenarioError(f"sweep must look like param=start:stop:steps, got '{expr}'")
    if name not in SWEEP_PARAMETERS:
        raise ScenarioError(
            f"cannot sweep '{name}'; sweepable parameters: {', '.join(SWEEP_PARAMETERS)}"
        )
    if ":" in body:
        parts = body.split(":")
        if len(parts) != 3:
            raise ScenarioError(f"grid sweep needs start:stop:steps, got '{body}'")
        start, stop = _float(parts[0], expr), _float(parts[1], expr)
        steps = _float(parts[2], expr)
        if steps < 1 or steps != int(steps):
            raise ScenarioError(f"grid sweep needs a positive integer step count, got '{parts[2]}'")
        values = tuple(float(v) for v in np.linspace(start, stop, int(steps)))
    else:
        values = tuple(_float(v.strip(), expr) for v in body.split(","))
    if name in ("N", "K"):
        if any(v != int(v) for v in values):
            raise ScenarioError(f"{name} sweep values must be integers, got {values}")
    return SweepSpec(parameter=name, values=values)


def _apply(cfg: SystemConfig, parameter: str, value: float) -> SystemConfig:
    if parameter == "N":
        return with_sequence_length(cfg, int(value))
    if parameter == "K":
        return with_overrides(cfg, K=int(value))
    return with_overrides(cfg, **{parameter: value})


def _mc_value(report: MetricsReport, metric: str) -> tuple[float, float]:
    estimate = {
        "reader_ber": report.reader_ber,
        "tag_ber": report.tag_ber,
        "etr": report.etr_mean,
        "outage": report.outage_prob,
    }[metric]
    return estimate.mean, estimate.stderr


def run_scenario(
    name: str,
    config_path: str | Path | None = None,
    overrides: Mapping[str, Any] | None = None,
    sweep: SweepSpec | None = None,
    n_trials: int = 10**6,
    seed: int = 0,
    workers: int | None = None,
    base: SystemConfig | None = None,
) -> list[ResultRow]:
    """Run a scenario's analytic and Monte Carlo evaluations for every sweep point.

    Rows come back ordered by metric and then by swept value.
    """
    scenario = get_scenario(name)
    if config_path is not None:
        cfg = load_config(config_path, overrides)
    elif base is None:
        cfg = make_config(**(overrides or {}))
    else:
        cfg = with_overrides(base, **(overrides or {}))
    if sweep is not None and sweep.parameter == "K" and scenario.name != "k_link":
        raise ScenarioError(f"scenario '{name}' has two links; K can only be swept in k_link")

    points: Sequence[float | None] = sweep.values if sweep is not None else (None,)
    logger.info("scenario %s: %d point(s), %d trials each", name, len(points), n_trials)
    rows: list[ResultRow] = []
    for value in points:
        point = cfg if value is None else _apply(cfg, sweep.parameter, value)
        point = scenario.prepare(point)
        report = run_trials(point, n_trials, seed=seed, mode=scenario.mode, workers=workers)
        for metric, formula in scenario.metrics.items():
            mean, stderr = _mc_value(report, metric)
            rows.append(
                ResultRow(
                    scenario=name,
                    param=sweep.parameter if sweep is not None else None,
                    param_value=value,
                    metric=metric,
                    analytic=formula(point),
                    mc_mean=mean,
                    mc_stderr=stderr,
                    n_trials=report.n_trials,
                    seed=seed,
                )
            )
    rows.sort(key=lambda row: (METRICS.index(row.metric), row.param_value or 0.0))
    logger.info("scenario %s: %d rows", name, len(rows))
    return rows


# --- output ---


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.17e}" if math.isfinite(value) else repr(value)
    return str(value)


def render(rows: Sequence[ResultRow], fmt: str = "csv") -> str:
    if not rows:
        raise ScenarioError("no result rows to emit")
    if fmt == "json":
        return json.dumps([row.model_dump() for row in rows], indent=2) + "\n"
    if fmt != "csv":
        raise ScenarioError(f"unknown output format '{fmt}'; use csv or json")
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for row in rows:
        data = row.model_dump()
        writer.writerow([_cell(data[column]) for column in CSV_HEADER])
    return buffer.getvalue()


def emit(rows: Sequence[ResultRow], fmt: str, path: str | Path) -> Path:
    """Write ``rows`` to ``path``; OSError propagates for unwritable paths."""
    text = render(rows, fmt)
    target = Path(path)
    target.write_text(text, encoding="utf-8")
    logger.info("wrote %d rows to %s", len(rows), target)
    return target


def parse_rows(text: str) -> list[ResultRow]:
    """Inverse of the JSON rendering."""
    return [ResultRow.model_validate(item) for item in json.loads(text)]
