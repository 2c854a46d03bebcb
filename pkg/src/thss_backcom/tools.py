"""MCP tools for evaluating link metrics and running small Monte Carlo jobs."""

from __future__ import annotations

import asyncio
from collections.abc import Callable, Sequence
from typing import Any

from fastmcp import FastMCP
from fastmcp.utilities.logging import get_logger

from thss_backcom import analytic, scenarios
from thss_backcom.errors import BackcomError
from thss_backcom.simulator import MetricsReport, run_trials
from thss_backcom.thss import async_scenario_probs, klink_overlap_probs, overlap_probs
from thss_backcom.topology import SystemConfig, with_overrides

logger = get_logger(__name__)

METRIC_FUNCTIONS: dict[str, Callable[[SystemConfig], float]] = {
    "reader_ber": analytic.reader_ber_sync,
    "tag_ber": analytic.tag_ber_sync,
    "etr": analytic.etr_sync,
    "outage": analytic.outage_sync,
    "reader_ber_async": analytic.reader_ber_async,
    "tag_ber_async": analytic.tag_ber_async,
    "reader_ber_klink": analytic.reader_ber_klink,
    "tag_ber_klink": analytic.tag_ber_klink,
    "klink_etr": lambda cfg: analytic.klink_et_asymptotics(cfg).etr,
    "klink_outage": lambda cfg: analytic.klink_et_asymptotics(cfg).outage,
}

Overrides = dict[str, float | int | str | bool]


def register_tools(mcp: FastMCP, base_config: SystemConfig, max_trials: int) -> None:
    """Register all analysis tools on the FastMCP server."""

    def _config(overrides: Overrides | None) -> SystemConfig:
        return with_overrides(base_config, **overrides) if overrides else base_config

    @mcp.tool()
    async def evaluate_metric(metric: str, overrides: Overrides | None = None) -> str:
        """Evaluate one closed-form metric of link 1.

        Args:
            metric: One of reader_ber, tag_ber, etr, outage, reader_ber_async,
                tag_ber_async, reader_ber_klink, tag_ber_klink, klink_etr, klink_outage.
            overrides: Config fields to change, e.g. {"rho": 0.3, "N": 4000}.
        """
        formula = METRIC_FUNCTIONS.get(metric)
        if formula is None:
            return f"Error: unknown metric '{metric}'. Valid metrics: {', '.join(METRIC_FUNCTIONS)}."
        try:
            cfg = _config(overrides)
            value = await asyncio.to_thread(formula, cfg)
        except BackcomError as exc:
            return f"Error: {exc}"
        return _format_metric(metric, value, cfg)

    @mcp.tool()
    async def overlap_probabilities(N: int, K: int = 2, asynchronous: bool = False) -> str:
        """Pattern-overlap probabilities for sequence length N.

        Args:
            N: Number of chips per symbol.
            K: Number of links; K > 2 gives the union-overlap table.
            asynchronous: Return the two-link asynchronous sub-scenario table instead.
        """
        try:
            if asynchronous:
                return _format_async_table(N, async_scenario_probs(N).table)
            if K > 2:
                probs = klink_overlap_probs(N, K)
                return _format_overlap(N, K, (probs.rho0, probs.rho1, probs.rho2))
            probs = overlap_probs(N)
            return _format_overlap(N, K, (probs.p0, probs.p1, probs.p2))
        except BackcomError as exc:
            return f"Error: {exc}"

    @mcp.tool()
    async def simulate(
        n_trials: int = 10_000,
        seed: int = 0,
        mode: str = "sync",
        overrides: Overrides | None = None,
    ) -> str:
        """Run a Monte Carlo estimate of every link-1 metric.

        Args:
            n_trials: Number of simulated symbols (capped by the server).
            seed: Seed of the run; equal seeds give equal results.
            mode: "sync" or "async" (two links, link 2 delayed by beta chips).
            overrides: Config fields to change before simulating.
        """
        if mode not in ("sync", "async"):
            return f"Error: mode must be 'sync' or 'async', got '{mode}'."
        n = min(n_trials, max_trials)
        try:
            cfg = _config(overrides)
            report = await asyncio.to_thread(run_trials, cfg, n, seed, mode, 1)
        except BackcomError as exc:
            return f"Error: {exc}"
        return _format_report(report, capped=n < n_trials)

    @mcp.tool()
    async def run_scenario(
        name: str, sweep: str | None = None, n_trials: int = 10_000, seed: int = 0
    ) -> str:
        """Run a named scenario and list analytic values next to simulated ones.

        Args:
            name: Scenario name (see the backcom://scenarios resource).
            sweep: Optional sweep such as "rho=0.1:0.9:9" or "N=500,1000,2000".
            n_trials: Monte Carlo trials per sweep point (capped by the server).
            seed: Seed of the run.
        """
        try:
            spec = scenarios.parse_sweep(sweep) if sweep else None
            rows = await asyncio.to_thread(
                scenarios.run_scenario,
                name,
                sweep=spec,
                n_trials=min(n_trials, max_trials),
                seed=seed,
                workers=1,
                base=base_config,
            )
        except BackcomError as exc:
            return f"Error: {exc}"
        return _format_rows(rows)


def _format_metric(metric: str, value: float, cfg: SystemConfig) -> str:
    lines = [
        f"# {metric}",
        "",
        f"**Value:** {value:.6e}",
        f"**Setup:** K={cfg.K}, N={cfg.N}, rho={cfg.rho}, beta={cfg.beta}, "
        f"{cfg.channel_model}, {cfg.power_mode}",
    ]
    return "\n".join(lines)


def _format_overlap(N: int, K: int, probs: Sequence[float]) -> str:
    lines = [f"# Pattern overlap (N={N}, K={K})", ""]
    for hits, p in enumerate(probs):
        lines.append(f"- **{hits} shared chip(s):** {p:.6e}")
    return "\n".join(lines)


def _format_async_table(N: int, table: dict[str, float]) -> str:
    lines = [f"# Asynchronous overlap scenarios (N={N})", ""]
    for label, p in table.items():
        lines.append(f"- **{label}:** {p:.6e}")
    return "\n".join(lines)


def _estimate(label: str, data: dict[str, Any]) -> str:
    return f"- **{label}:** {data['mean']:.6e} ± {data['stderr']:.2e}"


def _format_report(report: MetricsReport, capped: bool = False) -> str:
    data = report.model_dump()
    lines = [
        f"# Monte Carlo ({report.mode}, {report.n_trials} trials, seed {report.seed})",
        "",
        _estimate("Reader BER", data["reader_ber"]),
        _estimate("Tag BER", data["tag_ber"]),
        _estimate("Outage probability", data["outage_prob"]),
        _estimate("ETR (J/symbol)", data["etr_mean"]),
        "",
        f"Config digest: `{report.config_digest}`",
    ]
    if capped:
        lines.append(f"Trial count capped at {report.n_trials} by the server.")
    return "\n".join(lines)


def _format_rows(rows: Sequence[scenarios.ResultRow]) -> str:
    if not rows:
        return "No result rows."
    first = rows[0]
    lines = [f"# Scenario {first.scenario} ({first.n_trials} trials, seed {first.seed})", ""]
    lines.append("| metric | param | value | analytic | mc_mean | mc_stderr |")
    lines.append("|---|---|---|---|---|---|")
    for row in rows:
        value = "" if row.param_value is None else f"{row.param_value:g}"
        lines.append(
            f"| {row.metric} | {row.param or ''} | {value} | {row.analytic:.6e} "
            f"| {row.mc_mean:.6e} | {row.mc_stderr:.2e} |"
        )
    return "\n".join(lines)
