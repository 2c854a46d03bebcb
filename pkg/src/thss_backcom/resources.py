"""MCP resources exposing scenario metadata and the active configuration."""

from __future__ import annotations

from fastmcp import FastMCP

from thss_backcom.scenarios import SCENARIOS, Scenario
from thss_backcom.topology import SystemConfig, config_digest


def register_resources(mcp: FastMCP, base_config: SystemConfig) -> None:
    """Register all read-only resources on the FastMCP server."""

    @mcp.resource("backcom://scenarios")
    async def scenario_list() -> str:
        """Named scenarios and the metrics each one reports."""
        return _format_scenarios(list(SCENARIOS.values()))

    @mcp.resource("backcom://config/defaults")
    async def default_config() -> str:
        """The base configuration every tool call starts from."""
        return _format_config(base_config)


def _format_scenarios(items: list[Scenario]) -> str:
    if not items:
        return "No scenarios registered."

    lines = [f"# Scenarios ({len(items)})", ""]
    for s in items:
        lines.append(f"- **{s.name}** ({s.mode}): {s.description}")
        lines.append(f"  metrics: {', '.join(s.metrics)}")
    return "\n".join(lines)


def _format_config(cfg: SystemConfig) -> str:
    data = cfg.model_dump(mode="json", exclude={"static_coeffs"})
    lines = [f"# Active configuration (`{config_digest(cfg)}`)", ""]
    for key, value in data.items():
        if value is None:
            continue
        lines.append(f"**{key}:** {value}")
    lines.append(f"**static_coeffs:** {'set' if cfg.static_coeffs is not None else 'none'}")
    return "\n".join(lines)
