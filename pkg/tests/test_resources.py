"""Unit tests for MCP resource formatters."""

from __future__ import annotations

import pytest
from fastmcp import Client, FastMCP

from thss_backcom.resources import _format_config, _format_scenarios, register_resources
from thss_backcom.scenarios import SCENARIOS
from thss_backcom.topology import SystemConfig, config_digest, make_config, path_loss_coefficients


# --- _format_scenarios ---


def test_scenarios_empty():
    assert _format_scenarios([]) == "No scenarios registered."


def test_scenarios_listed_with_metrics():
    result = _format_scenarios(list(SCENARIOS.values()))
    assert f"Scenarios ({len(SCENARIOS)})" in result
    assert "**two_link_async** (async)" in result
    assert "metrics: reader_ber, tag_ber, etr" in result


# --- _format_config ---


def test_config_shows_digest_and_fields():
    cfg = SystemConfig()
    result = _format_config(cfg)
    assert config_digest(cfg) in result
    assert "**N:** 1000" in result
    assert "**static_coeffs:** none" in result
    assert "d_reader_tag" not in result


def test_config_marks_static_coefficients():
    cfg = make_config(channel_model="static")
    cfg = cfg.model_copy(update={"static_coeffs": path_loss_coefficients(cfg)})
    result = _format_config(cfg)
    assert "**channel_model:** static" in result
    assert "**static_coeffs:** set" in result


# --- registered resources ---


@pytest.mark.asyncio
async def test_resources_served():
    mcp = FastMCP(name="test")
    register_resources(mcp, make_config(N=64))
    async with Client(mcp) as client:
        scenarios = await client.read_resource("backcom://scenarios")
        config = await client.read_resource("backcom://config/defaults")
    assert "two_link_sync" in scenarios[0].text
    assert "**N:** 64" in config[0].text
