"""Unit tests for MCP tools."""

from __future__ import annotations

import pytest
from fastmcp import Client, FastMCP

from thss_backcom.scenarios import ResultRow
from thss_backcom.simulator import run_trials
from thss_backcom.tools import (
    METRIC_FUNCTIONS,
    _format_async_table,
    _format_metric,
    _format_overlap,
    _format_report,
    _format_rows,
    register_tools,
)
from thss_backcom.topology import SystemConfig, make_config


def _server(max_trials: int = 500) -> FastMCP:
    mcp = FastMCP(name="test")
    register_tools(mcp, make_config(N=40), max_trials)
    return mcp


async def _call(mcp: FastMCP, tool: str, arguments: dict) -> str:
    async with Client(mcp) as client:
        result = await client.call_tool(tool, arguments)
    return result.content[0].text


# --- formatting ---


def test_format_metric_shows_setup():
    result = _format_metric("tag_ber", 1.234e-4, SystemConfig())
    assert "# tag_ber" in result
    assert "1.234000e-04" in result
    assert "K=2, N=1000, rho=0.5" in result


def test_format_overlap_lists_each_count():
    result = _format_overlap(10, 2, (0.6, 0.35, 0.05))
    assert "N=10, K=2" in result
    assert "**0 shared chip(s):** 6.000000e-01" in result
    assert "**2 shared chip(s):** 5.000000e-02" in result


def test_format_async_table():
    result = _format_async_table(8, {"d0": 0.5, "c1-1": 0.01})
    assert "Asynchronous overlap scenarios (N=8)" in result
    assert "**c1-1:** 1.000000e-02" in result


def test_format_report_mentions_cap():
    report = run_trials(make_config(N=20), 50, seed=1, workers=1)
    result = _format_report(report, capped=True)
    assert "sync, 50 trials, seed 1" in result
    assert "Tag BER" in result and "ETR (J/symbol)" in result
    assert report.config_digest in result
    assert "capped at 50" in result
    assert "capped" not in _format_report(report)


def test_format_rows_empty():
    assert _format_rows([]) == "No result rows."


def test_format_rows_table():
    row = ResultRow(
        scenario="k_link",
        param="K",
        param_value=3.0,
        metric="etr",
        analytic=1e-9,
        mc_mean=1.1e-9,
        mc_stderr=2e-11,
        n_trials=100,
        seed=4,
    )
    result = _format_rows([row])
    assert "Scenario k_link (100 trials, seed 4)" in result
    assert "| etr | K | 3 | 1.000000e-09 |" in result


def test_every_metric_evaluates_on_defaults():
    cfg = SystemConfig()
    for name, formula in METRIC_FUNCTIONS.items():
        assert formula(cfg) >= 0.0, name


# --- registered tools ---


@pytest.mark.asyncio
async def test_evaluate_metric_tool():
    text = await _call(_server(), "evaluate_metric", {"metric": "etr", "overrides": {"rho": 0.3}})
    assert text.startswith("# etr")
    assert "rho=0.3" in text


@pytest.mark.asyncio
async def test_evaluate_metric_lambda_override():
    text = await _call(
        _server(), "evaluate_metric", {"metric": "etr", "overrides": {"lambda": 3.0}}
    )
    assert text.startswith("# etr")


@pytest.mark.asyncio
async def test_evaluate_metric_unknown_name():
    text = await _call(_server(), "evaluate_metric", {"metric": "snr"})
    assert text.startswith("Error: unknown metric 'snr'")


@pytest.mark.asyncio
async def test_evaluate_metric_bad_override():
    text = await _call(_server(), "evaluate_metric", {"metric": "etr", "overrides": {"rho": 2}})
    assert text.startswith("Error:")


@pytest.mark.asyncio
async def test_overlap_probabilities_tool():
    text = await _call(_server(), "overlap_probabilities", {"N": 12, "K": 3})
    assert "N=12, K=3" in text
    text = await _call(_server(), "overlap_probabilities", {"N": 5, "asynchronous": True})
    assert text.startswith("Error:")


@pytest.mark.asyncio
async def test_simulate_tool_caps_trials():
    text = await _call(_server(max_trials=300), "simulate", {"n_trials": 5000, "seed": 2})
    assert "300 trials" in text
    assert "capped at 300" in text


@pytest.mark.asyncio
async def test_simulate_tool_rejects_mode():
    text = await _call(_server(), "simulate", {"mode": "late"})
    assert text.startswith("Error: mode must be")


@pytest.mark.asyncio
async def test_run_scenario_tool():
    text = await _call(
        _server(), "run_scenario", {"name": "two_link_sync", "sweep": "rho=0.3,0.6", "n_trials": 100}
    )
    assert "Scenario two_link_sync" in text
    assert text.count("| outage |") == 2


@pytest.mark.asyncio
async def test_run_scenario_tool_unknown_name():
    text = await _call(_server(), "run_scenario", {"name": "nope"})
    assert text.startswith("Error: unknown scenario")
