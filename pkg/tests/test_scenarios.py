"""Unit tests for scenarios, sweeps and result rendering."""

from __future__ import annotations

import pytest

from thss_backcom import scenarios
from thss_backcom.errors import ScenarioError
from thss_backcom.topology import SystemConfig
from thss_backcom.scenarios import (
    CSV_HEADER,
    ResultRow,
    emit,
    get_scenario,
    parse_rows,
    parse_sweep,
    render,
    run_scenario,
)


def _row(**changes) -> ResultRow:
    data = {
        "scenario": "two_link_sync",
        "metric": "tag_ber",
        "analytic": 1.25e-4,
        "mc_mean": 1.5e-4,
        "mc_stderr": 3.0e-5,
        "n_trials": 1000,
        "seed": 0,
    }
    data.update(changes)
    return ResultRow(**data)


# --- parse_sweep ---


def test_parse_grid_sweep():
    spec = parse_sweep("rho=0.1:0.9:9")
    assert spec.parameter == "rho"
    assert len(spec.values) == 9
    assert spec.values[0] == pytest.approx(0.1)
    assert spec.values[-1] == pytest.approx(0.9)


def test_parse_list_sweep():
    assert parse_sweep("N=100, 200,400").values == (100.0, 200.0, 400.0)


@pytest.mark.parametrize(
    "expr",
    ["rho", "rho=", "gamma=0.1:0.2:2", "rho=0.1:0.2", "rho=0.1:0.9:0", "rho=a,b", "N=10.5,20"],
)
def test_parse_sweep_rejects(expr):
    with pytest.raises(ScenarioError):
        parse_sweep(expr)


# --- registry ---


def test_unknown_scenario_lists_valid_names():
    with pytest.raises(ScenarioError) as exc_info:
        get_scenario("three_link")
    assert "two_link_sync" in str(exc_info.value)
    assert exc_info.value.code == "scenario"


def test_async_scenario_has_no_outage_metric():
    assert set(get_scenario("two_link_async").metrics) == {"reader_ber", "tag_ber", "etr"}


# --- run_scenario ---


def test_rho_sweep_row_count_and_order():
    rows = run_scenario(
        "two_link_sync", sweep=parse_sweep("rho=0.1:0.9:9"), n_trials=200, workers=1
    )
    assert len(rows) == 36
    assert [row.metric for row in rows[::9]] == ["reader_ber", "tag_ber", "etr", "outage"]
    values = [row.param_value for row in rows[:9]]
    assert values == sorted(values)
    assert all(row.param == "rho" and row.n_trials == 200 for row in rows)


def test_unswept_scenario_has_one_row_per_metric():
    rows = run_scenario("two_link_sync", n_trials=100, workers=1)
    assert [row.metric for row in rows] == ["reader_ber", "tag_ber", "etr", "outage"]
    assert rows[0].param is None and rows[0].param_value is None


def test_async_beta_sweep_keeps_etr_constant():
    rows = run_scenario(
        "two_link_async", sweep=parse_sweep("beta=0,0.25,0.5"), n_trials=100, workers=1
    )
    etr = [row.analytic for row in rows if row.metric == "etr"]
    assert len(etr) == 3 and etr[0] == etr[1] == etr[2]


def test_static_scenario_runs_on_path_loss_coefficients():
    rows = run_scenario(
        "two_link_static", overrides={"N": 50, "sigma2_tag": 1e-9}, n_trials=500, workers=1
    )
    assert len(rows) == 4
    assert all(0.0 <= row.analytic for row in rows)


def test_k_sweep_only_in_k_link():
    with pytest.raises(ScenarioError):
        run_scenario("two_link_sync", sweep=parse_sweep("K=2,3"), n_trials=10, workers=1)
    rows = run_scenario("k_link", sweep=parse_sweep("K=2,3"), n_trials=50, workers=1)
    assert len(rows) == 8


def test_two_link_scenario_pins_k():
    rows = run_scenario("two_link_sync", overrides={"K": 3}, n_trials=50, workers=1)
    assert len(rows) == 4


def test_run_scenario_is_reproducible():
    a = run_scenario("two_link_sync", overrides={"N": 40}, n_trials=2000, seed=3, workers=1)
    b = run_scenario("two_link_sync", overrides={"N": 40}, n_trials=2000, seed=3, workers=1)
    assert render(a) == render(b)


def test_run_scenario_reads_config_file(tmp_path):
    path = tmp_path / "cfg.toml"
    path.write_text("[system]\nN = 64\nrho = 0.3\n")
    rows = run_scenario("two_link_sync", config_path=path, n_trials=50, workers=1)
    assert len(rows) == 4


# --- rendering ---


def test_csv_header_and_field_count():
    text = render([_row(), _row(metric="etr")])
    lines = text.splitlines()
    assert lines[0] == ",".join(CSV_HEADER)
    assert len(lines) == 3
    assert all(len(line.split(",")) == 9 for line in lines)
    assert text.endswith("\n") and "\r" not in text


def test_single_row_csv_is_two_lines():
    assert len(render([_row()]).splitlines()) == 2


def test_csv_uses_full_precision_scientific_notation():
    line = render([_row(analytic=0.1)]).splitlines()[1]
    assert "1.00000000000000006e-01" in line


def test_json_rows_parse_back():
    rows = [_row(param="rho", param_value=0.5), _row(metric="outage")]
    assert parse_rows(render(rows, "json")) == rows


def test_render_rejects_empty_rows():
    with pytest.raises(ScenarioError):
        render([])


def test_render_rejects_unknown_format():
    with pytest.raises(ScenarioError):
        render([_row()], "xml")


def test_emit_writes_file(tmp_path):
    path = emit([_row()], "csv", tmp_path / "out.csv")
    assert path.read_text().startswith("scenario,param")


def test_emit_unwritable_path_raises_oserror(tmp_path):
    with pytest.raises(OSError):
        emit([_row()], "csv", tmp_path / "missing" / "out.csv")


def test_metric_order_constant():
    assert scenarios.METRICS == ("reader_ber", "tag_ber", "etr", "outage")


def test_lambda_override_on_base_config():
    overrides = {"lambda": 3.0, "N": 40}
    on_base = run_scenario(
        "two_link_sync", overrides=overrides, n_trials=50, workers=1, base=SystemConfig()
    )
    fresh = run_scenario("two_link_sync", overrides=overrides, n_trials=50, workers=1)
    assert render(on_base) == render(fresh)
    default = run_scenario("two_link_sync", overrides={"N": 40}, n_trials=50, workers=1)
    assert on_base[2].analytic < default[2].analytic
