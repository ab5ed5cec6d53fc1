import json
import logging

import numpy as np
import pytest

from xlmimo import cli, harness
from xlmimo.config import ScenarioConfig
from xlmimo.estimation import PilotAssignment, nmse_per_ue
from xlmimo.harness import (
    CampaignError,
    CampaignResult,
    drop_statistics,
    empirical_cdf,
    resolve_methods,
    run_campaign,
    run_drop,
    write_results,
)

SMALL = ScenarioConfig(K=3, L=4, tau_p=2, mc_realizations=3, realizations_per_drop=8)


@pytest.fixture(scope="module")
def small_campaign():
    return run_campaign(SMALL, "all")


def test_methods_resolution():
    assert resolve_methods("all", SMALL) == ["random", "greedy", "genie", "ga"]
    big = ScenarioConfig(K=20, tau_p=10)
    assert "genie" not in resolve_methods("all", big)
    assert resolve_methods("genie", big) == ["genie"]
    with pytest.raises(ValueError):
        resolve_methods("best", SMALL)


def test_genie_dropped_from_all_when_intractable_but_729_is_fine():
    assert ScenarioConfig(K=6, tau_p=3).tau_p ** 6 == 729
    assert "genie" in resolve_methods("all", ScenarioConfig(K=6, tau_p=3))


def test_methods_are_paired_on_one_drop(small_campaign):
    for d in small_campaign.drops:
        stats = drop_statistics(SMALL, d.drop_id)
        assert stats.checksum() == d.checksum
        for m, pilots in d.assignments.items():
            expected = nmse_per_ue(PilotAssignment(pilots, SMALL.tau_p), stats, SMALL)
            np.testing.assert_array_equal(d.records[m].nmse, expected)
        costs = {m: r.cost for m, r in d.records.items()}
        assert all(costs["genie"] <= c for c in costs.values())


def test_drop_is_reproducible():
    a = run_drop(SMALL, 1, ["ga", "random"])
    b = run_drop(SMALL, 1, ["random", "ga"])
    for m in ("ga", "random"):
        assert np.array_equal(a.records[m].se, b.records[m].se)


def test_cdf_properties(small_campaign):
    x, y = empirical_cdf([3.0, 1.0, 2.0])
    assert x.tolist() == [1.0, 2.0, 3.0] and y.tolist() == pytest.approx([1 / 3, 2 / 3, 1.0])
    x1, y1 = empirical_cdf([0.7])
    assert y1.tolist() == [1.0]
    for series, name in harness.CDF_SERIES.items():
        for m in small_campaign.methods:
            x, y = empirical_cdf(small_campaign.cdf_values(m, name))
            assert np.all(np.diff(x) >= 0) and np.all(np.diff(y) > 0)
            assert y[0] > 0 and y[-1] == 1.0


def test_csv_schema_and_json_round_trip(small_campaign, tmp_path):
    paths = write_results(small_campaign, tmp_path, "both")
    rows = (tmp_path / "results.csv").read_text().splitlines()
    assert rows[0] == "drop_id,method,ue,nmse,se,served,n_serving_sas"
    assert len(rows) - 1 == 3 * SMALL.K * 4
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["aggregates"] == small_campaign.aggregates()
    assert summary["n_drops"] == 3 and summary["n_failed"] == 0
    assert summary["config"]["K"] == 3
    assert (tmp_path / "cdf" / "min_se_per_drop_ga.csv").exists()
    assert len(paths) == 2 + 8 * 4


def test_empty_campaign_rejected(tmp_path):
    empty = CampaignResult(cfg=SMALL, methods=["ga"], drops=[], failures=[(0, "boom")])
    with pytest.raises(CampaignError, match="no successful drops"):
        write_results(empty, tmp_path, "json")


def test_unwritable_output_reports_path(small_campaign, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(CampaignError, match=str(blocker)):
        write_results(small_campaign, blocker / "sub", "csv")


def test_parallel_matches_serial(tmp_path):
    serial = run_campaign(SMALL, "all", workers=1)
    parallel = run_campaign(SMALL, "all", workers=2)
    write_results(serial, tmp_path / "a", "both")
    write_results(parallel, tmp_path / "b", "both")
    for name in ("results.csv", "summary.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_sweep_keys_streams_by_K():
    sweep = harness.run_sweep(SMALL.with_overrides(mc_realizations=2), [3, 4], ["random", "greedy"])
    single = run_campaign(SMALL.with_overrides(K=4, mc_realizations=2), ["random", "greedy"])
    assert sweep[4].drops[0].checksum == single.drops[0].checksum
    rows = harness.sweep_table(sweep)
    assert [(r["K"], r["method"]) for r in rows] == [(3, "random"), (3, "greedy"), (4, "random"), (4, "greedy")]


# command line


def _argv(out, *extra):
    return ["simulate", "--config", "configs/defaults.toml", "--K", "3", "--L", "4", "--tau-p", "2",
            "--drops", "2", "--realizations", "5", "--out", str(out), *extra]


def test_cli_success_and_sweep(tmp_path):
    assert cli.main(_argv(tmp_path / "a", "--pa", "all")) == 0
    assert (tmp_path / "a" / "summary.json").exists()
    assert cli.main(_argv(tmp_path / "b", "--pa", "greedy", "--sweep-k", "2,3", "--format", "csv")) == 0
    assert (tmp_path / "b" / "se_vs_K.csv").exists()
    assert (tmp_path / "b" / "results_K2.csv").exists()
    assert not (tmp_path / "b" / "summary.json").exists()


def test_cli_partial_failure_exit_code(tmp_path, monkeypatch, caplog):
    real = harness.run_drop

    def flaky(cfg, drop_id, methods):
        if drop_id == 1:
            raise RuntimeError("synthetic failure")
        return real(cfg, drop_id, methods)

    monkeypatch.setattr(harness, "run_drop", flaky)
    with caplog.at_level(logging.ERROR):
        assert cli.main(_argv(tmp_path, "--pa", "random")) == 2
    assert "master_seed=0" in caplog.text and "synthetic failure" in caplog.text
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["n_failed"] == 1 and summary["n_drops"] == 1


def test_cli_config_error(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("[protocol]\ntau_p = 0\n")
    assert cli.main(["simulate", "--config", str(bad), "--out", str(tmp_path)]) == 1
