import csv
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from edgehedge.domain import ActionSet, StepRecord, full_action
from edgehedge.errors import ReportError
from edgehedge.metrics import (PERCENTILES, access_rate, build_report, dumps_report, export_plot_data,
                               latency_deviation, percentile, read_report, window_average, write_report)


def _records(count, reward=-0.1, n=5, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        action = ActionSet.from_index(int(rng.integers(2**n - 1)), n)
        out.append(StepRecord(np.zeros(3), action, reward, float(rng.uniform(0.5, 1.5)), 1.0))
    return out


def test_percentile_examples():
    assert percentile([1, 2, 3, 4, 5], 0.5) == 3
    assert percentile(list(range(1, 101)), 0.99) == 99
    assert all(percentile([7.5], q) == 7.5 for q in (0.0, 0.3, 0.99, 1.0))
    with pytest.raises(ReportError):
        percentile([], 0.5)
    with pytest.raises(ReportError):
        percentile([1.0], 1.5)


@given(st.lists(st.floats(0, 1e3), min_size=1, max_size=200), st.floats(0, 1), st.floats(0, 1))
def test_percentile_monotone_and_member(samples, q1, q2):
    lo, hi = sorted((q1, q2))
    assert percentile(samples, lo) <= percentile(samples, hi)
    assert percentile(samples, hi) in samples


def test_access_rate_examples():
    assert access_rate(full_action(5), 5) == 1.0
    assert access_rate(ActionSet(frozenset({2}), 5), 5) == 0.2
    assert access_rate(ActionSet(frozenset({0, 1, 4}), 5), 5) == 0.6


def test_latency_deviation_examples():
    assert latency_deviation(1.0, 0.9) == pytest.approx(0.1, abs=1e-15)
    assert latency_deviation(1.0, 1.2) == pytest.approx(-0.2, abs=1e-15)
    assert latency_deviation(0.75, 0.75) == 0.0


def test_window_counts_and_values():
    assert len(window_average(_records(400), 200, 5)) == 2
    assert len(window_average(_records(399), 200, 5)) == 1
    wins = window_average(_records(600), 200, 5)
    assert [w["window_index"] for w in wins] == [0, 1, 2]
    assert all(w["mean_abs_reward"] == pytest.approx(0.1, abs=1e-15) for w in wins)
    with pytest.raises(ReportError):
        window_average(_records(10), 0, 5)


def _report():
    recs = {"SafeTail": _records(450, seed=1), "Oracle": [], "Rand-1": _records(450, seed=2)}
    # the Oracle on the same realizations is never slower
    recs["Oracle"] = [StepRecord(r.state, full_action(5), 0.0,
                                 min(r.achieved_latency, q.achieved_latency) * 0.9, r.target_latency)
                      for r, q in zip(recs["SafeTail"], recs["Rand-1"])]
    return build_report(recs, 5, 200, {"config_hash": "deadbeef"})


def test_report_structure_and_invariants():
    rep = _report()
    assert rep["config_hash"] == "deadbeef"
    assert set(rep["policies"]) == {"SafeTail", "Oracle", "Rand-1"}
    labels = [l for l, _ in PERCENTILES]
    for stats in rep["policies"].values():
        vals = [stats[l] for l in labels]
        assert vals == sorted(vals)
        assert 0.2 <= stats["mean_access_rate"] <= 1.0
    assert rep["speedups"]["vs_safetail"]["SafeTail"] == {l: 1.0 for l in labels}
    assert all(v >= 1.0 for p in rep["speedups"]["oracle"].values() for v in p.values())
    assert len(rep["windows"]["SafeTail"]) == 2


def test_report_round_trip(tmp_path):
    rep = _report()
    write_report(rep, tmp_path / "sub" / "r.json")
    back = read_report(tmp_path / "sub" / "r.json")
    assert back == rep
    assert dumps_report(back) == (tmp_path / "sub" / "r.json").read_text()


def test_report_rejects_foreign_json(tmp_path):
    (tmp_path / "x.json").write_text('{"hello": 1}')
    with pytest.raises(ReportError):
        read_report(tmp_path / "x.json")
    with pytest.raises(ReportError):
        read_report(tmp_path / "missing.json")
    with pytest.raises(ReportError):
        build_report({}, 5, 200)


def test_export_plot_data(tmp_path):
    paths = export_plot_data(_report(), tmp_path)
    names = {p.name for p in paths}
    assert {"latency_overview.csv", "latency_vs_rand.csv", "access_rate.csv",
            "latency_deviation.csv", "abs_reward.csv"} <= names
    with open(tmp_path / "latency_overview.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == ["policy", "percentile_label", "latency_seconds"]
    assert {r["policy"] for r in rows} == {"SafeTail", "Target", "Oracle", "Rand-1"}
    with open(tmp_path / "abs_reward.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == ["window_index", "metric_value", "policy"]
    assert all(math.isclose(float(r["metric_value"]), 0.1) for r in rows if r["policy"] != "Oracle")
