import csv
import json

import pytest

from edgelift import ExperimentConfig, SimulationParams, simulate
from edgelift.cli import main
from edgelift.ingest import write_edge_file
from edgelift.report import Report, commentary, render_report, run_analysis

ZERO_CENTERED = [
    "corrected_lift", "corrected_effect_abs", "q1", "send_lift", "receive_lift", "approx_lift",
    "response_contrast", "affinity_balance", "perfect_affinity_gap", "tt_vs_cc", "tc_vs_cc",
    "ct_vs_cc",
]


def _analyze(params, iterations=300, **cfg):
    edges, t = simulate(params)
    config = ExperimentConfig(p=params.p, n_treated=t.n_treated, n_control=t.n_control,
                              iterations=iterations, seed=params.seed, **cfg)
    return run_analysis(config, edges)


@pytest.fixture(scope="module")
def placebo_report():
    # generated placebo fixture
    return _analyze(SimulationParams(n=1000, p=0.5, lam=0.02, seed=5))


@pytest.fixture(scope="module")
def affinity_report():
    return _analyze(SimulationParams(n=2000, p=0.5, lam=0.02, q1=0.3, alpha=0.3,
                                     perfect_affinity=True, seed=0))


def test_placebo_commentary_and_cis(placebo_report):
    assert any(c.startswith("No detectable treatment effect") for c in placebo_report.commentary)
    for name in ZERO_CENTERED:
        s = placebo_report.significance[name]
        assert s["ci_low"] <= 0.0 <= s["ci_high"], name


def test_placebo_text_has_class_rates(placebo_report):
    text = render_report(placebo_report, "text")
    for c in ("TT", "TC", "CT", "CC"):
        assert f"{c} rate:" in text
    for section in ("Class totals", "Contrasts", "Estimates", "Significance", "Commentary"):
        assert f"== {section}" in text


def test_estimates_carry_ci_mode_iterations(placebo_report):
    for e in placebo_report.estimates.values():
        assert {"value", "ci_low", "ci_high", "p_value", "mode", "iterations"} <= set(e)
        assert e["mode"] == "full" and e["iterations"] == 300


def test_json_round_trip(placebo_report):
    text = render_report(placebo_report, "json")
    assert Report.from_dict(json.loads(text)) == placebo_report


def test_commentary_is_deterministic(placebo_report):
    assert commentary(placebo_report) == placebo_report.commentary


def test_perfect_affinity_commentary(affinity_report):
    assert any(c.startswith("Perfect affinity") for c in affinity_report.commentary)
    assert affinity_report.significance["corrected_lift"]["p_value"] < 0.05


def test_recipient_side_receive_lift(affinity_report):
    entry = affinity_report.significance["receive_lift@recipient"]
    assert entry["mode"] == "recipient" and entry["p_value"] is not None


def _alpha_report(valid):
    r = Report.from_dict(json.loads(render_report(
        _analyze(SimulationParams(n=300, p=0.5, lam=0.05, seed=1), iterations=100), "json")))
    r.alpha["valid"] = valid
    return r


def test_invalid_alpha_caveat():
    assert "CAVEAT: alpha is not valid" in render_report(_alpha_report(False), "text")
    assert "CAVEAT" not in render_report(_alpha_report(True), "text")


@pytest.mark.parametrize(
    "cfg, fragment",
    [(dict(window_days=3), "shorter than 7"), (dict(p=0.9), "very uneven ramp")],
)
def test_warning_rules(cfg, fragment):
    p = cfg.pop("p", 0.5)
    r = _analyze(SimulationParams(n=300, p=p, lam=0.05, seed=2), iterations=50, **cfg)
    assert any(fragment in w for w in r.warnings)


def test_no_warnings_for_clean_setup():
    r = _analyze(SimulationParams(n=300, p=0.5, lam=0.05, seed=2), iterations=50, window_days=14)
    assert not any("shorter" in w or "uneven" in w for w in r.warnings)


def test_cli_e1(e1_file, tmp_path, capsys):
    out = tmp_path / "r.json"
    code = main(["analyze", "--input", str(e1_file), "--p", "0.5", "--iterations", "100",
                 "--seed", "1", "--out", str(out)])
    assert code == 0
    d = json.loads(out.read_text())
    assert d["estimates"]["corrected_total_effect_abs"]["value"] == -8.0
    assert d["estimates"]["corrected_lift_pct"]["value"] == -0.4
    for e in d["estimates"].values():
        assert "ci_low" in e and "ci_high" in e
    assert d["class_totals"]["m_tt"] == 3


def test_cli_byte_identical(e1_file, tmp_path):
    paths = [tmp_path / "a.json", tmp_path / "b.json"]
    for p in paths:
        main(["analyze", "--input", str(e1_file), "--p", "0.5", "--iterations", "50",
              "--out", str(p)])
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_cli_text_format(e1_file, capsys):
    assert main(["analyze", "--input", str(e1_file), "--p", "0.5", "--iterations", "20",
                 "--format", "text"]) == 0
    assert "== Estimates ==" in capsys.readouterr().out


def test_cli_input_error(write_lines, capsys):
    path = write_lines("1,1,3,1,1\n")
    assert main(["analyze", "--input", str(path), "--p", "0.5"]) == 2
    assert "line 1" in capsys.readouterr().err


def test_cli_missing_file(tmp_path):
    assert main(["analyze", "--input", str(tmp_path / "nope.csv"), "--p", "0.5"]) == 2


def test_cli_degenerate(write_lines, capsys):
    path = write_lines("1,2,3,1,0\n")
    assert main(["analyze", "--input", str(path), "--p", "0.5"]) == 3
    assert "degenerate" in capsys.readouterr().err


def test_cli_simulate_and_dump_null(tmp_path):
    sim = tmp_path / "sim.csv"
    assert main(["simulate", "--n", "300", "--lambda", "0.05", "--q1", "0.2", "--q2", "0.2",
                 "--alpha", "0.3", "--seed", "4", "--out", str(sim)]) == 0
    truth = json.loads((tmp_path / "sim.truth.json").read_text())
    assert truth["truth"]["true_corrected_lift"] == pytest.approx(0.2 / 0.7)
    dump = tmp_path / "null.csv"
    assert main(["dump-null", "--input", str(sim), "--p", "0.5", "--iterations", "40",
                 "--n-treated", str(truth["truth"]["n_treated"]),
                 "--n-control", str(truth["truth"]["n_control"]),
                 "--statistics", "corrected_lift,send_lift", "--out", str(dump)]) == 0
    rows = list(csv.reader(dump.open()))
    assert rows[0] == ["iteration", "corrected_lift", "send_lift"] and len(rows) == 41


def test_cli_calibrate_small(tmp_path, capsys):
    assert main(["calibrate", "--replicates", "3", "--n", "300", "--iterations", "50",
                 "--statistic", "corrected_lift", "--statistic", "placebo_spread"]) == 0
    d = json.loads(capsys.readouterr().out)
    assert set(d) == {"corrected_lift", "placebo_spread"}
    assert d["corrected_lift"]["replicates"] == 3


def test_write_edge_file_feeds_cli(tmp_path, e1_edges):
    path = tmp_path / "e.tsv"
    write_edge_file(e1_edges, path)
    assert main(["analyze", "--input", str(path), "--p", "0.5", "--iterations", "10",
                 "--out", str(tmp_path / "r.json")]) == 0


def test_affinity_commentary_follows_balance():
    skewed = _analyze(SimulationParams(n=2000, p=0.5, lam=0.02, q1=0.4, q2=0.1, alpha=0.3, seed=1))
    assert any("preferentially at treated" in c for c in skewed.commentary)
    even = _analyze(SimulationParams(n=2000, p=0.5, lam=0.02, q1=0.2, q2=0.2, alpha=0.3, seed=1))
    assert not any(c.startswith(("Affinity", "Perfect affinity")) for c in even.commentary)
