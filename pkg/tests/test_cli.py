"""Command-line harness: exit codes, CSV/trace schemas, determinism."""
import csv
import io
import json

import pytest

from coalflip import (
    MultiRoundProtocol,
    RangedFunction,
    biased,
    coalition_influence,
    optimal_influence,
    protocol_zoo,
    uniform,
)
from coalflip.adversary import Strategy, strategy_influence
from coalflip import cli


def run(argv, capsys):
    code = cli.main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def rows_of(text):
    reader = csv.DictReader(io.StringIO(text))
    return list(reader)


# --- exit codes and argument validation --------------------------------------


def test_missing_seed_exits_3(capsys):
    code, _, err = run(["influence", "--function", "or", "--n", "4",
                        "--S", "1", "--b", "1"], capsys)
    assert code == 3
    assert "seed" in err


def test_unknown_flag_exits_3():
    with pytest.raises(SystemExit) as exc:
        cli.main(["influence", "--function", "or", "--no-such-flag", "1"])
    assert exc.value.code == 3


def test_unknown_subcommand_exits_3():
    with pytest.raises(SystemExit) as exc:
        cli.main(["frobnicate", "--seed", "0"])
    assert exc.value.code == 3


def test_bad_config_field_exits_3(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"bogus": 1, "seed": 0}))
    code, _, err = run(["zoo", "--config", str(cfg)], capsys)
    assert code == 3
    assert "bogus" in err


def test_coalition_out_of_range_exits_3(capsys):
    code, _, _ = run(["influence", "--function", "or", "--n", "4",
                   "--measure", "uniform:4", "--S", "5", "--b", "1",
                   "--seed", "0"], capsys)
    assert code == 3


def test_budget_exit_4_and_mc_downgrade(capsys):
    argv = ["influence", "--function", "or", "--n", "30",
            "--measure", "uniform:30", "--S", "1", "--b", "1", "--seed", "0"]
    code, _, _ = run(argv, capsys)
    assert code == 4

    code, out, _ = run(argv + ["--allow-mc-downgrade", "--mc-samples", "2000"], capsys)
    assert code == 0
    (row,) = rows_of(out)
    assert row["method"] == "monte-carlo"
    assert row["downgraded"] == "1"
    assert float(row["value"]) == 1.0  # fixing one input forces the OR


def test_failed_verification_exits_2_and_expect_failed_resets(capsys):
    argv = ["verify-prop22", "--function", "parity", "--n", "8",
            "--measure", "biased:0.125:8", "--boosted-coeff", "1e-9",
            "--draws", "800", "--seed", "5"]
    code, out, _ = run(argv, capsys)
    assert code == 2
    (row,) = rows_of(out)
    assert row["passed"] == "0"
    assert float(row["fraction"]) < float(row["bound"])

    code, _, _ = run(argv + ["--expect-failed"], capsys)
    assert code == 0


# --- configuration merge ------------------------------------------------------


def test_config_file_supplies_defaults_and_flags_override(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "function": "or", "n": 4, "measure": "uniform:4",
        "S": "1", "b": 1, "seed": 7,
    }))
    code, out, _ = run(["influence", "--config", str(cfg)], capsys)
    assert code == 0
    (row,) = rows_of(out)
    assert float(row["value"]) == 1.0
    assert row["seed"] == "7"

    code, out, _ = run(["influence", "--config", str(cfg), "--b", "0"], capsys)
    assert code == 0
    (row,) = rows_of(out)
    assert float(row["value"]) == 0.125  # free coords must all be 0: (1/2)^3


# --- row schema ----------------------------------------------------------------


def test_influence_row_schema(capsys):
    code, out, _ = run(["influence", "--function", "or", "--n", "4",
                     "--measure", "uniform:4", "--S", "1;3", "--b", "0",
                     "--seed", "11"], capsys)
    assert code == 0
    reader = csv.reader(io.StringIO(out))
    header = next(reader)
    assert header == ["experiment", "function", "measure", "n", "coalition",
                      "target", "seed", "value", "radius", "samples", "method",
                      "downgraded", "runtime_ms"]
    data = next(reader)
    row = dict(zip(header, data))
    assert row["experiment"] == "influence"
    assert row["coalition"] == "1;3"  # 1-based, semicolon-joined
    assert row["downgraded"] == "0"  # booleans are 0/1
    assert float(row["value"]) == 0.25  # coalition zeros its pair, rest free
    assert row["value"] == "%.17g" % 0.25


def test_measure_defaults_to_uniform_over_arity(capsys):
    code, out, _ = run(["influence", "--function", "constant:1", "--S", "",
                     "--b", "1", "--seed", "0"], capsys)
    assert code == 0
    (row,) = rows_of(out)
    assert row["measure"] == "uniform:1"
    assert row["coalition"] == ""
    assert float(row["value"]) == 1.0


def test_boosted_influence_has_t_column(capsys):
    code, out, _ = run(["boosted-influence", "--function", "or", "--n", "4",
                     "--measure", "uniform:4", "--t", "2", "--S", "",
                     "--b", "1", "--seed", "0"], capsys)
    assert code == 0
    (row,) = rows_of(out)
    assert row["t"] == "2"
    # boosting doubles the chance each coordinate is 1: p' = 1 - (1/2)^2
    assert float(row["value"]) == pytest.approx(1.0 - 0.25**4, abs=1e-15)


def test_resilience_row_reports_witness(capsys):
    code, out, _ = run(["resilience", "--function", "or", "--n", "16",
                     "--measure", "biased:0.0625:16", "--epsilon", "0.1",
                     "--ell", "1", "--seed", "0"], capsys)
    assert code == 0
    (row,) = rows_of(out)
    assert row["resilient"] == "0"
    assert row["witness_target"] == "1"
    assert len(row["witness_coalition"].split(";")) == 1


def test_or_example_rows_match_closed_forms(capsys):
    n, p = 8, 0.125
    code, out, _ = run(["verify-or-example", "--n", str(n), "--p", str(p),
                     "--seed", "1"], capsys)
    assert code == 0
    rows = rows_of(out)
    assert len(rows) == 2 * n
    for row in rows:
        s, b = int(row["s"]), int(row["target"])
        if b == 0:
            expect = (1.0 - p) ** (n - s)
        else:
            expect = 1.0 if s > 0 else 1.0 - (1.0 - p) ** n
        assert float(row["value"]) == pytest.approx(expect, abs=1e-12)
        assert float(row["complement"]) == pytest.approx(1.0 - expect, abs=1e-12)


def test_zoo_lists_functions_and_protocols(capsys):
    code, out, _ = run(["zoo", "--seed", "0"], capsys)
    assert code == 0
    rows = rows_of(out)
    kinds = [r["kind"] for r in rows]
    assert kinds.count("function") >= 20
    assert kinds.count("protocol") >= 5
    by_name = {r["name"]: r for r in rows}
    assert float(by_name["or"]["mean_uniform"]) == pytest.approx(1 - 2.0**-16)
    assert by_name["or8-xor-maj8"]["r"] == "2"


# --- determinism and sidecars ----------------------------------------------------


def strip_runtime(text):
    out = []
    for line in text.strip().split("\n"):
        out.append(line.rsplit(",", 1)[0])
    return "\n".join(out)


def test_search_single_reruns_are_identical(tmp_path, capsys):
    argv = ["search-single", "--function", "tribes:4", "--n", "16",
            "--measure", "biased:0.0625:16", "--epsilon", "0.25", "--seed", "3"]
    texts, traces = [], []
    for i in range(2):
        trace = tmp_path / f"t{i}.json"
        code, out, _ = run(argv + ["--trace-out", str(trace)], capsys)
        assert code == 0
        texts.append(strip_runtime(out))
        traces.append(trace.read_text())
    assert texts[0] == texts[1]
    assert traces[0] == traces[1]
    payload = json.loads(traces[0])
    assert payload["schema_version"] == cli.SCHEMA_VERSION
    assert payload["experiment"] == "search-single"
    assert "runtime" not in traces[0]


def test_out_file_matches_stdout(tmp_path, capsys):
    argv = ["influence", "--function", "majority", "--n", "5",
            "--measure", "uniform:5", "--S", "1", "--b", "1", "--seed", "2"]
    code, out, _ = run(argv, capsys)
    assert code == 0
    dest = tmp_path / "rows.csv"
    code, silent, _ = run(argv + ["--out", str(dest)], capsys)
    assert code == 0 and silent == ""
    assert strip_runtime(dest.read_text()) == strip_runtime(out)


# --- agreement with the library ---------------------------------------------------


def test_search_row_certificate_is_reproducible(capsys):
    code, out, _ = run(["search-single", "--function", "or", "--n", "16",
                     "--measure", "biased:0.0625:16", "--epsilon", "0.25",
                     "--seed", "9"], capsys)
    assert code == 0
    (row,) = rows_of(out)
    assert row["status"] == "SUCCESS"
    assert row["method"] == "exact"
    S = tuple(int(i) - 1 for i in row["coalition"].split(";"))
    est = coalition_influence(RangedFunction.or_function(16), biased(1 / 16, 16),
                              S, int(row["target"]))
    assert est.value == float(row["value"])
    assert float(row["value"]) >= float(row["threshold"])


def test_adversary_dp_row_and_strategy_trace(tmp_path, capsys):
    trace = tmp_path / "dp.json"
    code, out, _ = run(["adversary-dp", "--protocol", "zoo:or8-xor-maj8",
                     "--S", "1;2", "--b", "1", "--seed", "0",
                     "--trace-out", str(trace)], capsys)
    assert code == 0
    (row,) = rows_of(out)
    F = protocol_zoo()["or8-xor-maj8"]
    val = optimal_influence(F, (0, 1), 1)
    assert float(row["value"]) == val.value
    assert row["method"] == "exact"

    payload = json.loads(trace.read_text())
    strat = Strategy.from_obj(payload["traces"][0]["strategy"])
    assert strategy_influence(F, strat, 1).value == pytest.approx(val.value, abs=1e-12)


def test_search_multi_accepts_protocol_files(tmp_path, capsys):
    F = MultiRoundProtocol(RangedFunction.parity(8), (uniform(4), uniform(4)))
    path = tmp_path / "proto.json"
    path.write_text(json.dumps(F.to_obj()))
    code, out, _ = run(["search-multi", "--protocol", f"file:{path}",
                     "--epsilon", "0.3", "--seed", "4"], capsys)
    assert code == 0
    (row,) = rows_of(out)
    assert row["status"] == "SUCCESS"
    assert row["n"] == "4" and row["r"] == "2"
    assert len(row["coalition"].split(";")) == 1  # parity falls to one player
    assert float(row["value"]) == 1.0


def test_threads_env_accepted(capsys, monkeypatch):
    monkeypatch.setenv("COALFLIP_THREADS", "4")
    code, _, _ = run(["zoo", "--seed", "0"], capsys)
    assert code == 0
