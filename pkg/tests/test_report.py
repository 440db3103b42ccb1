import json
import math

import pytest

from harnacklab.report import (
    CLAIMS,
    REPORT_FIELDS,
    ReportRow,
    all_passed,
    decide,
    render_csv,
    summarize,
    write_report,
    write_table,
)


def test_decide():
    assert decide(1.0, 1.0, ">=")
    assert not decide(1.0, 1.0, ">")
    assert decide(0.5, 1.0, "<=")
    assert not decide(math.nan, 0.0, ">=")
    assert decide(math.nan, 0.0, "info")
    with pytest.raises(ValueError):
        decide(1.0, 0.0, "==")


def test_rows_need_registered_claims():
    row = ReportRow.check("masson", "masson-positive", 0.2, 0.0, ">", uncertainty=0.01)
    assert row.passed
    assert row.to_dict() == {
        "scenario": "masson",
        "claim": "masson-positive",
        "measured": 0.2,
        "uncertainty": 0.01,
        "threshold": 0.0,
        "op": ">",
        "passed": True,
        "detail": "",
    }
    with pytest.raises(KeyError):
        ReportRow.check("masson", "not-a-claim", 0.2, 0.0, ">")
    assert "masson-positive" in CLAIMS


def test_every_claim_names_the_result_it_checks():
    for tag, claim in CLAIMS.items():
        assert claim.statement.strip(), tag
        assert claim.anchor.strip(), tag
    assert "c_d/2n" in CLAIMS["strip-bound-limit"].statement


def test_csv_cells():
    text = render_csv(("a", "b", "c", "d"), [(0.1, True, (1, 2), "x")])
    assert text == "a,b,c,d\n0.10000000000000001,true,1 2,x\n"


def test_reports_are_byte_stable(tmp_path):
    rows = [
        ReportRow.check("lemma-grid", "lemma-gap-nonnegative", 1e-3, 0.0, ">=", runtime=1.5),
        ReportRow.check("lemma-grid", "reflection-sum-bound", 2.5, 2.0, "<=", runtime=0.5),
    ]
    first = write_report(rows, "csv", str(tmp_path / "a" / "report.csv"))
    second = write_report(rows, "csv", str(tmp_path / "b" / "report.csv"))
    assert open(first).read() == open(second).read()
    header = open(first).readline().strip().split(",")
    assert header == list(REPORT_FIELDS)


def test_json_report_with_runtime(tmp_path):
    rows = [ReportRow.check("masson", "masson-positive", 0.3, 0.0, ">", runtime=2.0)]
    path = write_report(rows, "json", str(tmp_path / "report.json"), include_runtime=True)
    data = json.load(open(path))
    assert data[0]["runtime"] == 2.0
    assert data[0]["measured"] == 0.3
    with pytest.raises(ValueError):
        write_report(rows, "xml", str(tmp_path / "report.xml"))


def test_json_and_csv_print_the_same_digits(tmp_path):
    rows = [ReportRow.check("masson", "masson-positive", 0.1, 0.0, ">", uncertainty=math.nan)]
    csv_text = open(write_report(rows, "csv", str(tmp_path / "r.csv"))).read()
    json_text = open(write_report(rows, "json", str(tmp_path / "r.json"))).read()
    assert "0.10000000000000001" in csv_text
    assert "\"measured\": 0.10000000000000001," in json_text
    data = json.loads(json_text)
    assert data[0]["measured"] == 0.1 and math.isnan(data[0]["uncertainty"])
    assert data[0]["passed"] is True
    assert write_report([], "json", str(tmp_path / "empty.json")) and open(tmp_path / "empty.json").read() == "[]\n"


def test_write_table_leaves_no_temporaries(tmp_path):
    write_table(str(tmp_path / "t.csv"), ("x",), [(1,), (2,)])
    assert [p.name for p in tmp_path.iterdir()] == ["t.csv"]


def test_summary():
    rows = [
        ReportRow.check("masson", "masson-positive", 0.3, 0.0, ">"),
        ReportRow.check("masson", "masson-n-stability", 0.5, 0.25, "<="),
    ]
    assert not all_passed(rows)
    text = summarize(rows)
    assert text.splitlines()[0] == "1/2 claim rows passed"
    assert "FAIL masson masson-n-stability" in text
