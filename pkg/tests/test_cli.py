import csv
import io
import json

import pytest

from emvsym.cli import main
from emvsym.report import (COLUMNS, Cell, NoReference, compare, expected_rows, load_golden,
                           render_csv, run_matrix)


def run(*argv):
    out = io.StringIO()
    code = main(list(argv), out)
    return code, out.getvalue()


def test_list_commands():
    code, text = run("--list-configs", "--list-attacks")
    assert code == 0
    assert "Contact_CDA_OnlinePIN_Online" in text and "ctq-pin-bypass" in text
    assert "Mastercard_CDA_NoPIN_High  not applicable (3)" in text


def test_single_config_holds():
    code, text = run("--config", "Contact_CDA_OnlinePIN_Online", "--check")
    assert code == 0
    for prop in ("bank-accepts", "auth-to-terminal", "auth-to-bank"):
        assert f"{prop}: holds" in text
    assert "check passed" in text


def test_attack_with_trace_dump():
    code, text = run("--config", "Visa_EMV_High", "--attack", "ctq-pin-bypass", "--dump-trace")
    assert code == 0
    assert "auth-to-terminal: violated (1)" in text
    assert "-- transcript" in text and "CTQ:8000" in text and "CTQ:0080" in text


def test_errors(capsys):
    assert run("--config", "Visa_Gold")[0] == 2
    assert run("--config", "Visa_EMV_High", "--attack", "nope")[0] == 2
    code, text = run("--config", "Mastercard_SDA_NoPIN_High")
    assert code == 3 and "not applicable (3)" in text
    with pytest.raises(SystemExit):
        run("--fixes", "9")
    with pytest.raises(SystemExit):
        run("--attack", "tc-modification")
    assert run("--suite", "contactless", "--fixes", "1", "--check")[0] == 2
    assert "no reference" in capsys.readouterr().err


def test_matrix_formats_and_determinism(tmp_path):
    code, text = run("--suite", "contactless", "--format", "csv", "--check",
                     "--output", str(tmp_path))
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(text)))
    assert len(rows) == 16
    emv_high = next(r for r in rows if r["config"] == "Visa_EMV_High")
    assert [emv_high[c] for c in COLUMNS] == ["ok", "ok", "x(1)", "x(1)"]
    assert (tmp_path / "matrix.png").stat().st_size > 1000
    assert (tmp_path / "matrix.csv").read_text() == text
    data = json.loads((tmp_path / "matrix.json").read_text())
    assert data["secrecy"]["contactless"] == {"PIN": True, "PAN": False, "keys": True}
    assert run("--suite", "contactless", "--format", "csv")[1] == text
    code, text = run("--suite", "contactless", "--fixes", "1,2,3a", "--check")
    assert code == 0 and "Visa_EMV_High" in text


def test_check_reports_mismatch():
    m = run_matrix("contactless", configs=[])
    assert compare(m) == []
    golden = load_golden()
    golden["contactless"][0] = ["Visa_EMV_Low", "ok", "ok", "ok", "ok"]
    m = run_matrix("contactless")
    bad = compare(m, golden)
    assert [(x.config, x.column) for x in bad] == [("Visa_EMV_Low", "auth-to-terminal"),
                                                   ("Visa_EMV_Low", "auth-to-bank")]


def test_reference_for_fixes():
    with pytest.raises(NoReference):
        expected_rows(["2", "3a"])
    rows = expected_rows(["1", "2", "3b"])
    assert rows["Visa_DDA_Low"][1:] == ["ok"] * 4
    assert rows["Mastercard_SDA_NoPIN_Low"][2] == [2]


def test_cell_rendering():
    assert Cell(False, (1, 2)).text() == "✗(1,2)" and Cell(True).text() == "✓"
    assert Cell(None, (3,)).code == "na3" and Cell(None).plain() == "na"
    assert render_csv(run_matrix("contact", configs=[])).startswith("line,config,")
