import json
import math
from pathlib import Path

import pytest

from orlicz_kls import report as rep
from orlicz_kls.cli import ENV_OUTDIR, main
from orlicz_kls.config import parse_config

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

SMALL = """
schema_version = 1
n = 2
seed = 3
[family]
kind = "laplace"
[sampler]
count = 8000
[spectral]
cells = 10
directions = 32
"""


@pytest.fixture(autouse=True)
def outdir(tmp_path, monkeypatch):
    monkeypatch.setenv(ENV_OUTDIR, str(tmp_path))
    return tmp_path


@pytest.fixture(scope="module")
def small_rows():
    return rep.run_verify_suite(parse_config(SMALL))


def test_small_ledger_passes(small_rows):
    assert rep.all_passed(small_rows)
    statuses = {r.status for r in small_rows}
    assert statuses <= {rep.PASS, rep.SKIPPED, rep.SKIPPED_INFINITE, rep.REPORT}
    assert rep.PASS in statuses
    for r in small_rows:
        if r.status == rep.PASS and r.unit == "sigma":
            assert r.margin >= -3.0


def test_all_passed_ignores_fitted_rows():
    bad_fit = rep.LedgerRow("fit", "x", rep.FAIL, 1.0, 0.0, -1.0, "abs", kind="fitted")
    bad = rep.LedgerRow.compare("c", "x", 2.0, 1.0)
    assert rep.all_passed([bad_fit])
    assert bad.status == rep.FAIL and not rep.all_passed([bad])
    assert rep.LedgerRow.compare("c", "x", 0.5, 1.0, upper=False, sigma=0.2).margin == pytest.approx(-2.5)


def test_ledger_csv_round_trip(small_rows):
    meta, header, rows = rep.read_csv(rep.ledger_csv(small_rows))
    assert int(meta["rows"]) == len(small_rows) == len(rows)
    assert header[:3] == ["check", "anchor", "status"]
    for got, row in zip(rows, small_rows):
        assert got[2] == row.status
        v = float(got[3])
        assert (math.isnan(v) and math.isnan(row.value)) or v == row.value


def test_csv_preserves_floats_exactly():
    vals = [[0.1, 1 / 3, math.pi], [1e-300, -2.5, math.inf]]
    meta, header, rows = rep.read_csv(rep.rows_to_csv(["a", "b", "c"], vals, {"k": "v"}))
    assert meta == {"rows": "2", "k": "v"}
    assert [[float(x) for x in r] for r in rows] == vals


def test_json_is_strict_and_sorted():
    text = rep.to_json({"b": math.inf, "a": [1.0, math.nan]})
    assert json.loads(text) == {"a": [1.0, "nan"], "b": "inf"}
    assert text.index('"a"') < text.index('"b"')


def test_cli_verify_writes_ledger_and_json(outdir):
    cfg = outdir / "small.toml"
    cfg.write_text(SMALL)
    code = main(["verify", "--config", str(cfg), "--json", str(outdir / "ledger.json")])
    assert code == 0
    meta, _, rows = rep.read_csv((outdir / "run_ledger.csv").read_text())
    doc = json.loads((outdir / "ledger.json").read_text())
    assert len(doc["rows"]) == len(rows) == int(meta["rows"])


def test_cli_bad_config_exits_2(outdir, capsys):
    cfg = outdir / "bad.toml"
    cfg.write_text('n = 2\n[family]\nkind = "laplace"\nbogus = 1\n')
    assert main(["criterion", "--config", str(cfg)]) == 2
    assert "ParseError" in capsys.readouterr().err


def test_cli_explicit_level_below_minimum_exits_2(outdir):
    cfg = outdir / "low.toml"
    cfg.write_text('n = 2\nlevel = -1.0\n[family]\nkind = "laplace"\n')
    assert main(["criterion", "--config", str(cfg)]) == 2


def test_cli_profile_csv(outdir):
    path = outdir / "p.csv"
    assert main(["profile", "--config", str(CONFIGS / "l1_n2.toml"), "--csv", str(path), "--spacing", "0.1"]) == 0
    meta, header, rows = rep.read_csv(path.read_text())
    assert header == ["E", "phi", "vol_root", "Z_E"]
    assert meta["spacing"] == "0.1" and int(meta["rows"]) == len(rows) > 10
    E = [float(r[0]) for r in rows]
    assert all(b - a == pytest.approx(0.1) for a, b in zip(E, E[1:]))


@pytest.mark.parametrize("measure", ["uniform", "cone", "annulus"])
def test_cli_sample_csv(outdir, measure):
    path = outdir / f"{measure}.csv"
    args = ["sample", "--config", str(CONFIGS / "l1_n2.toml"), "--measure", measure,
            "--count", "500", "--seed", "4", "--csv", str(path)]
    assert main(args) == 0
    meta, header, rows = rep.read_csv(path.read_text())
    assert meta["seed"] == "4" and meta["measure"].startswith(measure[:4])
    assert header == ["chain", "x0", "x1"] and len(rows) == 500


def test_criterion_json_fields(outdir):
    path = outdir / "c.json"
    cfg_path = outdir / "small.toml"
    cfg_path.write_text(SMALL)
    assert main(["criterion", "--config", str(cfg_path), "--out", str(path)]) == 0
    doc = json.loads(path.read_text())
    assert doc["n"] == 2
    assert doc["E_V"] == pytest.approx(rep.Run(parse_config(SMALL)).prod.E_V, rel=1e-12)
    assert float(doc["E_min"]) <= float(doc["E_V"]) <= float(doc["E_max"])


def test_steep_tail_rows_are_skipped_infinite():
    cfg = parse_config((CONFIGS / "steep_tail_n4.toml").read_text().replace("n = 4", "n = 2")
                       + "[sampler]\ncount = 4000\n")
    rows = rep.run_verify_suite(cfg)
    assert any(r.status == rep.SKIPPED_INFINITE for r in rows)
    assert rep.all_passed(rows)
