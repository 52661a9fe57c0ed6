import json
import math

import pytest

from iecsi.cli import main
from iecsi.config import ConfigError, parse_config

GOOD = """
[experiment]
name = unit
seed = 3
[scenario]
base = indoor-like
n_tx = 8
n_subcarriers = 64
[grouping]
n_gr = 16
[codec]
d_ff = 64
[evaluation]
bits = 64, 256
snr_db = inf, 10
"""


def test_parse_good_config():
    cfg = parse_config(GOOD)
    assert cfg.codec.n_tx == 8 and cfg.codec.n_c == 64 and cfg.codec.n_grp == 4
    assert cfg.evaluation.snr_db == (math.inf, 10.0)
    assert cfg.codec_for(64).l_q == 32
    assert json.loads(cfg.to_json())["evaluation"]["snr_db"] == ["inf", 10.0]


@pytest.mark.parametrize("snippet, fragment", [
    ("[bogus]\n", "unknown section [bogus]"),
    ("[codec]\nn_tx = 4\n", "derived"),
    ("[codec]\nfoo = 1\n", "unknown key 'foo'"),
    ("[grouping]\nn_gr = 5\n", "must divide"),
    ("[evaluation]\nbits = 7\n", "multiple of q"),
    ("[training]\nlr = fast\n", "lr"),
    ("[augmentation]\nkdda_granularities = 3\n", "granularity 3"),
    ("[scenario]\nbase = moon\n", "base must be one of"),
])
def test_each_problem_reported(snippet, fragment):
    with pytest.raises(ConfigError) as info:
        parse_config(snippet)
    assert any(fragment in e for e in info.value.errors)


def test_all_problems_collected():
    with pytest.raises(ConfigError) as info:
        parse_config("[bogus]\n[codec]\nfoo = 1\n[evaluation]\nbits = 7\n")
    assert len(info.value.errors) == 3


def _run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_cli_usage_error(capsys):
    code, _, err = _run(capsys, "generate-data", "--samples", "2")
    assert code == 2
    assert json.loads(err)["error"] == "UsageError"


def test_cli_config_error(capsys, tmp_path):
    p = tmp_path / "bad.ini"
    p.write_text("[codec]\nbits = x\n")
    code, _, err = _run(capsys, "sweep", p, "--out", tmp_path / "out")
    payload = json.loads(err)
    assert code == 2 and payload["error"] == "ConfigError" and payload["errors"]


def test_cli_format_error_carries_offset(capsys, tmp_path):
    p = tmp_path / "junk.csib"
    p.write_bytes(b"NOPE" + bytes(40))
    code, _, err = _run(capsys, "augment-kdda", "--input", p, "--out-low", tmp_path / "o")
    payload = json.loads(err)
    assert code == 1 and payload["error"] == "FormatError" and payload["offset"] == 0


def test_cli_pipeline(capsys, tmp_path):
    common = ["--scenario", "indoor-like", "--n-tx", "8", "--n-c", "64"]
    assert _run(capsys, "generate-data", *common, "--samples", 4, "--seed", 1, "--out", tmp_path / "tr")[0] == 0
    assert _run(capsys, "generate-data", *common, "--samples", 3, "--seed", 2, "--out", tmp_path / "va")[0] == 0
    code, out, _ = _run(capsys, "augment-kdda", "--input", tmp_path / "tr", "--out-low", tmp_path / "al",
                        "--out-full", tmp_path / "af")
    assert code == 0 and json.loads(out)["per_sample"] == 30
    code, out, err = _run(capsys, "train-codec", "--train", tmp_path / "tr", "--val", tmp_path / "va",
                          "--extra-low", tmp_path / "al", "--extra-full", tmp_path / "af",
                          "--codec", "d_ff=64", "--codec", "bits=64", "--max-steps", 3, "--epochs", 3,
                          "--out", tmp_path / "c.iefm")
    assert code == 0, err
    code, out, err = _run(capsys, "evaluate", "--checkpoint", tmp_path / "c.iefm", "--test", tmp_path / "va",
                          "--snr-db", "inf,10", "--out", tmp_path / "e.csv")
    assert code == 0, err
    assert len((tmp_path / "e.csv").read_text().splitlines()) == 3


def test_cli_complexity_report(capsys, tmp_path):
    code, out, err = _run(capsys, "complexity-report", "--out-dir", tmp_path)
    assert code == 0, err
    data = json.loads((tmp_path / "complexity.json").read_text())
    rows = {r["component"]: r for r in data["components"]}
    assert rows["extrapolation"]["params"] == 135_168
    assert data["extras"]["cen_over_fen_k3"] == 25.5
