import csv
import io

import numpy as np
import pytest

from twotimescale import cli
from twotimescale.config import (ConfigError, dump_config, load_preset, parse_config, parse_matrix,
                                 preset_path)

PRESETS = ["fig1a", "fig1b", "fig3", "polyak", "prop4_a", "prop4_b", "prop4_c", "prop4_d", "prop4_e", "rl_tdc"]

MINIMAL = """
[chain]
P = {P}
[problem]
A11[0] = -0.5
A11[1] = -2
A12[0] = -1
A12[1] = -1
A21[0] = 2.5
A21[1] = 1
A22[0] = 0
A22[1] = 3
b1[0] = -3/2
b1[1] = 3
b2[0] = 3
b2[1] = -6
[schedule]
alpha = 1
beta = 1
xi = 0.75
K0 = 1
[simulation]
paths = 4
horizon = 300
seed = 2
"""


def _value(text, label):
    return float(text.split(label)[1].split()[0])


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.mark.parametrize("name", PRESETS)
def test_presets_parse_and_round_trip(name):
    cfg = load_preset(name)
    text = dump_config(cfg)
    again = parse_config(text)
    assert dump_config(again) == text


def test_fig1a_tables(fig1a_problem):
    p = load_preset("fig1a").problem
    for k in ("A11", "A12", "A21", "A22", "b1", "b2"):
        np.testing.assert_array_equal(getattr(p, k), getattr(fig1a_problem, k))
    np.testing.assert_array_equal(p.chain.P, fig1a_problem.chain.P)


def test_parse_matrix_forms():
    np.testing.assert_array_equal(parse_matrix("1 2; 3,4"), [[1, 2], [3, 4]])
    assert parse_matrix("5/8") == pytest.approx(0.625)
    with pytest.raises(ConfigError, match="x.y"):
        parse_matrix("1 2; 3", "x.y")


def test_config_errors():
    good = MINIMAL.format(P="5/8 3/8; 3/4 1/4")
    parse_config(good)
    with pytest.raises(ConfigError, match="chain.P"):
        parse_config(MINIMAL.format(P="5/8 3/8; 3/4 0.24"))
    with pytest.raises(ConfigError, match=r"\[problem\]"):
        parse_config("[chain]\nP = 1\n[problem]\n")
    with pytest.raises(ConfigError, match="schedule.gamma"):
        parse_config(good.replace("K0 = 1", "K0 = 1\ngamma = 2"))
    with pytest.raises(ConfigError, match="unknown section"):
        parse_config(good + "\n[extra]\na = 1\n")
    with pytest.raises(ConfigError, match="b2"):
        parse_config(good.replace("b2[1] = -6\n", ""))
    with pytest.raises(ConfigError, match="schedule.xi"):
        parse_config(good.replace("xi = 0.75", "xi = 1.5"))
    with pytest.raises(ConfigError, match="mutually exclusive"):
        parse_config(good + "\n[system]\nA11 = 1\nA12 = 1\nA21 = 1\nA22 = 1\n")


def test_stochasticity_error_exit_code(tmp_path, capsys):
    f = tmp_path / "bad.cfg"
    f.write_text(MINIMAL.format(P="0.5 0.49; 0.5 0.5"))
    code, _, err = run(capsys, "simulate", str(f))
    assert code == 2 and "chain.P" in err
    code, _, err = run(capsys, "theory", str(tmp_path / "missing.cfg"))
    assert code == 2


def test_numerical_error_exit_code(tmp_path, capsys):
    text = MINIMAL.format(P="1/2 1/2; 1/2 1/2").replace("A22[0] = 0", "A22[0] = -3")
    f = tmp_path / "sing.cfg"
    f.write_text(text)
    code, _, err = run(capsys, "theory", str(f))
    assert code == 3 and "A22" in err


def test_simulate_csv_format(tmp_path, capsys):
    f = tmp_path / "ok.cfg"
    f.write_text(MINIMAL.format(P="5/8 3/8; 3/4 1/4"))
    code, out, _ = run(capsys, "simulate", str(f))
    assert code == 0
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0] == cli.CSV_HEADER
    assert rows[1][0] == "0" and rows[-1][0] == "300"
    for row in rows[1:]:
        assert len(row) == 11
        int(row[0]), int(row[9])
        assert float(row[10]) == pytest.approx(3.5, rel=1e-9)
    # 17 significant digits: values survive a float round trip exactly
    beta_k = float(rows[-1][2])
    assert beta_k == 1.0 / 301 ** 1.0
    # --out writes the same bytes
    out_file = tmp_path / "run.csv"
    assert run(capsys, "simulate", str(f), "--out", str(out_file))[0] == 0
    assert out_file.read_text() == out


def test_workers_do_not_change_output(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    common = ["simulate", "fig1a", "--paths", "6", "--horizon", "500"]
    assert run(capsys, *common, "--workers", "1", "--out", str(a))[0] == 0
    assert run(capsys, *common, "--workers", "3", "--out", str(b))[0] == 0
    assert a.read_bytes() == b.read_bytes()
    c = tmp_path / "c.csv"
    assert run(capsys, *common, "--seed", "5", "--out", str(c))[0] == 0
    assert c.read_bytes() != a.read_bytes()


def test_classify_lines(capsys):
    expect = {"prop4_a": "B:no C:no D:no", "prop4_b": "B:yes(kappa=0.2) C:no D:no",
              "prop4_c": "B:yes(kappa=1) C:yes D:no", "prop4_d": "C:no D:yes",
              "prop4_e": "C:yes D:yes"}
    for name, line in expect.items():
        code, out, _ = run(capsys, "classify", name)
        assert code == 0
        first = out.splitlines()[0]
        assert first == line if name in ("prop4_a", "prop4_b", "prop4_c") else first.endswith(line)
        assert first.startswith("B:yes") or name == "prop4_a"


def test_theory_polyak_closed_form(capsys):
    code, out, _ = run(capsys, "theory", "polyak")
    assert code == 0
    assert _value(out, "norm Sigma_y:") == pytest.approx(14, rel=1e-10)
    gap = float(out.split("max difference to Sigma_y:")[1].split()[0])
    assert gap < 1e-10


def test_theory_fig1a(capsys):
    code, out, _ = run(capsys, "theory", "fig1a")
    assert code == 0
    assert _value(out, "norm Sigma_y:") == pytest.approx(3.5, rel=1e-10)
    gap = float(out.split("max difference:")[1].split()[0])
    assert gap < 1e-7


def test_validate_reports(capsys):
    code, out, _ = run(capsys, "validate", "fig1a")
    assert code == 0 and "all conditions hold" in out
    code, out, _ = run(capsys, "validate", "fig1a", "--beta", "0.25")
    assert code == 0 and "fail" in out


def test_sweep_outputs(tmp_path, capsys):
    code, _, _ = run(capsys, "sweep", "fig1a", "--xi", "0.6,0.75", "--paths", "4", "--horizon", "200",
                     "--out", str(tmp_path))
    assert code == 0
    assert (tmp_path / "xi_0.6.csv").exists() and (tmp_path / "xi_0.75.csv").exists()
    rows = list(csv.reader(open(tmp_path / "summary.csv")))
    assert rows[0][:2] == ["param", "value"] and len(rows) == 3
    assert [r[0] for r in rows[1:]] == ["xi", "xi"]
    assert run(capsys, "sweep", "fig1a", "--out", str(tmp_path))[0] == 2
    assert run(capsys, "sweep", "fig1a", "--xi", "0.5", "--beta", "1", "--out", str(tmp_path))[0] == 2


def test_rl_columns(tmp_path, capsys):
    out = tmp_path / "rl.csv"
    code, _, err = run(capsys, "rl", "rl_tdc", "--paths", "3", "--horizon", "200", "--out", str(out))
    assert code == 0 and "Hurwitz" in err
    rows = list(csv.reader(open(out)))
    assert rows[0] == cli.CSV_HEADER + ["theta_star_0", "theta_star_1", "trace_sigma_theta", "trace_ratio_theta"]
    assert float(rows[-1][13]) == pytest.approx(0.32633, rel=1e-4)
    assert run(capsys, "rl", "fig1a")[0] == 2


def test_single_mode_divergence_is_data(capsys):
    code, out, err = run(capsys, "simulate", "fig3", "--paths", "3", "--horizon", "30000")
    assert code == 0
    last = out.strip().splitlines()[-1].split(",")
    assert int(last[9]) == 3 and last[6] == "nan"
    assert "diverged" in err


def test_preset_path_unknown():
    with pytest.raises(FileNotFoundError):
        preset_path("no_such_preset")
