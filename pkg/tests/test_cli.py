import math

import pytest

from aoiopt import NetworkShape, ParameterError, cli
from aoiopt import experiments as ex
from aoiopt.config import parse_config
from aoiopt.report import emit_report, read_csv, write_csv, write_timings


def _run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def _pairs(text):
    out = {}
    for line in text.splitlines():
        if " = " in line:
            k, v = line.split(" = ", 1)
            out[k] = v
    return out


def test_approx(capsys):
    code, out, _ = _run(capsys, "approx", "--m", "0.5", "--v2", "0.25", "--z", "2")
    assert code == 0
    assert float(_pairs(out)["E[AoI^2]"]) == pytest.approx(6.0)


def test_analyze_two_state(capsys):
    code, out, _ = _run(capsys, "analyze", "two-state", "--N", "2", "--r", "0.25", "--s", "1",
                        "--w", "0.5", "--z", "2")
    vals = _pairs(out)
    assert code == 0
    assert float(vals["m_a"]) == pytest.approx(0.16)
    assert float(vals["v_a2"]) == pytest.approx(0.0942933, rel=1e-5)


def test_optimize_wag(capsys):
    code, out, _ = _run(capsys, "optimize", "wag", "--N", "8", "--w", "auto", "--z", "1")
    vals = _pairs(out)
    assert code == 0 and float(vals["r"]) == pytest.approx(0.24) and vals["H"] == "5"


def test_simulate_and_sweep(capsys):
    code, out, _ = _run(capsys, "simulate", "--policy", "aloha", "--N", "4", "--slots", "2000",
                        "--runs", "2", "--seed", "1")
    assert code == 0 and "F_hat" in out
    code, out, _ = _run(capsys, "sweep", "aloha", "--N", "2", "--slots", "1000", "--runs", "2",
                        "--r-step", "0.1")
    assert code == 0 and "p" in _pairs(out)


def test_errors_exit_2(capsys):
    code, _, err = _run(capsys, "simulate", "--policy", "two-state")
    assert code == 2 and "--r" in err
    code, _, err = _run(capsys, "analyze", "wag", "--r", "1.5", "--H", "1")
    assert code == 2
    code, _, _ = _run(capsys, "simulate", "--policy", "pre-assigned", "--N", "2")
    assert code == 2


def test_validate_lemmas_exit_zero(capsys):
    code, out, _ = _run(capsys, "validate", "lemmas")
    assert code == 0 and "[PASS]" in out and "[FAIL]" not in out


def test_validate_exit_code_tracks_failures(capsys, monkeypatch):
    from aoiopt import validate

    failing = validate.Check("forced", False, 1.0, 0.0)
    monkeypatch.setitem(validate.VALIDATIONS, "lemmas", (lambda: [failing],))
    code, out, _ = _run(capsys, "validate", "lemmas")
    assert code == 1 and "[FAIL] forced" in out


def test_config_file_and_override(tmp_path, capsys):
    conf = tmp_path / "run.conf"
    conf.write_text("# optimisation setup\nN = 8\nw = auto  # N/(N+1)\nz = 1\nr-step = 0.02\n")
    code, out, _ = _run(capsys, "optimize", "two-state", "--config", str(conf))
    assert code == 0
    r_file = float(_pairs(out)["r"])
    code, out, _ = _run(capsys, "optimize", "two-state", "--config", str(conf), "--N", "1")
    assert float(_pairs(out)["r"]) != r_file


def test_parse_config_errors():
    assert parse_config("a_b = 1\n".replace("a_b", "slots")) == {"slots": "1"}
    with pytest.raises(ParameterError):
        parse_config("colour = red\n")
    with pytest.raises(ParameterError):
        parse_config("slots 10\n")
    with pytest.raises(ParameterError):
        parse_config("slots =\n")


def test_empty_report_is_header_only(tmp_path):
    paths = emit_report([], tmp_path, "empty", "both")
    text = paths[0].read_text()
    assert text == ",".join(ex.CSV_FIELDS) + "\n"


def _small_mismatch(tmp_path, name="mismatch-wag"):
    cfg = ex.ExperimentConfig(name, shapes=(NetworkShape(1, 2),), runs=3, slots=2000,
                              grid={"r": (0.3,), "H": (1, 2)})
    return ex.run_mismatch(cfg)


def test_mismatch_rows_and_files(tmp_path):
    rows = _small_mismatch(tmp_path)
    for row in rows:
        assert row.mismatch == abs(row.theoretical - row.empirical) / row.empirical
        assert row.seed == ex.default_seed("mismatch-wag")
    paths = emit_report(rows, tmp_path, "mismatch-wag")
    names = sorted(p.name for p in paths)
    assert "mismatch-wag.csv" in names
    assert "mismatch-wag_C1_N2_active_r0.3.csv" in names
    assert "mismatch-wag_C1_N2_passive_r0.3.svg" in names
    back = read_csv(tmp_path / "mismatch-wag.csv")
    for row in back:
        assert row.mismatch == abs(row.theoretical - row.empirical) / row.empirical


def test_csv_byte_identical(tmp_path):
    a = write_csv(_small_mismatch(tmp_path), tmp_path / "a.csv").read_bytes()
    b = write_csv(_small_mismatch(tmp_path), tmp_path / "b.csv").read_bytes()
    assert a == b
    svg1 = emit_report(_small_mismatch(tmp_path), tmp_path / "one", "m", "svg")
    svg2 = emit_report(_small_mismatch(tmp_path), tmp_path / "two", "m", "svg")
    assert [p.read_bytes() for p in svg1] == [p.read_bytes() for p in svg2]


def test_report_rerenders(tmp_path, capsys):
    rows = _small_mismatch(tmp_path)
    write_csv(rows, tmp_path / "mm.csv")
    code, out, _ = _run(capsys, "report", str(tmp_path / "mm.csv"), "--out", str(tmp_path / "fig"),
                        "--format", "svg")
    assert code == 0 and ".svg" in out


def test_two_state_grids():
    assert ex.two_state_mismatch_grid(NetworkShape(1, 1), 1.0) == pytest.approx(
        [0.1 * k for k in range(1, 10)])
    grid = ex.two_state_mismatch_grid(NetworkShape(2, 4), 0.8)
    assert grid[0] == 0.05 and max(grid) <= 0.8 / 3
    for r, s_vals in ex.optimality_grid(NetworkShape(1, 6)):
        assert s_vals[-1] == 1.0
        assert all(r / (r + s) <= 1 / 6 + 1e-12 for s in s_vals)


def test_optimality_rows(tmp_path):
    cfg = ex.ExperimentConfig("optimality", shapes=(NetworkShape(1, 6),), runs=2, slots=1000,
                              z_list=(1,), r_step=0.1, grid={"s_step": 0.25})
    rows = ex.run_optimality(cfg)
    assert rows and all(r.policy == "s=1-vs-best" for r in rows)
    for row in rows:
        assert row.empirical <= row.theoretical
        assert 0.0 <= row.mismatch


def test_compare_small(tmp_path):
    cfg = ex.ExperimentConfig("compare", shapes=(NetworkShape(1, 4),), z_list=(1,), w_list=("0.5",),
                              runs=2, slots=2000, r_step=0.25, h_max=3,
                              screen=None)
    timings = []
    rows = ex.run_compare(cfg, timings)
    policies = {r.policy for r in rows}
    assert {"wag", "two-state", "optimal-wag", "slotted-aloha", "ata", "optimal-aloha"} <= policies
    assert "pre-assigned" not in policies
    assert timings
    paths = emit_report(rows, tmp_path, "compare")
    assert any(p.suffix == ".svg" for p in paths)


def test_compare_with_sequences(tmp_path):
    seq = tmp_path / "seq.txt"
    seq.write_text("1000\n0100\n0010\n0001\n")
    cfg = ex.ExperimentConfig("compare", shapes=(NetworkShape(1, 4),), z_list=(1,), w_list=("1",),
                              runs=2, slots=2000, r_step=0.25, h_max=2, seq_file=str(seq))
    rows = ex.run_compare(cfg)
    pre = [r for r in rows if r.policy == "pre-assigned"]
    # round robin: ages cycle 1..4 after a short start-up transient
    assert pre and pre[0].f_value == pytest.approx(2.5, rel=1e-3)


def test_efficiency_small(tmp_path):
    cfg = ex.ExperimentConfig("efficiency", shapes=(NetworkShape(1, 4),), z_list=(1,), w_list=("auto",),
                              runs=2, slots=2000, r_step=0.25, h_max=3, budget=50)
    timings = []
    rows = ex.run_efficiency(cfg, timings)
    ratio = [r for r in rows if r.policy == "ratio"]
    assert len(ratio) == 1 and math.isfinite(ratio[0].f_value)
    emit_report(rows, tmp_path, "efficiency")
    assert (tmp_path / "efficiency.csv").exists()
    assert math.isfinite(timings[0].exhaustive_ratio)
    header = write_timings(timings, tmp_path / "t.csv").read_text().splitlines()[0]
    assert "exhaustive_ratio" in header
