import csv

import pytest

from ou_entry import cli


def read(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def write_cfg(tmp_path, text):
    p = tmp_path / "run.ini"
    p.write_text(text)
    return str(p)


def test_classify(tmp_path, capsys):
    assert cli.main(["classify", "--out", str(tmp_path)]) == 0
    assert "regime = Repelling" in capsys.readouterr().out
    refl = write_cfg(tmp_path, "[model]\nsigma = 1\np0 = 0.1\npenalty = 0.1, 0.1\n")
    assert cli.main(["classify", "--config", refl, "--out", str(tmp_path)]) == 0
    assert "regime = Reflecting" in capsys.readouterr().out
    uns = write_cfg(tmp_path, "[model]\nsigma = 1\npenalty = 2, 2\n")
    assert cli.main(["classify", "--config", uns, "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "regime = Unsupported" in out and "open problem" in out
    assert cli.main(["boundaries", "--config", uns, "--out", str(tmp_path)]) == 1


def test_validation_exit_code(tmp_path, capsys):
    bad = write_cfg(tmp_path, "[model]\nsigma = -2\ntheta = abc\n[mc]\npaths = 1\n")
    assert cli.main(["classify", "--config", bad]) == 1
    err = capsys.readouterr().err
    for field in ("model.sigma", "model.theta", "mc.paths"):
        assert field in err
    assert cli.main(["classify", "--config", str(tmp_path / "missing.ini")]) == 1


def test_boundaries_csv(tmp_path):
    cfg = write_cfg(tmp_path, "[grid]\nc_points = 5\n")
    assert cli.main(["boundaries", "--config", cfg, "--out", str(tmp_path)]) == 0
    rows = read(tmp_path / "entry_boundaries.csv")
    assert list(rows[0]) == ["c", "topology", "l1", "l2", "l3", "case_tag", "m1", "m2", "error"]
    by_c = {float(r["c"]): r for r in rows}
    assert by_c[0.0]["topology"] == "SingleThreshold" and by_c[0.0]["case_tag"] == "IIIa"
    assert by_c[0.25]["topology"] == "TripleBoundary" and by_c[0.25]["case_tag"] == "IIIb"
    assert by_c[1.0]["topology"] == "StopNowTrivial"
    assert by_c[0.0]["l2"] == "" and by_c[0.0]["error"] == ""
    # 17 significant digits round-trip
    assert len(by_c[0.25]["l1"].replace("-", "").replace(".", "").lstrip("0")) >= 15
    ctrl = read(tmp_path / "control_boundary.csv")
    assert list(ctrl[0]) == ["c", "beta_or_gamma"] and len(ctrl) == 5
    ref = read(tmp_path / "reference_points.csv")
    assert "x1_0" in ref[0] and ref[-1]["x1_0"] == ""


def test_value_surface(tmp_path):
    cfg = write_cfg(tmp_path, "[grid]\nc_points = 5\nx_points = 41\n")
    assert cli.main(["value-surface", "--config", cfg, "--out", str(tmp_path)]) == 0
    rows = read(tmp_path / "value_surface.csv")
    assert list(rows[0]) == ["x", "c", "U", "U_minus_P0", "V", "in_stopping_region"]
    for r in rows:
        v, ump = float(r["V"]), float(r["U_minus_P0"])
        assert v <= ump + 1e-9
        scale = max(1.0, abs(ump))
        assert (r["in_stopping_region"] == "1") == (abs(v - ump) <= 1e-9 * scale)


def test_value_surface_upper_branch(tmp_path, kinked_solver):
    cfg = write_cfg(tmp_path, "[grid]\nc_points = 3\nx_points = 21\n")
    cli.main(["value-surface", "--config", cfg, "--out", str(tmp_path)])
    for r in read(tmp_path / "value_surface.csv"):
        x, c = float(r["x"]), float(r["c"])
        if c < 1 and x >= kinked_solver.gain.gamma(c):
            assert float(r["U"]) == pytest.approx(x * (1 - c), rel=1e-14)


def test_verify_reproducible(tmp_path):
    cfg = write_cfg(tmp_path, "[mc]\nprobes = 1 0.25\nhitting_probes = 1 0\n")
    a, b = tmp_path / "a", tmp_path / "b"
    code = cli.main(["verify", "--config", cfg, "--out", str(a), "--paths", "4000",
                     "--seed", "3", "--dt", "0.002"])
    cli.main(["verify", "--config", cfg, "--out", str(b), "--paths", "4000",
              "--seed", "3", "--dt", "0.002"])
    text = (a / "verify_report.txt").read_text()
    assert text == (b / "verify_report.txt").read_text()
    assert "hitting_laplace" in text and "perturbation" in text and "full_functional" in text
    assert code in (0, 3)
    assert (code == 0) == ("0 failed" in text)
