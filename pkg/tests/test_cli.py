import csv
import json

import numpy as np
import pytest

from kdeoverlap.cli import main, read_groups, read_values
from kdeoverlap.exceptions import ValidationError


def write(path, rows, header=None):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if header:
            w.writerow(header)
        w.writerows(rows)
    return str(path)


@pytest.fixture
def pair(tmp_path):
    rng = np.random.default_rng(0)
    a = write(tmp_path / "a.csv", [[v] for v in rng.normal(0, 1, 120)], ["value"])
    b = write(tmp_path / "b.csv", [[v] for v in rng.normal(1, 1, 120)])
    return a, b


def test_identical_inputs(pair, capsys):
    a, _ = pair
    assert main(["estimate", "--x", a, "--y", a]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["schema"] == 1
    assert rep["measures"]["pianka"]["point"] == pytest.approx(1.0, abs=1e-6)


def test_formats_and_out(pair, tmp_path, capsys):
    a, b = pair
    out = tmp_path / "r.json"
    assert main(["estimate", "--x", a, "--y", b, "--out", str(out), "--level", "0.9", "--support", "quantile:0.99"]) == 0
    rep = json.loads(out.read_text())
    assert rep["config"]["level"] == 0.9 and rep["support"]["policy"] == "quantile:0.99"
    assert main(["estimate", "--x", a, "--y", b, "--format", "csv"]) == 0
    rows = list(csv.reader(capsys.readouterr().out.splitlines()))
    assert rows[0][0] == "measure" and [r[0] for r in rows[1:]] == ["pianka", "macarthur_levins", "macarthur_levins_yx"]
    assert main(["estimate", "--x", a, "--y", b, "--format", "text", "--kernel", "biweight",
                 "--bandwidth", "power:0.5", "--ml-mode", "as_printed"]) == 0
    assert "pianka:" in capsys.readouterr().out


def test_group_file(tmp_path, capsys):
    rng = np.random.default_rng(1)
    rows = [[v, "M"] for v in rng.normal(0, 1, 50)] + [[v, "B"] for v in rng.normal(2, 1, 50)]
    path = write(tmp_path / "g.csv", rows, ["value", "group"])
    groups, labels = read_groups(path)
    assert labels == ["M", "B"] and groups["M"].size == 50
    assert main(["estimate", "--data", path, "--groups", "B,M"]) == 0
    assert json.loads(capsys.readouterr().out)["n"] == {"x": 50, "y": 50}
    assert main(["estimate", "--data", path, "--groups", "B,Z"]) == 2


def test_non_numeric_cell(tmp_path, capsys):
    bad = write(tmp_path / "bad.csv", [["1.0"], ["2.5"], ["oops"], ["3"]], ["value"])
    good = write(tmp_path / "good.csv", [[v] for v in range(20)])
    assert main(["estimate", "--x", bad, "--y", good]) == 2
    err = capsys.readouterr().err
    assert "row 4" in err and "column 1" in err


def test_validation_exit_codes(pair, tmp_path):
    a, b = pair
    assert main(["estimate", "--x", a, "--y", str(tmp_path / "missing.csv")]) == 2
    assert main(["estimate", "--x", a, "--y", b, "--bandwidth", "power:0.1"]) == 2
    assert main(["estimate", "--x", a, "--y", b, "--level", "1.5"]) == 2
    assert main(["estimate", "--x", a, "--y", b, "--grid", "1000"]) == 2
    assert main(["estimate", "--x", a]) == 2
    empty = write(tmp_path / "e.csv", [], ["value"])
    assert main(["estimate", "--x", empty, "--y", b]) == 2


def test_degenerate_exit_code(tmp_path, capsys):
    # samples far outside an explicit support give identically zero estimates
    a = write(tmp_path / "a.csv", [[v] for v in np.linspace(100, 101, 20)])
    assert main(["estimate", "--x", a, "--y", a, "--support", "0,1"]) == 3
    assert "error" in capsys.readouterr().err


def test_inputs_not_mutated(pair):
    a, b = pair
    before = open(a).read(), open(b).read()
    main(["estimate", "--x", a, "--y", b])
    assert (open(a).read(), open(b).read()) == before


def test_read_values_header_optional(tmp_path):
    p = write(tmp_path / "h.csv", [["1"], ["2"]], ["x"])
    q = write(tmp_path / "n.csv", [["1"], ["2"]])
    np.testing.assert_array_equal(read_values(p), read_values(q))
    with pytest.raises(ValidationError):
        read_values(write(tmp_path / "c.csv", [["1,5"]]))


def test_kernels_listing(capsys):
    assert main(["kernels"]) == 0
    rows = list(csv.DictReader(capsys.readouterr().out.splitlines()))
    by = {r["name"]: r for r in rows}
    assert float(by["epanechnikov"]["k02"]) == 0.6
    assert float(by["box"]["k02"]) == 0.5
    assert all(float(r["k11"]) == 0 for r in rows)
    assert all(float(r["k01"]) == 1 for r in rows)


def _simulate(out, *extra):
    return main(["simulate", "--scenario", "case_I", "--n", "50", "--reps", "200", "--seed", "7", "--out", str(out), *extra])


def test_simulate_deterministic(tmp_path, capsys):
    assert _simulate(tmp_path / "a") == 0
    assert _simulate(tmp_path / "b") == 0
    assert _simulate(tmp_path / "c", "--workers", "2") == 0
    for name in ("replicates.csv", "qq.csv", "histogram.csv", "summary.json"):
        a = (tmp_path / "a" / name).read_bytes()
        assert a == (tmp_path / "b" / name).read_bytes() == (tmp_path / "c" / name).read_bytes()
    summary = json.loads((tmp_path / "a" / "summary.json").read_text())
    assert summary["seed"] == 7 and summary["n"] == 50


def test_simulate_unwritable(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["simulate", "--n", "20", "--reps", "20", "--out", str(blocker / "sub")]) == 2


def test_simulate_case_i_500_ks(tmp_path):
    assert main(["simulate", "--scenario", "case_I", "--n", "500", "--reps", "500", "--seed", "0",
                 "--out", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "summary.json").read_text())["ks_pass_1pct"] is True


def test_simulate_case_ii_variance(tmp_path):
    assert main(["simulate", "--scenario", "case_II", "--n", "150", "--reps", "200", "--seed", "0",
                 "--out", str(tmp_path)]) == 0
    s = json.loads((tmp_path / "summary.json").read_text())
    assert s["empirical_variance"] == pytest.approx(s["sigma2_theory"], rel=0.35)


def test_breast_cancer_perimeter(tmp_path, capsys):
    ds = pytest.importorskip("sklearn.datasets")
    data = ds.load_breast_cancer()
    col = list(data.feature_names).index("mean perimeter")
    v, y = data.data[:, col], data.target
    mal, ben = v[y == 0], v[y == 1][:212]
    path = write(tmp_path / "bc.csv", [[a, "M"] for a in mal] + [[b, "B"] for b in ben], ["perimeter", "group"])
    assert main(["estimate", "--data", path]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["n"] == {"x": 212, "y": 212}
    assert rep["measures"]["pianka"]["point"] == pytest.approx(0.3396, abs=0.02)
