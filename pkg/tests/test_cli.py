import csv
import json

import numpy as np
import pytest

from pottsfit.cli import main
from pottsfit.model import PottsParams, load, save


@pytest.fixture(scope="module")
def sim(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim") / "data"
    assert main(["simulate", "--d", "6", "--K", "5", "--n", "300", "--seed", "3",
                 "--out", str(out)]) == 0
    return out


def fit_args(sim, out, *extra):
    return ["fit", "--alignment", str(sim / "alignment.csv"), "--K", "5",
            "--distances", str(sim / "distances.csv"), "--min-count", "1",
            "--out", str(out), *extra]


def test_simulate_outputs_are_reproducible(sim, tmp_path):
    names = {"alignment.csv", "truth.params", "distances.csv", "adjacency.csv", "config.json"}
    assert {p.name for p in sim.iterdir()} == names
    again = tmp_path / "again"
    assert main(["simulate", "--d", "6", "--K", "5", "--n", "300", "--seed", "3",
                 "--out", str(again)]) == 0
    for name in names - {"config.json"}:
        assert (sim / name).read_bytes() == (again / name).read_bytes()
    first, second = (json.load(open(d / "config.json")) for d in (sim, again))
    assert first.pop("out") != second.pop("out") and first == second
    truth = load(sim / "truth.params")
    adj = np.loadtxt(sim / "adjacency.csv", delimiter=",")
    groups = np.abs(truth.dense()).sum(axis=(2, 3)) != 0
    np.testing.assert_array_equal(adj != 0, groups)


def test_fit_writes_params_and_diagnostics(sim, tmp_path):
    out = tmp_path / "fit.params"
    assert main(fit_args(sim, out, "--lam", "0.05", "--lam-g", "0.05")) == 0
    p = load(out)
    assert (p.d, p.K) == (6, 5)
    lines = [json.loads(ln) for ln in open(str(out) + ".diag.jsonl")]
    assert [ln["site"] for ln in lines] == list(range(1, 7))
    assert all(ln["status"] == "converged" and ln["kkt"] < 1e-4 for ln in lines)
    cfg = json.load(open(str(out) + ".config.json"))
    assert cfg["lam"] == 0.05 and cfg["command"] == "fit"


def test_fit_modes(sim, tmp_path):
    assert main(fit_args(sim, tmp_path / "l.params", "--lasso-only", "--lam", "0.1")) == 0
    assert main(fit_args(sim, tmp_path / "r.params", "--ridge", "0.1")) == 0
    ridge = load(tmp_path / "r.params")
    # ridge never produces exact zeros
    assert len(ridge.gamma) == 15
    with pytest.raises(SystemExit):
        main(fit_args(sim, tmp_path / "x.params", "--ridge", "0.1", "--lasso-only"))


def test_fit_with_cv(sim, tmp_path):
    out = tmp_path / "cv.params"
    assert main(fit_args(sim, out, "--cv", "--folds", "3", "--grid-i", "0.5",
                         "--grid-j", "-3", "-1")) == 0
    rows = list(csv.DictReader(open(str(out) + ".cv.csv")))
    assert len(rows) == 2 * 4


def test_cv_command(sim, tmp_path):
    out = tmp_path / "cv.csv"
    argv = ["cv", "--alignment", str(sim / "alignment.csv"), "--K", "5", "--min-count", "1",
            "--folds", "3", "--grid-i", "0", "1", "--grid-j", "-2", "--out", str(out)]
    assert main(argv) == 0
    best = json.load(open(str(out) + ".best.json"))
    assert set(best) == {"lambda_g", "lambda", "heldout_nll"}


def test_thread_count_does_not_change_results(sim, tmp_path):
    a, b = tmp_path / "a.params", tmp_path / "b.params"
    assert main(fit_args(sim, a, "--lam", "0.05", "--lam-g", "0.05", "--threads", "1")) == 0
    assert main(fit_args(sim, b, "--lam", "0.05", "--lam-g", "0.05", "--threads", "2")) == 0
    assert a.read_bytes() == b.read_bytes()


def test_eval_truth_against_itself(sim, tmp_path):
    out = tmp_path / "ev.json"
    t = str(sim / "truth.params")
    assert main(["eval", "--estimate", t, t, "--truth", t, "--out", str(out)]) == 0
    rep = json.load(open(out))
    assert len(rep["replicates"]) == 2
    assert rep["mean"]["mse"] == 0.0 and rep["mean"]["tpr"] == 1.0 and rep["mean"]["fdr"] == 0.0
    assert main(["eval", "--out", str(out)]) == 1


def test_eval_fitness(tmp_path):
    p = PottsParams(np.arange(8.0).reshape(2, 4), {}, "ACDE-", "AC")
    save(p, tmp_path / "p.params")
    (tmp_path / "f.csv").write_text("site,target_symbol,value\n1,C,1\n1,D,2\n2,A,3\n2,E,4\n")
    out = tmp_path / "ev.json"
    assert main(["eval", "--estimate", str(tmp_path / "p.params"), "--fitness",
                 str(tmp_path / "f.csv"), "--out", str(out)]) == 0
    assert json.load(open(out))["spearman"] == pytest.approx(1.0)


def test_predict_landscape_pairdep(sim, tmp_path):
    t = str(sim / "truth.params")
    mfile = tmp_path / "m.txt"
    mfile.write_text("# comment\n2:1\n")
    out = tmp_path / "pred.csv"
    assert main(["predict", "--params", t, "--mutations", "", "1:2,3:1",
                 "--mutations-file", str(mfile), "--out", str(out)]) == 0
    rows = list(csv.DictReader(open(out)))
    assert [r["mutation"] for r in rows] == ["", "1:2,3:1", "2:1"]
    assert float(rows[0]["delta_e"]) == 0.0
    land = tmp_path / "land.csv"
    assert main(["landscape", "--params", t, "--out", str(land)]) == 0
    assert len(list(csv.reader(open(land)))) == 1 + 6 * 6
    pd = tmp_path / "pd.csv"
    assert main(["pairdep", "--params", t, "--sites", "1", "2", "--out", str(pd)]) == 0
    assert main(["pairdep", "--params", t, "--sites", "1", "9", "--out", str(pd)]) == 1


def test_bad_inputs_exit_nonzero(sim, tmp_path, capsys):
    t = str(sim / "truth.params")
    assert main(["predict", "--params", t, "--mutations", "1:", "--out",
                 str(tmp_path / "x.csv")]) == 1
    assert "position 0" in capsys.readouterr().err
    assert main(["predict", "--params", str(tmp_path / "none"), "--out",
                 str(tmp_path / "x.csv")]) == 1
    bad = tmp_path / "bad.csv"
    bad.write_text("0,0,0\n")
    assert main(fit_args(sim, tmp_path / "y.params") + ["--distances", str(bad)]) == 1
    with pytest.raises(SystemExit):
        main(["fit", "--lam", "0.1"])


def test_config_file_supplies_defaults(sim, tmp_path):
    out = tmp_path / "c.params"
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"alignment": str(sim / "alignment.csv"), "K": 5,
                               "min_count": 1, "lam": 0.3, "out": str(out)}))
    assert main(["fit", "--config", str(cfg), "--lam", "0.07"]) == 0
    echoed = json.load(open(str(out) + ".config.json"))
    assert echoed["lam"] == 0.07 and echoed["min_count"] == 1
    # the echoed options reproduce the run
    again = tmp_path / "again.params"
    echoed["out"] = str(again)
    cfg.write_text(json.dumps(echoed))
    assert main(["fit", "--config", str(cfg)]) == 0
    assert out.read_bytes() == again.read_bytes()
    cfg.write_text(json.dumps({"nonsense": 1}))
    assert main(["fit", "--config", str(cfg)]) == 2


def test_weights_n_option(sim, tmp_path):
    raw, eff = tmp_path / "raw.params", tmp_path / "eff.params"
    common = ("--lam", "0.002", "--lam-g", "0.02", "--seq-weights", "hamming",
              "--hamming-threshold", "0.5")
    assert main(fit_args(sim, raw, *common)) == 0
    assert main(fit_args(sim, eff, *common, "--weights-n", "effective")) == 0
    echoed = json.load(open(str(eff) + ".config.json"))
    assert echoed["weights_n"] == "effective"
    # fewer effective sequences raise the group weights, so the fits differ
    assert raw.read_bytes() != eff.read_bytes()
