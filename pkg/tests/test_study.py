import numpy as np
import pytest

from pottsfit.cv import CvGrid
from pottsfit.study import StudyConfig, method_config, run_study, simulate
from pottsfit.solver import FitConfig


def test_simulate_prefix_property():
    t1, small = simulate("M1", 6, 5, 100, seed=4)
    t2, large = simulate("M1", 6, 5, 250, seed=4)
    np.testing.assert_array_equal(t1.params.dense(), t2.params.dense())
    np.testing.assert_array_equal(small, large[:100])
    with pytest.raises(ValueError):
        simulate("M3", 6, 5, 10, seed=0)


def test_simulate_reuses_a_seed_sequence_object():
    ss = np.random.SeedSequence(9).spawn(2)[1]
    t1, a = simulate("M1", 6, 5, 50, ss)
    t2, b = simulate("M1", 6, 5, 80, ss)
    np.testing.assert_array_equal(t1.params.dense(), t2.params.dense())
    np.testing.assert_array_equal(a, b[:50])


def test_method_configs():
    truth, _ = simulate("M1", 6, 5, 10, seed=0)
    D = truth.distances
    base = FitConfig()
    ours, sgl = method_config("ours", D, 100, 5, base), method_config("sgl", D, 100, 5, base)
    wo, ws = ours.weights.w, sgl.weights.w
    assert wo.shape == ws.shape == (6, 6)
    # the unweighted scale is constant off the diagonal, the structured one is not
    off = ~np.eye(6, dtype=bool)
    assert np.ptp(ws[off]) < 1e-12 and np.ptp(wo[off]) > 0
    assert np.all(wo[off] <= ws[off] + 1e-12)
    with pytest.raises(ValueError):
        method_config("magic", D, 100, 5, base)


def test_study_config_validation():
    with pytest.raises(ValueError):
        StudyConfig(methods=("nope",))
    with pytest.raises(ValueError):
        StudyConfig(tuning="oracle")
    with pytest.raises(ValueError):
        StudyConfig(replicates=0)


def test_tiny_study_runs_and_is_deterministic(tmp_path):
    cfg = StudyConfig(d=6, K=5, ns=(200,), replicates=2, methods=("ours", "ridge"),
                      grid=CvGrid(I=(0.5,), J=(-2.0,), folds=3), min_count=1)
    a, b = run_study(cfg), run_study(cfg)
    assert len(a.records) == 4
    np.testing.assert_array_equal(a.column(200, "ours", "mse"), b.column(200, "ours", "mse"))
    assert a.records[0]["levels"] == (0.125, 0.125)
    a.write_csv(tmp_path / "s.csv")
    assert len(open(tmp_path / "s.csv").read().splitlines()) == 5
    assert np.isfinite(a.means(200, "ridge")["mse"])
