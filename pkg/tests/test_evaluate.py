import csv
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from conftest import random_params
from pottsfit.evaluate import (fitness_benchmark, landscape, mean_reports, pair_dependency,
                               read_fitness_csv, selection_metrics, spearman,
                               write_pair_dependency)
from pottsfit.model import MutationSpec, PottsParams, energy, mutate


def toy_truth():
    B = np.zeros((2, 2))
    B[0, 0], B[1, 1] = 1.0, -1.0
    return PottsParams(np.zeros((3, 2)), {(0, 1): B, (1, 2): np.ones((2, 2))})


def test_perfect_estimate():
    t = toy_truth()
    r = selection_metrics(t, t)
    assert (r.mse, r.tpr, r.fdr, r.tpr_g, r.fdr_g) == (0.0, 1.0, 0.0, 1.0, 0.0)


def test_zero_estimate():
    t = toy_truth()
    r = selection_metrics(PottsParams.zeros(3, 2), t)
    assert (r.tpr, r.fdr, r.tpr_g, r.fdr_g) == (0.0, 0.0, 0.0, 0.0)
    # every unordered pair counts twice
    assert r.mse == pytest.approx(2 * (2 + 4))


def test_hand_counts():
    t = toy_truth()
    est = {(0, 1): [[0.5, 0.0], [0.0, 0.0]], (0, 2): [[0.0, 0.0], [0.0, 2.0]],
           (1, 2): [[1.0, 1.0], [1.0, 0.0]]}
    r = selection_metrics(PottsParams(np.zeros((3, 2)), est), t)
    # element level: TP = 1 + 3, FN = 1 + 1, FP = 1
    assert (r.tp, r.fn, r.fp) == (4, 2, 1)
    assert r.tn == 12 - 7
    assert r.tpr == pytest.approx(4 / 6) and r.fdr == pytest.approx(1 / 5)
    assert (r.tp_g, r.fp_g, r.fn_g, r.tn_g) == (2, 1, 0, 0)
    assert r.fdr_g == pytest.approx(1 / 3)


def test_rates_from_counts():
    # TP=3, FN=1, FP=1 built from a single 2x2 block and one false pair
    truth = PottsParams(np.zeros((3, 2)), {(0, 1): np.ones((2, 2))})
    est = PottsParams(np.zeros((3, 2)), {(0, 1): [[1, 1], [1, 0]], (0, 2): [[0, 0], [0, 1]]})
    r = selection_metrics(est, truth)
    assert (r.tp, r.fn, r.fp) == (3, 1, 1)
    assert (r.tpr, r.fdr) == (0.75, 0.25)


def test_undefined_tpr_and_json():
    z = PottsParams.zeros(3, 2)
    r = selection_metrics(z, z)
    assert math.isnan(r.tpr) and r.to_dict()["tpr"] is None and r.fdr == 0.0


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        selection_metrics(PottsParams.zeros(3, 2), PottsParams.zeros(4, 2))


def test_mean_of_identical_reports():
    t = toy_truth()
    r = selection_metrics(PottsParams.zeros(3, 2), t)
    m = mean_reports([r, r, r])
    assert m["mse"] == r.mse and m["tpr"] == r.tpr


def test_spearman_examples():
    assert spearman([1, 2, 3, 4], [2, 5, 7, 9]) == 1.0
    assert spearman([1, 2, 3, 4], [9, 5, 2, 1]) == -1.0
    assert spearman([1, 2, 3], [2, 1, 3]) == pytest.approx(0.5)
    assert math.isnan(spearman([1, 1, 1], [1, 2, 3]))
    with pytest.raises(ValueError):
        spearman([1], [2])


def test_spearman_ties_use_mid_ranks():
    from scipy.stats import spearmanr
    x, y = [1, 2, 2, 3, 4], [1, 3, 2, 2, 5]
    assert spearman(x, y) == pytest.approx(spearmanr(x, y).statistic)


# integer values keep exp and cubing strictly order-preserving in floating point
@given(arrays(np.float64, 12, elements=st.integers(-20, 20).map(float)),
       arrays(np.float64, 12, elements=st.integers(-20, 20).map(float)))
def test_spearman_invariant_to_monotone_maps(x, y):
    rho = spearman(x, y)
    got = spearman(np.exp(x), y ** 3)
    if math.isnan(rho):
        assert math.isnan(got)
    else:
        assert got == pytest.approx(rho, abs=1e-12)


def test_landscape_zero_and_coherence(rng):
    assert not landscape(PottsParams.zeros(3, 2)).delta_e.any()
    p = random_params(rng, 4, 3)
    L = landscape(p)
    assert not L.delta_e[:, 0].any()
    for j in range(4):
        for k in range(4):
            mutant = mutate(np.zeros(4, int), MutationSpec({j: k}))
            assert L.delta_e[j, k] == pytest.approx(energy(p, mutant) - 0.0, abs=1e-12)


def test_landscape_csv(tmp_path):
    p = PottsParams(np.array([[0.5, 1.0], [0.0, -1.0]]), {}, "AC-", "AC")
    landscape(p).write_csv(tmp_path / "l.csv")
    rows = list(csv.reader(open(tmp_path / "l.csv")))
    assert rows[0] == ["site", "symbol", "delta_e"]
    assert rows[1] == ["1", "A", "0.0"] and rows[2] == ["1", "C", "0.5"]
    assert len(rows) == 1 + 2 * 3


def test_pair_dependency(rng, tmp_path):
    assert not pair_dependency(PottsParams.zeros(3, 2), 0, 1).any()
    p = random_params(rng, 3, 2)
    T = pair_dependency(p, 0, 2)
    np.testing.assert_allclose(T, pair_dependency(p, 2, 0).T)
    for k in range(2):
        for l in range(2):
            expected = p.dense()[0, 2, k, l] + p.theta[0, k] + p.theta[2, l]
            assert T[k, l] == pytest.approx(expected, abs=1e-14)
    with pytest.raises(ValueError):
        pair_dependency(p, 1, 1)
    write_pair_dependency(p, 0, 2, tmp_path / "p.csv")
    rows = list(csv.reader(open(tmp_path / "p.csv")))
    assert rows[0] == ["state_j", "state_r", "value"] and len(rows) == 5


def test_fitness_benchmark(rng, tmp_path):
    p = random_params(rng, 5, 3)
    muts = [(j, k, p.theta[j, k - 1]) for j in range(5) for k in range(1, 4)]
    res = fitness_benchmark(p, muts)
    assert res.rho == pytest.approx(1.0)
    mask = np.zeros((5, 4), dtype=bool)
    mask[0, 1] = True
    flagged = fitness_benchmark(p, muts, rare_mask=mask)
    assert flagged.table[0][4] and not flagged.table[1][4]
    flagged.write_csv(tmp_path / "b.csv")
    with pytest.raises(ValueError):
        fitness_benchmark(p, [(9, 1, 0.0)])


def test_read_fitness_csv(tmp_path):
    p = PottsParams(np.zeros((2, 20)), {}, "ACDEFGHIKLMNPQRSTVWY-", "AC")
    f = tmp_path / "f.csv"
    f.write_text("site,target_symbol,value\n1,c,0.5\n2,A,-1\n")
    assert read_fitness_csv(f, p) == [(0, 1, 0.5), (1, 1, -1.0)]
    f.write_text("site,target_symbol,value\n1,B,0.5\n")
    with pytest.raises(ValueError):
        read_fitness_csv(f, p)
