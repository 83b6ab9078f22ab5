import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from pottsfit.structure import (DegenerateNormalizerError, StructureFormatError, distance_matrix,
                                group_weights, kernel, parse_coordinates, read_matrix_csv,
                                scale_factor, site_normalizer, uniform_weights, write_matrix_csv)


def pdb_line(serial, name, resseq, x, y, z, altloc=" ", icode=" "):
    return (f"ATOM  {serial:5d} {name:^4s}{altloc}ALA A{resseq:4d}{icode}   "
            f"{x:8.3f}{y:8.3f}{z:8.3f}  1.00  0.00           C\n")


# -- coordinates ------------------------------------------------------------

def test_csv_xyz(tmp_path):
    p = tmp_path / "c.csv"
    p.write_text("site,x,y,z\n1,0,0,0\n2,3,4,0\n")
    np.testing.assert_array_equal(parse_coordinates(p), [[0, 0, 0], [3, 4, 0]])


def test_csv_four_columns_required(tmp_path):
    p = tmp_path / "c.csv"
    p.write_text("site,x,y,z\n1,0,0,0,9\n")
    with pytest.raises(StructureFormatError):
        parse_coordinates(p)


def test_csv_site_count_mismatch(tmp_path):
    p = tmp_path / "c.csv"
    p.write_text("site,x,y,z\n1,0,0,0\n2,1,1,1\n")
    with pytest.raises(StructureFormatError, match="d=3"):
        parse_coordinates(p, d=3)


def test_pdb_ca_in_order(tmp_path):
    p = tmp_path / "s.pdb"
    p.write_text(pdb_line(1, "N", 1, 9, 9, 9) + pdb_line(2, "CA", 1, 0, 0, 0)
                 + pdb_line(3, "CA", 2, 3, 4, 0) + pdb_line(4, "CA", 3, 1, 1, 1)
                 + "ENDMDL\n" + pdb_line(5, "CA", 4, 7, 7, 7))
    coords = parse_coordinates(p, "pdb-ca")
    np.testing.assert_allclose(coords, [[0, 0, 0], [3, 4, 0], [1, 1, 1]])


def test_pdb_first_altloc_kept(tmp_path):
    p = tmp_path / "s.pdb"
    p.write_text(pdb_line(1, "CA", 1, 0, 0, 0, "A") + pdb_line(2, "CA", 1, 5, 5, 5, "B")
                 + pdb_line(3, "CA", 2, 1, 0, 0))
    np.testing.assert_allclose(parse_coordinates(p, "pdb-ca")[0], [0, 0, 0])


def test_pdb_duplicate_residue(tmp_path):
    p = tmp_path / "s.pdb"
    p.write_text(pdb_line(1, "CA", 1, 0, 0, 0) + pdb_line(2, "CA", 1, 1, 0, 0))
    with pytest.raises(StructureFormatError, match="duplicate"):
        parse_coordinates(p, "pdb-ca")


def test_pdb_missing_residues_listed(tmp_path):
    p = tmp_path / "s.pdb"
    p.write_text(pdb_line(1, "CA", 1, 0, 0, 0) + pdb_line(2, "CA", 4, 1, 0, 0))
    with pytest.raises(StructureFormatError, match=r"\[2, 3\]"):
        parse_coordinates(p, "pdb-ca")


def test_pdb_insertion_code_rejected(tmp_path):
    p = tmp_path / "s.pdb"
    p.write_text(pdb_line(1, "CA", 1, 0, 0, 0) + pdb_line(2, "CA", 1, 1, 0, 0, icode="A"))
    with pytest.raises(StructureFormatError, match="insertion"):
        parse_coordinates(p, "pdb-ca")


# -- distances and normalizers ----------------------------------------------

def test_three_four_five():
    D = distance_matrix([[0, 0, 0], [3, 4, 0]])
    assert D[0, 1] == 5.0 and D[1, 0] == 5.0


def test_identical_coordinates():
    assert distance_matrix([[1, 2, 3], [1, 2, 3]])[0, 1] == 0.0


@given(arrays(np.float64, (5, 3), elements=st.floats(-50, 50)))
def test_distance_matrix_symmetric(coords):
    D = distance_matrix(coords)
    np.testing.assert_array_equal(D, D.T)
    assert np.all(np.diag(D) == 0) and np.all(D >= 0)


def test_normalizer_hand_value():
    D = np.array([[0, 1, 3], [1, 0, 2], [3, 2, 0]], dtype=float)
    assert site_normalizer(D, 0) == pytest.approx(1.0)


def test_normalizer_degenerate():
    D = np.ones((3, 3)) - np.eye(3)
    with pytest.raises(DegenerateNormalizerError):
        site_normalizer(D, 0)
    assert site_normalizer(D, 0, strict=False) == 0.0


@given(st.floats(0.1, 100))
def test_normalizer_scales_quadratically(c):
    D = distance_matrix(np.random.default_rng(1).normal(size=(6, 3)))
    assert site_normalizer(c * D, 2) == pytest.approx(c * c * site_normalizer(D, 2), rel=1e-10)


# -- kernels and weights ----------------------------------------------------

def test_kernel_values():
    assert kernel(0.0, 1.0, "N1") == 0.0
    assert kernel(0.0, None, "N2") == 0.5
    vals = kernel(np.array([1.0, 2.0, 5.0, 50.0]), 4.0, "N1")
    assert np.all(np.diff(vals) > 0) and vals[-1] == pytest.approx(1.0)


@given(st.floats(0.0, 12.0))
def test_kernel_bounds(D):
    # strict upper bounds hold wherever 1 - exp(-x) is representable below 1
    assert 0.0 <= kernel(D, 7.0, "N1") < 1.0
    assert 0.0 < kernel(D, None, "N2") < 1.0


@given(st.floats(0.01, 100.0))
def test_n1_distance_scale_invariance(c):
    D = distance_matrix(np.random.default_rng(3).normal(size=(5, 3)))
    w1 = group_weights(D, 100, 4, "N1").w
    w2 = group_weights(c * D, 100, 4, "N1").w
    np.testing.assert_allclose(w1, w2, rtol=1e-9, atol=1e-15)


def test_unweighted_scale_factor():
    D = distance_matrix(np.random.default_rng(0).normal(size=(3, 3)))
    w = group_weights(D, 100, 4, "none").w
    expected = math.sqrt(4 / 100) + math.sqrt(2 * math.log(2) / 100)
    off = w[~np.eye(3, dtype=bool)]
    np.testing.assert_allclose(off, expected)
    assert scale_factor(100, 4, 3) == pytest.approx(expected)


def test_contacting_pair_has_zero_weight():
    D = np.array([[0, 0, 5], [0, 0, 3], [5, 3, 0]], dtype=float)
    w = group_weights(D, 50, 4, "N1").w
    assert w[0, 1] == 0.0 and w[1, 0] == 0.0


def test_weights_monotone_in_distance():
    rng = np.random.default_rng(5)
    D = distance_matrix(rng.normal(size=(8, 3)) * 10)
    w = group_weights(D, 200, 9, "N1").w
    for j in range(8):
        order = np.argsort(D[j])
        assert np.all(np.diff(w[j, order][1:]) >= -1e-15)


def test_symmetric_normalizer_option():
    D = distance_matrix(np.random.default_rng(2).normal(size=(6, 3)))
    w = group_weights(D, 100, 4, "N1", symmetric_normalizer=True).w
    np.testing.assert_allclose(w, w.T)
    assert not np.allclose(group_weights(D, 100, 4, "N1").w,
                           group_weights(D, 100, 4, "N1").w.T)


def test_d2_falls_back_to_unweighted():
    D = np.array([[0, 4.0], [4.0, 0]])
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        sw = group_weights(D, 10, 4, "N1")
    assert sw.kernel_kind == "none" and caught


def test_n1_degenerate_propagates():
    with pytest.raises(DegenerateNormalizerError):
        group_weights(np.ones((3, 3)) - np.eye(3), 10, 4, "N1")


def test_uniform_weights_and_matrix_io(tmp_path):
    w = uniform_weights(4, 2.0).w
    assert w[0, 1] == 2.0 and w[2, 2] == 0.0
    M = np.random.default_rng(0).normal(size=(3, 3))
    write_matrix_csv(M, tmp_path / "m.csv")
    np.testing.assert_array_equal(read_matrix_csv(tmp_path / "m.csv"), M)
