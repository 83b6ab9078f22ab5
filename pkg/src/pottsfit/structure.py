"""Structural distances and distance-kernel group weights."""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

KERNELS = ("N1", "N2", "none")


class StructureFormatError(ValueError):
    pass


class DegenerateNormalizerError(ValueError):
    """All distances from a site are equal, so the N1 kernel is undefined."""


@dataclass(frozen=True, eq=False)
class StructureWeights:
    w: np.ndarray
    kernel_kind: str
    ms: np.ndarray | None
    n_used: float

    def __post_init__(self):
        self.w.setflags(write=False)


def parse_coordinates(path, format: str = "csv-xyz", d: int | None = None,
                      first_residue: int | None = None) -> np.ndarray:
    """Read per-site coordinates.

    ``csv-xyz`` expects a ``site,x,y,z`` header and 1-based contiguous sites.
    ``pdb-ca`` reads CA ATOM records of the first model, keeping the first
    alternate location; sites run from ``first_residue`` (default: lowest
    residue number seen) for ``d`` residues (default: through the highest).
    """
    if format == "csv-xyz":
        coords = _parse_csv_xyz(Path(path))
    elif format == "pdb-ca":
        coords = _parse_pdb_ca(Path(path), d, first_residue)
    else:
        raise ValueError(f"unknown coordinate format {format!r}")
    if d is not None and coords.shape[0] != d:
        raise StructureFormatError(f"structure has {coords.shape[0]} sites, expected d={d}")
    return coords


def _parse_csv_xyz(path: Path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows or [c.strip() for c in rows[0]] != ["site", "x", "y", "z"]:
        raise StructureFormatError("csv-xyz needs the header 'site,x,y,z'")
    coords = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != 4:
            raise StructureFormatError(f"line {lineno}: expected 4 columns, got {len(row)}")
        site = int(row[0])
        if site != len(coords) + 1:
            raise StructureFormatError(
                f"line {lineno}: site {site} out of order, expected {len(coords) + 1}")
        coords.append([float(v) for v in row[1:]])
    if not coords:
        raise StructureFormatError("no coordinate rows")
    return np.array(coords)


def _parse_pdb_ca(path: Path, d: int | None, first_residue: int | None) -> np.ndarray:
    found: dict[int, list[float]] = {}
    altloc_of: dict[int, str] = {}
    with open(path) as fh:
        for line in fh:
            if line.startswith("ENDMDL"):
                break
            if not line.startswith("ATOM") or line[12:16].strip() != "CA":
                continue
            if line[26].strip():
                raise StructureFormatError(
                    f"insertion code {line[26]!r} at residue {line[22:26].strip()} is not supported")
            resseq = int(line[22:26])
            altloc = line[16].strip()
            if resseq in found:
                if altloc and altloc != altloc_of[resseq]:
                    continue
                raise StructureFormatError(f"duplicate CA record for residue {resseq}")
            found[resseq] = [float(line[30:38]), float(line[38:46]), float(line[46:54])]
            altloc_of[resseq] = altloc
    if not found:
        raise StructureFormatError("no CA ATOM records")
    start = min(found) if first_residue is None else first_residue
    stop = max(found) + 1 if d is None else start + d
    missing = [r for r in range(start, stop) if r not in found]
    if missing:
        raise StructureFormatError(f"no CA record for residues {missing}")
    return np.array([found[r] for r in range(start, stop)])


def distance_matrix(coords) -> np.ndarray:
    coords = np.asarray(coords, dtype=float)
    if coords.ndim != 2 or coords.shape[0] < 2:
        raise ValueError("need at least two sites")
    diff = coords[:, None, :] - coords[None, :, :]
    D = np.sqrt((diff ** 2).sum(axis=-1))
    D = 0.5 * (D + D.T)
    np.fill_diagonal(D, 0.0)
    return D


def site_normalizer(D, j: int, strict: bool = True) -> float:
    """Population variance of the distances from site ``j`` to every other site.

    Raises :class:`DegenerateNormalizerError` for a zero variance unless
    ``strict`` is False.
    """
    D = np.asarray(D, dtype=float)
    others = np.delete(D[j], j)
    ms = float(np.mean((others - others.mean()) ** 2))
    if strict and ms <= 0:
        raise DegenerateNormalizerError(
            f"all distances from site {j + 1} are equal; normalizer is zero")
    return ms


def site_normalizers(D, strict: bool = True) -> np.ndarray:
    D = np.asarray(D, dtype=float)
    return np.array([site_normalizer(D, j, strict) for j in range(D.shape[0])])


def kernel(D_jr, ms_j=None, kind: str = "N1"):
    """Distance kernel. N1: ``1 - exp(-D^2/MS)``; N2: logistic of ``D``."""
    D_jr = np.asarray(D_jr, dtype=float)
    if kind == "N1":
        if ms_j is None or np.any(np.asarray(ms_j) <= 0):
            raise DegenerateNormalizerError("N1 kernel needs a positive site normalizer")
        out = -np.expm1(-D_jr ** 2 / ms_j)
    elif kind == "N2":
        # logistic(D) written stably for large D
        out = 0.5 * (1.0 + np.tanh(0.5 * D_jr))
    elif kind == "none":
        out = np.ones_like(D_jr)
    else:
        raise ValueError(f"unknown kernel {kind!r}")
    return out if out.ndim else float(out)


def scale_factor(n: float, group_size: int, d: int) -> float:
    """Distance-free part of the group weight."""
    # log(d-1) vanishes at d=2, which still gives a finite factor
    return math.sqrt(group_size / n) + math.sqrt(2.0 * math.log(max(d - 1, 1)) / n)


def group_weights(D, n: float, group_size: int, kind: str = "N1",
                  symmetric_normalizer: bool = False) -> StructureWeights:
    """Group-weight matrix ``w[j, r]`` for the penalty of site ``j``'s fit.

    Row ``j`` uses site ``j``'s normalizer. ``symmetric_normalizer`` replaces
    it with the mean of the two sites' normalizers, which makes ``w``
    symmetric.
    """
    D = np.asarray(D, dtype=float)
    d = D.shape[0]
    if kind not in KERNELS:
        raise ValueError(f"unknown kernel {kind!r}")
    if n < 1:
        raise ValueError("n must be >= 1")
    if d == 2 and kind == "N1":
        warnings.warn("site normalizer undefined for d=2; using kernel 'none'")
        kind = "none"
    factor = scale_factor(n, group_size, d)
    ms = None
    if kind == "N1":
        ms = site_normalizers(D)
        norm = 0.5 * (ms[:, None] + ms[None, :]) if symmetric_normalizer else ms[:, None]
        K = kernel(D, norm, "N1")
    else:
        K = kernel(D, None, kind)
    w = factor * K
    np.fill_diagonal(w, 0.0)
    return StructureWeights(w, kind, ms, float(n))


def uniform_weights(d: int, value: float = 1.0) -> StructureWeights:
    """Constant group weights (plain sparse group Lasso)."""
    w = np.full((d, d), float(value))
    np.fill_diagonal(w, 0.0)
    return StructureWeights(w, "none", None, float("nan"))


def read_matrix_csv(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", ndmin=2)


def write_matrix_csv(M, path) -> None:
    M = np.asarray(M)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in M:
            writer.writerow([repr(float(v)) if M.dtype.kind == "f" else str(v) for v in row])
