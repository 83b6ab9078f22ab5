"""Selection metrics, rank correlation, fitness landscapes and pair tables."""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import rankdata

from .model import PottsParams, delta_e_single


@dataclass(frozen=True)
class SelectionReport:
    mse: float
    tpr: float
    fdr: float
    tpr_g: float
    fdr_g: float
    tp: int
    fp: int
    fn: int
    tn: int
    tp_g: int
    fp_g: int
    fn_g: int
    tn_g: int

    def to_dict(self) -> dict:
        return {k: _json_safe(v) for k, v in asdict(self).items()}


def _json_safe(v):
    # undefined rates are NaN in memory and null on disk
    return None if isinstance(v, float) and math.isnan(v) else v


def _rates(tp, fp, fn):
    tpr = tp / (tp + fn) if tp + fn else math.nan
    fdr = fp / (fp + tp) if fp + tp else 0.0
    return tpr, fdr


def selection_metrics(estimate: PottsParams, truth, zero_tol: float = 1e-10) -> SelectionReport:
    """Estimation error and support recovery of the couplings.

    Element level counts every ``(j<r, k, l)``; group level counts unordered
    site pairs. ``truth`` may be a :class:`PottsParams` or a synthetic ground
    truth object with a ``params`` attribute. A TPR without true nonzeros is
    NaN; an FDR without discoveries is 0. An entry (or a block, by its
    Frobenius norm) counts as nonzero when it exceeds ``zero_tol``; the same
    rule applies to the truth, so true couplings too small to be told apart
    from arithmetic dust are not counted as missed.
    """
    true_p = getattr(truth, "params", truth)
    if (estimate.d, estimate.K) != (true_p.d, true_p.K):
        raise ValueError("estimate and truth differ in dimensions")
    d = estimate.d
    iu = np.triu_indices(d, 1)
    Je = estimate.dense()[iu]
    Jt = true_p.dense()[iu]
    mse = 2.0 * float(np.sum((Je - Jt) ** 2))

    est_nz = np.abs(Je) > zero_tol
    true_nz = np.abs(Jt) > zero_tol
    tp = int(np.sum(est_nz & true_nz))
    fp = int(np.sum(est_nz & ~true_nz))
    fn = int(np.sum(~est_nz & true_nz))
    tn = int(np.sum(~est_nz & ~true_nz))

    g_est = np.sqrt((Je ** 2).sum(axis=(1, 2))) > zero_tol
    g_true = np.sqrt((Jt ** 2).sum(axis=(1, 2))) > zero_tol
    tp_g = int(np.sum(g_est & g_true))
    fp_g = int(np.sum(g_est & ~g_true))
    fn_g = int(np.sum(~g_est & g_true))
    tn_g = int(np.sum(~g_est & ~g_true))

    tpr, fdr = _rates(tp, fp, fn)
    tpr_g, fdr_g = _rates(tp_g, fp_g, fn_g)
    return SelectionReport(mse, tpr, fdr, tpr_g, fdr_g, tp, fp, fn, tn, tp_g, fp_g, fn_g, tn_g)


def mean_reports(reports: Sequence[SelectionReport]) -> dict:
    """Field-wise means over replicates, ignoring undefined rates."""
    out = {}
    for name in SelectionReport.__dataclass_fields__:
        vals = np.array([getattr(r, name) for r in reports], dtype=float)
        finite = vals[~np.isnan(vals)]
        out[name] = float(finite.mean()) if finite.size else math.nan
    return out


def spearman(x, y) -> float:
    """Rank correlation with mid-ranks for ties; NaN for a constant input."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1 or x.size < 2:
        raise ValueError("need two vectors of equal length >= 2")
    rx, ry = rankdata(x), rankdata(y)
    rx -= rx.mean()
    ry -= ry.mean()
    denom = math.sqrt(float(np.dot(rx, rx)) * float(np.dot(ry, ry)))
    if denom == 0.0:
        return math.nan
    return float(np.clip(np.dot(rx, ry) / denom, -1.0, 1.0))


@dataclass(frozen=True, eq=False)
class FitnessLandscape:
    """Energy change per site and state; column 0 is the wild-type (always 0)."""

    delta_e: np.ndarray
    site_labels: tuple
    state_symbols: tuple

    def rows(self) -> Iterable[tuple]:
        for j, label in enumerate(self.site_labels):
            for k, sym in enumerate(self.state_symbols[j]):
                yield label, sym, float(self.delta_e[j, k])

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["site", "symbol", "delta_e"])
            for label, sym, v in self.rows():
                writer.writerow([label, sym, repr(v)])


def landscape(params: PottsParams) -> FitnessLandscape:
    d, K = params.d, params.K
    grid = np.zeros((d, K + 1))
    for j in range(d):
        for k in range(1, K + 1):
            grid[j, k] = delta_e_single(params, j, k)
    symbols = tuple(tuple(params.site_symbols(j)) for j in range(d))
    return FitnessLandscape(grid, tuple(range(1, d + 1)), symbols)


def pair_dependency(params: PottsParams, j: int, r: int) -> np.ndarray:
    """``K x K`` table of coupling plus both single-site effects."""
    if j == r:
        raise ValueError("pair dependency needs two distinct sites")
    return params.block(j, r) + params.theta[j][:, None] + params.theta[r][None, :]


def write_pair_dependency(params: PottsParams, j: int, r: int, path) -> None:
    table = pair_dependency(params, j, r)
    sj, sr = params.site_symbols(j), params.site_symbols(r)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["state_j", "state_r", "value"])
        for k in range(params.K):
            for l in range(params.K):
                writer.writerow([sj[k + 1], sr[l + 1], repr(float(table[k, l]))])


@dataclass
class BenchmarkResult:
    rho: float
    table: list

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["site", "state", "delta_e", "value", "rare"])
            for row in self.table:
                writer.writerow([row[0] + 1, row[1], repr(row[2]), repr(row[3]), int(row[4])])


def fitness_benchmark(params: PottsParams, mutations: Sequence[tuple], rare_mask=None
                      ) -> BenchmarkResult:
    """Rank-correlate predicted energy changes with measured fitness.

    ``mutations`` holds ``(site, state, value)`` with 0-based sites and state
    indices. Mutations to rare-masked states stay in (their coefficients are
    zero) and are flagged in the table.
    """
    table = []
    for site, state, value in mutations:
        if not (0 <= site < params.d and 0 <= state <= params.K):
            raise ValueError(f"invalid mutation ({site}, {state})")
        rare = bool(rare_mask[site, state]) if rare_mask is not None else False
        table.append((site, state, delta_e_single(params, site, state), float(value), rare))
    rho = spearman([t[2] for t in table], [t[3] for t in table])
    return BenchmarkResult(rho, table)


def read_fitness_csv(path, params: PottsParams) -> list[tuple]:
    """Read ``site,target_symbol,value`` rows (1-based sites) into state-index tuples."""
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            j = int(row["site"]) - 1
            syms = params.site_symbols(j)
            sym = row["target_symbol"].strip().upper()
            if sym not in syms:
                raise ValueError(f"symbol {sym!r} unknown at site {j + 1}")
            out.append((j, syms.index(sym), float(row["value"])))
    return out
