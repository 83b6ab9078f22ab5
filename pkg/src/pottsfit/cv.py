"""K-fold cross-validation over (lam_g, lam) with warm starts."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .model import PottsParams
from .msa import EncodedAlignment
from .solver import FitConfig, fit_all

logger = logging.getLogger(__name__)

GRID_I = tuple(round(0.1 * k, 1) for k in range(11))
GRID_J = (-5.0, -4.0, -3.0, -2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0)


@dataclass(frozen=True)
class CvGrid:
    """Candidates ``(i * 2**j, (1 - i) * 2**j)`` read as ``(lam_g, lam)``.

    ``swap`` reads the pair the other way round.
    """

    I: tuple = GRID_I
    J: tuple = GRID_J
    folds: int = 5
    swap: bool = False

    def points(self) -> list[tuple[float, float]]:
        return [p for row in self.rows() for p in row]

    def rows(self) -> list[list[tuple[float, float]]]:
        """Candidates grouped by ``i``, each row ordered from the largest scale down."""
        out = []
        for i in self.I:
            row = []
            for j in sorted(self.J, reverse=True):
                a, b = i * 2.0 ** j, (1.0 - i) * 2.0 ** j
                row.append((b, a) if self.swap else (a, b))
            out.append(row)
        return out


@dataclass
class CvResult:
    best: tuple
    best_score: float
    table: list = field(repr=False)
    scores: dict = field(repr=False)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["lambda_g", "lambda", "fold", "heldout_nll"])
            for row in self.table:
                writer.writerow([repr(float(row[0])), repr(float(row[1])), row[2],
                                 repr(float(row[3]))])


def fold_ids(n: int, folds: int, seed) -> np.ndarray:
    if n < folds:
        raise ValueError(f"need at least {folds} sequences for {folds}-fold CV, got {n}")
    perm = np.random.default_rng(seed).permutation(n)
    ids = np.empty(n, dtype=np.int64)
    ids[perm] = np.arange(n) % folds
    return ids


def heldout_nll(params: PottsParams, states: np.ndarray, weights=None,
                rare_mask: np.ndarray | None = None) -> float:
    """Weighted node-wise conditional negative log-likelihood summed over sites.

    Rows whose state at site ``j`` is flagged in ``rare_mask`` (the training
    fold's mask) are skipped for that site, and flagged states are left out of
    the softmax, matching how the fit treats them.
    """
    states = np.asarray(states)
    n, d = states.shape
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    h, J = params.padded()
    total = 0.0
    for j in range(d):
        logits = np.repeat(h[j][None, :], n, axis=0)
        for r in range(d):
            if r != j:
                logits += J[j, r][:, states[:, r]].T
        keep = np.ones(n, dtype=bool)
        if rare_mask is not None:
            logits[:, rare_mask[j]] = -np.inf
            keep = ~rare_mask[j, states[:, j]]
        mx = logits.max(axis=1, keepdims=True)
        lse = mx[:, 0] + np.log(np.exp(logits - mx).sum(axis=1))
        ll = logits[np.arange(n), states[:, j]] - lse
        total -= float(np.dot(w[keep], ll[keep]))
    return total


def _evaluate(encoded: EncodedAlignment, rows: Sequence[Sequence[FitConfig]], folds: int,
              seed, threads: int) -> dict:
    ids = fold_ids(encoded.n, folds, seed)
    losses: dict[int, list[float]] = {}
    for f in range(folds):
        train = encoded.subset(np.flatnonzero(ids != f))
        test = np.flatnonzero(ids == f)
        idx = 0
        for row in rows:
            warm = None
            for cfg in row:
                params = fit_all(train, cfg, threads=threads, init=warm)
                warm = params
                loss = heldout_nll(params, encoded.states[test], encoded.weights[test],
                                   train.rare_mask)
                losses.setdefault(idx, []).append(loss)
                idx += 1
    return losses


def cross_validate(encoded: EncodedAlignment, grid: CvGrid = CvGrid(),
                   cfg: FitConfig = FitConfig(), seed=0, threads: int = 1) -> CvResult:
    """Pick ``(lam_g, lam)`` by held-out weighted negative log-likelihood.

    Ties go to the smaller ``lam_g + lam`` and then the smaller ``lam_g``.
    """
    point_rows = grid.rows()
    cfg_rows = [[cfg.with_penalty(lg, l) for lg, l in row] for row in point_rows]
    losses = _evaluate(encoded, cfg_rows, grid.folds, seed, threads)
    points = [p for row in point_rows for p in row]
    return _summarize(points, losses)


def cross_validate_ridge(encoded: EncodedAlignment, values: Sequence[float],
                         cfg: FitConfig = FitConfig(penalty_kind="ridge"), folds: int = 5,
                         seed=0, threads: int = 1) -> CvResult:
    """Pick the ridge level; table rows carry it in the ``lambda`` column."""
    values = sorted(values, reverse=True)
    cfg = replace(cfg, penalty_kind="ridge")
    losses = _evaluate(encoded, [[replace(cfg, ridge_lambda=v) for v in values]],
                       folds, seed, threads)
    return _summarize([(0.0, v) for v in values], losses)


def _summarize(points, losses) -> CvResult:
    table, scores = [], {}
    for idx, (lg, l) in enumerate(points):
        per_fold = losses[idx]
        for f, v in enumerate(per_fold):
            table.append((lg, l, f, v))
        mean = float(np.mean(per_fold))
        table.append((lg, l, "mean", mean))
        scores[(lg, l)] = mean
    best = min(scores, key=lambda p: (scores[p], p[0] + p[1], p[0]))
    return CvResult(best, scores[best], table, scores)
