"""Monte Carlo simulation study: simulate, tune, fit and score several estimators."""
from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .cv import GRID_J, CvGrid, cross_validate, cross_validate_ridge
from .evaluate import SelectionReport, mean_reports, selection_metrics
from .msa import EncodedAlignment, encode_states
from .sampler import (GibbsConfig, SyntheticGroundTruth, fresh_seed, gen_coupling_m1,
                      gen_coupling_m2, gen_distances, gibbs_sample)
from .solver import FitConfig, fit_all
from .structure import group_weights

logger = logging.getLogger(__name__)

SETTINGS = ("M1", "M2")
METHODS = ("ours", "ours-N2", "sgl", "lasso", "ridge")
TUNING = ("pilot", "per-replicate")
RIDGE_GRID = tuple(2.0 ** j for j in GRID_J)


def simulate(setting: str, d: int, K: int, n: int, seed, tau: float | None = None,
             gibbs: GibbsConfig | None = None) -> tuple[SyntheticGroundTruth, np.ndarray]:
    """One synthetic data set.

    ``seed`` is split into independent streams for the distances, the
    couplings and the sampler, so data sets of different ``n`` drawn from the
    same seed share their ground truth and the smaller is a prefix of the
    larger.
    """
    if setting not in SETTINGS:
        raise ValueError(f"setting must be one of {SETTINGS}, got {setting!r}")
    s_dist, s_coup, s_gibbs = fresh_seed(seed).spawn(3)
    D = gen_distances(d, s_dist)
    if setting == "M1":
        truth = gen_coupling_m1(d, K, D, s_coup)
    else:
        truth = gen_coupling_m2(d, K, D, tau=tau, seed=s_coup)
    gibbs = gibbs or GibbsConfig()
    cfg = GibbsConfig(gibbs.burn_in, gibbs.thin, gibbs.init, gibbs.chains, s_gibbs)
    return truth, gibbs_sample(truth, n, cfg)


def method_config(method: str, D: np.ndarray, n: int, K: int, base: FitConfig) -> FitConfig:
    """Fit configuration (without penalty levels) for a named estimator."""
    if method == "ours":
        return replace(base, weights=group_weights(D, n, K * K, "N1"))
    if method == "ours-N2":
        return replace(base, weights=group_weights(D, n, K * K, "N2"))
    if method == "sgl":
        return replace(base, weights=group_weights(D, n, K * K, "none"))
    if method == "lasso":
        return replace(base, weights=group_weights(D, n, K * K, "none"), penalty_kind="lasso-only")
    if method == "ridge":
        return replace(base, weights=None, penalty_kind="ridge")
    raise ValueError(f"unknown method {method!r}; choose from {METHODS}")


def tune(method: str, encoded: EncodedAlignment, D: np.ndarray, base: FitConfig,
         grid: CvGrid, seed, threads: int = 1) -> tuple[float, float]:
    """Cross-validated ``(lam_g, lam)``; ridge returns ``(0, ridge_lambda)``."""
    cfg = method_config(method, D, encoded.n, encoded.K, base)
    if method == "ridge":
        return cross_validate_ridge(encoded, RIDGE_GRID, cfg, folds=grid.folds, seed=seed,
                                    threads=threads).best
    if method == "lasso":
        grid = CvGrid(I=(0.0,), J=grid.J, folds=grid.folds, swap=grid.swap)
    return cross_validate(encoded, grid, cfg, seed=seed, threads=threads).best


def fit_method(method: str, encoded: EncodedAlignment, D, levels, base: FitConfig,
               threads: int = 1):
    cfg = method_config(method, D, encoded.n, encoded.K, base)
    if method == "ridge":
        cfg = replace(cfg, ridge_lambda=levels[1])
    else:
        cfg = cfg.with_penalty(*levels)
    return fit_all(encoded, cfg, threads=threads)


@dataclass(frozen=True)
class StudyConfig:
    setting: str = "M1"
    d: int = 25
    K: int = 5
    ns: tuple = (500, 1000, 2000)
    replicates: int = 10
    methods: tuple = ("ours", "sgl", "ridge")
    tuning: str = "pilot"
    grid: CvGrid = CvGrid()
    tau: float | None = None
    min_count: int = 10
    seed: int = 0
    gibbs: GibbsConfig = GibbsConfig()
    fit: FitConfig = field(default_factory=FitConfig)

    def __post_init__(self):
        if self.tuning not in TUNING:
            raise ValueError(f"tuning must be one of {TUNING}")
        for m in self.methods:
            if m not in METHODS:
                raise ValueError(f"unknown method {m!r}; choose from {METHODS}")
        if self.replicates < 1:
            raise ValueError("need at least one replicate")


@dataclass
class StudyResult:
    config: StudyConfig
    records: list = field(default_factory=list)

    def reports(self, n: int, method: str) -> list[SelectionReport]:
        return [r["report"] for r in self.records if r["n"] == n and r["method"] == method]

    def means(self, n: int, method: str) -> dict:
        return mean_reports(self.reports(n, method))

    def column(self, n: int, method: str, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.reports(n, method)], dtype=float)

    def write_csv(self, path) -> None:
        names = list(SelectionReport.__dataclass_fields__)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["n", "replicate", "method", "lambda_g", "lambda"] + names)
            for r in self.records:
                rep = r["report"]
                writer.writerow([r["n"], r["replicate"], r["method"], repr(r["levels"][0]),
                                 repr(r["levels"][1])] + [repr(getattr(rep, k)) for k in names])


def _encode(states, K, min_count) -> EncodedAlignment:
    return encode_states(states, K, min_count=min_count)


def run_study(cfg: StudyConfig, threads: int = 1) -> StudyResult:
    """Replicated simulation study.

    Replicate ``r`` uses the ``r``-th child of ``SeedSequence(cfg.seed)`` for
    every sample size, so results are paired across ``n`` and methods. With
    ``tuning="pilot"`` each ``(n, method)`` is tuned once by cross-validation
    on an extra independent replicate and the chosen levels are reused;
    ``"per-replicate"`` cross-validates every fit.
    """
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.replicates + 1)
    rep_seeds, pilot_seed = seeds[:-1], seeds[-1]
    result = StudyResult(cfg)
    for n in cfg.ns:
        pilot_levels = {}
        if cfg.tuning == "pilot":
            truth, states = simulate(cfg.setting, cfg.d, cfg.K, n, pilot_seed, cfg.tau, cfg.gibbs)
            enc = _encode(states, cfg.K, cfg.min_count)
            for m in cfg.methods:
                t0 = time.perf_counter()
                pilot_levels[m] = tune(m, enc, truth.distances, cfg.fit, cfg.grid, seed=0,
                                       threads=threads)
                logger.info("n=%d %s: pilot levels %s (%.1fs)", n, m, pilot_levels[m],
                            time.perf_counter() - t0)
        for r, s in enumerate(rep_seeds):
            truth, states = simulate(cfg.setting, cfg.d, cfg.K, n, s, cfg.tau, cfg.gibbs)
            enc = _encode(states, cfg.K, cfg.min_count)
            for m in cfg.methods:
                levels = pilot_levels.get(m)
                if levels is None:
                    levels = tune(m, enc, truth.distances, cfg.fit, cfg.grid, seed=r,
                                  threads=threads)
                est = fit_method(m, enc, truth.distances, levels, cfg.fit, threads)
                rep = selection_metrics(est, truth)
                if m == "ridge":
                    # ridge selects nothing, so its support rates are undefined
                    rep = replace(rep, tpr=math.nan, fdr=math.nan, tpr_g=math.nan,
                                  fdr_g=math.nan)
                result.records.append({"n": n, "replicate": r, "method": m,
                                       "levels": tuple(float(v) for v in levels),
                                       "report": rep})
    return result
