"""Synthetic Potts parameters and Gibbs sampling of sequences.

Every generator takes a ``seed`` (int, ``numpy.random.SeedSequence`` or
``Generator``). Replicates derive their seeds from a master seed with
``SeedSequence(master).spawn(n)``; see :func:`replicate_seeds`.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .model import PottsParams
from .structure import site_normalizers

logger = logging.getLogger(__name__)

ACTIVE_STATES = 5
DEFAULT_TAU = {25: 3.0, 50: 1.5}


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def replicate_seeds(master: int, n: int) -> list[np.random.SeedSequence]:
    return np.random.SeedSequence(master).spawn(n)


@dataclass(frozen=True, eq=False)
class SyntheticGroundTruth:
    params: PottsParams
    adjacency: np.ndarray
    distances: np.ndarray
    sparsity: np.ndarray
    seed: object = None

    @property
    def n_edges(self) -> int:
        return int(np.triu(self.adjacency, 1).sum())


@dataclass(frozen=True)
class GibbsConfig:
    burn_in: int = 200
    thin: int = 10
    init: str = "random-uniform"
    chains: int = 1
    seed: object = None

    def __post_init__(self):
        if self.burn_in < 0 or self.thin < 1 or self.chains < 1:
            raise ValueError("need burn_in >= 0, thin >= 1 and chains >= 1")
        if self.init not in ("random-uniform", "all-reference"):
            raise ValueError(f"unknown init {self.init!r}")


def gen_distances(d: int, seed=None) -> np.ndarray:
    """Symmetric matrix with upper-triangle entries 40 * Beta(2, 2)."""
    if d < 3:
        raise ValueError("d must be >= 3")
    rng = _rng(seed)
    iu = np.triu_indices(d, 1)
    D = np.zeros((d, d))
    D[iu] = 40.0 * rng.beta(2.0, 2.0, size=len(iu[0]))
    return D + D.T


def gen_theta(d: int, K: int, seed=None) -> np.ndarray:
    return _rng(seed).uniform(0.0, 2.0, size=(d, K))


def _signed_magnitudes(rng, size) -> np.ndarray:
    # uniform on [-2, -0.5] U [0.5, 2]
    mag = rng.uniform(0.5, 2.0, size=size)
    sign = np.where(rng.random(size) < 0.5, -1.0, 1.0)
    return sign * mag


def _truth(theta, blocks, A, D, seed) -> SyntheticGroundTruth:
    d, K = theta.shape
    params = PottsParams(theta, blocks)
    J = params.dense()
    s = (J != 0).reshape(d, -1).sum(axis=1)
    s_g = (np.abs(J).sum(axis=(2, 3)) != 0).sum(axis=1)
    return SyntheticGroundTruth(params, A, D, np.stack([s, s_g], axis=1), seed)


def gen_coupling_m1(d: int, K: int, D, seed=None, theta=None) -> SyntheticGroundTruth:
    """Distance-scaled couplings on a sparse Erdos-Renyi site graph.

    Edge probability ``log(d)/(2d)``; an edge's first five states carry
    ``exp(-D^2/MS_j) * u`` with ``j`` the smaller site index.
    """
    if d < 3 or K < ACTIVE_STATES:
        raise ValueError(f"need d >= 3 and K >= {ACTIVE_STATES}")
    rng = _rng(seed)
    D = np.asarray(D, dtype=float)
    if theta is None:
        theta = gen_theta(d, K, rng)
    ms = site_normalizers(D)
    p = math.log(d) / (2 * d)
    A = np.zeros((d, d), dtype=np.int64)
    blocks = {}
    for j in range(d):
        for r in range(j + 1, d):
            if rng.random() < p:
                A[j, r] = A[r, j] = 1
                B = np.zeros((K, K))
                B[:ACTIVE_STATES, :ACTIVE_STATES] = (
                    math.exp(-D[j, r] ** 2 / ms[j])
                    * _signed_magnitudes(rng, (ACTIVE_STATES, ACTIVE_STATES)))
                blocks[(j, r)] = B
    return _truth(theta, blocks, A, D, seed)


def m2_probabilities(D, tau: float) -> np.ndarray:
    """Unclipped connection probabilities; row ``j`` sums to ``tau`` over ``r != j``."""
    D = np.asarray(D, dtype=float)
    ms = site_normalizers(D)
    E = np.exp(-D ** 2 / ms[:, None])
    np.fill_diagonal(E, 0.0)
    return tau * E / E.sum(axis=1, keepdims=True)


def gen_coupling_m2(d: int, K: int, D, tau: float | None = None, seed=None,
                    theta=None) -> SyntheticGroundTruth:
    """Distance-dependent connection probabilities with unscaled magnitudes."""
    if d < 3 or K < ACTIVE_STATES:
        raise ValueError(f"need d >= 3 and K >= {ACTIVE_STATES}")
    if tau is None:
        if d not in DEFAULT_TAU:
            raise ValueError(f"no default tau for d={d}; pass tau explicitly")
        tau = DEFAULT_TAU[d]
    rng = _rng(seed)
    D = np.asarray(D, dtype=float)
    if theta is None:
        theta = gen_theta(d, K, rng)
    P = m2_probabilities(D, tau)
    if np.any(P > 1):
        logger.warning("clipping %d connection probabilities at 1", int(np.triu(P > 1, 1).sum()))
        P = np.minimum(P, 1.0)
    A = np.zeros((d, d), dtype=np.int64)
    blocks = {}
    for j in range(d):
        for r in range(j + 1, d):
            if rng.random() < P[j, r]:
                A[j, r] = A[r, j] = 1
                B = np.zeros((K, K))
                B[:ACTIVE_STATES, :ACTIVE_STATES] = _signed_magnitudes(
                    rng, (ACTIVE_STATES, ACTIVE_STATES))
                blocks[(j, r)] = B
    return _truth(theta, blocks, A, D, seed)


def gibbs_sample(truth, n: int, cfg: GibbsConfig = GibbsConfig()) -> np.ndarray:
    """Draw ``n`` sequences (n x d integer states, 0 = reference).

    Each chain runs systematic site-by-site sweeps, discards ``burn_in``
    sweeps and keeps every ``thin``-th sweep after that. With several chains
    the samples are split as evenly as possible between them.
    """
    params = truth.params if isinstance(truth, SyntheticGroundTruth) else truth
    if n < 1:
        raise ValueError("n must be >= 1")
    h, J = params.padded()
    J = np.ascontiguousarray(J.astype(np.float64))
    d, S = h.shape
    out = np.zeros((n, d), dtype=np.int64)
    chain_seeds = fresh_seed(cfg.seed).spawn(cfg.chains)
    sizes = [n // cfg.chains + (c < n % cfg.chains) for c in range(cfg.chains)]
    start = 0
    for size, cs in zip(sizes, chain_seeds):
        if size == 0:
            continue
        rng = np.random.default_rng(cs)
        if cfg.init == "random-uniform":
            z = rng.integers(0, S, size=d).astype(np.int64)
        else:
            z = np.zeros(d, dtype=np.int64)
        uniforms = rng.random((cfg.burn_in + size * cfg.thin) * d)
        _kernels.gibbs_chain(h, J, z, uniforms, cfg.burn_in, cfg.thin, size, out, start)
        start += size
    return out


def fresh_seed(seed) -> np.random.SeedSequence:
    # a new object each call, so spawning never depends on earlier calls
    if isinstance(seed, np.random.SeedSequence):
        return np.random.SeedSequence(seed.entropy, spawn_key=seed.spawn_key)
    return np.random.SeedSequence(seed)
