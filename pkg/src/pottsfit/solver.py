"""Node-wise multinomial regression with a (weighted) sparse group Lasso penalty.

For site ``j`` the objective is

    (1/n) * sum_i w_i * nll_i(theta_j, gamma_j)
        + lam_g * sum_r w_jr * ||gamma_j(r)||_2 + lam * sum_r ||gamma_j(r)||_1

where ``w_i`` are sequence weights and ``w_jr`` group weights. It is
minimized by nested loops: an outer quadratic model of the likelihood with a
diagonal curvature that dominates the Hessian at the current iterate, a
middle cyclic pass over the intercepts and the coupling blocks, and an inner
one-dimensional root solve that gives each block's exact minimizer. Outer
steps are damped by a backtracking line search on the true objective.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .model import PottsParams, symmetrize
from .msa import EncodedAlignment
from .structure import StructureWeights

logger = logging.getLogger(__name__)

PENALTY_KINDS = ("sparse-group", "lasso-only", "group-only", "ridge")


class FitError(RuntimeError):
    pass


class DivergedError(FitError):
    pass


@dataclass(frozen=True, eq=False)
class FitConfig:
    lam: float = 0.0
    lam_g: float = 0.0
    weights: StructureWeights | None = None
    penalty_kind: str = "sparse-group"
    ridge_lambda: float = 0.0
    tol_outer: float = 1e-5
    tol_middle: float = 1e-5
    tol_inner: float = 1e-7
    max_outer: int = 200
    max_middle: int = 5
    max_inner: int = 1000
    sample_weights: np.ndarray | str | None = None

    def __post_init__(self):
        if self.penalty_kind not in PENALTY_KINDS:
            raise ValueError(f"penalty_kind must be one of {PENALTY_KINDS}")
        for name in ("lam", "lam_g", "ridge_lambda", "tol_outer", "tol_middle", "tol_inner"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.penalty_kind == "lasso-only":
            object.__setattr__(self, "lam_g", 0.0)
        elif self.penalty_kind == "group-only":
            object.__setattr__(self, "lam", 0.0)

    def with_penalty(self, lam_g: float, lam: float) -> "FitConfig":
        return replace(self, lam=lam, lam_g=lam_g)


@dataclass(eq=False)
class SiteFit:
    site: int
    theta: np.ndarray
    gamma: np.ndarray
    trace: np.ndarray
    n_iter: int
    status: str
    screen_stats: np.ndarray = field(repr=False)
    screened: frozenset = frozenset()
    degenerate_states: tuple = ()

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    @property
    def active_groups(self) -> set[int]:
        return {r for r in range(self.gamma.shape[0]) if np.any(self.gamma[r] != 0)}

    @property
    def objective(self) -> float:
        return float(self.trace[-1])


_STATUS = {
    _kernels.STATUS_CONVERGED: "converged",
    _kernels.STATUS_MAX_ITER: "max_iter",
    _kernels.STATUS_STALLED: "stalled",
    _kernels.STATUS_DIVERGED: "diverged",
}


# ---------------------------------------------------------------------------
# loss, gradient and proximal primitives on the one-hot design

def soft_threshold(a, b: float) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    return np.sign(a) * np.maximum(np.abs(a) - b, 0.0)


def screen_group(grad_at_zero, lam: float, lam_g: float, w: float = 1.0) -> bool:
    """True when the block's optimum is exactly zero.

    A zero group weight never triggers the rule.
    """
    if w == 0:
        return False
    return bool(np.linalg.norm(soft_threshold(np.ravel(grad_at_zero), lam)) <= lam_g * w)


def design(encoded: EncodedAlignment, j: int, drop_rare: bool = False):
    """One-hot covariates ``X`` (n x (d-1)K) and response ``Y`` (n x K) for site ``j``.

    With ``drop_rare`` the rare covariate columns are zeroed and rows whose
    response is a rare state are removed; the kept row indices are returned
    as a third value.
    """
    states = encoded.states
    n, d = states.shape
    K = encoded.K
    rows = np.arange(n)
    Z = states
    if drop_rare:
        rows = np.flatnonzero(~encoded.rare_mask[j, states[:, j]])
        Z = _mask_covariates(states, encoded.rare_mask)[rows]
    others = [r for r in range(d) if r != j]
    X = np.zeros((len(rows), (d - 1) * K))
    for idx, r in enumerate(others):
        nz = np.flatnonzero(Z[:, r] > 0)
        X[nz, idx * K + Z[nz, r] - 1] = 1.0
    Y = np.zeros((len(rows), K))
    yj = states[rows, j]
    nz = np.flatnonzero(yj > 0)
    Y[nz, yj[nz] - 1] = 1.0
    if drop_rare:
        return X, Y, rows
    return X, Y


def blocks_to_matrix(G: np.ndarray, j: int) -> np.ndarray:
    """(d, K, K) per-site blocks -> ((d-1)K, K) coefficient matrix, column k per state."""
    d, K, _ = G.shape
    return np.concatenate([G[r].T for r in range(d) if r != j], axis=0)


def matrix_to_blocks(gamma: np.ndarray, j: int, d: int) -> np.ndarray:
    K = gamma.shape[1]
    G = np.zeros((d, K, K))
    others = [r for r in range(d) if r != j]
    for idx, r in enumerate(others):
        G[r] = gamma[idx * K:(idx + 1) * K].T
    return G


def _logits(theta, gamma, X, class_mask):
    eta = np.asarray(X) @ np.asarray(gamma) + np.asarray(theta)[None, :]
    if class_mask is not None:
        eta = np.where(np.asarray(class_mask)[None, :], eta, -np.inf)
    return eta


def nll(theta, gamma, X, Y, sample_weights=None, class_mask=None) -> float:
    """Weighted multinomial negative log-likelihood with a reference class.

    ``gamma`` is ``((d-1)K, K)``; column ``k`` holds the couplings of state
    ``k+1``. ``class_mask`` removes classes from the softmax.
    """
    eta = _logits(theta, gamma, X, class_mask)
    n = eta.shape[0]
    w = np.ones(n) if sample_weights is None else np.asarray(sample_weights, dtype=float)
    mx = np.maximum(eta.max(axis=1), 0.0)
    lse = mx + np.log(np.exp(-mx) + np.exp(eta - mx[:, None]).sum(axis=1))
    fitted = np.where(np.asarray(Y) > 0, eta, 0.0).sum(axis=1)
    return float(np.dot(w, lse - fitted))


def nll_gradient(theta, gamma, X, Y, sample_weights=None, class_mask=None):
    """Gradient of :func:`nll` as ``(d_theta, d_gamma)`` with the shapes of the inputs."""
    eta = _logits(theta, gamma, X, class_mask)
    n = eta.shape[0]
    w = np.ones(n) if sample_weights is None else np.asarray(sample_weights, dtype=float)
    mx = np.maximum(eta.max(axis=1), 0.0)
    e = np.exp(eta - mx[:, None])
    p = e / (np.exp(-mx) + e.sum(axis=1))[:, None]
    R = w[:, None] * (p - np.asarray(Y))
    if class_mask is not None:
        R[:, ~np.asarray(class_mask)] = 0.0
    return R.sum(axis=0), np.asarray(X).T @ R


# ---------------------------------------------------------------------------
# per-site fitting

def _mask_covariates(states, rare_mask):
    Z = states.copy()
    for r in range(states.shape[1]):
        Z[rare_mask[r, states[:, r]], r] = 0
    return Z


@dataclass
class _Problem:
    y: np.ndarray
    Z: np.ndarray
    sw: np.ndarray
    N: float
    allowed: np.ndarray
    gw: np.ndarray
    rows: np.ndarray


def _sample_weights(encoded: EncodedAlignment, cfg: FitConfig) -> np.ndarray:
    sw = cfg.sample_weights
    if sw is None:
        return np.asarray(encoded.weights, dtype=float)
    if isinstance(sw, str):
        if sw != "uniform":
            raise ValueError("sample_weights must be an array, None or 'uniform'")
        return np.ones(encoded.n)
    sw = np.asarray(sw, dtype=float)
    if sw.shape != (encoded.n,):
        raise ValueError(f"sample_weights must have shape ({encoded.n},)")
    return sw


def _problem(encoded: EncodedAlignment, j: int, cfg: FitConfig, Zmasked=None) -> _Problem:
    states = encoded.states
    rare = encoded.rare_mask
    rows = np.flatnonzero(~rare[j, states[:, j]])
    if Zmasked is None:
        Zmasked = _mask_covariates(states, rare)
    sw = _sample_weights(encoded, cfg)
    d = encoded.d
    if cfg.weights is None:
        gw = np.ones(d)
    else:
        w = np.asarray(cfg.weights.w)
        if w.shape != (d, d):
            raise ValueError(f"group weights are {w.shape}, alignment has d={d}")
        gw = w[j].astype(float)
    return _Problem(np.ascontiguousarray(states[rows, j]), np.ascontiguousarray(Zmasked[rows]),
                    np.ascontiguousarray(sw[rows]), float(encoded.n),
                    ~rare[j, 1:], np.ascontiguousarray(gw), rows)


def _mode_and_levels(cfg: FitConfig):
    if cfg.penalty_kind == "ridge":
        return _kernels.MODE_RIDGE, 0.0, 0.0, float(cfg.ridge_lambda)
    return _kernels.MODE_SGL, float(cfg.lam), float(cfg.lam_g), 0.0


def _intercept_init(prob: _Problem, K: int) -> np.ndarray:
    counts = np.bincount(prob.y, weights=prob.sw, minlength=K + 1)
    theta = np.zeros(K)
    if counts[0] > 0:
        ok = prob.allowed & (counts[1:] > 0)
        theta[ok] = np.log(counts[1:][ok] / counts[0])
    return theta


def fit_site(j: int, encoded: EncodedAlignment, cfg: FitConfig = FitConfig(), init=None,
             _Zmasked=None) -> SiteFit:
    """Fit the penalized multinomial regression of site ``j`` on all other sites.

    ``init`` is an optional ``(theta, gamma_blocks)`` warm start.
    """
    d, K = encoded.d, encoded.K
    if not 0 <= j < d:
        raise ValueError(f"site {j} out of range")
    prob = _problem(encoded, j, cfg, _Zmasked)
    degenerate = tuple(int(k) for k in np.flatnonzero(~prob.allowed) + 1)
    if prob.allowed.any() and not np.any(prob.y == 0):
        raise FitError(f"site {j + 1}: reference state never observed; parameters unbounded")
    if init is None:
        theta0, G0 = _intercept_init(prob, K), np.zeros((d, K, K))
    else:
        theta0 = np.array(init[0], dtype=float)
        G0 = np.array(init[1], dtype=float)
        theta0[~prob.allowed] = 0.0
        G0[:, ~prob.allowed, :] = 0.0
        G0[j] = 0.0
    mode, lam, lam_g, ridge = _mode_and_levels(cfg)
    theta, G, trace, n_iter, status, stats, scr = _kernels.fit_site_kernel(
        prob.y, prob.Z, j, prob.sw, prob.N, prob.allowed, prob.gw, lam, lam_g, ridge, mode,
        theta0, G0, cfg.tol_outer, cfg.tol_middle, cfg.tol_inner,
        cfg.max_outer, cfg.max_middle, cfg.max_inner)
    status = _STATUS[status]
    if status == "diverged" or not np.all(np.isfinite(trace)):
        raise DivergedError(f"site {j + 1}: objective is not finite; "
                            "try stronger penalties or rescaled sample weights")
    if status != "converged":
        logger.warning("site %d: fit stopped with status %s after %d iterations",
                       j + 1, status, n_iter)
    G[j] = 0.0
    screened = frozenset(int(r) for r in np.flatnonzero(scr) if not np.any(G[r]))
    return SiteFit(j, theta, G, trace, int(n_iter), status, stats, screened, degenerate)


def fit_all(encoded: EncodedAlignment, cfg: FitConfig = FitConfig(), threads: int = 1,
            init: PottsParams | None = None, return_fits: bool = False):
    """Fit every site and symmetrize the couplings.

    Site fits are independent; ``threads > 1`` runs them concurrently and the
    merge order is fixed, so results do not depend on the thread count.
    """
    Zm = _mask_covariates(encoded.states, encoded.rare_mask)
    inits = [None] * encoded.d
    if init is not None:
        J = init.dense()
        inits = [(init.theta[j], J[j]) for j in range(encoded.d)]

    def one(j):
        try:
            return fit_site(j, encoded, cfg, inits[j], _Zmasked=Zm)
        except FitError:
            raise
        except Exception as exc:
            raise FitError(f"site {j + 1}: {exc}") from exc

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            fits = list(pool.map(one, range(encoded.d)))
    else:
        fits = [one(j) for j in range(encoded.d)]
    params = symmetrize(fits, encoded.alphabet, encoded.wildtype, encoded.rare_mask)
    return (params, fits) if return_fits else params


def kkt_residual(fit: SiteFit, encoded: EncodedAlignment, cfg: FitConfig) -> float:
    """Largest violation of the subgradient optimality conditions of a site fit."""
    j, d, K = fit.site, encoded.d, encoded.K
    X, Y, rows = design(encoded, j, drop_rare=True)
    allowed = ~encoded.rare_mask[j, 1:]
    if not allowed.any():
        return 0.0
    sw = _sample_weights(encoded, cfg)[rows]
    gamma = blocks_to_matrix(fit.gamma, j)
    g_theta, g_gamma = nll_gradient(fit.theta, gamma, X, Y, sw, allowed)
    g_theta = g_theta / encoded.n
    Gg = matrix_to_blocks(g_gamma / encoded.n, j, d)
    mode, lam, lam_g, ridge = _mode_and_levels(cfg)
    gw = np.ones(d) if cfg.weights is None else np.asarray(cfg.weights.w)[j]

    worst = float(np.max(np.abs(g_theta[allowed]), initial=0.0))
    observed = np.zeros((d, K), dtype=bool)
    Zm = _mask_covariates(encoded.states, encoded.rare_mask)[rows]
    for r in range(d):
        if r != j:
            observed[r, np.unique(Zm[:, r][Zm[:, r] > 0]) - 1] = True
    for r in range(d):
        if r == j:
            continue
        live = allowed[:, None] & observed[r][None, :]
        g = np.where(live, Gg[r], 0.0)
        b = np.where(live, fit.gamma[r], 0.0)
        if mode == _kernels.MODE_RIDGE:
            worst = max(worst, float(np.max(np.abs(g + 2 * ridge * b))))
            continue
        norm_b = np.linalg.norm(b)
        alpha = lam_g * gw[r]
        if norm_b == 0:
            slack = np.linalg.norm(soft_threshold(g, lam)) - alpha
            worst = max(worst, float(slack))
            continue
        nz = b != 0
        res_nz = np.abs(g + lam * np.sign(b) + alpha * b / norm_b)[nz]
        res_z = np.maximum(np.abs(g) - lam, 0.0)[~nz & live]
        worst = max(worst, float(np.max(res_nz, initial=0.0)), float(np.max(res_z, initial=0.0)))
    return max(worst, 0.0)


def site_objective(fit: SiteFit, encoded: EncodedAlignment, cfg: FitConfig) -> float:
    """Objective value of ``fit`` recomputed from the one-hot design."""
    j = fit.site
    X, Y, rows = design(encoded, j, drop_rare=True)
    allowed = ~encoded.rare_mask[j, 1:]
    sw = _sample_weights(encoded, cfg)[rows]
    loss = nll(fit.theta, blocks_to_matrix(fit.gamma, j), X, Y, sw, allowed) / encoded.n
    mode, lam, lam_g, ridge = _mode_and_levels(cfg)
    gw = np.ones(encoded.d) if cfg.weights is None else np.asarray(cfg.weights.w)[j]
    pen = 0.0
    for r in range(encoded.d):
        if r == j:
            continue
        B = fit.gamma[r]
        if mode == _kernels.MODE_RIDGE:
            pen += ridge * float(np.sum(B * B))
        else:
            pen += lam * float(np.abs(B).sum()) + lam_g * gw[r] * float(np.linalg.norm(B))
    return loss + pen
