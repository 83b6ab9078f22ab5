"""Compiled kernels: node-wise coordinate descent and Gibbs sweeps.

The per-site problem is stored compactly: ``y`` holds the response state of
each row, ``Z`` the states at every site (column ``j`` ignored), and the
couplings ``G[r, k, l]`` link response state ``k + 1`` to state ``l + 1`` at
covariate site ``r``. Covariate states that must not carry coefficients are
remapped to 0 by the caller; response classes outside ``allowed`` are left
out of the softmax.
"""
import math

import numpy as np
from numba import njit

MODE_SGL = 0
MODE_RIDGE = 1

STATUS_CONVERGED = 0
STATUS_MAX_ITER = 1
STATUS_STALLED = 2
STATUS_DIVERGED = 3

_H_FLOOR = 1e-12


@njit(cache=True, nogil=True)
def linear_predictor(Z, j, theta, G):
    m, d = Z.shape
    K = theta.shape[0]
    eta = np.empty((m, K))
    for i in range(m):
        for k in range(K):
            eta[i, k] = theta[k]
        for r in range(d):
            if r == j:
                continue
            l = Z[i, r]
            if l > 0:
                for k in range(K):
                    eta[i, k] += G[r, k, l - 1]
    return eta


@njit(cache=True, nogil=True)
def weighted_loss(eta, y, sw, allowed):
    """Weighted multinomial negative log-likelihood (sum over rows)."""
    m, K = eta.shape
    total = 0.0
    for i in range(m):
        mx = 0.0
        for k in range(K):
            if allowed[k] and eta[i, k] > mx:
                mx = eta[i, k]
        s = math.exp(-mx)
        for k in range(K):
            if allowed[k]:
                s += math.exp(eta[i, k] - mx)
        li = mx + math.log(s)
        if y[i] > 0:
            li -= eta[i, y[i] - 1]
        total += sw[i] * li
    return total


@njit(cache=True, nogil=True)
def softmax_probs(eta, allowed):
    m, K = eta.shape
    p = np.zeros((m, K))
    for i in range(m):
        mx = 0.0
        for k in range(K):
            if allowed[k] and eta[i, k] > mx:
                mx = eta[i, k]
        s = math.exp(-mx)
        for k in range(K):
            if allowed[k]:
                p[i, k] = math.exp(eta[i, k] - mx)
                s += p[i, k]
        for k in range(K):
            p[i, k] /= s
    return p


@njit(cache=True, nogil=True)
def penalty(G, j, lam, lam_g, gw, ridge, mode):
    d = G.shape[0]
    total = 0.0
    for r in range(d):
        if r == j:
            continue
        B = G[r]
        if mode == MODE_RIDGE:
            total += ridge * np.sum(B * B)
        else:
            total += lam * np.sum(np.abs(B)) + lam_g * gw[r] * math.sqrt(np.sum(B * B))
    return total


@njit(cache=True, nogil=True)
def _secular_root(u, c, alpha, hi, tol, max_iter):
    """Positive root of ``sum(u^2 / (c*rho + alpha)^2) = 1``.

    Safeguarded Newton on ``1/sqrt(phi) - 1`` inside the bracket [0, hi].
    """
    lo = 0.0
    rho = 0.0
    for _ in range(max_iter):
        phi = 0.0
        dphi = 0.0
        for m in range(u.shape[0]):
            if u[m] != 0.0:
                den = c[m] * rho + alpha
                q = u[m] * u[m] / (den * den)
                phi += q
                dphi -= 2.0 * q * c[m] / den
        psi = 1.0 / math.sqrt(phi) - 1.0
        if psi < 0.0:
            lo = rho
        else:
            hi = rho
        if abs(psi) <= tol:
            return rho
        dpsi = -0.5 * dphi / (phi * math.sqrt(phi))
        new = rho - psi / dpsi if dpsi > 0.0 else 0.5 * (lo + hi)
        if not (lo < new < hi):
            new = 0.5 * (lo + hi)
        if abs(new - rho) <= tol * max(rho, 1e-300):
            return new
        rho = new
    return rho


@njit(cache=True, nogil=True)
def group_update(a0, c, lam, alpha, ridge, mode, tol_inner, max_inner):
    """Minimize a diagonal quadratic plus the group penalty over one block.

    ``a0`` is the block gradient of the quadratic model at the zero block and
    ``c`` its diagonal curvature, both flattened. Returns the new block,
    the screening statistic ``||S(a0, lam)||_2`` and whether the block was
    zeroed by the screening rule.
    """
    n = a0.shape[0]
    b = np.zeros(n)
    if mode == MODE_RIDGE:
        for m in range(n):
            den = c[m] + 2.0 * ridge
            if den > 0.0:
                b[m] = -a0[m] / den
        return b, 0.0, False
    u = np.zeros(n)
    norm2 = 0.0
    cmin = np.inf
    for m in range(n):
        v = abs(a0[m]) - lam
        if v > 0.0 and c[m] > 0.0:
            u[m] = v if a0[m] > 0.0 else -v
            norm2 += v * v
            if c[m] < cmin:
                cmin = c[m]
    stat = math.sqrt(norm2)
    if alpha > 0.0 and stat <= alpha:
        return b, stat, True
    if norm2 == 0.0:
        return b, stat, False
    if alpha == 0.0:
        for m in range(n):
            if u[m] != 0.0:
                b[m] = -u[m] / c[m]
        return b, stat, False
    rho = _secular_root(u, c, alpha, stat / cmin, tol_inner, max_inner)
    for m in range(n):
        if u[m] != 0.0:
            b[m] = -u[m] * rho / (c[m] * rho + alpha)
    return b, stat, False


@njit(cache=True, nogil=True)
def fit_site_kernel(y, Z, j, sw, N, allowed, gw, lam, lam_g, ridge, mode,
                    theta, G, tol_outer, tol_middle, tol_inner,
                    max_outer, max_middle, max_inner):
    m, d = Z.shape
    K = theta.shape[0]
    theta = theta.copy()
    G = G.copy()
    trace = np.full(max_outer + 1, np.nan)
    stats = np.zeros(d)
    screened = np.zeros(d, dtype=np.bool_)

    eta = linear_predictor(Z, j, theta, G)
    F = weighted_loss(eta, y, sw, allowed) / N + penalty(G, j, lam, lam_g, gw, ridge, mode)
    trace[0] = F
    if not math.isfinite(F):
        return theta, G, trace, 0, STATUS_DIVERGED, stats, screened

    status = STATUS_MAX_ITER
    n_outer = 0
    gr = np.zeros((m, K))
    h = np.zeros((m, K))
    for it in range(max_outer):
        p = softmax_probs(eta, allowed)
        for i in range(m):
            wi = sw[i] / N
            for k in range(K):
                if allowed[k]:
                    yik = 1.0 if y[i] == k + 1 else 0.0
                    gr[i, k] = wi * (p[i, k] - yik)
                    h[i, k] = wi * max(p[i, k], _H_FLOOR)
                else:
                    gr[i, k] = 0.0
                    h[i, k] = 0.0

        th_new = theta.copy()
        G_new = G.copy()
        deta = np.zeros((m, K))
        a = np.zeros((K, K))
        c = np.zeros((K, K))
        for _ in range(max_middle):
            maxchg = 0.0
            for k in range(K):
                if not allowed[k]:
                    continue
                num = 0.0
                den = 0.0
                for i in range(m):
                    num += gr[i, k] + h[i, k] * deta[i, k]
                    den += h[i, k]
                if den > 0.0:
                    step = -num / den
                    th_new[k] += step
                    for i in range(m):
                        deta[i, k] += step
                    if abs(step) > maxchg:
                        maxchg = abs(step)
            for r in range(d):
                if r == j:
                    continue
                a[:, :] = 0.0
                c[:, :] = 0.0
                for i in range(m):
                    l = Z[i, r]
                    if l > 0:
                        for k in range(K):
                            if allowed[k]:
                                a[k, l - 1] += gr[i, k] + h[i, k] * deta[i, k]
                                c[k, l - 1] += h[i, k]
                b0 = G_new[r]
                a0 = (a - c * b0).ravel()
                b, stat, scr = group_update(a0, c.ravel(), lam, lam_g * gw[r], ridge, mode,
                                            tol_inner, max_inner)
                b = b.reshape((K, K))
                stats[r] = stat
                screened[r] = scr
                diff = b - b0
                dmax = np.max(np.abs(diff))
                if dmax > 0.0:
                    for i in range(m):
                        l = Z[i, r]
                        if l > 0:
                            for k in range(K):
                                deta[i, k] += diff[k, l - 1]
                    G_new[r] = b
                    if dmax > maxchg:
                        maxchg = dmax
            if maxchg < tol_middle:
                break

        dth = th_new - theta
        dG = G_new - G
        if np.max(np.abs(dth)) == 0.0 and np.max(np.abs(dG)) == 0.0:
            status = STATUS_CONVERGED
            break
        t = 1.0
        accepted = False
        for _ in range(30):
            th_c = theta + t * dth
            G_c = G + t * dG
            eta_c = linear_predictor(Z, j, th_c, G_c)
            F_c = (weighted_loss(eta_c, y, sw, allowed) / N
                   + penalty(G_c, j, lam, lam_g, gw, ridge, mode))
            if not math.isfinite(F_c):
                t *= 0.5
                continue
            if F_c <= F:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            status = STATUS_STALLED
            break
        theta = th_c
        G = G_c
        eta = eta_c
        rel = (F - F_c) / max(abs(F_c), 1e-300)
        F = F_c
        n_outer = it + 1
        trace[n_outer] = F
        if rel < tol_outer:
            status = STATUS_CONVERGED
            break
    return theta, G, trace[:n_outer + 1], n_outer, status, stats, screened


@njit(cache=True, nogil=True)
def gibbs_chain(h, J, z, uniforms, burn_in, thin, n_keep, out, out_start):
    """Systematic-scan Gibbs sampler over padded fields/couplings.

    ``uniforms`` supplies one variate per site update; sweeps beyond
    ``burn_in`` are thinned and written into ``out`` from row ``out_start``.
    Returns the number of uniforms consumed.
    """
    d, S = h.shape
    logits = np.empty(S)
    u_pos = 0
    kept = 0
    sweep = 0
    while kept < n_keep:
        for j in range(d):
            mx = -np.inf
            for k in range(S):
                v = h[j, k]
                for r in range(d):
                    if r != j:
                        v += J[j, r, k, z[r]]
                logits[k] = v
                if v > mx:
                    mx = v
            total = 0.0
            for k in range(S):
                logits[k] = math.exp(logits[k] - mx)
                total += logits[k]
            x = uniforms[u_pos] * total
            u_pos += 1
            acc = 0.0
            state = S - 1
            for k in range(S):
                acc += logits[k]
                if x < acc:
                    state = k
                    break
            z[j] = state
        sweep += 1
        if sweep > burn_in and (sweep - burn_in) % thin == 0:
            for jj in range(d):
                out[out_start + kept, jj] = z[jj]
            kept += 1
    return u_pos
