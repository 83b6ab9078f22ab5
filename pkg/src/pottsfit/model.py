"""Potts parameters, sequence energies and mutation energy changes.

Sequences are integer state vectors of length d with state 0 the reference
(wild-type). ``theta[j, k - 1]`` is the single-site effect of state k at site
j and ``block(j, r)[k - 1, l - 1]`` is the coupling between state k at site j
and state l at site r. Reference-state parameters are zero by construction.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np


@dataclass(frozen=True, eq=False)
class PottsParams:
    theta: np.ndarray
    gamma: Mapping[tuple[int, int], np.ndarray]
    alphabet: str | None = None
    wildtype: str | None = None
    rare_mask: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        theta = np.array(self.theta, dtype=float)
        if theta.ndim != 2:
            raise ValueError("theta must be a d x K matrix")
        d, K = theta.shape
        gamma = {}
        for (j, r), B in self.gamma.items():
            B = np.array(B, dtype=float)
            if B.shape != (K, K):
                raise ValueError(f"block ({j}, {r}) has shape {B.shape}, expected {(K, K)}")
            if not (0 <= j < d and 0 <= r < d) or j == r:
                raise ValueError(f"invalid site pair ({j}, {r})")
            if j > r:
                j, r, B = r, j, B.T
            if (j, r) in gamma:
                raise ValueError(f"pair ({j}, {r}) given twice")
            if np.any(B != 0):
                B.setflags(write=False)
                gamma[(j, r)] = B
        if self.rare_mask is not None:
            mask = np.asarray(self.rare_mask, dtype=bool)[:, 1:]
            theta[mask] = 0.0
            for (j, r), B in list(gamma.items()):
                if mask[j].any() or mask[r].any():
                    B = B.copy()
                    B[mask[j], :] = 0.0
                    B[:, mask[r]] = 0.0
                    if np.any(B != 0):
                        B.setflags(write=False)
                        gamma[(j, r)] = B
                    else:
                        del gamma[(j, r)]
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "gamma", dict(sorted(gamma.items())))

    @property
    def d(self) -> int:
        return self.theta.shape[0]

    @property
    def K(self) -> int:
        return self.theta.shape[1]

    @classmethod
    def zeros(cls, d: int, K: int, **kw) -> "PottsParams":
        return cls(np.zeros((d, K)), {}, **kw)

    @classmethod
    def from_dense(cls, theta, J, **kw) -> "PottsParams":
        """Build from a dense ``(d, d, K, K)`` coupling array (upper triangle read)."""
        J = np.asarray(J, dtype=float)
        d = J.shape[0]
        gamma = {(j, r): J[j, r] for j in range(d) for r in range(j + 1, d)}
        return cls(theta, gamma, **kw)

    def block(self, j: int, r: int) -> np.ndarray:
        """K x K coupling block with rows indexed by the state at ``j``."""
        if j == r:
            raise ValueError("no self-coupling block")
        if j < r:
            B = self.gamma.get((j, r))
            return np.zeros((self.K, self.K)) if B is None else B
        B = self.gamma.get((r, j))
        return np.zeros((self.K, self.K)) if B is None else B.T

    def dense(self) -> np.ndarray:
        """``(d, d, K, K)`` array with ``J[j, r] = block(j, r)`` and zero diagonal."""
        J = np.zeros((self.d, self.d, self.K, self.K))
        for (j, r), B in self.gamma.items():
            J[j, r] = B
            J[r, j] = B.T
        return J

    def padded(self) -> tuple[np.ndarray, np.ndarray]:
        """Fields ``(d, K+1)`` and couplings ``(d, d, K+1, K+1)`` including the zero reference."""
        h = np.zeros((self.d, self.K + 1))
        h[:, 1:] = self.theta
        J = np.zeros((self.d, self.d, self.K + 1, self.K + 1))
        J[:, :, 1:, 1:] = self.dense()
        return h, J

    def site_symbols(self, j: int) -> str:
        from .msa import site_symbols
        if self.alphabet is None or self.wildtype is None:
            return "".join(str(k) for k in range(self.K + 1))
        return site_symbols(self.alphabet, self.wildtype[j])


@dataclass(frozen=True)
class MutationSpec:
    """Target states for a set of distinct sites (0-based)."""

    targets: Mapping[int, int]

    def __post_init__(self):
        object.__setattr__(self, "targets", dict(self.targets))

    @property
    def sites(self) -> list[int]:
        return sorted(self.targets)


class MutationSpecError(ValueError):
    pass


def parse_mutation_spec(text: str, params: PottsParams | None = None) -> MutationSpec:
    """Parse ``"j:k,j:k"`` with 1-based sites into a :class:`MutationSpec`.

    ``k`` is a state index, or a residue symbol when ``params`` carries an
    alphabet and wild-type. An empty string is the empty mutation. Errors
    report the 0-based character position of the offending item.
    """
    targets: dict[int, int] = {}
    if not text.strip():
        return MutationSpec(targets)
    pos = 0
    for item in text.split(","):
        start = pos + len(item) - len(item.lstrip())
        pos += len(item) + 1
        site_s, sep, state_s = item.strip().partition(":")
        if not sep or not site_s or not state_s:
            raise MutationSpecError(f"expected 'site:state' at position {start} in {text!r}")
        try:
            j = int(site_s) - 1
        except ValueError:
            raise MutationSpecError(f"bad site {site_s!r} at position {start} in {text!r}") from None
        if j < 0 or (params is not None and j >= params.d):
            raise MutationSpecError(f"site {site_s} out of range at position {start} in {text!r}")
        state_pos = start + len(site_s) + 1
        if state_s.lstrip("-").isdigit():
            k = int(state_s)
        elif params is not None and params.wildtype is not None and len(state_s) == 1:
            syms = params.site_symbols(j)
            if state_s.upper() not in syms:
                raise MutationSpecError(
                    f"symbol {state_s!r} unknown at position {state_pos} in {text!r}")
            k = syms.index(state_s.upper())
        else:
            raise MutationSpecError(f"bad state {state_s!r} at position {state_pos} in {text!r}")
        if k < 0 or (params is not None and k > params.K):
            raise MutationSpecError(f"state {state_s} out of range at position {state_pos} "
                                    f"in {text!r}")
        if j in targets:
            raise MutationSpecError(f"site {site_s} repeated at position {start} in {text!r}")
        targets[j] = k
    return MutationSpec(targets)


def _check_state(p: PottsParams, z) -> np.ndarray:
    z = np.asarray(z, dtype=np.int64)
    if z.shape != (p.d,):
        raise ValueError(f"sequence must have length {p.d}")
    if z.min() < 0 or z.max() > p.K:
        raise ValueError(f"states must lie in 0..{p.K}")
    return z


def energy(p: PottsParams, z) -> float:
    """Sum of single-site effects plus pairwise couplings of sequence ``z``."""
    z = _check_state(p, z)
    e = 0.0
    for j in range(p.d):
        if z[j]:
            e += p.theta[j, z[j] - 1]
    for (j, r), B in p.gamma.items():
        if z[j] and z[r]:
            e += B[z[j] - 1, z[r] - 1]
    return float(e)


def _coupling(p: PottsParams, j: int, r: int, k: int, l: int) -> float:
    if k == 0 or l == 0:
        return 0.0
    if j < r:
        B = p.gamma.get((j, r))
        return 0.0 if B is None else float(B[k - 1, l - 1])
    B = p.gamma.get((r, j))
    return 0.0 if B is None else float(B[l - 1, k - 1])


def _field(p: PottsParams, j: int, k: int) -> float:
    return 0.0 if k == 0 else float(p.theta[j, k - 1])


def delta_e_single(p: PottsParams, j: int, k: int) -> float:
    """Energy change of mutating the wild-type at site ``j`` to state ``k``.

    On the wild-type background every coupling term involves a reference
    state, so only the single-site effect remains.
    """
    if not 0 <= k <= p.K:
        raise ValueError(f"state must lie in 0..{p.K}")
    return _field(p, j, k)


def delta_e_multi(p: PottsParams, m: MutationSpec, background=None) -> float:
    """Energy change of a (multi-site) mutation relative to ``background``.

    The three contributions are the single-site terms, the couplings between
    mutated and unmutated sites, and the couplings within the mutated set
    (each unordered pair once, so the result equals the energy difference).
    """
    bg = np.zeros(p.d, dtype=np.int64) if background is None else _check_state(p, background)
    sites = m.sites
    for j in sites:
        if not 0 <= j < p.d:
            raise ValueError(f"site {j} out of range")
        if not 0 <= m.targets[j] <= p.K:
            raise ValueError(f"state must lie in 0..{p.K}")
    mutated = set(sites)
    total = 0.0
    for j in sites:
        k, a = m.targets[j], bg[j]
        total += _field(p, j, k) - _field(p, j, a)
        for r in range(p.d):
            if r == j or r in mutated:
                continue
            total += _coupling(p, j, r, k, bg[r]) - _coupling(p, j, r, a, bg[r])
    for idx, j in enumerate(sites):
        for jp in sites[idx + 1:]:
            total += (_coupling(p, j, jp, m.targets[j], m.targets[jp])
                      - _coupling(p, j, jp, bg[j], bg[jp]))
    return float(total)


def mutate(z, m: MutationSpec) -> np.ndarray:
    z = np.array(z, dtype=np.int64)
    for j, k in m.targets.items():
        z[j] = k
    return z


def conditional_logits(p: PottsParams, j: int, context) -> np.ndarray:
    z = _check_state(p, context)
    logits = np.zeros(p.K + 1)
    logits[1:] = p.theta[j]
    for r in range(p.d):
        if r != j and z[r]:
            logits[1:] += p.block(j, r)[:, z[r] - 1]
    return logits


def conditional_prob(p: PottsParams, j: int, context) -> np.ndarray:
    """Distribution of the state at site ``j`` given the states elsewhere.

    The entry of ``context`` at ``j`` is ignored.
    """
    logits = conditional_logits(p, j, context)
    logits -= logits.max()
    w = np.exp(logits)
    return w / w.sum()


def symmetrize(site_fits: Sequence, alphabet=None, wildtype=None, rare_mask=None) -> PottsParams:
    """Average the two node-wise estimates of every coupling.

    ``site_fits[j]`` must expose ``theta`` (length K) and ``gamma`` of shape
    ``(d, K, K)`` where ``gamma[r][k, l]`` is site j's estimate of the
    coupling between state k+1 at j and state l+1 at r.
    """
    d = len(site_fits)
    if d < 2:
        raise ValueError("need fits for at least two sites")
    K = len(site_fits[0].theta)
    for j, f in enumerate(site_fits):
        if f is None:
            raise ValueError(f"missing fit for site {j}")
        if np.shape(f.theta) != (K,) or np.shape(f.gamma) != (d, K, K):
            raise ValueError(f"site {j} fit has inconsistent dimensions")
    theta = np.array([f.theta for f in site_fits], dtype=float)
    gamma = {}
    for j in range(d):
        for r in range(j + 1, d):
            gamma[(j, r)] = 0.5 * (np.asarray(site_fits[j].gamma[r])
                                   + np.asarray(site_fits[r].gamma[j]).T)
    return PottsParams(theta, gamma, alphabet, wildtype, rare_mask)


def as_site_fits(p: PottsParams) -> list:
    """View symmetric parameters as per-site estimates (inverse of symmetrize)."""
    from types import SimpleNamespace
    J = p.dense()
    return [SimpleNamespace(theta=p.theta[j].copy(), gamma=J[j]) for j in range(p.d)]


# ---------------------------------------------------------------------------
# text serialization

_HEADER = "# potts-params v1"


def dumps(p: PottsParams) -> str:
    lines = [_HEADER, f"d {p.d}", f"K {p.K}"]
    if p.alphabet is not None:
        lines.append(f"alphabet {p.alphabet}")
    if p.wildtype is not None:
        lines.append(f"wildtype {p.wildtype}")
    for j, k in zip(*np.nonzero(p.theta)):
        lines.append(f"theta {j + 1} {k + 1} {float(p.theta[j, k])!r}")
    for (j, r), B in p.gamma.items():
        for k, l in zip(*np.nonzero(B)):
            lines.append(f"gamma {j + 1} {r + 1} {k + 1} {l + 1} {float(B[k, l])!r}")
    return "\n".join(lines) + "\n"


def loads(text: str) -> PottsParams:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != _HEADER:
        raise ValueError("not a potts-params file")
    meta: dict[str, str] = {}
    body = []
    for ln in lines[1:]:
        key, _, rest = ln.partition(" ")
        if key in ("theta", "gamma"):
            body.append((key, rest.split()))
        else:
            meta[key] = rest
    d, K = int(meta["d"]), int(meta["K"])
    theta = np.zeros((d, K))
    gamma: dict[tuple[int, int], np.ndarray] = {}
    for key, f in body:
        if key == "theta":
            theta[int(f[0]) - 1, int(f[1]) - 1] = float(f[2])
        else:
            j, r = int(f[0]) - 1, int(f[1]) - 1
            B = gamma.setdefault((j, r), np.zeros((K, K)))
            B[int(f[2]) - 1, int(f[3]) - 1] = float(f[4])
    return PottsParams(theta, gamma, meta.get("alphabet"), meta.get("wildtype"))


def save(p: PottsParams, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps(p))


def load(path) -> PottsParams:
    with open(path) as fh:
        return loads(fh.read())
