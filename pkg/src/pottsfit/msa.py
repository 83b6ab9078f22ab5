"""Alignment ingestion, reference-coded one-hot encoding and sequence weights.

States are integers per site. State 0 is the reference (wild-type) symbol and
carries no parameters; states 1..K are the remaining alphabet symbols in
canonical alphabet order with the reference symbol removed.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

AMINO_ACIDS = "ACDEFGHIKLMNPQRSTVWY"
GAP = "-"
ALPHABET = AMINO_ACIDS + GAP

FORMATS = ("fasta", "a2m", "plain-rows")


class AlignmentFormatError(ValueError):
    """Raised for malformed alignment files or symbols outside the alphabet."""


@dataclass(frozen=True)
class Alignment:
    sequences: tuple[str, ...]
    ids: tuple[str, ...] | None = None
    alphabet: str = ALPHABET

    def __post_init__(self):
        if len(self.sequences) == 0:
            raise AlignmentFormatError("no sequences")
        d = len(self.sequences[0])
        for i, seq in enumerate(self.sequences):
            name = self.ids[i] if self.ids else f"#{i + 1}"
            if len(seq) != d:
                raise AlignmentFormatError(
                    f"record {name} has length {len(seq)}, expected {d}")
            for col, ch in enumerate(seq):
                if ch not in self.alphabet:
                    raise AlignmentFormatError(
                        f"unknown symbol {ch!r} in record {name} at column {col + 1}")
        if d < 2:
            raise AlignmentFormatError(f"alignment needs at least 2 sites, got {d}")
        if self.ids is not None and len(self.ids) != len(self.sequences):
            raise AlignmentFormatError("ids and sequences differ in length")

    @property
    def n(self) -> int:
        return len(self.sequences)

    @property
    def d(self) -> int:
        return len(self.sequences[0])

    def as_array(self) -> np.ndarray:
        """n x d array of single-character strings."""
        return np.array([list(s) for s in self.sequences], dtype="<U1")


@dataclass(frozen=True)
class SequenceWeightConfig:
    hamming_threshold: float = 0.2
    include_self: bool = True

    def __post_init__(self):
        if not 0.0 < self.hamming_threshold < 1.0:
            raise ValueError("hamming_threshold must lie strictly between 0 and 1")


def _read_records(text: str) -> list[tuple[str, str]]:
    records = []
    name, chunks = None, []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith(";"):
            continue
        if line.startswith(">"):
            if name is not None:
                records.append((name, "".join(chunks)))
            name, chunks = line[1:].split()[0] if line[1:].strip() else "", []
        else:
            if name is None:
                raise AlignmentFormatError("sequence data before first '>' header")
            chunks.append(line)
    if name is not None:
        records.append((name, "".join(chunks)))
    return records


def parse_alignment(path, format: str = "fasta", alphabet: str = ALPHABET) -> Alignment:
    """Read an aligned sequence file.

    Parameters
    ----------
    path : str or Path
    format : {"fasta", "a2m", "plain-rows"}
        ``a2m`` drops insert columns (lowercase letters and '.'); the other
        formats uppercase every letter.
    alphabet : str
        Allowed symbols after uppercasing.
    """
    if format not in FORMATS:
        raise ValueError(f"unknown alignment format {format!r}; choose from {FORMATS}")
    text = Path(path).read_text()
    if format == "plain-rows":
        rows = [ln.strip() for ln in text.splitlines() if ln.strip()]
        records = [(f"row{i + 1}", r) for i, r in enumerate(rows)]
    else:
        records = _read_records(text)

    if not records:
        raise AlignmentFormatError("no sequences")

    ids, seqs = [], []
    for name, seq in records:
        if format == "a2m":
            seq = "".join(ch for ch in seq if not (ch.islower() or ch == "."))
        else:
            seq = seq.upper()
        ids.append(name)
        seqs.append(seq)

    d = len(seqs[0])
    for name, seq in zip(ids, seqs):
        if len(seq) != d:
            raise AlignmentFormatError(
                f"ragged alignment: record {name!r} has length {len(seq)}, expected {d}")
    return Alignment(tuple(seqs), tuple(ids), alphabet)


def _hamming_neighbor_counts(states: np.ndarray, threshold: float,
                             chunk_elems: int = 20_000_000) -> np.ndarray:
    n, d = states.shape
    counts = np.zeros(n, dtype=np.int64)
    cutoff = threshold * d
    step = max(1, chunk_elems // max(1, n * d))
    for start in range(0, n, step):
        block = states[start:start + step]
        mism = (block[:, None, :] != states[None, :, :]).sum(axis=2)
        counts[start:start + step] = (mism < cutoff).sum(axis=1)
    return counts


def sequence_weights(a, cfg: SequenceWeightConfig = SequenceWeightConfig()) -> np.ndarray:
    """Inverse neighbour counts under normalized Hamming distance.

    ``a`` may be an :class:`Alignment` or an integer state matrix. A sequence
    is its own neighbour when ``cfg.include_self`` is set, so every weight lies
    in ``(0, 1]``. Without self-inclusion an isolated sequence gets weight 1.
    """
    if isinstance(a, Alignment):
        states = a.as_array().view(np.uint32).reshape(a.n, a.d)
    else:
        states = np.asarray(a)
    counts = _hamming_neighbor_counts(states, cfg.hamming_threshold)
    if not cfg.include_self:
        counts = np.maximum(counts - 1, 1)
    return 1.0 / counts


def site_symbols(alphabet: str, reference: str) -> str:
    """Symbols of one site ordered by state index (reference first)."""
    if reference not in alphabet:
        raise ValueError(f"reference symbol {reference!r} not in alphabet {alphabet!r}")
    return reference + "".join(ch for ch in alphabet if ch != reference)


@dataclass(frozen=True, eq=False)
class EncodedAlignment:
    """Reference-coded alignment.

    ``states[i, j]`` is the state index of sequence ``i`` at site ``j``:
    0 for the reference symbol and 1..K for the others. ``rare_mask`` has
    shape ``(d, K + 1)``; column 0 is always False.
    """

    states: np.ndarray
    K: int
    weights: np.ndarray
    rare_mask: np.ndarray
    alphabet: str | None = None
    wildtype: str | None = None
    min_count: int = 10
    ids: tuple[str, ...] | None = field(default=None, repr=False)

    def __post_init__(self):
        for arr in (self.states, self.weights, self.rare_mask):
            arr.setflags(write=False)

    @property
    def n(self) -> int:
        return self.states.shape[0]

    @property
    def d(self) -> int:
        return self.states.shape[1]

    @property
    def reference(self) -> np.ndarray:
        """Per-site index of the reference symbol in ``alphabet``."""
        if self.alphabet is None:
            return np.zeros(self.d, dtype=int)
        return np.array([self.alphabet.index(ch) for ch in self.wildtype])

    @property
    def effective_n(self) -> float:
        return float(self.weights.sum())

    @property
    def onehot(self) -> np.ndarray:
        """n x (d*K) indicator matrix; column ``j*K + k - 1`` marks state k at site j."""
        out = np.zeros((self.n, self.d * self.K), dtype=np.int8)
        rows, sites = np.nonzero(self.states > 0)
        out[rows, sites * self.K + self.states[rows, sites] - 1] = 1
        return out

    def symbols(self, j: int) -> str:
        if self.alphabet is None:
            raise ValueError("integer-state alignment has no symbol map")
        return site_symbols(self.alphabet, self.wildtype[j])

    def column_labels(self) -> list[str]:
        labels = []
        for j in range(self.d):
            syms = self.symbols(j) if self.alphabet else [str(k) for k in range(self.K + 1)]
            labels.extend(f"site{j + 1}:{syms[k]}" for k in range(1, self.K + 1))
        return labels

    def with_weights(self, weights) -> "EncodedAlignment":
        weights = np.asarray(weights, dtype=float)
        if weights.shape != (self.n,):
            raise ValueError(f"weights must have shape ({self.n},)")
        return EncodedAlignment(self.states, self.K, weights.copy(), self.rare_mask,
                                self.alphabet, self.wildtype, self.min_count, self.ids)

    def subset(self, rows) -> "EncodedAlignment":
        """Rows ``rows`` with the rare mask recomputed on the subset."""
        states = np.ascontiguousarray(self.states[rows])
        return EncodedAlignment(states, self.K, self.weights[rows].copy(),
                                rare_state_mask(states, self.K, self.min_count),
                                self.alphabet, self.wildtype, self.min_count,
                                None if self.ids is None else tuple(np.asarray(self.ids)[rows]))


def state_counts(states: np.ndarray, K: int) -> np.ndarray:
    """(d, K+1) table of raw state counts."""
    d = states.shape[1]
    counts = np.zeros((d, K + 1), dtype=np.int64)
    for j in range(d):
        counts[j] = np.bincount(states[:, j], minlength=K + 1)[:K + 1]
    return counts


def rare_state_mask(a, K: int | None = None, min_count: int = 10) -> np.ndarray:
    """Flag (site, state) pairs observed fewer than ``min_count`` times.

    Accepts an :class:`EncodedAlignment` or an integer state matrix (then
    ``K`` is required). The reference column is never flagged.
    """
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    if isinstance(a, EncodedAlignment):
        states, K = a.states, a.K
    else:
        states = np.asarray(a)
        if K is None:
            raise ValueError("K is required for a raw state matrix")
    mask = state_counts(states, K) < min_count
    mask[:, 0] = False
    return mask


def encode(a: Alignment, wildtype: str | None = None, *, min_count: int = 10,
           weights=None, weight_cfg: SequenceWeightConfig | None = SequenceWeightConfig()
           ) -> EncodedAlignment:
    """Reference-code an alignment against ``wildtype``.

    ``wildtype`` defaults to the first sequence. Sequence weights are computed
    with ``weight_cfg`` unless ``weights`` is given; pass ``weight_cfg=None``
    for uniform weights.
    """
    if wildtype is None:
        wildtype = a.sequences[0]
    wildtype = wildtype.upper()
    if len(wildtype) != a.d:
        raise ValueError(f"wildtype has length {len(wildtype)}, alignment has d={a.d}")
    for col, ch in enumerate(wildtype):
        if ch not in a.alphabet:
            raise ValueError(f"wildtype symbol {ch!r} at site {col + 1} not in alphabet")
    K = len(a.alphabet) - 1
    chars = a.as_array()
    states = np.empty((a.n, a.d), dtype=np.int64)
    for j in range(a.d):
        lookup = {ch: k for k, ch in enumerate(site_symbols(a.alphabet, wildtype[j]))}
        states[:, j] = [lookup[ch] for ch in chars[:, j]]
    if weights is None:
        weights = sequence_weights(states, weight_cfg) if weight_cfg else np.ones(a.n)
    return EncodedAlignment(states, K, np.asarray(weights, dtype=float),
                            rare_state_mask(states, K, min_count),
                            a.alphabet, wildtype, min_count, a.ids)


def encode_states(states, K: int | None = None, *, min_count: int = 10, weights=None,
                  weight_cfg: SequenceWeightConfig | None = None) -> EncodedAlignment:
    """Wrap an integer state matrix whose state 0 is already the reference."""
    states = np.ascontiguousarray(states, dtype=np.int64)
    if states.ndim != 2 or states.shape[1] < 2:
        raise ValueError("states must be an n x d matrix with d >= 2")
    if K is None:
        K = int(states.max())
    if states.min() < 0 or states.max() > K:
        raise ValueError(f"states must lie in 0..{K}")
    n = states.shape[0]
    if weights is None:
        weights = sequence_weights(states, weight_cfg) if weight_cfg else np.ones(n)
    return EncodedAlignment(states, K, np.asarray(weights, dtype=float),
                            rare_state_mask(states, K, min_count), min_count=min_count)


def decode(e: EncodedAlignment) -> Alignment:
    if e.alphabet is None:
        raise ValueError("integer-state alignment has no symbol map")
    tables = [e.symbols(j) for j in range(e.d)]
    seqs = tuple("".join(tables[j][s] for j, s in enumerate(row)) for row in e.states)
    return Alignment(seqs, e.ids, e.alphabet)


def write_onehot_tsv(e: EncodedAlignment, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, delimiter="\t")
        writer.writerow(e.column_labels())
        writer.writerows(e.onehot.tolist())


def write_weights_csv(weights: Sequence[float], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["weight"])
        writer.writerows([[repr(float(w))] for w in weights])


def read_states_csv(path) -> np.ndarray:
    """Integer-state alignment: header row of site labels, one sequence per row."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise AlignmentFormatError("no sequences")
    return np.array([[int(v) for v in row] for row in rows[1:]], dtype=np.int64)


def write_states_csv(states: np.ndarray, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"site{j + 1}" for j in range(states.shape[1])])
        writer.writerows(np.asarray(states).tolist())
