"""Discretisation and plug-in estimators of entropy, mutual information and transfer entropy.

All quantities are in bits. Probabilities are empirical frequencies with no
bias correction; significance is judged against shuffle surrogates instead.

Transfer entropy from ``source`` to ``target`` at source delay ``lag`` is

    TE = H(T[t+1] | T[t]) - H(T[t+1] | T[t], S[t+1-lag])

so ``lag=1`` pairs the next target value with the current source value.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContainsMissing, EmptyInput, InvalidParameter, LengthMismatch, TooShort

STRATEGIES = ("equal_frequency", "equal_width")
# surrogate values this close to the observed value count as ties
TIE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class SymbolSeq:
    symbols: np.ndarray
    alphabet: int

    def __post_init__(self):
        symbols = np.asarray(self.symbols)
        if symbols.size and not np.issubdtype(symbols.dtype, np.integer):
            if not np.array_equal(symbols, np.round(symbols)):
                raise InvalidParameter("symbols must be integers")
        symbols = symbols.astype(np.int64)
        if self.alphabet < 1:
            raise InvalidParameter("alphabet must be positive")
        if symbols.size and (symbols.min() < 0 or symbols.max() >= self.alphabet):
            raise InvalidParameter(f"symbols must lie in [0, {self.alphabet})")
        object.__setattr__(self, "symbols", symbols)

    def __len__(self):
        return self.symbols.size


@dataclass(frozen=True)
class TeEstimate:
    value_bits: float
    n_samples: int
    lag: int


@dataclass(frozen=True, eq=False)
class SurrogateResult:
    observed_bits: float
    surrogate_values: np.ndarray = field(repr=False)
    p_value: float
    seed: int
    lag: int = 1
    n_samples: int = 0

    def significant(self, alpha=0.05):
        return self.p_value <= alpha


def as_symbols(seq, alphabet=None) -> SymbolSeq:
    """Wrap a plain integer array, inferring the alphabet when not given."""
    if isinstance(seq, SymbolSeq):
        return seq
    arr = np.asarray(seq, dtype=np.int64)
    return SymbolSeq(arr, alphabet if alphabet is not None else int(arr.max(initial=0)) + 1)


def discretize(series, bins=4, strategy="equal_frequency") -> SymbolSeq:
    """Map a real series onto ``bins`` symbols.

    ``equal_frequency`` places edges at the ``k/bins`` sample quantiles and
    ``equal_width`` splits ``[min, max]`` evenly. Bins are half-open
    ``[lower, upper)`` so equal values always share a symbol; bins may be
    empty.
    """
    x = np.asarray(series, dtype=float)
    if bins < 1:
        raise InvalidParameter("bins must be positive")
    if strategy not in STRATEGIES:
        raise InvalidParameter(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")
    if x.size < bins:
        raise TooShort(f"need at least {bins} values, got {x.size}")
    if np.isnan(x).any():
        raise ContainsMissing("cannot discretise MISSING values")
    if bins == 1:
        return SymbolSeq(np.zeros(x.size, dtype=np.int64), 1)

    if strategy == "equal_width":
        lo, hi = x.min(), x.max()
        if hi == lo:
            return SymbolSeq(np.zeros(x.size, dtype=np.int64), bins)
        edges = lo + (hi - lo) * np.arange(1, bins) / bins
    else:
        edges = np.quantile(x, np.arange(1, bins) / bins)
    symbols = np.searchsorted(edges, x, side="right")
    return SymbolSeq(np.minimum(symbols, bins - 1), bins)


def _entropy_rows(counts, n):
    """Plug-in entropy (bits) of each row of a count matrix with row total ``n``."""
    counts = np.asarray(counts, dtype=float)
    clogc = np.zeros_like(counts)
    nz = counts > 0
    clogc[nz] = counts[nz] * np.log2(counts[nz])
    return np.log2(n) - clogc.sum(axis=-1) / n


def shannon_entropy(seq) -> float:
    seq = as_symbols(seq)
    if len(seq) == 0:
        raise EmptyInput("entropy of an empty sequence")
    counts = np.bincount(seq.symbols, minlength=seq.alphabet)
    return float(max(_entropy_rows(counts, seq.symbols.size), 0.0))


def mutual_information(x, y) -> float:
    x, y = as_symbols(x), as_symbols(y)
    if len(x) != len(y):
        raise LengthMismatch(f"lengths differ: {len(x)} vs {len(y)}")
    if len(x) == 0:
        raise EmptyInput("mutual information of empty sequences")
    n = len(x)
    joint = np.bincount(x.symbols * y.alphabet + y.symbols, minlength=x.alphabet * y.alphabet)
    hx = _entropy_rows(np.bincount(x.symbols, minlength=x.alphabet), n)
    hy = _entropy_rows(np.bincount(y.symbols, minlength=y.alphabet), n)
    mi = hx + hy - _entropy_rows(joint, n)
    return float(max(mi, 0.0))


def _check_te_inputs(source, target, lag):
    source, target = as_symbols(source), as_symbols(target)
    if len(source) != len(target):
        raise LengthMismatch(f"lengths differ: {len(source)} vs {len(target)}")
    if lag < 1:
        raise InvalidParameter("lag must be a positive number of slots")
    if len(target) <= lag:
        raise TooShort(f"series of length {len(target)} too short for lag {lag}")
    return source, target


def _te_rows(source_rows, future, past, a_src, a_tgt):
    """Transfer entropy for each row of ``source_rows`` against a fixed target.

    ``source_rows`` is ``(R, m)``; ``future`` and ``past`` are length ``m``.
    """
    r, m = source_rows.shape
    ts_cells = a_tgt * a_src
    fts_cells = a_tgt * ts_cells
    ft = future * a_tgt + past
    h_ft = _entropy_rows(np.bincount(ft, minlength=a_tgt * a_tgt), m)
    h_t = _entropy_rows(np.bincount(past, minlength=a_tgt), m)

    offsets = (np.arange(r) * fts_cells)[:, None]
    ts = past * a_src + source_rows
    fts = future[None, :] * ts_cells + ts
    c_fts = np.bincount((fts + offsets).ravel(), minlength=r * fts_cells).reshape(r, fts_cells)
    offsets_ts = (np.arange(r) * ts_cells)[:, None]
    c_ts = np.bincount((ts + offsets_ts).ravel(), minlength=r * ts_cells).reshape(r, ts_cells)
    te = (h_ft - h_t) - (_entropy_rows(c_fts, m) - _entropy_rows(c_ts, m))
    return np.maximum(te, 0.0)


def _embed(source, target, lag):
    future = target.symbols[lag:]
    past = target.symbols[lag - 1 : -1]
    src = source.symbols[: len(source) - lag]
    return future, past, src


def transfer_entropy(source, target, lag=1) -> TeEstimate:
    """Plug-in transfer entropy from ``source`` to ``target`` in bits."""
    source, target = _check_te_inputs(source, target, lag)
    future, past, src = _embed(source, target, lag)
    value = _te_rows(src[None, :], future, past, source.alphabet, target.alphabet)[0]
    return TeEstimate(float(value), int(future.size), lag)


def surrogate_permutations(seed, n_surrogates, n):
    """Permutations of ``range(n)``, one RNG stream per ``(seed, index)``."""
    return np.stack([np.random.default_rng([seed, i]).permutation(n) for i in range(n_surrogates)])


def surrogate_test(source, target, lag=1, n_surrogates=100, seed=0) -> SurrogateResult:
    """One-sided permutation test of transfer entropy from ``source`` to ``target``.

    Surrogates shuffle the source samples paired with the target, which keeps
    both marginals and the target's own dynamics but destroys coupling.
    """
    if n_surrogates < 1:
        raise InvalidParameter("n_surrogates must be at least 1")
    if seed < 0:
        raise InvalidParameter("seed must be non-negative")
    source, target = _check_te_inputs(source, target, lag)
    future, past, src = _embed(source, target, lag)
    perms = surrogate_permutations(seed, n_surrogates, src.size)
    rows = np.vstack([src[None, :], src[perms]])
    values = _te_rows(rows, future, past, source.alphabet, target.alphabet)
    observed, surrogates = float(values[0]), values[1:]
    exceed = int(np.count_nonzero(surrogates >= observed - TIE_TOL))
    p_value = (1 + exceed) / (1 + n_surrogates)
    return SurrogateResult(observed, surrogates, p_value, seed, lag, int(future.size))
