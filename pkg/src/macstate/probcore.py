"""Finite-alphabet probability tables and information measures (bits)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

SUM_TOL = 1e-12
CLAMP_TOL = 1e-12


class ProbError(ValueError):
    """Invalid distribution, axis name or probability argument."""


def _as_names(axes: str | Iterable[str]) -> tuple[str, ...]:
    if isinstance(axes, str):
        return (axes,)
    return tuple(axes)


@dataclass(frozen=True, eq=False)
class JointPMF:
    """Dense joint pmf over named finite alphabets.

    ``axes`` is a tuple of ``(name, cardinality)`` pairs and ``probs`` an array
    whose shape equals the cardinalities in order.
    """

    axes: tuple[tuple[str, int], ...]
    probs: np.ndarray

    def __post_init__(self):
        axes = tuple((str(n), int(c)) for n, c in self.axes)
        names = [n for n, _ in axes]
        if len(set(names)) != len(names):
            raise ProbError(f"duplicate axis names: {names}")
        probs = np.array(self.probs, dtype=float)
        shape = tuple(c for _, c in axes)
        if probs.shape != shape:
            raise ProbError(f"table shape {probs.shape} does not match axes {shape}")
        if np.any(probs < 0):
            raise ProbError("negative probability")
        total = probs.sum()
        if abs(total - 1.0) > SUM_TOL:
            raise ProbError(f"probabilities sum to {total!r}, not 1")
        probs.setflags(write=False)
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def from_array(cls, names: Sequence[str], probs) -> "JointPMF":
        probs = np.asarray(probs, dtype=float)
        return cls(tuple(zip(names, probs.shape)), probs)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.axes)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise ProbError(f"unknown axis {name!r}; have {self.names}") from None

    def marginal_array(self, keep: Iterable[str]) -> np.ndarray:
        """Marginal table over ``keep``, axes in the order requested."""
        keep = _as_names(keep)
        idx = [self.index(k) for k in keep]
        if len(set(idx)) != len(idx):
            raise ProbError(f"repeated axis in {keep}")
        drop = tuple(i for i in range(len(self.axes)) if i not in idx)
        arr = self.probs.sum(axis=drop) if drop else self.probs
        kept_order = sorted(idx)
        return np.transpose(arr, [kept_order.index(i) for i in idx])

    def __eq__(self, other):
        if not isinstance(other, JointPMF):
            return NotImplemented
        return self.axes == other.axes and np.array_equal(self.probs, other.probs)

    __hash__ = None


def _h(arr: np.ndarray) -> float:
    p = arr[arr > 0]
    return float(-np.sum(p * np.log2(p)))


def marginalize(pmf: JointPMF, keep: str | Iterable[str]) -> JointPMF:
    keep = _as_names(keep)
    if not keep:
        raise ProbError("keep set must be nonempty")
    arr = pmf.marginal_array(keep)
    return JointPMF(tuple((k, pmf.axes[pmf.index(k)][1]) for k in keep), arr)


def entropy(pmf: JointPMF, axes: str | Iterable[str]) -> float:
    """Entropy in bits of the marginal on ``axes``."""
    axes = _as_names(axes)
    if not axes:
        raise ProbError("entropy needs at least one axis")
    return _h(pmf.marginal_array(axes))


def mutual_information(
    pmf: JointPMF,
    group_a: str | Iterable[str],
    group_b: str | Iterable[str],
    conditioning: str | Iterable[str] = (),
) -> float:
    """I(A;B|C) in bits, clamped at 0 when within round-off below zero."""
    a, b, c = _as_names(group_a), _as_names(group_b), _as_names(conditioning)
    if not a or not b:
        raise ProbError("both MI groups must be nonempty")
    sa, sb, sc = set(a), set(b), set(c)
    if sa & sb or sa & sc or sb & sc:
        raise ProbError(f"MI groups overlap: {a} / {b} / {c}")
    for n in (*a, *b, *c):
        pmf.index(n)
    hc = _h(pmf.marginal_array(c)) if c else 0.0
    val = (
        _h(pmf.marginal_array(a + c))
        + _h(pmf.marginal_array(b + c))
        - _h(pmf.marginal_array(a + b + c))
        - hc
    )
    if -CLAMP_TOL <= val < 0:
        return 0.0
    return val


class EntropyCache:
    """Memoized marginal entropies of a raw probability array.

    Axis groups are given as integer indices; the cache is what the optimizers
    use in their inner loops to avoid recomputing shared marginals.
    """

    __slots__ = ("probs", "_cache", "_ndim")

    def __init__(self, probs: np.ndarray):
        self.probs = probs
        self._ndim = probs.ndim
        self._cache: dict[frozenset, float] = {}

    def h(self, axes: Iterable[int]) -> float:
        key = frozenset(axes)
        if not key:
            return 0.0
        val = self._cache.get(key)
        if val is None:
            drop = tuple(i for i in range(self._ndim) if i not in key)
            val = _h(self.probs.sum(axis=drop) if drop else self.probs)
            self._cache[key] = val
        return val

    def mi(self, a: Iterable[int], b: Iterable[int], c: Iterable[int] = ()) -> float:
        a, b, c = set(a), set(b), set(c)
        return self.h(a | c) + self.h(b | c) - self.h(a | b | c) - self.h(c)


def _check_unit(name: str, x: float) -> float:
    x = float(x)
    if not (0.0 <= x <= 1.0):
        raise ProbError(f"{name}={x!r} outside [0, 1]")
    return x


def binary_entropy(alpha: float) -> float:
    alpha = _check_unit("alpha", alpha)
    if alpha in (0.0, 1.0):
        return 0.0
    return float(-alpha * np.log2(alpha) - (1 - alpha) * np.log2(1 - alpha))


def binary_convolution(p: float, q: float) -> float:
    p, q = _check_unit("p", p), _check_unit("q", q)
    return p * (1 - q) + q * (1 - p)


def type_counts(flat: np.ndarray, ncells: int) -> np.ndarray:
    """Per-row symbol counts of integer sequences, shape (..., ncells)."""
    flat = np.asarray(flat)
    n = flat.shape[-1]
    rows = flat.reshape(-1, n)
    offs = (np.arange(rows.shape[0]) * ncells)[:, None]
    counts = np.bincount((rows + offs).ravel(), minlength=rows.shape[0] * ncells)
    return counts.reshape(flat.shape[:-1] + (ncells,))


def typical_mask(flat: np.ndarray, reference: np.ndarray, delta: float) -> np.ndarray:
    """Vectorized strong-typicality test.

    ``flat`` holds sequences of flattened joint symbols along its last axis and
    ``reference`` the flattened reference pmf. A row is typical when no
    zero-probability symbol occurs and every empirical frequency is within
    ``delta`` of the reference probability.
    """
    reference = np.asarray(reference, dtype=float).ravel()
    flat = np.asarray(flat)
    n = flat.shape[-1]
    freq = type_counts(flat, reference.size) / n
    # slack keeps exact boundary frequencies (k/n == p ± delta) typical
    ok = np.all(np.abs(freq - reference) <= delta + 1e-12, axis=-1)
    ok &= ~np.any((freq > 0) & (reference <= 0), axis=-1)
    return ok


def is_strongly_typical(sequence, reference: JointPMF, delta: float) -> bool:
    """Strong (frequency) typicality of one sequence against ``reference``.

    ``sequence`` is a list of symbols for a one-axis reference, or a list of
    tuples (one entry per axis) for a joint reference.
    """
    if delta <= 0:
        raise ProbError("delta must be positive")
    seq = np.asarray(sequence, dtype=np.int64)
    shape = reference.probs.shape
    if seq.ndim == 1:
        seq = seq[:, None]
    if seq.shape[1] != len(shape):
        raise ProbError(f"sequence has {seq.shape[1]} components, reference {len(shape)} axes")
    if seq.size and (np.any(seq < 0) or np.any(seq >= np.array(shape))):
        raise ProbError("symbol outside the reference alphabet")
    flat = np.ravel_multi_index(tuple(seq.T), shape)
    return bool(typical_mask(flat, reference.probs, delta))
