"""Particle alphabets, words, characterizing functions and accessible sets.

A configuration of particles is a word over a finite alphabet; words form a
monoid under concatenation with the empty word as identity.  Characterizing
functions map words to real numbers, and fixed experimental constraints
select the accessible microstates among all words of a given length range.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property
from types import MappingProxyType
from typing import Callable, Iterator, Mapping, Sequence

import numpy as np

from .errors import (
    AlphabetMismatch,
    BudgetExceeded,
    DimensionMismatch,
    EmptyAccessibleSet,
)

DEFAULT_BUDGET = 2**26


@dataclass(frozen=True)
class Alphabet:
    """Finite ordered set of particle states.

    ``payloads`` holds one numeric value per symbol.  When omitted and every
    symbol is numeric, the symbols themselves are used.
    """

    symbols: tuple
    name: str = "P"
    payloads: tuple | None = None

    def __post_init__(self):
        symbols = tuple(self.symbols)
        if not symbols:
            raise ValueError("alphabet must contain at least one symbol")
        if len(set(symbols)) != len(symbols):
            raise ValueError(f"alphabet {self.name!r} contains duplicate symbols")
        object.__setattr__(self, "symbols", symbols)
        payloads = self.payloads
        if payloads is None:
            try:
                payloads = tuple(float(s) for s in symbols)
            except (TypeError, ValueError):
                payloads = None
        else:
            if isinstance(payloads, Mapping):
                payloads = tuple(payloads[s] for s in symbols)
            payloads = tuple(float(v) for v in payloads)
            if len(payloads) != len(symbols):
                raise ValueError("one payload per symbol is required")
        object.__setattr__(self, "payloads", payloads)

    def __len__(self):
        return len(self.symbols)

    def __iter__(self):
        return iter(self.symbols)

    def __contains__(self, symbol):
        try:
            return symbol in self._index
        except TypeError:
            return False

    @cached_property
    def _index(self):
        return {s: i for i, s in enumerate(self.symbols)}

    def index(self, symbol) -> int:
        return self._index[symbol]

    @cached_property
    def payload_array(self) -> np.ndarray:
        if self.payloads is None:
            raise ValueError(f"alphabet {self.name!r} has no numeric payloads")
        arr = np.array(self.payloads, dtype=float)
        arr.setflags(write=False)
        return arr


@dataclass(frozen=True)
class Microstate:
    """A word over ``alphabet``; the empty word is the monoid identity."""

    alphabet: Alphabet
    word: tuple = ()

    def __post_init__(self):
        word = tuple(self.word)
        for s in word:
            if s not in self.alphabet:
                raise AlphabetMismatch(f"symbol {s!r} not in alphabet {self.alphabet.name!r}")
        object.__setattr__(self, "word", word)

    @classmethod
    def _trusted(cls, alphabet, word):
        m = object.__new__(cls)
        object.__setattr__(m, "alphabet", alphabet)
        object.__setattr__(m, "word", word)
        return m

    @classmethod
    def empty(cls, alphabet):
        return cls._trusted(alphabet, ())

    def __len__(self):
        return len(self.word)

    def __iter__(self):
        return iter(self.word)

    @property
    def indices(self) -> tuple[int, ...]:
        return tuple(self.alphabet.index(s) for s in self.word)

    def payloads(self) -> np.ndarray:
        pa = self.alphabet.payload_array
        return pa[list(self.indices)] if self.word else np.zeros(0)

    def __str__(self):
        return "(" + ",".join(str(s) for s in self.word) + ")" if self.word else "ε"


def concat(m1: Microstate, m2: Microstate) -> Microstate:
    if m1.alphabet != m2.alphabet:
        raise AlphabetMismatch("cannot concatenate words over different alphabets")
    return Microstate._trusted(m1.alphabet, m1.word + m2.word)


def _index_block(n_symbols, length):
    """All index words of ``length`` in lexicographic order, shape (n**length, length)."""
    if length == 0:
        return np.zeros((1, 0), dtype=np.int64)
    grid = np.indices((n_symbols,) * length, dtype=np.int64)
    return grid.reshape(length, -1).T


def enumerate_words(alphabet: Alphabet, length: int, budget: int = DEFAULT_BUDGET) -> Iterator[Microstate]:
    if length < 0:
        raise ValueError("length must be nonnegative")
    if len(alphabet) ** length > budget:
        raise BudgetExceeded(f"{len(alphabet)}^{length} words exceed the budget of {budget}")
    symbols = alphabet.symbols
    for combo in itertools.product(symbols, repeat=length):
        yield Microstate._trusted(alphabet, combo)


# --------------------------------------------------------------------------
# characterizing functions


@dataclass(frozen=True)
class CharFunction:
    """Real-valued function on microstates.

    ``batch`` optionally evaluates a block of equal-length words given as a
    2-D array of symbol indices; it must agree with ``evaluator``.
    """

    label: str
    evaluator: Callable[[Microstate], float]
    extensive: bool = False
    batch: Callable[[np.ndarray, Alphabet], np.ndarray] | None = field(default=None, compare=False)
    max_length: int | None = None

    def __call__(self, m: Microstate) -> float:
        if self.max_length is not None and len(m) > self.max_length:
            raise DimensionMismatch(
                f"{self.label}: word length {len(m)} exceeds {self.max_length}")
        return float(self.evaluator(m))

    def evaluate_block(self, idx: np.ndarray, alphabet: Alphabet) -> np.ndarray:
        if self.max_length is not None and idx.shape[1] > self.max_length:
            raise DimensionMismatch(
                f"{self.label}: word length {idx.shape[1]} exceeds {self.max_length}")
        if self.batch is not None:
            return np.asarray(self.batch(idx, alphabet), dtype=float).reshape(idx.shape[0])
        symbols = alphabet.symbols
        return np.array([self(Microstate._trusted(alphabet, tuple(symbols[i] for i in row)))
                         for row in idx], dtype=float)


def count_function(label="count") -> CharFunction:
    """Number of particles, i.e. the word length."""
    return CharFunction(
        label, len, extensive=True,
        batch=lambda idx, alphabet: np.full(idx.shape[0], float(idx.shape[1])))


def weighted_sum(weights: Mapping | None = None, label="energy") -> CharFunction:
    """Sum of a per-symbol weight over the particles (payloads by default)."""

    def weight_vector(alphabet):
        if weights is None:
            return alphabet.payload_array
        return np.array([float(weights[s]) for s in alphabet.symbols])

    def evaluator(m):
        w = weight_vector(m.alphabet)
        return float(sum(w[m.alphabet.index(s)] for s in m.word))

    def batch(idx, alphabet):
        return weight_vector(alphabet)[idx].sum(axis=1)

    return CharFunction(label, evaluator, extensive=True, batch=batch)


def quadratic_energy(J, label="energy") -> CharFunction:
    """``-1/2 v^T J v`` over particle payloads; words use the leading block of J."""
    J = np.array(J, dtype=float)
    if J.ndim != 2 or J.shape[0] != J.shape[1]:
        raise DimensionMismatch("coupling matrix must be square")
    n = J.shape[0]

    def evaluator(m):
        v = m.payloads()
        L = len(v)
        return -0.5 * float(v @ J[:L, :L] @ v)

    def batch(idx, alphabet):
        L = idx.shape[1]
        V = alphabet.payload_array[idx]
        return -0.5 * np.einsum("ni,ij,nj->n", V, J[:L, :L], V)

    off_diag = J - np.diag(np.diag(J))
    return CharFunction(label, evaluator, extensive=not np.any(off_diag) and not np.any(np.diag(J)),
                        batch=batch, max_length=n)


def cylinder_volume(area=1.0, label="volume", encoding="heights", unit=1.0) -> CharFunction:
    """Volume of a cylinder of base ``area`` closed by a piston at the highest particle.

    ``encoding="heights"``: each symbol's payload is a particle height.
    ``encoding="sites"``: position i in the word is a site at height
    ``(i + 1) * unit``, occupied when its payload is nonzero.
    Empty configurations have volume 0.
    """
    if encoding not in ("heights", "sites"):
        raise ValueError(f"unknown encoding {encoding!r}")

    def batch(idx, alphabet):
        if idx.shape[1] == 0:
            return np.zeros(idx.shape[0])
        P = alphabet.payload_array[idx]
        if encoding == "heights":
            return area * np.max(P, axis=1)
        occupied = P != 0
        heights = np.where(occupied, np.arange(1, idx.shape[1] + 1) * unit, 0.0)
        return area * np.max(heights, axis=1)

    def evaluator(m):
        idx = np.array([m.alphabet.index(s) for s in m.word], dtype=np.int64).reshape(1, -1)
        return float(batch(idx, m.alphabet)[0])

    return CharFunction(label, evaluator, extensive=False, batch=batch)


def linear_combination(coefficients: Mapping[str, float], functions: Sequence[CharFunction],
                       label: str) -> CharFunction:
    by_label = {f.label: f for f in functions}
    terms = [(float(c), by_label[name]) for name, c in coefficients.items()]
    limits = [f.max_length for _, f in terms if f.max_length is not None]

    def evaluator(m):
        return sum(c * f(m) for c, f in terms)

    def batch(idx, alphabet):
        return sum(c * f.evaluate_block(idx, alphabet) for c, f in terms)

    return CharFunction(label, evaluator, extensive=all(f.extensive for _, f in terms),
                        batch=batch, max_length=min(limits) if limits else None)


# --------------------------------------------------------------------------
# constraints


@dataclass(frozen=True)
class Interval:
    lo: float = -math.inf
    hi: float = math.inf

    def contains(self, values):
        values = np.asarray(values, dtype=float)
        return (values >= self.lo) & (values <= self.hi)


@dataclass(frozen=True)
class FiniteSet:
    values: tuple
    rtol: float = 1e-12

    def contains(self, values):
        values = np.asarray(values, dtype=float)
        out = np.zeros(values.shape, dtype=bool)
        for v in self.values:
            out |= np.abs(values - v) <= self.rtol * max(1.0, abs(v))
        return out


@dataclass(frozen=True)
class Predicate:
    """Opaque membership callback on a function value."""

    fn: Callable[[float], bool]

    def contains(self, values):
        return np.array([bool(self.fn(float(v))) for v in np.ravel(values)], dtype=bool)


def admissible(obj):
    """Coerce a scalar, sequence, ``{"min", "max"}`` mapping or callable to an admissible set."""
    if isinstance(obj, (Interval, FiniteSet, Predicate)):
        return obj
    if isinstance(obj, Mapping):
        unknown = set(obj) - {"min", "max"}
        if unknown:
            raise ValueError(f"unknown interval keys {sorted(unknown)}")
        return Interval(float(obj.get("min", -math.inf)), float(obj.get("max", math.inf)))
    if callable(obj):
        return Predicate(obj)
    if isinstance(obj, (list, tuple, set, frozenset)):
        return FiniteSet(tuple(float(v) for v in obj))
    return FiniteSet((float(obj),))


@dataclass(frozen=True)
class ConstraintSpec:
    """Fixed admissible value sets and free target means.

    ``predicates`` are extra membership tests on whole microstates, used for
    constraints whose codomain is not a scalar (particle positions inside a
    container region, for instance).
    """

    fixed: Mapping = field(default_factory=dict)
    free: Mapping = field(default_factory=dict)
    predicates: Mapping = field(default_factory=dict)

    def __post_init__(self):
        fixed = {k: admissible(v) for k, v in dict(self.fixed).items()}
        free = {k: float(v) for k, v in dict(self.free).items()}
        overlap = set(fixed) & set(free)
        if overlap:
            raise ValueError(f"labels both fixed and free: {sorted(overlap)}")
        for k, v in free.items():
            if not math.isfinite(v):
                raise ValueError(f"free target {k!r} is not finite")
        object.__setattr__(self, "fixed", MappingProxyType(fixed))
        object.__setattr__(self, "free", MappingProxyType(free))
        object.__setattr__(self, "predicates", MappingProxyType(dict(self.predicates)))

    def check_labels(self, labels):
        missing = (set(self.fixed) | set(self.free)) - set(labels)
        if missing:
            raise ValueError(f"constraints reference undeclared functions: {sorted(missing)}")


@dataclass(frozen=True, eq=False)
class AccessibleSet:
    """Materialized accessible microstates with cached function values.

    Immutable after construction: the value arrays are read-only.
    """

    microstates: tuple
    values: Mapping
    alphabet: Alphabet | None = None
    functions: tuple = ()
    spec: ConstraintSpec | None = None
    length_range: tuple | None = None

    def __post_init__(self):
        vals = {}
        for label, arr in dict(self.values).items():
            arr = np.array(arr, dtype=float)
            if arr.shape != (len(self.microstates),):
                raise DimensionMismatch(f"values for {label!r} do not match the microstate count")
            arr.setflags(write=False)
            vals[label] = arr
        if not self.microstates:
            raise EmptyAccessibleSet("the accessible set is empty")
        object.__setattr__(self, "values", MappingProxyType(vals))
        object.__setattr__(self, "microstates", tuple(self.microstates))

    @classmethod
    def from_table(cls, values: Mapping[str, Sequence[float]]):
        """Set of abstract microstates given only by their function values.

        Microstate i is the one-letter word ``(i,)`` over the index alphabet.
        """
        values = {k: np.asarray(v, dtype=float) for k, v in values.items()}
        sizes = {len(v) for v in values.values()}
        if len(sizes) != 1:
            raise DimensionMismatch("all value columns need the same length")
        n = sizes.pop()
        if n == 0:
            raise EmptyAccessibleSet("the accessible set is empty")
        alphabet = Alphabet(tuple(range(n)), name="index")
        return cls(tuple(Microstate._trusted(alphabet, (i,)) for i in range(n)), values, alphabet)

    @property
    def omega(self) -> int:
        return len(self.microstates)

    def __len__(self):
        return len(self.microstates)

    @property
    def labels(self):
        return tuple(self.values)

    def column(self, label) -> np.ndarray:
        return self.values[label]

    def matrix(self, labels) -> np.ndarray:
        if not labels:
            return np.zeros((self.omega, 0))
        return np.column_stack([self.values[lab] for lab in labels])


def accessible_set(alphabet: Alphabet, functions: Sequence[CharFunction], spec: ConstraintSpec,
                   length_range=(0, 0), budget: int = DEFAULT_BUDGET) -> AccessibleSet:
    """Words with lengths in ``length_range`` (inclusive) satisfying every fixed constraint."""
    functions = tuple(functions)
    labels = [f.label for f in functions]
    if len(set(labels)) != len(labels):
        raise ValueError("duplicate function labels")
    spec.check_labels(labels)
    lo, hi = (length_range, length_range) if isinstance(length_range, int) else length_range
    if lo < 0 or hi < lo:
        raise ValueError(f"invalid length range {length_range!r}")
    n = len(alphabet)
    total = sum(n**L for L in range(lo, hi + 1))
    if total > budget:
        raise BudgetExceeded(f"{total} words exceed the enumeration budget of {budget}")

    kept_words = []
    kept_values = {f.label: [] for f in functions}
    symbols = alphabet.symbols
    for L in range(lo, hi + 1):
        idx = _index_block(n, L)
        vals = {f.label: f.evaluate_block(idx, alphabet) for f in functions}
        mask = np.ones(idx.shape[0], dtype=bool)
        for label, adm in spec.fixed.items():
            mask &= adm.contains(vals[label])
        rows = np.flatnonzero(mask)
        words = [Microstate._trusted(alphabet, tuple(symbols[i] for i in idx[r])) for r in rows]
        if spec.predicates:
            keep = [all(pred(m) for pred in spec.predicates.values()) for m in words]
            rows = rows[np.array(keep, dtype=bool)] if rows.size else rows
            words = [m for m, k in zip(words, keep) if k]
        kept_words.extend(words)
        for label in kept_values:
            kept_values[label].append(vals[label][rows])

    if not kept_words:
        raise EmptyAccessibleSet("no word satisfies the fixed constraints")
    values = {label: np.concatenate(parts) for label, parts in kept_values.items()}
    return AccessibleSet(tuple(kept_words), values, alphabet, functions, spec, (lo, hi))


# --------------------------------------------------------------------------
# extensivity


@dataclass(frozen=True)
class ExtensivityReport:
    passed: bool
    samples: int
    max_defect: float
    counterexample: tuple | None = None


def check_extensivity(f: CharFunction, alphabet: Alphabet, samples: int = 200, rng_seed: int = 0,
                      max_length: int | None = None) -> ExtensivityReport:
    """Test ``f(m1.m2) == f(m1) + f(m2)`` on random word pairs.

    The tolerance is ``1e-12 * max(1, |f(m1.m2)|)``.  The first failing pair is
    returned as ``(m1, m2, f(m1.m2), f(m1) + f(m2))``.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    if max_length is None:
        max_length = f.max_length if f.max_length is not None else 6
    rng = np.random.default_rng(rng_seed)
    symbols = alphabet.symbols
    worst = 0.0
    first = None
    for _ in range(samples):
        L1 = int(rng.integers(0, max_length + 1))
        L2 = int(rng.integers(0, max_length - L1 + 1))
        m1 = Microstate._trusted(alphabet, tuple(symbols[i] for i in rng.integers(0, len(symbols), L1)))
        m2 = Microstate._trusted(alphabet, tuple(symbols[i] for i in rng.integers(0, len(symbols), L2)))
        whole = f(concat(m1, m2))
        parts = f(m1) + f(m2)
        defect = abs(whole - parts)
        worst = max(worst, defect)
        if first is None and defect > 1e-12 * max(1.0, abs(whole)):
            first = (m1, m2, whole, parts)
    return ExtensivityReport(first is None, samples, worst, first)
