"""
Symbol Algebra and Decodability

Information symbols, sparse linear expressions over them, and the rank
machinery that decides what a node can compute or decode. Two arithmetic
backends are available: the prime field GF(2^61 - 1), where random
coefficients make "almost surely independent" an exact, checkable statement,
and complex doubles with tolerance-based rank decisions.
"""

import itertools
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, FrozenSet, Iterable, List, Literal, Mapping, Optional, Sequence, Union

import galois
import numpy as np

logger = logging.getLogger(__name__)

PRIME = 2 ** 61 - 1
RANK_RTOL = 1e-9          # singular values below RANK_RTOL * s_max count as zero
PRUNE_TOL = 1e-12         # complex coefficients below this magnitude are dropped

FieldElem = Union[int, complex]
FieldMode = Literal["prime", "complex"]
SymbolKind = Literal["fresh", "feedback", "input"]


@dataclass(frozen=True, order=True)
class SymbolId:
    """
    An indeterminate: a fresh information symbol, an opaque fed-back output
    or a synthetic phase input. Equality, hashing and ordering use ``index``.
    """
    index: int
    owner_tx: int = field(default=0, compare=False)
    intended_rx: int = field(default=0, compare=False)
    kind: str = field(default="fresh", compare=False)

    @property
    def key(self) -> str:
        """Kind-tagged index used in traces, e.g. ``u3`` or ``y7``."""
        tag = {"fresh": "u", "feedback": "y", "input": "s"}.get(self.kind, "?")
        return f"{tag}{self.index}"

    def __repr__(self) -> str:
        return f"{self.key}[{self.owner_tx}->{self.intended_rx}]"


class SymbolPool:
    """Issues unique SymbolIds for one run."""

    def __init__(self) -> None:
        self._counter = itertools.count()
        self.issued: Dict[str, int] = {"fresh": 0, "feedback": 0, "input": 0}

    def mint(self, owner_tx: int, intended_rx: int, kind: SymbolKind = "fresh") -> SymbolId:
        self.issued[kind] += 1
        return SymbolId(next(self._counter), owner_tx, intended_rx, kind)

    def mint_fresh(self, count: int, owner_tx: int, intended_rx: int) -> List[SymbolId]:
        """
        Mint ``count`` new information symbols of TX owner_tx for RX intended_rx.

        Raises:
            ValueError: If count is negative
        """
        if count < 0:
            raise ValueError(f"mint_fresh: count must be >= 0 (got {count})")
        return [self.mint(owner_tx, intended_rx, "fresh") for _ in range(count)]

    def __len__(self) -> int:
        return sum(self.issued.values())


# ---------------------------------------------------------------------------
# Field backends
# ---------------------------------------------------------------------------

class PrimeField:
    """Arithmetic modulo the Mersenne prime 2^61 - 1 on Python integers."""

    name = "prime"
    zero = 0
    one = 1

    def __init__(self, p: int = PRIME):
        self.p = p

    def add(self, a: int, b: int) -> int:
        return (a + b) % self.p

    def sub(self, a: int, b: int) -> int:
        return (a - b) % self.p

    def mul(self, a: int, b: int) -> int:
        return (a * b) % self.p

    def neg(self, a: int) -> int:
        return (-a) % self.p

    def inv(self, a: int) -> int:
        if a % self.p == 0:
            raise ZeroDivisionError("inverse of zero in GF(p)")
        return pow(a, self.p - 2, self.p)

    def is_zero(self, a: int) -> bool:
        return a % self.p == 0

    def coerce(self, value: int) -> int:
        return int(value) % self.p

    def random_nonzero(self, n: int, rng: np.random.Generator) -> List[int]:
        return [int(v) for v in rng.integers(1, self.p, size=n, dtype=np.int64)]

    def encode(self, a: int) -> str:
        return str(a)


class ComplexField:
    """Complex doubles; magnitudes below PRUNE_TOL are treated as zero."""

    name = "complex"
    zero = 0j
    one = 1 + 0j

    def add(self, a: complex, b: complex) -> complex:
        return a + b

    def sub(self, a: complex, b: complex) -> complex:
        return a - b

    def mul(self, a: complex, b: complex) -> complex:
        return a * b

    def neg(self, a: complex) -> complex:
        return -a

    def inv(self, a: complex) -> complex:
        return 1 / a

    def is_zero(self, a: complex) -> bool:
        return abs(a) < PRUNE_TOL

    def coerce(self, value: Union[int, complex]) -> complex:
        return complex(value)

    def random_nonzero(self, n: int, rng: np.random.Generator) -> List[complex]:
        # standard circular Gaussian
        draws = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / math.sqrt(2)
        return [complex(v) for v in draws]

    def encode(self, a: complex) -> List[float]:
        return [a.real, a.imag]


Field = Union[PrimeField, ComplexField]


class _PrimeGain(int):
    """A GF(p) channel coefficient remembering its slot."""

    slot: int

    def __new__(cls, value: int, slot: int = -1) -> "_PrimeGain":
        obj = super().__new__(cls, value)
        obj.slot = slot
        return obj

    def __getnewargs__(self):  # type: ignore[override]
        return (int(self), self.slot)


class _ComplexGain(complex):
    """A complex channel coefficient remembering its slot."""

    slot: int

    def __new__(cls, value: complex, slot: int = -1) -> "_ComplexGain":
        obj = super().__new__(cls, value)
        obj.slot = slot
        return obj

    def __getnewargs__(self):  # type: ignore[override]
        return (complex(self), self.slot)


def channel_gain(value: FieldElem, slot: int) -> FieldElem:
    """Tag a channel coefficient with the slot it was drawn for."""
    if isinstance(value, complex):
        return _ComplexGain(value, slot)
    return _PrimeGain(value, slot)


def gain_slot(value: FieldElem) -> int:
    """Slot of a tagged channel coefficient; -1 for anything else."""
    return getattr(value, "slot", -1)


PRIME_FIELD = PrimeField()
COMPLEX_FIELD = ComplexField()


def get_field(mode: str) -> Field:
    """
    Map a mode name to its shared backend.

    Raises:
        ValueError: For an unknown mode
    """
    if mode == "prime":
        return PRIME_FIELD
    if mode == "complex":
        return COMPLEX_FIELD
    raise ValueError(f"Unknown field mode: {mode!r} (expected 'prime' or 'complex')")


def random_coeffs(n: int, stream: np.random.Generator, fld: Field = PRIME_FIELD) -> List[FieldElem]:
    """
    Draw n combination coefficients from an RNG stream.

    Prime mode draws uniformly from the nonzero residues; complex mode draws
    standard circular Gaussians. Deterministic in the stream state.
    """
    if n <= 0:
        return []
    return fld.random_nonzero(n, stream)


def spawn_streams(seed: int, count: int = 2) -> List[np.random.Generator]:
    """Independent generators derived from one seed (channel, offline coefficients, ...)."""
    return [np.random.default_rng(child) for child in np.random.SeedSequence(seed).spawn(count)]


# ---------------------------------------------------------------------------
# Linear expressions
# ---------------------------------------------------------------------------

class LinearExpr:
    """
    Sparse linear form sum_s c_s * s over a single field.

    Instances are immutable values; zero coefficients are never stored.
    ``csi_slot`` is the latest slot whose channel coefficients went into the
    coefficients (-1 when none did). It propagates through every operation
    and does not take part in equality.
    """

    __slots__ = ("terms", "field", "csi_slot")

    def __init__(self, terms: Mapping[SymbolId, FieldElem], fld: Field, csi_slot: int = -1):
        cleaned = {s: c for s, c in terms.items() if not fld.is_zero(c)}
        object.__setattr__(self, "terms", cleaned)
        object.__setattr__(self, "field", fld)
        object.__setattr__(self, "csi_slot", csi_slot)

    def __setattr__(self, name: str, value: object) -> None:
        raise AttributeError("LinearExpr is immutable")

    @classmethod
    def unit(cls, symbol: SymbolId, fld: Field) -> "LinearExpr":
        return cls({symbol: fld.one}, fld)

    @classmethod
    def zero(cls, fld: Field) -> "LinearExpr":
        return cls({}, fld)

    @classmethod
    def combination(
        cls, exprs: Sequence["LinearExpr"], coeffs: Sequence[FieldElem], fld: Field
    ) -> "LinearExpr":
        """sum_k coeffs[k] * exprs[k]."""
        if len(exprs) != len(coeffs):
            raise ValueError(f"combination: {len(exprs)} expressions but {len(coeffs)} coefficients")
        acc: Dict[SymbolId, FieldElem] = {}
        csi_slot = -1
        for expr, coeff in zip(exprs, coeffs):
            csi_slot = max(csi_slot, expr.csi_slot, gain_slot(coeff))
            for s, c in expr.terms.items():
                acc[s] = fld.add(acc.get(s, fld.zero), fld.mul(coeff, c))
        return cls(acc, fld, csi_slot)

    def scale(self, coeff: FieldElem) -> "LinearExpr":
        f = self.field
        return LinearExpr({s: f.mul(coeff, c) for s, c in self.terms.items()}, f,
                          max(self.csi_slot, gain_slot(coeff)))

    def __add__(self, other: "LinearExpr") -> "LinearExpr":
        return LinearExpr.combination([self, other], [self.field.one, self.field.one], self.field)

    def __sub__(self, other: "LinearExpr") -> "LinearExpr":
        f = self.field
        return LinearExpr.combination([self, other], [f.one, f.neg(f.one)], f)

    def substitute(self, values: Mapping[SymbolId, "LinearExpr"]) -> "LinearExpr":
        """Replace every symbol found in ``values`` by its expression."""
        if not any(s in values for s in self.terms):
            return self
        f = self.field
        acc: Dict[SymbolId, FieldElem] = {}
        csi_slot = self.csi_slot
        for s, c in self.terms.items():
            inner = values.get(s)
            if inner is None:
                acc[s] = f.add(acc.get(s, f.zero), c)
                continue
            csi_slot = max(csi_slot, inner.csi_slot)
            for t, d in inner.terms.items():
                acc[t] = f.add(acc.get(t, f.zero), f.mul(c, d))
        return LinearExpr(acc, f, csi_slot)

    def coefficient(self, symbol: SymbolId) -> FieldElem:
        return self.terms.get(symbol, self.field.zero)

    def support(self) -> FrozenSet[SymbolId]:
        return frozenset(self.terms)

    def is_zero(self) -> bool:
        return not self.terms

    def encode(self) -> Dict[str, object]:
        return {s.key: self.field.encode(c) for s, c in sorted(self.terms.items())}

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, LinearExpr):
            return NotImplemented
        return self.terms == other.terms

    __hash__ = None  # type: ignore[assignment]

    def __len__(self) -> int:
        return len(self.terms)

    def __repr__(self) -> str:
        if not self.terms:
            return "LinearExpr(0)"
        body = " + ".join(f"{c}*{s!r}" for s, c in sorted(self.terms.items()))
        return f"LinearExpr({body})"


@dataclass(frozen=True)
class SymbolSpec:
    """
    A transmittable quantity plus who holds it, who wants it and who
    already knows it.
    """
    expr: LinearExpr                 # what a holder sends (may contain fed-back tokens)
    tx_holders: FrozenSet[int]       # transmitters able to form expr
    rx_desired: FrozenSet[int]       # receivers that still need it
    rx_known: FrozenSet[int] = frozenset()  # receivers that already have it
    label: str = ""                  # free-form provenance tag for traces

    def __post_init__(self) -> None:
        if not self.tx_holders:
            raise ValueError(f"SymbolSpec {self.label!r} has no transmitter holding it")
        if not self.rx_desired:
            raise ValueError(f"SymbolSpec {self.label!r} is desired by no receiver")
        overlap = self.rx_desired & self.rx_known
        if overlap:
            raise ValueError(f"SymbolSpec {self.label!r}: receivers {sorted(overlap)} both desire and know it")

    @property
    def order(self) -> int:
        return len(self.rx_desired)


# ---------------------------------------------------------------------------
# Row-echelon spans
# ---------------------------------------------------------------------------

class EchelonBasis:
    """
    Incremental row-echelon basis of a span of LinearExprs.

    Each stored row is keyed by its pivot, the smallest symbol in its support,
    and is normalized to a unit pivot coefficient.
    """

    def __init__(self, fld: Field, rows: Iterable[LinearExpr] = ()):
        self.field = fld
        self._rows: Dict[SymbolId, Dict[SymbolId, FieldElem]] = {}
        for row in rows:
            self.add(row)

    @property
    def rank(self) -> int:
        return len(self._rows)

    def _reduce_terms(self, terms: Mapping[SymbolId, FieldElem]) -> Dict[SymbolId, FieldElem]:
        f = self.field
        row = dict(terms)
        rows = self._rows
        while True:
            hits = [s for s in row if s in rows]
            if not hits:
                return row
            pivot = min(hits)
            factor = row[pivot]
            for s, c in rows[pivot].items():
                value = f.sub(row.get(s, f.zero), f.mul(factor, c))
                if f.is_zero(value):
                    row.pop(s, None)
                else:
                    row[s] = value
            row.pop(pivot, None)

    def reduce(self, expr: LinearExpr) -> LinearExpr:
        """Remainder of expr after eliminating every basis pivot."""
        return LinearExpr(self._reduce_terms(expr.terms), self.field, expr.csi_slot)

    def add(self, expr: LinearExpr) -> bool:
        """Insert expr; True when the rank grew."""
        row = self._reduce_terms(expr.terms)
        if not row:
            return False
        pivot = min(row)
        scale = self.field.inv(row[pivot])
        self._rows[pivot] = {s: self.field.mul(scale, c) for s, c in row.items()}
        self._rows[pivot][pivot] = self.field.one
        return True

    def contains(self, expr: LinearExpr) -> bool:
        return not self._reduce_terms(expr.terms)

    def copy(self) -> "EchelonBasis":
        clone = EchelonBasis(self.field)
        clone._rows = {p: dict(r) for p, r in self._rows.items()}
        return clone


# ---------------------------------------------------------------------------
# Dense rank
# ---------------------------------------------------------------------------

@lru_cache(maxsize=1)
def _galois_field() -> type:
    return galois.GF(PRIME)


def _columns_of(rows: Sequence[LinearExpr]) -> List[SymbolId]:
    return sorted(set().union(*(r.support() for r in rows))) if rows else []


def _dense(rows: Sequence[LinearExpr], columns: Sequence[SymbolId], dtype: object) -> np.ndarray:
    index = {s: k for k, s in enumerate(columns)}
    matrix = np.zeros((len(rows), len(columns)), dtype=dtype)
    for i, row in enumerate(rows):
        for s, c in row.terms.items():
            matrix[i, index[s]] = c
    return matrix


def generic_rank(
    rows: Sequence[LinearExpr], fld: Field, columns: Optional[Sequence[SymbolId]] = None
) -> int:
    """
    Rank of the coefficient matrix of rows.

    Prime mode builds a galois field array (exact); complex mode counts
    singular values above RANK_RTOL times the largest one.
    """
    if columns is None:
        columns = _columns_of(rows)
    if not rows or not columns:
        return 0
    if fld.name == "prime":
        GF = _galois_field()
        matrix = _dense(rows, columns, object)
        return int(np.linalg.matrix_rank(GF(matrix.tolist())))
    matrix = _dense(rows, columns, complex)
    singular = np.linalg.svd(matrix, compute_uv=False)
    if singular.size == 0 or singular[0] == 0:
        return 0
    return int(np.sum(singular > RANK_RTOL * singular[0]))


# ---------------------------------------------------------------------------
# Elimination and decodability
# ---------------------------------------------------------------------------

def _field_of(*groups: Sequence[LinearExpr]) -> Field:
    for group in groups:
        for expr in group:
            return expr.field
    return PRIME_FIELD


def eliminate(known: Sequence[LinearExpr], eqs: Sequence[LinearExpr]) -> List[LinearExpr]:
    """
    Reduce eqs modulo span(known).

    Prime mode reduces each equation against an echelon basis of known.
    Complex mode projects onto the orthogonal complement of span(known),
    obtained from an SVD, which stays stable where a pivot is nearly zero.
    Results have no component in span(known).
    """
    fld = _field_of(known, eqs)
    if not known:
        return list(eqs)
    if fld.name == "prime":
        basis = EchelonBasis(fld, known)
        return [basis.reduce(e) for e in eqs]
    columns = _columns_of(list(known) + list(eqs))
    K = _dense(known, columns, complex)
    E = _dense(eqs, columns, complex)
    _, singular, vh = np.linalg.svd(K, full_matrices=False)
    rank = int(np.sum(singular > RANK_RTOL * singular[0])) if singular.size else 0
    span = vh[:rank]
    # rows of span are orthonormal; remove each equation's component along them
    residual = E - (E @ span.conj().T) @ span
    return [
        LinearExpr({columns[k]: complex(v) for k, v in enumerate(row)}, fld)
        for row in residual
    ]


def decodable(
    eqs: Sequence[LinearExpr],
    known: Sequence[LinearExpr],
    targets: Iterable[SymbolId],
) -> bool:
    """
    Whether every target symbol is determined by span(eqs + known).

    A target t is decodable when the unit form on t lies in the row space.
    Prime mode tests this exactly with an echelon basis; complex mode
    compares SVD ranks with and without the unit rows.
    """
    targets = sorted(set(targets))
    if not targets:
        return True
    rows = list(eqs) + list(known)
    fld = _field_of(rows)
    units = [LinearExpr.unit(t, fld) for t in targets]
    if fld.name == "prime":
        basis = EchelonBasis(fld, rows)
        return all(basis.contains(u) for u in units)
    if not rows:
        return False
    columns = _columns_of(rows + units)
    return generic_rank(rows, fld, columns) == generic_rank(rows + units, fld, columns)
