"""QUBO formulations of capacity-constrained phone-to-station association.

Two encodings are provided:

* the naive one-hot model over ``N*M`` variables ``x[i,a]`` with the one-hot and
  capacity equalities as quadratic penalties;
* the top-2 model over ``N`` variables, where ``x[i] = 1`` sends phone ``i`` to its
  best station and ``x[i] = 0`` to its second-best one, so only the capacity
  penalty remains.

Both builders expand every squared penalty and fold the constants into
``Qubo.offset``, so ``energy(q, bits)`` is the full penalized cost.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numba
import numpy as np

from .errors import DimensionMismatchError, LengthMismatchError, UnassignedPhoneError
from .radio import SinrMatrix

UNASSIGNED = -1


# -----------------------------
# Qubo container
# -----------------------------
@dataclass(frozen=True, eq=False)
class Qubo:
    num_vars: int
    linear: dict[int, float]
    quadratic: dict[tuple[int, int], float]
    offset: float = 0.0
    var_labels: dict[int, str] = field(default_factory=dict)

    def __post_init__(self):
        for (i, j), v in self.quadratic.items():
            if not 0 <= i < j < self.num_vars:
                raise ValueError(f"quadratic key ({i}, {j}) is not strictly upper-triangular in range")
            if v == 0.0:
                raise ValueError(f"zero coefficient stored at ({i}, {j})")
        for i, v in self.linear.items():
            if not 0 <= i < self.num_vars:
                raise ValueError(f"linear index {i} out of range")
            if v == 0.0:
                raise ValueError(f"zero coefficient stored at {i}")

    @cached_property
    def linear_array(self) -> np.ndarray:
        h = np.zeros(self.num_vars)
        for i, v in self.linear.items():
            h[i] = v
        return h

    @cached_property
    def coo(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Quadratic terms as (rows, cols, values) sorted by (row, col)."""
        keys = sorted(self.quadratic)
        rows = np.array([k[0] for k in keys], dtype=np.int64)
        cols = np.array([k[1] for k in keys], dtype=np.int64)
        vals = np.array([self.quadratic[k] for k in keys], dtype=float)
        return rows, cols, vals

    def to_dense(self) -> np.ndarray:
        """Upper-triangular matrix with linear terms on the diagonal (offset excluded)."""
        q = np.diag(self.linear_array)
        rows, cols, vals = self.coo
        q[rows, cols] = vals
        return q

    def coupling_matrix(self) -> np.ndarray:
        """Symmetric off-diagonal couplings, ``J[i, j] = J[j, i] = quadratic[(i, j)]``."""
        j = np.zeros((self.num_vars, self.num_vars))
        rows, cols, vals = self.coo
        j[rows, cols] = vals
        j[cols, rows] = vals
        return j


class _Accumulator:
    def __init__(self):
        self.linear: dict[int, float] = defaultdict(float)
        self.quadratic: dict[tuple[int, int], float] = defaultdict(float)
        self.offset = 0.0

    def add_linear(self, i: int, coeff: float) -> None:
        self.linear[i] += coeff

    def add_quadratic(self, i: int, j: int, coeff: float) -> None:
        if i == j:  # x*x == x for binaries
            self.linear[i] += coeff
        else:
            self.quadratic[(min(i, j), max(i, j))] += coeff

    def add_squared(self, terms: Sequence[tuple[int, float]], const: float, weight: float) -> None:
        """Add ``weight * (sum_k c_k x_k + const)**2``."""
        for k, (i, ci) in enumerate(terms):
            self.add_linear(i, weight * (ci * ci + 2.0 * const * ci))
            for j, cj in terms[k + 1:]:
                self.add_quadratic(i, j, weight * 2.0 * ci * cj)
        self.offset += weight * const * const

    def build(self, num_vars: int, labels: dict[int, str]) -> Qubo:
        return Qubo(
            num_vars=num_vars,
            linear={i: v for i, v in sorted(self.linear.items()) if v != 0.0},
            quadratic={k: v for k, v in sorted(self.quadratic.items()) if v != 0.0},
            offset=self.offset,
            var_labels=labels,
        )


# -----------------------------
# Assignments
# -----------------------------
@dataclass(frozen=True)
class Assignment:
    station_of: tuple[int, ...]
    one_hot_violations: tuple[int, ...]
    capacity_deltas: tuple[int, ...]

    @property
    def feasible(self) -> bool:
        return not self.one_hot_violations and all(d == 0 for d in self.capacity_deltas)

    @classmethod
    def from_stations(
        cls,
        station_of: Iterable[int],
        capacities: Sequence[int],
        one_hot_violations: Iterable[int] = (),
    ) -> "Assignment":
        station_of = tuple(int(a) for a in station_of)
        loads = [0] * len(capacities)
        for a in station_of:
            if a != UNASSIGNED:
                loads[a] += 1
        deltas = tuple(load - int(c) for load, c in zip(loads, capacities))
        return cls(station_of, tuple(int(i) for i in one_hot_violations), deltas)


def objective(assign: Assignment, S: SinrMatrix | np.ndarray) -> float:
    """Total SINR of an assignment (the quantity being maximized)."""
    values = S.values if isinstance(S, SinrMatrix) else np.asarray(S)
    total = 0.0
    for i, a in enumerate(assign.station_of):
        if a == UNASSIGNED:
            raise UnassignedPhoneError(f"phone {i} is unassigned")
        total += float(values[i, a])
    return total


# -----------------------------
# Naive formulation
# -----------------------------
def naive_index(i: int, a: int, num_stations: int) -> int:
    return i * num_stations + a


def default_penalty(S: SinrMatrix | np.ndarray) -> float:
    """Twice the largest SINR magnitude: one violated constraint outweighs any single-phone gain."""
    values = S.values if isinstance(S, SinrMatrix) else np.asarray(S)
    return 2.0 * float(np.max(np.abs(values)))


def _check_dims(values: np.ndarray, capacities: Sequence[int]) -> tuple[int, int]:
    if values.ndim != 2:
        raise DimensionMismatchError(f"SINR matrix must be 2-D, got shape {values.shape}")
    n, m = values.shape
    if len(capacities) != m:
        raise DimensionMismatchError(f"{len(capacities)} capacities for {m} stations")
    return n, m


def build_naive(S: SinrMatrix | np.ndarray, capacities: Sequence[int], lambda1: float, lambda2: float) -> Qubo:
    values = S.values if isinstance(S, SinrMatrix) else np.asarray(S, dtype=float)
    n, m = _check_dims(values, capacities)
    if not (lambda1 > 0 and lambda2 > 0):
        raise ValueError("penalty weights must be positive")
    acc = _Accumulator()
    for i in range(n):
        for a in range(m):
            acc.add_linear(naive_index(i, a, m), -float(values[i, a]))
    for i in range(n):
        acc.add_squared([(naive_index(i, a, m), 1.0) for a in range(m)], -1.0, lambda1)
    for a in range(m):
        acc.add_squared([(naive_index(i, a, m), 1.0) for i in range(n)], -float(capacities[a]), lambda2)
    labels = {naive_index(i, a, m): f"x[{i},{a}]" for i in range(n) for a in range(m)}
    return acc.build(n * m, labels)


def decode_naive(bits: Sequence[int], num_phones: int, num_stations: int, capacities: Sequence[int]) -> Assignment:
    x = np.asarray(bits, dtype=np.int64)
    if x.size != num_phones * num_stations:
        raise LengthMismatchError(f"expected {num_phones * num_stations} bits, got {x.size}")
    grid = x.reshape(num_phones, num_stations)
    station_of, violations = [], []
    for i, row in enumerate(grid):
        on = np.flatnonzero(row)
        if on.size == 1:
            station_of.append(int(on[0]))
        else:
            station_of.append(UNASSIGNED)
            violations.append(i)
    return Assignment.from_stations(station_of, capacities, violations)


def encode_naive(assign: Assignment, num_stations: int) -> np.ndarray:
    bits = np.zeros(len(assign.station_of) * num_stations, dtype=np.uint8)
    for i, a in enumerate(assign.station_of):
        if a != UNASSIGNED:
            bits[naive_index(i, a, num_stations)] = 1
    return bits


# -----------------------------
# Top-2 formulation
# -----------------------------
@dataclass(frozen=True, eq=False)
class Top2Table:
    best: np.ndarray
    second: np.ndarray
    s1: np.ndarray
    s2: np.ndarray
    n1_sets: tuple[frozenset[int], ...]
    n2_sets: tuple[frozenset[int], ...]

    @property
    def num_phones(self) -> int:
        return len(self.best)

    @property
    def num_stations(self) -> int:
        return len(self.n1_sets)


def top2(S: SinrMatrix | np.ndarray) -> Top2Table:
    """Best and second-best station per phone; ties go to the lower station index."""
    values = S.values if isinstance(S, SinrMatrix) else np.asarray(S, dtype=float)
    n, m = values.shape
    if m < 2:
        raise ValueError("top-2 selection needs at least two stations")
    order = np.argsort(-values, axis=1, kind="stable")
    best, second = order[:, 0].copy(), order[:, 1].copy()
    rows = np.arange(n)
    n1 = tuple(frozenset(int(i) for i in np.flatnonzero(best == a)) for a in range(m))
    n2 = tuple(frozenset(int(i) for i in np.flatnonzero(second == a)) for a in range(m))
    return Top2Table(best, second, values[rows, best].copy(), values[rows, second].copy(), n1, n2)


def build_proposed(table: Top2Table, capacities: Sequence[int], lambda_p: float) -> Qubo:
    n, m = table.num_phones, table.num_stations
    if len(capacities) != m:
        raise DimensionMismatchError(f"{len(capacities)} capacities for {m} stations")
    if not lambda_p > 0:
        raise ValueError("penalty weight must be positive")
    acc = _Accumulator()
    for i in range(n):
        # -(s1*x + s2*(1 - x)) = -(s1 - s2)*x - s2
        acc.add_linear(i, -(float(table.s1[i]) - float(table.s2[i])))
        acc.offset -= float(table.s2[i])
    for a in range(m):
        terms = [(i, 1.0) for i in sorted(table.n1_sets[a])] + [(i, -1.0) for i in sorted(table.n2_sets[a])]
        acc.add_squared(terms, float(len(table.n2_sets[a]) - capacities[a]), lambda_p)
    return acc.build(n, {i: f"x[{i}]" for i in range(n)})


def decode_proposed(bits: Sequence[int], table: Top2Table, capacities: Sequence[int]) -> Assignment:
    x = np.asarray(bits, dtype=np.int64)
    if x.size != table.num_phones:
        raise LengthMismatchError(f"expected {table.num_phones} bits, got {x.size}")
    station_of = np.where(x == 1, table.best, table.second)
    return Assignment.from_stations(station_of.tolist(), capacities)


def encode_proposed(assign: Assignment, table: Top2Table) -> np.ndarray:
    bits = np.zeros(table.num_phones, dtype=np.uint8)
    for i, a in enumerate(assign.station_of):
        if a == table.best[i]:
            bits[i] = 1
        elif a != table.second[i]:
            raise ValueError(f"phone {i} on station {a}, which is neither its best nor second-best")
    return bits


# -----------------------------
# Energy evaluation
# -----------------------------
@numba.njit(cache=True, nogil=True)
def _energy_rows(bits, h, rows, cols, vals, offset):
    out = np.empty(bits.shape[0])
    for r in range(bits.shape[0]):
        b = bits[r]
        e = 0.0
        for i in range(h.shape[0]):
            if b[i]:
                e += h[i]
        for k in range(vals.shape[0]):
            if b[rows[k]] and b[cols[k]]:
                e += vals[k]
        out[r] = e + offset
    return out


def energies(q: Qubo, bits) -> np.ndarray:
    """Energies of a batch of bitstrings, shape (count, num_vars)."""
    b = np.ascontiguousarray(np.atleast_2d(np.asarray(bits)), dtype=np.uint8)
    if b.shape[1] != q.num_vars:
        raise LengthMismatchError(f"expected {q.num_vars} bits, got {b.shape[1]}")
    rows, cols, vals = q.coo
    return _energy_rows(b, q.linear_array, rows, cols, vals, float(q.offset))


def energy(q: Qubo, bits) -> float:
    b = np.asarray(bits)
    if b.ndim != 1 or b.size != q.num_vars:
        raise LengthMismatchError(f"expected {q.num_vars} bits, got shape {b.shape}")
    if q.num_vars == 0:
        return float(q.offset)
    return float(energies(q, b[None, :])[0])


# -----------------------------
# Text format
# -----------------------------
def dumps_qubo(q: Qubo) -> str:
    lines = [f"{q.num_vars} {q.offset!r}"]
    for i, v in sorted(q.linear.items()):
        lines.append(f"{i} {i} {v!r}")
    for (i, j), v in sorted(q.quadratic.items()):
        lines.append(f"{i} {j} {v!r}")
    return "\n".join(lines) + "\n"


def loads_qubo(text: str) -> Qubo:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    num_vars, offset = lines[0].split()
    linear, quadratic = {}, {}
    for ln in lines[1:]:
        i, j, v = ln.split()
        i, j, v = int(i), int(j), float(v)
        if i == j:
            linear[i] = v
        else:
            quadratic[(min(i, j), max(i, j))] = v
    return Qubo(int(num_vars), linear, quadratic, float(offset))


def write_qubo(q: Qubo, path: str | Path) -> None:
    Path(path).write_text(dumps_qubo(q))


def read_qubo(path: str | Path) -> Qubo:
    return loads_qubo(Path(path).read_text())
