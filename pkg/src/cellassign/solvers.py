"""Samplers and exact oracles for the association QUBOs.

``simulated_anneal`` is a single-flip Metropolis annealer with a geometric
inverse-temperature ladder. Every read draws from its own PCG64 stream seeded
by ``SeedSequence([seed, read_index])``, so results do not depend on how reads
are scheduled across workers.

``exact_assignment`` solves the capacity-constrained association as a balanced
transportation problem with successive shortest augmenting paths, and
``brute_force`` enumerates every bitstring of a small QUBO.
"""

from __future__ import annotations

import csv
import heapq
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence

import numba
import numpy as np

from .errors import InfeasibleCapacitiesError, TooLargeError
from .qubo import Assignment, Qubo, energies
from .radio import SinrMatrix

BRUTE_FORCE_CAP = 24


# -----------------------------
# Simulated annealing
# -----------------------------
@dataclass(frozen=True)
class SaConfig:
    num_reads: int = 1000
    sweeps_per_read: int = 1000
    beta_min: Optional[float] = None
    beta_max: Optional[float] = None
    seed: int = 0
    randomize_order: bool = False
    workers: int = 1

    def __post_init__(self):
        if self.num_reads < 1:
            raise ValueError("num_reads must be >= 1")
        if self.sweeps_per_read < 1:
            raise ValueError("sweeps_per_read must be >= 1")
        if self.beta_min is not None and self.beta_max is not None:
            if not 0 < self.beta_min < self.beta_max:
                raise ValueError("need 0 < beta_min < beta_max")


@dataclass(frozen=True, eq=False)
class Sample:
    bits: np.ndarray
    energy: float
    read_index: int


@dataclass(frozen=True, eq=False)
class SampleSet:
    samples: tuple[Sample, ...]
    config: SaConfig
    beta_range: tuple[float, float]
    wall_time: float

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def best(self) -> Sample:
        return self.samples[0]


def ising_fields(q: Qubo) -> tuple[np.ndarray, np.ndarray]:
    """Spin-form biases ``h`` and per-variable coupling magnitude sums under x = (1 + s) / 2."""
    rows, cols, vals = q.coo
    h = q.linear_array / 2.0
    np.add.at(h, rows, vals / 4.0)
    np.add.at(h, cols, vals / 4.0)
    coupling = np.zeros(q.num_vars)
    np.add.at(coupling, rows, np.abs(vals) / 4.0)
    np.add.at(coupling, cols, np.abs(vals) / 4.0)
    return h, coupling


def default_beta_range(q: Qubo, eps: float = 1e-9) -> tuple[float, float]:
    """Geometric ladder end points from single-flip energy bounds of the spin form.

    A spin flip changes the energy by ``2*(h_i + sum_j J_ij s_j)``. The hot end
    accepts the largest possible change with probability 1/2, the cold end the
    smallest nonzero bias or coupling with probability 1/100.
    """
    h, coupling = ising_fields(q)
    _, _, vals = q.coo
    de_max = 2.0 * float(np.max(np.abs(h) + coupling)) if q.num_vars else 0.0
    magnitudes = np.concatenate([np.abs(h), np.abs(vals) / 4.0])
    magnitudes = magnitudes[magnitudes > 0]
    de_min = 2.0 * float(magnitudes.min()) if magnitudes.size else 0.0
    if de_max <= 0:
        return 0.1, 1.0
    beta_min = math.log(2.0) / de_max
    beta_max = math.log(100.0) / max(de_min, eps)
    if beta_max <= beta_min:
        beta_max = 100.0 * beta_min
    return beta_min, beta_max


def _neighbours(q: Qubo) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """CSR adjacency (indptr, indices, weights) of the symmetric coupling graph."""
    rows, cols, vals = q.coo
    src = np.concatenate([rows, cols])
    dst = np.concatenate([cols, rows])
    w = np.concatenate([vals, vals])
    order = np.lexsort((dst, src))
    src, dst, w = src[order], dst[order], w[order]
    indptr = np.zeros(q.num_vars + 1, dtype=np.int64)
    np.add.at(indptr, src + 1, 1)
    return np.cumsum(indptr), dst.astype(np.int64), w.astype(float)


@numba.njit(cache=True, nogil=True, error_model="numpy")
def _anneal_read(h, indptr, indices, weights, betas, rng, randomize_order):
    n = h.shape[0]
    x = np.empty(n, dtype=np.uint8)
    for i in range(n):
        x[i] = 1 if rng.random() < 0.5 else 0
    # field[i] is the energy change of switching x[i] on, given the other bits
    field = h.copy()
    for i in range(n):
        if x[i]:
            for p in range(indptr[i], indptr[i + 1]):
                field[indices[p]] += weights[p]
    order = np.arange(n)
    for beta in betas:
        if randomize_order:
            for k in range(n - 1, 0, -1):
                j = int(rng.random() * (k + 1))
                tmp = order[k]
                order[k] = order[j]
                order[j] = tmp
        for idx in range(n):
            i = order[idx]
            delta = field[i] if x[i] == 0 else -field[i]
            if delta <= 0.0 or rng.random() < math.exp(-beta * delta):
                sign = 1.0 if x[i] == 0 else -1.0
                x[i] = 1 - x[i]
                for p in range(indptr[i], indptr[i + 1]):
                    field[indices[p]] += sign * weights[p]
    return x


def read_rng(seed: int, read_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(read_index)])))


def _sort_key(sample: Sample):
    return (sample.energy, sample.bits.tobytes(), sample.read_index)


def simulated_anneal(q: Qubo, cfg: SaConfig = SaConfig()) -> SampleSet:
    if q.num_vars < 1:
        raise ValueError("simulated annealing needs at least one variable")
    start = time.perf_counter()
    beta_min, beta_max = default_beta_range(q)
    if cfg.beta_min is not None:
        beta_min = cfg.beta_min
    if cfg.beta_max is not None:
        beta_max = cfg.beta_max
    betas = np.geomspace(beta_min, beta_max, cfg.sweeps_per_read)
    h = q.linear_array
    indptr, indices, weights = _neighbours(q)

    def run(read: int) -> np.ndarray:
        rng = read_rng(cfg.seed, read)
        return _anneal_read(h, indptr, indices, weights, betas, rng, cfg.randomize_order)

    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            finals = list(pool.map(run, range(cfg.num_reads)))
    else:
        finals = [run(r) for r in range(cfg.num_reads)]
    bits = np.stack(finals)
    es = energies(q, bits)
    samples = sorted((Sample(bits[r], float(es[r]), r) for r in range(cfg.num_reads)), key=_sort_key)
    return SampleSet(tuple(samples), cfg, (beta_min, beta_max), time.perf_counter() - start)


def best_feasible(samples: SampleSet | Sequence[Sample], decoder: Callable[[np.ndarray], Assignment]) -> Assignment | None:
    """Decoded assignment of the lowest-energy sample that satisfies every constraint."""
    seq = samples.samples if isinstance(samples, SampleSet) else sorted(samples, key=_sort_key)
    for s in seq:
        assign = decoder(s.bits)
        if assign.feasible:
            return assign
    return None


def write_samples_csv(samples: SampleSet, path: str | Path, decoder: Callable[[np.ndarray], Assignment] | None = None) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["read_index", "energy", "feasible", "bits"])
        for s in samples.samples:
            feasible = "" if decoder is None else int(decoder(s.bits).feasible)
            writer.writerow([s.read_index, repr(s.energy), feasible, bits_to_hex(s.bits)])


def bits_to_hex(bits: np.ndarray) -> str:
    """Hex of the bitstring read with bit 0 as the most significant bit."""
    if len(bits) == 0:
        return "0"
    return format(int("".join("1" if b else "0" for b in bits), 2), "x")


def hex_to_bits(text: str, num_vars: int) -> np.ndarray:
    value = int(text, 16)
    return np.array([(value >> (num_vars - 1 - k)) & 1 for k in range(num_vars)], dtype=np.uint8)


# -----------------------------
# Brute force
# -----------------------------
@numba.njit(cache=True, nogil=True)
def _brute(h, rows, cols, vals, offset):
    n = h.shape[0]
    b = np.zeros(n, dtype=np.uint8)
    best_e = np.inf
    best_k = 0
    for k in range(1 << n):
        # bit 0 is the most significant so index order is lexicographic order
        for i in range(n):
            b[i] = (k >> (n - 1 - i)) & 1
        e = 0.0
        for i in range(n):
            if b[i]:
                e += h[i]
        for t in range(vals.shape[0]):
            if b[rows[t]] and b[cols[t]]:
                e += vals[t]
        e += offset
        if e < best_e:
            best_e = e
            best_k = k
    for i in range(n):
        b[i] = (best_k >> (n - 1 - i)) & 1
    return b, best_e


def brute_force(q: Qubo, max_vars: int = BRUTE_FORCE_CAP) -> tuple[np.ndarray, float]:
    """Global minimum by enumeration; ties resolve to the lexicographically smallest bitstring."""
    if q.num_vars > max_vars:
        raise TooLargeError(f"{q.num_vars} variables exceed the brute-force cap of {max_vars}")
    if q.num_vars == 0:
        return np.zeros(0, dtype=np.uint8), float(q.offset)
    rows, cols, vals = q.coo
    bits, e = _brute(q.linear_array, rows, cols, vals, float(q.offset))
    return bits, float(e)


# -----------------------------
# Exact assignment (min-cost flow)
# -----------------------------
class _MinCostFlow:
    def __init__(self, num_nodes: int):
        self.graph: list[list[list]] = [[] for _ in range(num_nodes)]

    def add_edge(self, u: int, v: int, cap: int, cost: float) -> list:
        fwd = [v, cap, cost, None]
        rev = [u, 0, -cost, fwd]
        fwd[3] = rev
        self.graph[u].append(fwd)
        self.graph[v].append(rev)
        return fwd

    def _bellman_ford(self, source: int) -> list[float]:
        dist = [math.inf] * len(self.graph)
        dist[source] = 0.0
        for _ in range(len(self.graph) - 1):
            changed = False
            for u, edges in enumerate(self.graph):
                if dist[u] == math.inf:
                    continue
                for v, cap, cost, _ in edges:
                    if cap > 0 and dist[u] + cost < dist[v]:
                        dist[v] = dist[u] + cost
                        changed = True
            if not changed:
                break
        return dist

    def flow(self, source: int, sink: int, amount: int) -> int:
        """Push up to ``amount`` units along successive cheapest paths; returns units pushed."""
        potential = [0.0 if d == math.inf else d for d in self._bellman_ford(source)]
        pushed = 0
        while pushed < amount:
            dist = [math.inf] * len(self.graph)
            prev: list = [None] * len(self.graph)
            dist[source] = 0.0
            heap = [(0.0, source)]
            while heap:
                d, u = heapq.heappop(heap)
                if d > dist[u]:
                    continue
                for edge in self.graph[u]:
                    v, cap, cost, _ = edge
                    if cap <= 0:
                        continue
                    # reduced costs are nonnegative up to rounding
                    nd = d + max(cost + potential[u] - potential[v], 0.0)
                    if nd < dist[v]:
                        dist[v] = nd
                        prev[v] = (u, edge)
                        heapq.heappush(heap, (nd, v))
            if dist[sink] == math.inf:
                break
            for v in range(len(self.graph)):
                if dist[v] < math.inf:
                    potential[v] += dist[v]
            bottleneck = amount - pushed
            v = sink
            while v != source:
                u, edge = prev[v]
                bottleneck = min(bottleneck, edge[1])
                v = u
            v = sink
            while v != source:
                u, edge = prev[v]
                edge[1] -= bottleneck
                edge[3][1] += bottleneck
                v = u
            pushed += bottleneck
        return pushed


def exact_assignment(
    S: SinrMatrix | np.ndarray,
    capacities: Sequence[int],
    allowed: np.ndarray | None = None,
) -> Assignment:
    """Maximum-total-SINR assignment with exactly ``capacities[a]`` phones on station ``a``.

    ``allowed`` optionally masks the phone-station pairs that may be used (for
    instance the top-2 pairs). Raises ``InfeasibleCapacitiesError`` when the
    capacities do not sum to N or the mask leaves no feasible assignment.
    """
    values = S.values if isinstance(S, SinrMatrix) else np.asarray(S, dtype=float)
    n, m = values.shape
    if len(capacities) != m or sum(capacities) != n or any(c < 0 for c in capacities):
        raise InfeasibleCapacitiesError(f"capacities {list(capacities)} do not cover N={n}")
    source, sink = n + m, n + m + 1
    mcf = _MinCostFlow(n + m + 2)
    pair_edges = {}
    for i in range(n):
        mcf.add_edge(source, i, 1, 0.0)
        for a in range(m):
            if allowed is None or allowed[i, a]:
                pair_edges[(i, a)] = mcf.add_edge(i, n + a, 1, -float(values[i, a]))
    for a in range(m):
        mcf.add_edge(n + a, sink, int(capacities[a]), 0.0)
    if mcf.flow(source, sink, n) != n:
        raise InfeasibleCapacitiesError("no assignment satisfies the capacities under the given mask")
    station_of = [-1] * n
    for (i, a), edge in pair_edges.items():
        if edge[1] == 0:
            station_of[i] = a
    return Assignment.from_stations(station_of, capacities)


def top2_mask(table) -> np.ndarray:
    mask = np.zeros((table.num_phones, table.num_stations), dtype=bool)
    rows = np.arange(table.num_phones)
    mask[rows, table.best] = True
    mask[rows, table.second] = True
    return mask
