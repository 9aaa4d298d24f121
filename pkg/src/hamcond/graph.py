"""Graph representations shared by the sampler, the engine and the oracles.

Vertices are dense integers ``0..n-1``. A digraph is stored as parallel
``tails``/``heads`` arrays plus CSR out- and in-adjacency (sorted by
neighbour id), so the numba kernels can work on flat arrays.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import EdgeListFormatError, LoopPresent, ParallelPresent
from .kernels import peel_kernel


def _as_index_array(values) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(values, dtype=np.int64).reshape(-1))


@dataclass(frozen=True, eq=False)
class EdgeSequence:
    """A pairing ``x`` in ``[n]^{2m}``: edge ``j`` is ``(tails[j], heads[j])``.

    The interleaved view ``slots`` (tail, head, tail, head, ...) matches the
    usual way of writing the sequence; storage keeps the two halves apart.
    """

    n: int
    tails: np.ndarray
    heads: np.ndarray

    def __post_init__(self):
        tails = _as_index_array(self.tails)
        heads = _as_index_array(self.heads)
        if tails.shape != heads.shape:
            raise ValueError("tails and heads must have equal length")
        if tails.size and (min(tails.min(), heads.min()) < 0 or max(tails.max(), heads.max()) >= self.n):
            raise ValueError(f"vertex ids must lie in [0, {self.n})")
        object.__setattr__(self, "tails", tails)
        object.__setattr__(self, "heads", heads)

    @classmethod
    def from_slots(cls, n: int, slots: Sequence[int]) -> "EdgeSequence":
        arr = _as_index_array(slots)
        if arr.size % 2:
            raise ValueError("slot count must be even")
        return cls(n, arr[0::2], arr[1::2])

    @property
    def m(self) -> int:
        return int(self.tails.size)

    @property
    def slots(self) -> np.ndarray:
        out = np.empty(2 * self.m, dtype=np.int64)
        out[0::2] = self.tails
        out[1::2] = self.heads
        return out

    def out_degrees(self) -> np.ndarray:
        return np.bincount(self.tails, minlength=self.n)

    def in_degrees(self) -> np.ndarray:
        return np.bincount(self.heads, minlength=self.n)

    def copy(self) -> "EdgeSequence":
        return EdgeSequence(self.n, self.tails.copy(), self.heads.copy())

    def __eq__(self, other):
        if not isinstance(other, EdgeSequence):
            return NotImplemented
        return (
            self.n == other.n
            and np.array_equal(self.tails, other.tails)
            and np.array_equal(self.heads, other.heads)
        )

    def __repr__(self):
        return f"EdgeSequence(n={self.n}, m={self.m})"


def _csr(n: int, src: np.ndarray, dst: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    codes = np.sort(src * max(n, 1) + dst)
    ptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=n), out=ptr[1:])
    return ptr, codes % max(n, 1)


@dataclass(frozen=True, eq=False)
class Digraph:
    """Simple digraph on ``0..n-1`` with CSR adjacency and degree tallies."""

    n: int
    tails: np.ndarray
    heads: np.ndarray
    out_ptr: np.ndarray = field(repr=False)
    out_adj: np.ndarray = field(repr=False)
    in_ptr: np.ndarray = field(repr=False)
    in_adj: np.ndarray = field(repr=False)
    outdeg: np.ndarray = field(repr=False)
    indeg: np.ndarray = field(repr=False)

    @classmethod
    def from_arrays(cls, n: int, tails, heads) -> "Digraph":
        tails = _as_index_array(tails)
        heads = _as_index_array(heads)
        out_ptr, out_adj = _csr(n, tails, heads)
        in_ptr, in_adj = _csr(n, heads, tails)
        return cls(
            n,
            tails,
            heads,
            out_ptr,
            out_adj,
            in_ptr,
            in_adj,
            np.diff(out_ptr),
            np.diff(in_ptr),
        )

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int]]) -> "Digraph":
        """Build from explicit pairs, rejecting loops and repeated pairs."""
        pairs = list(edges)
        arr = np.array(pairs, dtype=np.int64).reshape(-1, 2)
        return build_digraph(EdgeSequence(n, arr[:, 0], arr[:, 1]))

    @property
    def m(self) -> int:
        return int(self.tails.size)

    def out_neighbors(self, v: int) -> np.ndarray:
        return self.out_adj[self.out_ptr[v] : self.out_ptr[v + 1]]

    def in_neighbors(self, v: int) -> np.ndarray:
        return self.in_adj[self.in_ptr[v] : self.in_ptr[v + 1]]

    def has_edge(self, u: int, v: int) -> bool:
        row = self.out_neighbors(u)
        i = np.searchsorted(row, v)
        return bool(i < row.size and row[i] == v)

    def edge_set(self) -> set[tuple[int, int]]:
        return set(zip(self.tails.tolist(), self.heads.tolist()))

    def edge_codes(self) -> np.ndarray:
        """Sorted ``u * n + v`` codes, for vectorised membership tests."""
        return np.sort(self.tails * self.n + self.heads)

    def min_degree(self) -> int:
        if self.n == 0:
            return 0
        return int(min(self.outdeg.min(), self.indeg.min()))

    def check_tallies(self) -> None:
        """Re-derive the stored degree tallies; used by tests and debug runs."""
        assert np.array_equal(self.outdeg, np.bincount(self.tails, minlength=self.n))
        assert np.array_equal(self.indeg, np.bincount(self.heads, minlength=self.n))
        assert self.out_ptr[-1] == self.in_ptr[-1] == self.m

    def __repr__(self):
        return f"Digraph(n={self.n}, m={self.m})"


@dataclass(frozen=True, eq=False)
class BipartiteGraph:
    """Bipartite image of a digraph: edge ``{a_i, b_j}`` for each arc ``i -> j``.

    ``a_ptr/a_adj`` list B-neighbours of each A vertex, ``b_ptr/b_adj`` the
    A-neighbours of each B vertex.
    """

    n: int
    a: np.ndarray
    b: np.ndarray
    a_ptr: np.ndarray = field(repr=False)
    a_adj: np.ndarray = field(repr=False)
    b_ptr: np.ndarray = field(repr=False)
    b_adj: np.ndarray = field(repr=False)

    @classmethod
    def from_arrays(cls, n: int, a, b) -> "BipartiteGraph":
        a = _as_index_array(a)
        b = _as_index_array(b)
        a_ptr, a_adj = _csr(n, a, b)
        b_ptr, b_adj = _csr(n, b, a)
        return cls(n, a, b, a_ptr, a_adj, b_ptr, b_adj)

    @property
    def num_edges(self) -> int:
        return int(self.a.size)

    def edge_set(self) -> set[tuple[int, int]]:
        return set(zip(self.a.tolist(), self.b.tolist()))

    def a_degrees(self) -> np.ndarray:
        return np.diff(self.a_ptr)

    def b_degrees(self) -> np.ndarray:
        return np.diff(self.b_ptr)

    def combined_csr(self) -> tuple[np.ndarray, np.ndarray]:
        """Adjacency over ``2n`` vertices: A side is ``0..n-1``, B side ``n..2n-1``."""
        n = self.n
        src = np.concatenate([self.a, self.b + n])
        dst = np.concatenate([self.b + n, self.a])
        return _csr(2 * n, src, dst)


@dataclass(frozen=True, eq=False)
class CycleCover:
    """Permutation digraph given by its successor map ``succ``."""

    succ: np.ndarray

    def __post_init__(self):
        succ = _as_index_array(self.succ)
        n = succ.size
        if n and not np.array_equal(np.sort(succ), np.arange(n)):
            raise ValueError("successor map is not a permutation")
        object.__setattr__(self, "succ", succ)

    @classmethod
    def from_cycles(cls, n: int, cycles: Iterable[Sequence[int]]) -> "CycleCover":
        succ = np.full(n, -1, dtype=np.int64)
        for cyc in cycles:
            cyc = list(cyc)
            for i, v in enumerate(cyc):
                if succ[v] != -1:
                    raise ValueError(f"vertex {v} appears twice")
                succ[v] = cyc[(i + 1) % len(cyc)]
        if (succ < 0).any():
            raise ValueError("cycles do not cover every vertex")
        return cls(succ)

    @property
    def n(self) -> int:
        return int(self.succ.size)

    @property
    def cycles(self) -> list[list[int]]:
        seen = np.zeros(self.n, dtype=bool)
        succ = self.succ.tolist()
        out = []
        for s in range(self.n):
            if seen[s]:
                continue
            cyc = []
            v = s
            while not seen[v]:
                seen[v] = True
                cyc.append(v)
                v = succ[v]
            out.append(cyc)
        return out

    def cycle_lengths(self) -> list[int]:
        return [len(c) for c in self.cycles]

    def edges(self) -> list[tuple[int, int]]:
        return list(zip(range(self.n), self.succ.tolist()))

    def uses_only(self, codes: np.ndarray, n: int | None = None) -> bool:
        """True iff every arc ``v -> succ[v]`` is among the sorted edge ``codes``."""
        n = self.n if n is None else n
        mine = np.arange(self.n) * n + self.succ
        idx = np.searchsorted(codes, mine)
        idx[idx >= codes.size] = 0
        return bool(codes.size and (codes[idx] == mine).all())


def detect_defects(seq: EdgeSequence) -> tuple[frozenset[int], frozenset[int]]:
    """Loop positions ``L`` and repeated-pair positions ``M`` (0-based edge indices)."""
    loops = np.flatnonzero(seq.tails == seq.heads)
    codes = seq.tails * seq.n + seq.heads
    _, inverse, counts = np.unique(codes, return_inverse=True, return_counts=True)
    multi = np.flatnonzero(counts[inverse] > 1)
    return frozenset(loops.tolist()), frozenset(multi.tolist())


def build_digraph(seq: EdgeSequence) -> Digraph:
    loops = np.flatnonzero(seq.tails == seq.heads)
    if loops.size:
        raise LoopPresent(f"loop at edge index {int(loops[0])}")
    codes = seq.tails * seq.n + seq.heads
    if np.unique(codes).size != codes.size:
        raise ParallelPresent("repeated ordered pair in edge sequence")
    return Digraph.from_arrays(seq.n, seq.tails, seq.heads)


def to_bipartite(d: Digraph) -> BipartiteGraph:
    return BipartiteGraph.from_arrays(d.n, d.tails, d.heads)


def peel_core(g: BipartiteGraph, d_min: int) -> tuple[np.ndarray, np.ndarray]:
    """Vertices of the ``d_min``-core as boolean masks over the A and B sides."""
    if d_min < 1:
        raise ValueError("d_min must be >= 1")
    ptr, adj = g.combined_csr()
    alive = peel_kernel(ptr, adj, int(d_min))
    return alive[: g.n].copy(), alive[g.n :].copy()


def verify_hamilton_cycle(d: Digraph, cycle: Sequence[int]) -> bool:
    cyc = [int(v) for v in cycle]
    if d.n == 0 or len(cyc) != d.n or sorted(cyc) != list(range(d.n)):
        return False
    return all(d.has_edge(cyc[i], cyc[(i + 1) % d.n]) for i in range(d.n))


# edge-list text format -------------------------------------------------------


def format_edge_list(d: Digraph) -> str:
    lines = [f"{d.n} {d.m}"]
    lines.extend(f"{u} {v}" for u, v in zip(d.tails.tolist(), d.heads.tolist()))
    return "\n".join(lines) + "\n"


def write_edge_list(d: Digraph, path) -> None:
    Path(path).write_text(format_edge_list(d))


def parse_edge_list(text: str) -> Digraph:
    """Parse ``n m`` then ``m`` lines ``u v``; errors carry 1-based line numbers."""
    lines = text.splitlines()
    if not lines:
        raise EdgeListFormatError("line 1: missing header 'n m'")
    head = lines[0].split()
    if len(head) != 2 or not all(t.lstrip("-").isdigit() for t in head):
        raise EdgeListFormatError(f"line 1: expected header 'n m', got {lines[0]!r}")
    n, m = int(head[0]), int(head[1])
    if n < 0 or m < 0:
        raise EdgeListFormatError("line 1: n and m must be non-negative")
    body = [(i + 2, ln) for i, ln in enumerate(lines[1:]) if ln.strip()]
    if len(body) != m:
        raise EdgeListFormatError(f"line 1: header declares {m} edges, found {len(body)}")
    seen: dict[tuple[int, int], int] = {}
    tails, heads = [], []
    for lineno, ln in body:
        parts = ln.split()
        if len(parts) != 2 or not all(t.lstrip("-").isdigit() for t in parts):
            raise EdgeListFormatError(f"line {lineno}: expected 'u v', got {ln!r}")
        u, v = int(parts[0]), int(parts[1])
        if not (0 <= u < n and 0 <= v < n):
            raise EdgeListFormatError(f"line {lineno}: vertex id out of range [0, {n})")
        if u == v:
            raise LoopPresent(f"line {lineno}: loop {u} -> {v}")
        if (u, v) in seen:
            raise ParallelPresent(f"line {lineno}: duplicate of edge on line {seen[(u, v)]}")
        seen[(u, v)] = lineno
        tails.append(u)
        heads.append(v)
    return Digraph.from_arrays(n, tails, heads)


def read_edge_list(path) -> Digraph:
    return parse_edge_list(Path(path).read_text())
