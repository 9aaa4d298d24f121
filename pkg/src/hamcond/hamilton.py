"""Three-phase Hamilton cycle construction.

Phase 0 splits the arcs into ``E1, E2, E3`` and peels the cores of the
bipartite images of ``E2`` and ``E3``. Phase 1 turns a perfect matching of
``G(E1)`` into a cycle cover. Phase 2 removes every cycle shorter than
``n0`` by growing trees of near permutation digraphs (a path plus a cycle
cover of the remaining vertices) along core arcs. Phase 3 splices the
remaining long cycles together two at a time.

A near permutation digraph is stored as a chain of segments of the cycles of
the cover it started from, so each rotation costs time proportional to the
tree depth rather than to ``n``.
"""
from __future__ import annotations

import os
import time
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BudgetExhausted,
    EngineFailure,
    NoPerfectMatching,
    PartitionDegenerate,
    Phase2Failure,
    Phase3Failure,
)
from .graph import BipartiteGraph, CycleCover, Digraph, _csr, peel_core, verify_hamilton_cycle
from .kernels import hopcroft_karp_kernel
from .params import Parameters

DEBUG = os.environ.get("HAMCOND_DEBUG", "").strip().lower() in ("1", "true", "yes", "on")


# Phase 0 -----------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class EdgePartition:
    """Arc classes as index arrays into the digraph's arc list.

    With ``shared=True`` all three classes are the full arc set and the cores
    are taken at degree one (every vertex, since all in- and out-degrees are
    positive); this is the fallback used when a disjoint split leaves too few
    arcs for Phases 2-3.
    ``k2_a``/``k2_b`` (and ``k3_*``) are boolean core masks on the tail and
    head sides of the bipartite image.
    """

    n: int
    e1: np.ndarray
    e2: np.ndarray
    e3: np.ndarray
    k2_a: np.ndarray = field(repr=False)
    k2_b: np.ndarray = field(repr=False)
    k3_a: np.ndarray = field(repr=False)
    k3_b: np.ndarray = field(repr=False)
    shared: bool = False

    def sizes(self) -> dict:
        return {
            "e1": int(self.e1.size),
            "e2": int(self.e2.size),
            "e3": int(self.e3.size),
            "k2": int(self.k2_a.sum() + self.k2_b.sum()),
            "k3": int(self.k3_a.sum() + self.k3_b.sum()),
            "shared": self.shared,
        }


def _core(n: int, tails: np.ndarray, heads: np.ndarray, d_min: int):
    if tails.size == 0:
        empty = np.zeros(n, dtype=bool)
        return empty, empty.copy()
    return peel_core(BipartiteGraph.from_arrays(n, tails, heads), d_min)


def split_arcs(d: Digraph, params: Parameters, rng: np.random.Generator, idx: np.ndarray):
    """The ``E1, E2, E3`` index arrays of Phase 0, without any size checks."""
    n, m = d.n, d.m
    j1 = min(params.j1, m)
    tails = d.tails[idx]
    heads = d.heads[idx]
    out_seen = np.bincount(tails[:j1], minlength=n)
    in_seen = np.bincount(heads[:j1], minlength=n)
    later = np.arange(j1, m)
    low = (out_seen[tails[later]] < params.d_min) | (in_seen[heads[later]] < params.d_min)
    rest = later[~low]
    coins = rng.random(rest.size) < 0.5
    e1 = np.concatenate([idx[:j1], idx[later[low]]])
    return e1, idx[rest[coins]], idx[rest[~coins]]


def phase0_partition(
    d: Digraph,
    params: Parameters,
    rng: np.random.Generator,
    order: np.ndarray | None = None,
    shared: bool = False,
) -> EdgePartition:
    """Split the arcs, taken in ``order`` (default: stored order).

    The first ``j1`` arcs go to ``E1``, as does every later arc whose tail
    occurs fewer than ``d_min`` times among the first ``j1`` tails or whose
    head occurs fewer than ``d_min`` times among the first ``j1`` heads. The
    rest are split by fair coins between ``E2`` and ``E3``.
    """
    n, m = d.n, d.m
    idx = np.arange(m) if order is None else np.asarray(order, dtype=np.int64)
    if shared:
        a, b = _core(n, d.tails, d.heads, 1)
        return EdgePartition(n, idx, idx, idx, a, b, a, b, shared=True)
    e1, e2, e3 = split_arcs(d, params, rng, idx)
    if e2.size < n or e3.size < n:
        raise PartitionDegenerate(f"|E2|={e2.size}, |E3|={e3.size} with n={n}")
    k2_a, k2_b = _core(n, d.tails[e2], d.heads[e2], params.d_min)
    k3_a, k3_b = _core(n, d.tails[e3], d.heads[e3], params.d_min)
    return EdgePartition(n, e1, e2, e3, k2_a, k2_b, k3_a, k3_b)


# Phase 1 -----------------------------------------------------------------------


def max_bipartite_matching(g: BipartiteGraph) -> np.ndarray:
    """Maximum matching; entry ``i`` is the partner of ``a_i`` or ``-1``."""
    match_a, _ = hopcroft_karp_kernel(g.n, g.n, g.a_ptr, g.a_adj)
    return match_a


def phase1_cycle_cover(tails: np.ndarray, heads: np.ndarray, n: int, rng: np.random.Generator) -> CycleCover:
    """Cycle cover from a perfect matching of the bipartite image of the arcs.

    The head side is relabelled by a uniform permutation before matching, so
    the deterministic matcher returns a random perfect matching rather than a
    fixed one.
    """
    if tails.size == 0:
        raise NoPerfectMatching("no arcs")
    pi = rng.permutation(n)
    g = BipartiteGraph.from_arrays(n, tails, pi[heads])
    match = max_bipartite_matching(g)
    size = int((match >= 0).sum())
    if size < n:
        raise NoPerfectMatching(f"maximum matching has size {size} < {n}")
    inv = np.empty(n, dtype=np.int64)
    inv[pi] = np.arange(n)
    return CycleCover(inv[match])


# Phase 2 -----------------------------------------------------------------------


class _Cycles:
    """Position tables for the cycles of a fixed cycle cover."""

    def __init__(self, cover: CycleCover):
        cycles = cover.cycles
        n = cover.n
        self.order = np.fromiter((v for c in cycles for v in c), dtype=np.int64, count=n).tolist()
        self.cid = [0] * n
        self.pos = [0] * n
        self.start = []
        self.clen = []
        off = 0
        for c, cyc in enumerate(cycles):
            self.start.append(off)
            self.clen.append(len(cyc))
            for k, v in enumerate(cyc):
                self.cid[v] = c
                self.pos[v] = k
            off += len(cyc)

    def at(self, c: int, p: int) -> int:
        return self.order[self.start[c] + p % self.clen[c]]

    def succ(self, v: int) -> int:
        return self.at(self.cid[v], self.pos[v] + 1)

    def pred(self, v: int) -> int:
        return self.at(self.cid[v], self.pos[v] - 1)


# A chain is a tuple of segments (cycle id, start position, length); it lists
# the vertices of a path or cycle in order.


def _chain_len(chain) -> int:
    return sum(s[2] for s in chain)


def _chain_find(cy: _Cycles, chain, v: int) -> int:
    """Offset of ``v`` in ``chain`` or -1."""
    c = cy.cid[v]
    off = 0
    for sc, a, ln in chain:
        if sc == c:
            k = (cy.pos[v] - a) % cy.clen[c]
            if k < ln:
                return off + k
        off += ln
    return -1


def _chain_at(cy: _Cycles, chain, o: int) -> int:
    for sc, a, ln in chain:
        if o < ln:
            return cy.at(sc, a + o)
        o -= ln
    raise IndexError("offset beyond chain")


def _chain_split(cy: _Cycles, chain, o: int):
    """``(chain[:o], chain[o:])`` as chains."""
    head, tail = [], []
    for i, (sc, a, ln) in enumerate(chain):
        if o >= ln:
            head.append((sc, a, ln))
            o -= ln
            continue
        if o > 0:
            head.append((sc, a, o))
            tail.append((sc, (a + o) % cy.clen[sc], ln - o))
        else:
            tail.append((sc, a, ln))
        tail.extend(chain[i + 1 :])
        break
    return tuple(head), tuple(tail)


def _chain_rotate(cy: _Cycles, chain, o: int):
    head, tail = _chain_split(cy, chain, o)
    return tail + head


def _chain_vertices(cy: _Cycles, chain) -> list[int]:
    out = []
    for sc, a, ln in chain:
        out.extend(cy.at(sc, a + k) for k in range(ln))
    return out


@dataclass(frozen=True)
class _NPD:
    path: tuple
    plen: int
    first: int
    last: int
    made: tuple  # cycles created by rotations, as chains
    used: frozenset  # ids of cover cycles no longer intact
    depth: int


@dataclass
class Phase2Stats:
    eliminated: int = 0
    attempts: int = 0
    out_nodes: int = 0
    in_nodes: int = 0
    premature: int = 0
    max_w: int = 0


class _Eliminator:
    def __init__(self, cover: CycleCover, out_adj: list, in_adj: list, params: Parameters, budget: int, stats):
        self.cy = _Cycles(cover)
        self.cover = cover
        self.out_adj = out_adj
        self.in_adj = in_adj
        self.n0 = params.n0
        self.nu = params.nu
        self.i0 = params.i0
        self.w_cap = params.w_cap
        self.short_growth = params.short_growth
        self.inherit_w = params.inherit_w
        self.budget = budget
        self.stats = stats

    # -- locating a vertex inside an NPD
    def _locate(self, g: _NPD, w: int):
        c = self.cy.cid[w]
        if c not in g.used:
            return ("cover", c, 0)
        o = _chain_find(self.cy, g.path, w)
        if o >= 0:
            return ("path", -1, o)
        for k, chain in enumerate(g.made):
            o = _chain_find(self.cy, chain, w)
            if o >= 0:
                return ("made", k, o)
        raise AssertionError("vertex not covered by NPD")

    def _close(self, g: _NPD) -> np.ndarray:
        succ = self.cover.succ.copy()
        for chain in (*g.made, g.path):
            vs = _chain_vertices(self.cy, chain)
            for a, b in zip(vs, vs[1:] + vs[:1]):
                succ[a] = b
        return succ

    # -- one basic step of each phase; returns ("child", npd, x) / ("close",) / None
    def _out_step(self, g: _NPD, w: int):
        kind, c, o = self._locate(g, w)
        cy = self.cy
        if kind == "path":
            if o == 0:
                return ("close",) if g.plen >= self.n0 else None
            x = _chain_at(cy, g.path, o - 1)
            if g.plen - o < self.n0 or o < self.n0:
                return None
            head, tail = _chain_split(cy, g.path, o)
            return ("child", _NPD(head, o, g.first, x, g.made + (tail,), g.used, g.depth + 1), x)
        if kind == "cover":
            x = cy.pred(w)
            seg = ((c, cy.pos[w], cy.clen[c]),)
            plen = g.plen + cy.clen[c]
            if plen < self.n0 and not self.short_growth:
                return None
            return ("child", _NPD(g.path + seg, plen, g.first, x, g.made, g.used | {c}, g.depth + 1), x)
        chain = g.made[c]
        ln = _chain_len(chain)
        x = _chain_at(cy, chain, (o - 1) % ln)
        plen = g.plen + ln
        if plen < self.n0 and not self.short_growth:
            return None
        made = g.made[:c] + g.made[c + 1 :]
        return ("child", _NPD(g.path + _chain_rotate(cy, chain, o), plen, g.first, x, made, g.used, g.depth + 1), x)

    def _in_step(self, g: _NPD, w: int):
        kind, c, o = self._locate(g, w)
        cy = self.cy
        if kind == "path":
            if o == g.plen - 1:
                return ("close",) if g.plen >= self.n0 else None
            x = _chain_at(cy, g.path, o + 1)
            if o + 1 < self.n0 or g.plen - o - 1 < self.n0:
                return None
            head, tail = _chain_split(cy, g.path, o + 1)
            return ("child", _NPD(tail, g.plen - o - 1, x, g.last, g.made + (head,), g.used, g.depth + 1), x)
        if kind == "cover":
            x = cy.succ(w)
            seg = ((c, cy.pos[x], cy.clen[c]),)
            plen = g.plen + cy.clen[c]
            if plen < self.n0 and not self.short_growth:
                return None
            return ("child", _NPD(seg + g.path, plen, x, g.last, g.made, g.used | {c}, g.depth + 1), x)
        chain = g.made[c]
        ln = _chain_len(chain)
        x = _chain_at(cy, chain, (o + 1) % ln)
        plen = g.plen + ln
        if plen < self.n0 and not self.short_growth:
            return None
        made = g.made[:c] + g.made[c + 1 :]
        return ("child", _NPD(_chain_rotate(cy, chain, o + 1) + g.path, plen, x, g.last, made, g.used, g.depth + 1), x)

    def _closes(self, g: _NPD) -> bool:
        return g.plen >= self.n0 and g.first in self.out_adj[g.last]

    def eliminate(self, cycle_id: int, v0: int, u0: int):
        """Try to remove cover cycle ``cycle_id`` after deleting ``(v0, u0)``.

        Returns the new successor array or ``None``.
        """
        cy = self.cy
        ln = cy.clen[cycle_id]
        root = _NPD(((cycle_id, cy.pos[u0], ln),), ln, u0, v0, (), frozenset((cycle_id,)), 0)
        w_set: set[int] = set()
        stats = self.stats
        nodes = 0
        # Out-Phase: breadth-first over path ends
        level = [root]
        leaves = []
        for _ in range(self.i0):
            nxt = []
            stop = False
            for g in level:
                v = g.last
                for w in self.out_adj[v]:
                    if len(w_set) >= self.w_cap:
                        stop = True
                        break
                    nodes += 1
                    res = None
                    if w == g.first:
                        res = self._out_step(g, w)
                    elif w not in w_set:
                        res = self._out_step(g, w)
                        if res is not None and res[0] == "child" and res[2] in w_set:
                            res = None
                    w_set.add(v)
                    w_set.add(w)
                    if res is None:
                        continue
                    if res[0] == "close":
                        stats.premature += 1
                        stats.out_nodes += nodes
                        return self._close(g)
                    child = res[1]
                    if DEBUG:
                        self._check(child)
                    nxt.append(child)
                    if len(nxt) >= self.nu:
                        stop = True
                        break
                if stop:
                    break
            if nxt:
                level = nxt
                leaves = nxt
            if stop or not nxt:
                break
        stats.out_nodes += nodes
        stats.max_w = max(stats.max_w, len(w_set))
        if not leaves:
            return None
        for g in leaves:
            if self._closes(g):
                return self._close(g)
        # In-Phase: one tree per leaf, expanded round-robin
        frozen_w = frozenset(w_set) if self.inherit_w else frozenset()
        trees = [(deque([g]), set(), g.depth) for g in leaves]
        spent = 0
        while trees and spent < self.budget:
            alive = []
            for queue, own, base in trees:
                g = queue.popleft()
                u = g.first
                grow = g.depth - base < self.i0
                for w in self.in_adj[u]:
                    if len(frozen_w) + len(own) >= self.w_cap:
                        grow = False
                    if not grow:
                        break
                    if w in frozen_w or w in own:
                        continue
                    spent += 1
                    res = self._in_step(g, w)
                    own.add(u)
                    own.add(w)
                    if res is None:
                        continue
                    if res[0] == "close":
                        stats.in_nodes += spent
                        return self._close(g)
                    child, x = res[1], res[2]
                    if x in frozen_w or x in own:
                        continue
                    if DEBUG:
                        self._check(child)
                    if self._closes(child):
                        stats.in_nodes += spent
                        return self._close(child)
                    queue.append(child)
                if queue:
                    alive.append((queue, own, base))
            trees = alive
        stats.in_nodes += spent
        return None

    def _check(self, g: _NPD) -> None:
        """Debug invariant: path plus cycles cover every vertex exactly once."""
        seen = [0] * len(self.cy.order)
        for chain in (g.path, *g.made):
            for v in _chain_vertices(self.cy, chain):
                seen[v] += 1
        for c in range(len(self.cy.clen)):
            if c not in g.used:
                for p in range(self.cy.clen[c]):
                    seen[self.cy.at(c, p)] += 1
        assert all(s == 1 for s in seen), "NPD does not partition the vertices"
        assert _chain_len(g.path) == g.plen
        vs = _chain_vertices(self.cy, g.path)
        assert vs[0] == g.first and vs[-1] == g.last


def _adjacency_lists(n: int, tails: np.ndarray, heads: np.ndarray):
    out_ptr, out_adj = _csr(n, tails, heads)
    in_ptr, in_adj = _csr(n, heads, tails)
    oa = out_adj.tolist()
    ia = in_adj.tolist()
    op = out_ptr.tolist()
    ip = in_ptr.tolist()
    outs = [oa[op[v] : op[v + 1]] for v in range(n)]
    ins = [ia[ip[v] : ip[v + 1]] for v in range(n)]
    return outs, ins


def core_arcs(d: Digraph, idx: np.ndarray, core_a: np.ndarray, core_b: np.ndarray):
    """Arcs of class ``idx`` with tail in the A-core and head in the B-core."""
    t = d.tails[idx]
    h = d.heads[idx]
    keep = core_a[t] & core_b[h]
    return t[keep], h[keep]


def phase2_eliminate_small(
    cover: CycleCover,
    tails: np.ndarray,
    heads: np.ndarray,
    params: Parameters,
    rng: np.random.Generator,
    edge_retries: int | None = None,
    budget: int | None = None,
    stats: Phase2Stats | None = None,
) -> CycleCover:
    """Remove all cycles shorter than ``n0`` using the given arcs.

    Each small cycle is attacked by deleting one of its arcs, preferring arcs
    whose ends both lie in the core, and retrying with up to ``edge_retries``
    different arcs (default: every arc of the cycle) before giving up.
    """
    n = cover.n
    stats = stats if stats is not None else Phase2Stats()
    outs, ins = _adjacency_lists(n, tails, heads)
    out_sets = [set(o) for o in outs]
    has_out = np.zeros(n, dtype=bool)
    has_in = np.zeros(n, dtype=bool)
    has_out[tails] = True
    has_in[heads] = True
    if budget is None:
        avg = max(1.0, tails.size / max(n, 1))
        budget = max(20_000, int(40 * n / avg))
    current = cover
    while True:
        cycles = current.cycles
        small = [c for c in cycles if len(c) < params.n0]
        if not small:
            return current
        small.sort(key=lambda c: (len(c), min(c)))
        target = small[0]
        elim = _Eliminator(current, _OrderedSets(outs, out_sets), ins, params, budget, stats)
        cid = elim.cy.cid[target[0]]
        arcs = [(v, current.succ[v]) for v in target]
        arcs = [arcs[i] for i in rng.permutation(len(arcs))]
        arcs.sort(key=lambda e: not (has_out[e[0]] and has_in[e[1]]))
        new_succ = None
        for v0, u0 in arcs if edge_retries is None else arcs[: max(1, edge_retries)]:
            stats.attempts += 1
            new_succ = elim.eliminate(cid, int(v0), int(u0))
            if new_succ is not None:
                break
        if new_succ is None:
            raise Phase2Failure(f"could not absorb a cycle of length {len(target)}")
        nxt = CycleCover(new_succ)
        before = sum(1 for c in cycles if len(c) < params.n0)
        after = sum(1 for ln in nxt.cycle_lengths() if ln < params.n0)
        if after >= before:
            raise AssertionError("small-cycle count did not drop")
        stats.eliminated += 1
        current = nxt


class _OrderedSets:
    """Adjacency lists for iteration plus sets for membership, by vertex."""

    __slots__ = ("lists", "sets")

    def __init__(self, lists, sets):
        self.lists = lists
        self.sets = sets

    def __getitem__(self, v):
        return _Both(self.lists[v], self.sets[v])


class _Both:
    __slots__ = ("lst", "st")

    def __init__(self, lst, st):
        self.lst = lst
        self.st = st

    def __iter__(self):
        return iter(self.lst)

    def __contains__(self, x):
        return x in self.st


# Phase 3 -----------------------------------------------------------------------


def phase3_patch(cover: CycleCover, tails: np.ndarray, heads: np.ndarray, rng: np.random.Generator) -> list[int]:
    """Merge cycles pairwise until one Hamilton cycle remains.

    With ``L1`` a largest and ``L2`` a second largest cycle, look for
    ``(i, j)`` on ``L1`` and ``(k, l)`` on ``L2`` such that ``i -> l`` and
    ``k -> j`` are available arcs, and replace ``L1, L2`` by
    ``L1 + L2 + (i, l) + (k, j) - (i, j) - (k, l)``.
    """
    n = cover.n
    succ = cover.succ.copy()
    codes = np.unique(tails * n + heads)
    while True:
        cyc = CycleCover(succ)
        cycles = cyc.cycles
        if len(cycles) == 1:
            return _rotate_to_zero(cycles[0])
        order = sorted(range(len(cycles)), key=lambda k: (-len(cycles[k]), min(cycles[k])))
        l1, l2 = cycles[order[0]], cycles[order[1]]
        label = np.full(n, -1, dtype=np.int64)
        label[l1] = 1
        label[l2] = 2
        pred = np.empty(n, dtype=np.int64)
        pred[succ] = np.arange(n)
        # candidate (i, l): arc from L1 to L2; then j = succ(i), k = pred(l)
        mask = (label[tails] == 1) & (label[heads] == 2)
        i = tails[mask]
        l = heads[mask]
        j = succ[i]
        k = pred[l]
        want = k * n + j
        pos = np.searchsorted(codes, want)
        pos[pos >= codes.size] = 0
        ok = np.flatnonzero(codes[pos] == want)
        if ok.size == 0:
            raise Phase3Failure(f"no patching pair between cycles of length {len(l1)} and {len(l2)}")
        pick = ok[int(rng.integers(ok.size))]
        ii, ll, jj, kk = int(i[pick]), int(l[pick]), int(j[pick]), int(k[pick])
        succ[ii] = ll
        succ[kk] = jj


def _rotate_to_zero(cycle: list[int]) -> list[int]:
    p = cycle.index(min(cycle))
    return cycle[p:] + cycle[:p]


# orchestration -----------------------------------------------------------------


@dataclass(frozen=True)
class Policy:
    max_restarts: int = 3
    shared_fallback: bool = True
    exact_fallback: bool = False
    exact_limit: int = 200
    exact_budget: int = 5 * 10**7
    edge_retries: int | None = None
    check_obstruction: bool = True


@dataclass
class HamiltonResult:
    """``status`` is one of ``found``, ``obstruction_found``, ``exact_negative``
    or ``engine_gave_up``."""

    status: str
    cycle: list[int] | None
    trace: dict

    @property
    def found(self) -> bool:
        return self.status == "found"

    def to_dict(self) -> dict:
        return {"found": self.found, "status": self.status, "cycle": self.cycle, "trace": self.trace}


def _attempt(d: Digraph, params: Parameters, rng, shared: bool, policy: Policy, record: dict) -> list[int]:
    order = rng.permutation(d.m)
    part = phase0_partition(d, params, rng, order=order, shared=shared)
    record["partition"] = part.sizes()
    record["phase"] = 1
    n = d.n
    allowed = _codes(n, d.tails[part.e1], d.heads[part.e1])
    cover = phase1_cycle_cover(d.tails[part.e1], d.heads[part.e1], n, rng)
    _assert_arcs(cover.succ, allowed, n, 1)
    record["phase1_cycles"] = len(cover.cycles)
    record["phase1_small"] = sum(1 for ln in cover.cycle_lengths() if ln < params.n0)
    record["phase"] = 2
    t2, h2 = core_arcs(d, part.e2, part.k2_a, part.k2_b)
    stats = Phase2Stats()
    try:
        cover = phase2_eliminate_small(cover, t2, h2, params, rng, edge_retries=policy.edge_retries, stats=stats)
    finally:
        record["phase2"] = stats.__dict__.copy()
    allowed = np.union1d(allowed, _codes(n, t2, h2))
    _assert_arcs(cover.succ, allowed, n, 2)
    record["phase2_cycles"] = len(cover.cycles)
    record["phase"] = 3
    t3, h3 = core_arcs(d, part.e3, part.k3_a, part.k3_b)
    cycle = phase3_patch(cover, t3, h3, rng)
    succ = np.empty(n, dtype=np.int64)
    succ[cycle] = np.roll(cycle, -1)
    _assert_arcs(succ, np.union1d(allowed, _codes(n, t3, h3)), n, 3)
    record["phase"] = "done"
    return cycle


def _codes(n: int, tails: np.ndarray, heads: np.ndarray) -> np.ndarray:
    return np.unique(tails * n + heads)


def _assert_arcs(succ: np.ndarray, allowed: np.ndarray, n: int, phase: int) -> None:
    """Every arc ``v -> succ[v]`` must come from the classes of phases ``<= phase``."""
    codes = np.arange(n) * n + succ
    idx = np.minimum(np.searchsorted(allowed, codes), allowed.size - 1)
    if allowed.size == 0 or (allowed[idx] != codes).any():
        raise EngineFailure(f"phase {phase} used an arc outside its class")


def find_hamilton(
    d: Digraph,
    params: Parameters | None = None,
    rng: np.random.Generator | None = None,
    policy: Policy | None = None,
) -> HamiltonResult:
    """Run Phases 0-3, restarting on failure, and report a trace.

    The first attempt uses the disjoint split of Phase 0; restarts use the
    shared arc set when ``policy.shared_fallback`` is on. A digraph with a
    degree-one obstruction is reported as ``obstruction_found`` without
    running the phases.
    """
    from .oracle import detect_obstruction, hamilton_cycle_exact

    params = params or Parameters.desk(d.n, d.m)
    rng = rng if rng is not None else np.random.default_rng()
    policy = policy or Policy()
    t0 = time.perf_counter()
    trace: dict = {"n": d.n, "m": d.m, "profile": params.profile, "attempts": [], "restarts": 0}

    def finish(status, cycle=None, how=None):
        trace["status"] = status
        trace["method"] = how
        trace["seconds"] = round(time.perf_counter() - t0, 6)
        if cycle is not None and not verify_hamilton_cycle(d, cycle):
            raise EngineFailure("constructed cycle failed verification")
        return HamiltonResult(status, cycle, trace)

    if d.n < 2 or d.min_degree() < 1:
        return finish("exact_negative", how="degree")
    if policy.check_obstruction:
        obs = detect_obstruction(d)
        trace["obstructions"] = obs
        if obs > 0:
            return finish("obstruction_found", how="obstruction")
    shared = False
    for attempt in range(policy.max_restarts + 1):
        record = {"attempt": attempt, "shared": shared, "phase": 0}
        trace["attempts"].append(record)
        trace["restarts"] = attempt
        try:
            cycle = _attempt(d, params, rng, shared, policy, record)
        except PartitionDegenerate as exc:
            record["failure"] = f"PartitionDegenerate: {exc}"
            if policy.shared_fallback and not shared:
                shared = True
                record2 = {"attempt": attempt, "shared": True, "phase": 0}
                trace["attempts"].append(record2)
                try:
                    cycle = _attempt(d, params, rng, True, policy, record2)
                except EngineFailure as exc2:
                    record2["failure"] = f"{type(exc2).__name__}: {exc2}"
                    continue
                return finish("found", cycle, "engine")
            continue
        except EngineFailure as exc:
            record["failure"] = f"{type(exc).__name__}: {exc}"
            if policy.shared_fallback:
                shared = True
            continue
        return finish("found", cycle, "engine")
    if policy.exact_fallback and d.n <= policy.exact_limit:
        try:
            cycle = hamilton_cycle_exact(d, policy.exact_budget)
        except BudgetExhausted as exc:
            trace["exact"] = f"BudgetExhausted: {exc}"
            return finish("engine_gave_up")
        if cycle is None:
            return finish("exact_negative", how="exact")
        return finish("found", _rotate_to_zero(cycle), "exact")
    return finish("engine_gave_up")
