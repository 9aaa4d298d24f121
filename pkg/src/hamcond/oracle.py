"""Exact ground truth at small scale.

Hamiltonicity by subset dynamic programming (``n <= 24``) or, above that,
by arc reduction, a short pruned search and a cycle-cover integer program
with subtour cuts; the degree-one obstruction
detector; exhaustive enumeration of min-degree-one digraphs; exact and
asymptotic counts of edge sequences and digraphs.
"""
from __future__ import annotations

import itertools
import math
from collections import deque
from dataclasses import asdict, dataclass
from fractions import Fraction
from typing import Iterator

import numpy as np
from scipy import sparse
from scipy.optimize import Bounds, LinearConstraint, milp
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components
from scipy.special import gammaln

from .errors import BudgetExhausted, DomainError, TooLarge
from .graph import CycleCover, Digraph
from .kernels import backtrack_kernel, subset_dp_kernel
from .sampler import local_clt_probability, solve_z

DP_LIMIT = 24
DEFAULT_BUDGET = 5 * 10**7
SEARCH_NODES = 2 * 10**5
MAX_CUT_ROUNDS = 500
ENUMERATION_LIMIT = 10**7


# Hamiltonicity ------------------------------------------------------------------


def _strongly_connected(d: Digraph) -> bool:
    if d.n <= 1:
        return True
    mat = csr_matrix((np.ones(d.m), (d.tails, d.heads)), shape=(d.n, d.n))
    k, _ = connected_components(mat, directed=True, connection="strong")
    return k == 1


def _forced_reduction(d: Digraph):
    """Delete arcs that cannot lie on any Hamilton cycle.

    If ``v`` has a single in-neighbour ``u`` then ``u -> v`` is forced, so
    every other out-arc of ``u`` goes, and (for ``n > 2``) so does ``v -> u``.
    Symmetrically for out-degree one. Returns ``(succ_sets, pred_sets)`` or
    ``None`` once some vertex loses all in- or out-arcs.
    """
    n = d.n
    out = [set(d.out_neighbors(v).tolist()) for v in range(n)]
    inn = [set(d.in_neighbors(v).tolist()) for v in range(n)]
    queue = deque(range(n))
    queued = [True] * n

    def drop(u, v):
        out[u].discard(v)
        inn[v].discard(u)
        for w in (u, v):
            if not queued[w]:
                queued[w] = True
                queue.append(w)

    while queue:
        v = queue.popleft()
        queued[v] = False
        if not out[v] or not inn[v]:
            return None
        if len(inn[v]) == 1:
            (u,) = inn[v]
            for y in list(out[u]):
                if y != v:
                    drop(u, y)
            if n > 2 and u in out[v]:
                drop(v, u)
        if len(out[v]) == 1:
            (w,) = out[v]
            for x in list(inn[w]):
                if x != v:
                    drop(x, w)
            if n > 2 and w in inn[v]:
                drop(w, v)
        if not out[v] or not inn[v]:
            return None
    return out, inn


def _sets_to_csr(sets):
    ptr = np.zeros(len(sets) + 1, dtype=np.int64)
    np.cumsum([len(s) for s in sets], out=ptr[1:])
    adj = np.fromiter((x for s in sets for x in sorted(s)), dtype=np.int64, count=int(ptr[-1]))
    return ptr, adj


def hamilton_cycle_exact(
    d: Digraph,
    budget: int = DEFAULT_BUDGET,
    search_nodes: int = SEARCH_NODES,
    max_cuts: int = MAX_CUT_ROUNDS,
) -> list[int] | None:
    """A Hamilton cycle of ``d``, or ``None`` if there is none.

    ``n <= 24`` uses subset dynamic programming. Larger graphs first lose
    every arc forced out by a degree-one neighbour, then get a short
    depth-first search (``search_nodes`` nodes); if that is inconclusive, a
    cycle-cover integer program is solved repeatedly, each round forbidding
    the subtours of the previous solution. Infeasibility of the program is a
    proof that no Hamilton cycle exists. :class:`BudgetExhausted` is raised
    only if ``max_cuts`` rounds (or ``budget`` search nodes when the integer
    stage is disabled with ``max_cuts=0``) do not settle the question.
    """
    n = d.n
    if n < 2:
        return None
    if d.min_degree() < 1 or not _strongly_connected(d):
        return None
    if n <= DP_LIMIT:
        bits = np.zeros(n, dtype=np.int64)
        for u, v in zip(d.tails.tolist(), d.heads.tolist()):
            bits[u] |= 1 << v
        cyc = subset_dp_kernel(n, bits)
        return cyc.tolist() if cyc.size else None
    reduced = _forced_reduction(d)
    if reduced is None:
        return None
    out, inn = reduced
    optr, oadj = _sets_to_csr(out)
    iptr, iadj = _sets_to_csr(inn)
    nodes = budget if max_cuts <= 0 else min(budget, search_nodes)
    status, cyc = backtrack_kernel(n, optr, oadj, iptr, iadj, int(nodes))
    if status == 1:
        return cyc.tolist()
    if status == 0:
        return None
    if max_cuts <= 0:
        raise BudgetExhausted(f"search exceeded {nodes} nodes at n={n}")
    return _cutting_planes(n, out, max_cuts)


def _cutting_planes(n: int, out, max_cuts: int) -> list[int] | None:
    tails = np.array([u for u in range(n) for _ in out[u]], dtype=np.int64)
    heads = np.array([v for u in range(n) for v in sorted(out[u])], dtype=np.int64)
    m = tails.size
    cols = np.arange(m)
    # each vertex: one arc out, one arc in
    deg_rows = [
        sparse.csr_matrix((np.ones(m), (tails, cols)), shape=(n, m)),
        sparse.csr_matrix((np.ones(m), (heads, cols)), shape=(n, m)),
    ]
    constraints = [LinearConstraint(sparse.vstack(deg_rows).tocsr(), 1, 1)]
    cut_rows = []
    for _ in range(max_cuts):
        cons = list(constraints)
        if cut_rows:
            cons.append(LinearConstraint(sparse.vstack(cut_rows).tocsr(), 1, np.inf))
        res = milp(np.zeros(m), constraints=cons, integrality=np.ones(m), bounds=Bounds(0, 1))
        if res.status == 2:  # infeasible
            return None
        if res.x is None:
            raise BudgetExhausted(f"integer program ended with status {res.status}: {res.message}")
        chosen = np.flatnonzero(res.x > 0.5)
        succ = np.empty(n, dtype=np.int64)
        succ[tails[chosen]] = heads[chosen]
        cycles = CycleCover(succ).cycles
        if len(cycles) == 1:
            return cycles[0]
        for cyc in cycles:
            inside = np.zeros(n, dtype=bool)
            inside[cyc] = True
            leaving = inside[tails] & ~inside[heads]
            cut_rows.append(sparse.csr_matrix(leaving.astype(float)))
    raise BudgetExhausted(f"no answer after {max_cuts} rounds of subtour cuts at n={n}")


def exact_hamiltonicity(d: Digraph, budget: int = DEFAULT_BUDGET) -> bool:
    return hamilton_cycle_exact(d, budget) is not None


def brute_force_hamiltonian(d: Digraph) -> bool:
    """Permutation scan; a slow independent reference for tiny ``n``."""
    n = d.n
    if n < 2:
        return False
    edges = d.edge_set()
    for rest in itertools.permutations(range(1, n)):
        order = (0, *rest)
        if all((order[i], order[(i + 1) % n]) in edges for i in range(n)):
            return True
    return False


def detect_obstruction(d: Digraph) -> int:
    """Number of degree-one pairs sharing their only in- (or out-) neighbour."""
    total = 0
    for deg, ptr, adj in ((d.indeg, d.in_ptr, d.in_adj), (d.outdeg, d.out_ptr, d.out_adj)):
        ones = np.flatnonzero(deg == 1)
        if ones.size < 2:
            continue
        partners = adj[ptr[ones]]
        counts = np.bincount(partners, minlength=d.n)
        total += int((counts * (counts - 1) // 2).sum())
    return total


# enumeration -----------------------------------------------------------------


def enumerate_digraphs(n: int, m: int) -> Iterator[Digraph]:
    """Every digraph on ``0..n-1`` with ``m`` arcs and min in/out-degree one.

    Edge sets come out in lexicographic order of their sorted arc lists.
    """
    pairs = [(u, v) for u in range(n) for v in range(n) if u != v]
    if math.comb(len(pairs), m) > ENUMERATION_LIMIT:
        raise TooLarge(f"C({len(pairs)}, {m}) subsets exceed the enumeration limit")
    for subset in itertools.combinations(pairs, m):
        outdeg = [0] * n
        indeg = [0] * n
        for u, v in subset:
            outdeg[u] += 1
            indeg[v] += 1
        if min(outdeg, default=0) >= 1 and min(indeg, default=0) >= 1:
            arr = np.array(subset, dtype=np.int64).reshape(-1, 2)
            yield Digraph.from_arrays(n, arr[:, 0], arr[:, 1])


def digraph_key(d: Digraph) -> tuple:
    return tuple(sorted(d.edge_set()))


# exact counts ------------------------------------------------------------------


def surjections(m: int, n: int) -> int:
    """Number of maps from an ``m``-set onto an ``n``-set."""
    if m < 0 or n < 0:
        raise DomainError("m and n must be non-negative")
    return sum((-1) ** k * math.comb(n, k) * (n - k) ** m for k in range(n + 1))


def exact_omega1(n: int, m: int) -> int:
    """Sequences in ``[n]^{2m}`` with every in- and out-degree at least one."""
    return surjections(m, n) ** 2


def _log_comb(a, b):
    return gammaln(a + 1) - gammaln(b + 1) - gammaln(a - b + 1)


def count_min_degree_digraphs(n: int, m: int, rel_tol: float = 0.0) -> int:
    """Number of simple digraphs with ``m`` arcs and min in/out-degree one.

    Inclusion-exclusion over a set ``S`` of vertices forced to have no out-arc
    and a set ``T`` forced to have no in-arc (``r = |S & T|``). With
    ``rel_tol = 0`` every term is kept and the integer is exact. A positive
    ``rel_tol`` skips ``(s, t)`` blocks whose combined magnitude bound is
    below ``rel_tol`` times the result; the answer is then within that
    relative error of the exact value.
    """
    if n < 1 or m < 0:
        raise DomainError("need n >= 1 and m >= 0")
    if m > n * (n - 1):
        return 0
    s_grid, t_grid = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="ij")
    cells = (n - s_grid) * (n - t_grid)
    with np.errstate(invalid="ignore"):
        bound = _log_comb(n, s_grid) + _log_comb(n, t_grid) + np.where(cells >= m, _log_comb(cells, m), -np.inf)
    if rel_tol > 0 and m > n:
        # anchor the cut on an estimate of the answer, then certify: the
        # skipped blocks' bounds must sum to less than rel_tol * answer
        finite = np.isfinite(bound)
        level = _log_poisson_estimate(n, m) + math.log(rel_tol) - 2 * math.log(n + 1)
        while True:
            keep = finite & (bound >= level)
            total = _ie_sum(n, m, keep)
            skipped = bound[finite & ~keep]
            if total > 0:
                if not skipped.size:
                    return total
                top = skipped.max()
                log_skipped = top + math.log(np.exp(skipped - top).sum())
                if log_skipped - _log_big(total) < math.log(rel_tol):
                    return total
            level -= 20
    keep = np.isfinite(bound)
    return _ie_sum(n, m, keep)


def _log_poisson_estimate(n: int, m: int) -> float:
    model = solve_z(m / n)
    z = model.z
    return (
        math.lgamma(m + 1)
        + 2 * n * math.log(math.expm1(z))
        - 2 * m * math.log(z)
        - model.rho
        - z * z / 2
        - math.log(2 * math.pi * n * model.sigma2)
    )


def _ie_sum(n: int, m: int, keep: np.ndarray) -> int:
    total = 0
    for s in range(n + 1):
        row = np.flatnonzero(keep[s])
        if not row.size:
            continue
        cs = math.comb(n, s)
        for t in row.tolist():
            # sum over r of C(s, r) C(n-s, t-r) C(K - r, m) with
            # K = (n-s)(n-t) - (n-s-t); r runs over max(0, s+t-n)..min(s, t)
            lo = max(0, s + t - n)
            hi = min(s, t)
            top = (n - s) * (n - t) - (n - s - t) - lo
            if top < m:
                continue
            coef = math.comb(s, lo) * math.comb(n - s, t - lo)
            binom = math.comb(top, m)
            inner = 0
            r = lo
            while True:
                inner += coef * binom
                if r == hi:
                    break
                # advance r: C(s,r+1)/C(s,r) = (s-r)/(r+1); C(n-s,t-r-1)/C(n-s,t-r) = (t-r)/(n-s-t+r+1)
                coef = coef * (s - r) * (t - r) // ((r + 1) * (n - s - t + r + 1))
                if top - 1 < m:
                    break
                binom = binom * (top - m) // top
                top -= 1
                r += 1
            total += (-1) ** (s + t) * cs * inner
    return total


# asymptotics -------------------------------------------------------------------


@dataclass
class CountReport:
    """Exact versus asymptotic counts of min-degree-one digraphs.

    Three asymptotic forms share the factor ``m! (e^z-1)^{2n} z^{-2m}``:

    * ``printed``: times ``exp(-z(z+1)) / (2 pi sigma)``;
    * ``reconciled``: times ``exp(-z(z+1)) / (2 pi n sigma^2)``, the
      denominator that the squared local limit for ``|Omega_1|`` produces;
    * ``poisson``: times ``exp(-rho - z^2/2) / (2 pi n sigma^2)``, where the
      exponent is the chance that a pairing has no loop (about Poisson with
      mean ``rho``) and no repeated arc (about Poisson with mean ``z^2/2``).

    Counts are kept as natural logs to avoid overflow, plus the exact integers
    when they were computed.
    """

    n: int
    m: int
    z: float
    sigma: float
    log_asymptotic: float
    log_asymptotic_printed: float
    log_asymptotic_poisson: float
    exact_count: int | None = None
    log_exact: float | None = None
    ratio: float | None = None
    ratio_printed: float | None = None
    ratio_poisson: float | None = None
    exact_method: str | None = None
    omega1_exact: int | None = None
    log_omega1_asymptotic: float | None = None
    omega1_ratio: float | None = None

    @property
    def asymptotic_count(self) -> float:
        return math.exp(self.log_asymptotic)

    def to_dict(self) -> dict:
        out = asdict(self)
        for key in ("exact_count", "omega1_exact"):
            if out[key] is not None and out[key].bit_length() > 60:
                out[key] = str(out[key])
        return out


def log_omega1_asymptotic(n: int, m: int) -> float:
    """``log (m! (e^z-1)^n z^{-m} / (sigma sqrt(2 pi n)))^2``."""
    model = solve_z(m / n)
    z = model.z
    one = math.lgamma(m + 1) + n * math.log(math.expm1(z)) - m * math.log(z)
    one -= math.log(model.sigma * math.sqrt(2 * math.pi * n))
    return 2 * one


def log_omega1_exact_clt(n: int, m: int) -> float:
    """Same factorisation but with the exact local probability in place of the normal one."""
    model = solve_z(m / n)
    z = model.z
    p = local_clt_probability(n, m, model)
    one = math.lgamma(m + 1) + n * math.log(math.expm1(z)) - m * math.log(z) + math.log(p)
    return 2 * one


def _log_big(x: int) -> float:
    if x <= 0:
        raise ValueError("log of non-positive integer")
    shift = max(0, x.bit_length() - 900)
    return math.log(x >> shift) + shift * math.log(2)


def count_asymptotic(
    n: int,
    m: int,
    exact: bool | None = None,
    rel_tol: float = 0.0,
    omega1: bool = True,
) -> CountReport:
    """Asymptotic digraph count, optionally against the exact count.

    ``exact=None`` computes the exact count only when enumeration would be
    feasible; ``exact=True`` always runs inclusion-exclusion (optionally
    truncated at ``rel_tol``).
    """
    if m <= n:
        raise DomainError("need m > n")
    model = solve_z(m / n)
    z, sigma2 = model.z, model.sigma2
    base = math.lgamma(m + 1) + 2 * n * math.log(math.expm1(z)) - 2 * m * math.log(z)
    log_rec = base - z * (z + 1) - math.log(2 * math.pi * n * sigma2)
    log_printed = base - z * (z + 1) - math.log(2 * math.pi * model.sigma)
    log_poisson = base - model.rho - z * z / 2 - math.log(2 * math.pi * n * sigma2)
    report = CountReport(n, m, z, model.sigma, log_rec, log_printed, log_poisson)
    if exact is None:
        exact = math.comb(n * (n - 1), m) <= ENUMERATION_LIMIT
    if exact:
        value = count_min_degree_digraphs(n, m, rel_tol)
        report.exact_count = value
        report.exact_method = "inclusion-exclusion" + (f" (rel_tol={rel_tol:g})" if rel_tol else "")
        if value > 0:
            report.log_exact = _log_big(value)
            report.ratio = math.exp(report.log_exact - log_rec)
            report.ratio_printed = math.exp(report.log_exact - log_printed)
            report.ratio_poisson = math.exp(report.log_exact - log_poisson)
    if omega1 and m <= 10**4:
        om = exact_omega1(n, m)
        report.omega1_exact = om
        report.log_omega1_asymptotic = log_omega1_asymptotic(n, m)
        report.omega1_ratio = math.exp(_log_big(om) - report.log_omega1_asymptotic)
    return report


def exact_ratio(numerator: int, denominator: int) -> Fraction:
    return Fraction(numerator, denominator)
