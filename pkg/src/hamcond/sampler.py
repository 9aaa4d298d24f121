"""Random digraphs with ``m`` arcs and minimum in/out-degree at least one.

Pipeline: solve for the truncated-Poisson tilt ``z`` with mean ``m/n``,
draw in- and out-degree vectors conditioned on summing to ``m``, pair them
by two independent uniform permutations, then remove loops and repeated
arcs with P-switches (parallel pair -> two loops) and L-switches (loop plus
arc ``(a, b)`` -> ``(a, x), (x, b)``).
"""
from __future__ import annotations

import bisect
import json
import math
from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np
from scipy.special import gammaln

from .errors import (
    AttemptCapExceeded,
    CapExceeded,
    DomainError,
    NonConvergence,
    NotLoop,
    NotParallelPair,
    ResampleRequired,
    SanitizeStalled,
    TargetIsLoop,
)
from .graph import Digraph, EdgeSequence, build_digraph
from .params import Parameters

PMF_TAIL = 1e-17


def mean_of_tilt(z: float) -> float:
    """``z e^z / (e^z - 1)``, continuous at 0."""
    if z == 0.0:
        return 1.0
    return z / -math.expm1(-z)


@dataclass(frozen=True)
class TruncatedPoissonModel:
    rho: float
    z: float
    sigma2: float

    @property
    def sigma(self) -> float:
        return math.sqrt(self.sigma2)


def variance_of_tilt(z: float) -> float:
    # f(z) * (1 - z / (e^z - 1)), written to avoid overflow
    return mean_of_tilt(z) * (1.0 - z * math.exp(-z) / -math.expm1(-z))


def solve_z(rho: float, tol: float = 1e-12, max_iter: int = 500) -> TruncatedPoissonModel:
    """Bisection for ``z e^z/(e^z-1) = rho`` on ``[max(rho-1, tol), rho]``."""
    if not rho > 1.0:
        raise DomainError(f"rho must exceed 1, got {rho}")
    lo, hi = max(rho - 1.0, tol), rho
    z = 0.5 * (lo + hi)
    for _ in range(max_iter):
        z = 0.5 * (lo + hi)
        fz = mean_of_tilt(z)
        if abs(fz - rho) <= tol or hi - lo <= 1e-15 * max(1.0, hi):
            break
        if fz < rho:
            lo = z
        else:
            hi = z
    else:
        raise NonConvergence(f"bisection did not reach tol={tol} for rho={rho}")
    return TruncatedPoissonModel(rho=rho, z=z, sigma2=variance_of_tilt(z))


def trunc_poisson_logpmf(k, z: float):
    k = np.asarray(k, dtype=np.float64)
    return k * math.log(z) - gammaln(k + 1.0) - math.log(math.expm1(z))


def trunc_poisson_pmf(k, z: float):
    """``z^k / (k! (e^z - 1))`` for ``k >= 1``, evaluated in log space."""
    karr = np.asarray(k)
    if np.any(karr < 1):
        raise DomainError("truncated Poisson support starts at k = 1")
    out = np.exp(trunc_poisson_logpmf(karr, z))
    return float(out) if out.ndim == 0 else out


def pmf_support_max(z: float, tail: float = PMF_TAIL) -> int:
    """Smallest ``K`` with ``P(Z > K) < tail``."""
    k = max(1, int(z) + 1)
    while True:
        ks = np.arange(k + 1, k + 200)
        if trunc_poisson_pmf(ks, z).sum() < tail:
            return k
        k += 10


def sample_truncated_poisson(model: TruncatedPoissonModel, rng: np.random.Generator, size=None):
    """Ordinary Poisson(z) draws with zeros rejected."""
    if size is None:
        while True:
            v = int(rng.poisson(model.z))
            if v:
                return v
    out = rng.poisson(model.z, size=size).astype(np.int64)
    bad = np.flatnonzero(out == 0)
    while bad.size:
        redraw = rng.poisson(model.z, size=bad.size)
        out[bad] = redraw
        bad = bad[redraw == 0]
    return out


@dataclass(frozen=True, eq=False)
class DegreeSequence:
    out: np.ndarray
    inn: np.ndarray

    @property
    def n(self) -> int:
        return int(self.out.size)

    @property
    def m(self) -> int:
        return int(self.out.sum())


@lru_cache(maxsize=32)
def _block_tables(z: float, k: int, cap: int) -> tuple[np.ndarray, np.ndarray]:
    """Distributions of sums of ``j = 0..k`` truncated-Poisson draws, up to ``cap``."""
    vmax = pmf_support_max(z)
    p = np.zeros(vmax + 1)
    p[1:] = trunc_poisson_pmf(np.arange(1, vmax + 1), z)
    length = min(cap, k * vmax) + 1
    tables = np.zeros((k + 1, length))
    tables[0, 0] = 1.0
    for j in range(1, k + 1):
        tables[j] = np.convolve(tables[j - 1], p)[:length]
    return tables, p


_CDF_CACHE: dict = {}


def _conditional_cdf(tables, p, r: int, t: int) -> tuple[int, list]:
    """CDF of the first of ``r`` values given their sum ``t`` (cached per table)."""
    key = (id(tables), r, t)
    hit = _CDF_CACHE.get(key)
    if hit is None:
        hi = min(p.size - 1, t - (r - 1))
        w = p[1 : hi + 1] * tables[r - 1, t - np.arange(1, hi + 1)]
        cdf = np.cumsum(w)
        hit = (hi, (cdf / cdf[-1]).tolist())
        if len(_CDF_CACHE) > 200_000:
            _CDF_CACHE.clear()
        _CDF_CACHE[key] = hit
    return hit


def _conditioned_block(t: int, k: int, tables, p, rng) -> np.ndarray:
    """Exact draw of ``k`` i.i.d. values given their sum ``t``."""
    out = np.empty(k, dtype=np.int64)
    us = rng.random(k)
    for i in range(k):
        r = k - i
        if r == 1:
            out[i] = t
            break
        hi, cdf = _conditional_cdf(tables, p, r, t)
        v = min(bisect.bisect_right(cdf, us[i]), hi - 1) + 1
        out[i] = v
        t -= v
    return out


def _conditioned_vector(n, m, model, rng, attempt_cap, method, block):
    if method == "rejection":
        for _ in range(attempt_cap):
            v = sample_truncated_poisson(model, rng, n)
            if int(v.sum()) == m:
                return v
        raise AttemptCapExceeded(f"no vector summing to {m} in {attempt_cap} attempts")
    if method != "split":
        raise ValueError(f"unknown method {method!r}")
    k = min(n, block)
    tables, p = _block_tables(model.z, k, m)
    head = n - k
    if head == 0:
        if m >= tables.shape[1] or tables[k, m] == 0.0:
            raise AttemptCapExceeded(f"sum {m} unreachable with {n} parts")
        return _conditioned_block(m, k, tables, p, rng)
    row = tables[k]
    row_max = row.max()
    cdf = np.cumsum(p)
    cdf /= cdf[-1]
    for _ in range(attempt_cap):
        a = np.searchsorted(cdf, rng.random(head), side="right").clip(1, p.size - 1)
        t = m - int(a.sum())
        u = rng.random()
        if t < k or t >= row.size:
            continue
        if u * row_max < row[t]:
            return np.concatenate([a, _conditioned_block(t, k, tables, p, rng)])
    raise AttemptCapExceeded(f"no accepted draw in {attempt_cap} attempts")


def sample_degree_sequence(
    n: int,
    m: int,
    model: TruncatedPoissonModel,
    rng: np.random.Generator,
    attempt_cap: int = 10**6,
    method: str = "split",
    block: int = 256,
) -> DegreeSequence:
    """I.i.d. truncated-Poisson out- and in-degree vectors conditioned on sum ``m``.

    ``method="rejection"`` redraws whole vectors until the sum is right.
    ``method="split"`` (default) draws the first ``n - block`` entries freely,
    accepts them with probability proportional to the chance that the last
    ``block`` entries can make up the remainder, then samples those entries
    exactly given their sum. Both produce the same conditional law; the split
    version accepts with probability about ``sqrt(block / n)`` instead of
    ``1 / (sigma sqrt(2 pi n))``.
    """
    if m < n:
        raise DomainError("need m >= n for positive degrees")
    if m == n:
        ones = np.ones(n, dtype=np.int64)
        return DegreeSequence(ones, ones.copy())
    out = _conditioned_vector(n, m, model, rng, attempt_cap, method, block)
    inn = _conditioned_vector(n, m, model, rng, attempt_cap, method, block)
    return DegreeSequence(out, inn)


def assemble_sequence(deg: DegreeSequence, rng: np.random.Generator) -> EdgeSequence:
    verts = np.arange(deg.n)
    tails = rng.permutation(np.repeat(verts, deg.out))
    heads = rng.permutation(np.repeat(verts, deg.inn))
    return EdgeSequence(deg.n, tails, heads)


# switchings ------------------------------------------------------------------


def p_switch(seq: EdgeSequence, i: int, j: int, check: bool = True) -> EdgeSequence:
    """Turn two copies of ``(x, y)`` at positions ``i, j`` into loops ``(x, x), (y, y)``.

    With ``check=False`` the substitution is applied blindly; applying it to
    the resulting loop pair restores the parallel pair.
    """
    t, h = seq.tails, seq.heads
    if check and (i == j or t[i] != t[j] or h[i] != h[j] or t[i] == h[i]):
        raise NotParallelPair(f"edges {i} and {j} are not a parallel pair")
    tails, heads = t.copy(), h.copy()
    heads[i] = t[j]
    tails[j] = h[i]
    return EdgeSequence(seq.n, tails, heads)


def l_switch(seq: EdgeSequence, i: int, j: int) -> EdgeSequence:
    """Route loop ``i = (x, x)`` through arc ``j = (a, b)``: gives ``(a, x), (x, b)``."""
    t, h = seq.tails, seq.heads
    if t[i] != h[i]:
        raise NotLoop(f"edge {i} is not a loop")
    if t[j] == h[j]:
        raise TargetIsLoop(f"edge {j} is a loop")
    tails = t.copy()
    tails[i] = t[j]
    tails[j] = t[i]
    return EdgeSequence(seq.n, tails, seq.heads.copy())


def _multiplicities(codes: np.ndarray) -> np.ndarray:
    """How often each entry's value occurs in ``codes``."""
    srt = np.sort(codes)
    dup_vals = np.unique(srt[1:][srt[1:] == srt[:-1]])
    out = np.ones(codes.size, dtype=np.int64)
    if dup_vals.size:
        hit = np.flatnonzero(np.isin(codes, dup_vals))
        vals, inverse, counts = np.unique(codes[hit], return_inverse=True, return_counts=True)
        out[hit] = counts[inverse]
    return out


class _ArcCounter:
    """Multiset of arc codes: a sorted base array plus a sparse delta."""

    def __init__(self, codes: np.ndarray):
        self.base = np.sort(codes)
        self.delta: dict[int, int] = {}

    def count(self, code: int) -> int:
        lo = np.searchsorted(self.base, code, side="left")
        hi = np.searchsorted(self.base, code, side="right")
        return int(hi - lo) + self.delta.get(code, 0)

    def add(self, code: int, k: int) -> None:
        self.delta[code] = self.delta.get(code, 0) + k


def _admissible(x: int, a: int, b: int, counter: _ArcCounter, n: int) -> bool:
    if a == b or a == x or b == x:
        return False
    return counter.count(a * n + x) == 0 and counter.count(x * n + b) == 0


def _any_valid_l_switch(tails, heads, loops, counter, n) -> bool:
    for i in loops:
        x = int(tails[i])
        for a, b in zip(tails.tolist(), heads.tolist()):
            if _admissible(x, a, b, counter, n):
                return True
    return False


@dataclass
class SanitizeResult:
    seq: EdgeSequence
    p_switches: int
    l_switches: int
    rejected: int

    @property
    def switch_count(self) -> int:
        return self.p_switches + self.l_switches


def sanitize(seq: EdgeSequence, rng: np.random.Generator, params: Parameters | None = None, cap=None) -> SanitizeResult:
    """Remove loops and parallel arcs by P-switches followed by random L-switches.

    Raises :class:`ResampleRequired` if an arc occurs three or more times and
    :class:`SanitizeStalled` if L-switch proposals keep being rejected.
    """
    n = seq.n
    tails = seq.tails.copy()
    heads = seq.heads.copy()
    m = tails.size
    codes = tails * n + heads
    is_loop = tails == heads
    per_edge = _multiplicities(codes)
    if np.any((per_edge > 2) & ~is_loop):
        raise ResampleRequired("an arc is repeated three or more times")
    multi_idx = np.flatnonzero((per_edge == 2) & ~is_loop)
    n_loops0 = int(is_loop.sum())
    n_multi0 = int(np.count_nonzero(per_edge > 1))
    if cap is None:
        cap = 10**4 * (n_loops0 + 2 * n_multi0)

    p_count = 0
    if multi_idx.size:
        order = np.argsort(codes[multi_idx], kind="stable")
        pairs = multi_idx[order].reshape(-1, 2)
        for i, j in pairs.tolist():
            x, y = tails[i], heads[i]
            heads[i] = x
            tails[j] = y
            p_count += 1

    loops = np.flatnonzero(tails == heads).tolist()
    if not loops:
        return SanitizeResult(EdgeSequence(n, tails, heads), p_count, 0, 0)

    counter = _ArcCounter(tails * n + heads)
    l_count = 0
    rejected = 0
    attempts = 0
    streak = 0
    while loops:
        attempts += 1
        if attempts > cap:
            raise SanitizeStalled(f"{len(loops)} loops left after {cap} proposals")
        if streak and streak % (8 * m) == 0 and not _any_valid_l_switch(tails, heads, loops, counter, n):
            raise SanitizeStalled("no admissible L-switch exists")
        li = int(rng.integers(len(loops)))
        i = loops[li]
        j = int(rng.integers(m))
        x = int(tails[i])
        a, b = int(tails[j]), int(heads[j])
        if not _admissible(x, a, b, counter, n):
            rejected += 1
            streak += 1
            continue
        streak = 0
        ax, xb = a * n + x, x * n + b
        counter.add(x * n + x, -1)
        counter.add(a * n + b, -1)
        counter.add(ax, 1)
        counter.add(xb, 1)
        tails[i] = a
        tails[j] = x
        loops[li] = loops[-1]
        loops.pop()
        l_count += 1
    return SanitizeResult(EdgeSequence(n, tails, heads), p_count, l_count, rejected)


# diagnostics -----------------------------------------------------------------


@dataclass
class Diagnostics:
    delta: int
    loops: int
    multis: int
    s1: int
    small: int
    switches: int

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def measure(seq: EdgeSequence, small_threshold: float, switches: int = 0) -> Diagnostics:
    dout = seq.out_degrees()
    din = seq.in_degrees()
    total = dout + din
    codes = seq.tails * seq.n + seq.heads
    return Diagnostics(
        delta=int(total.max()) if total.size else 0,
        loops=int(np.count_nonzero(seq.tails == seq.heads)),
        multis=int(np.count_nonzero(_multiplicities(codes) > 1)),
        s1=int(np.sum(dout * (dout - 1))),
        small=int(np.count_nonzero(total <= small_threshold)),
        switches=int(switches),
    )


@dataclass
class SampleOutcome:
    digraph: Digraph
    diagnostics: Diagnostics
    sequence: EdgeSequence
    retries: int
    model: TruncatedPoissonModel


def simple_pairing_probability(n: int, m: int) -> float:
    """Rough chance that a random pairing has no loop and no repeated arc.

    Loops are about Poisson with mean ``rho`` and repeated pairs about
    Poisson with mean ``z^2 / 2``.
    """
    rho = m / n
    z = solve_z(rho).z if m > n else 0.0
    return math.exp(-rho - z * z / 2)


EXACT_MODE_MIN_PROBABILITY = 0.01


def resolve_mode(n: int, m: int, mode: str) -> str:
    if mode == "auto":
        return "reject" if simple_pairing_probability(n, m) >= EXACT_MODE_MIN_PROBABILITY else "switch"
    if mode not in ("reject", "switch"):
        raise ValueError(f"unknown mode {mode!r} (expected auto, reject or switch)")
    return mode


def _tilt_model(n: int, m: int) -> TruncatedPoissonModel:
    if m == n:
        return TruncatedPoissonModel(rho=1.0, z=0.0, sigma2=0.0)
    return solve_z(m / n)


def sample_sequence(
    n: int,
    m: int,
    rng: np.random.Generator,
    params: Parameters | None = None,
    max_retries: int = 100,
    method: str = "split",
    mode: str = "auto",
    reject_cap: int = 10**5,
):
    """Simple edge sequence plus diagnostics of the raw pairing it came from.

    ``mode="switch"`` repairs the pairing with P- and L-switches.
    ``mode="reject"`` redraws the pairing until it is already simple, which is
    exactly uniform because every digraph has the same number ``m!`` of
    simple pairings. ``auto`` rejects when a simple pairing is reasonably
    likely and switches otherwise.
    """
    params = params or Parameters.desk(n, m)
    if m < n:
        raise DomainError("need m >= n")
    if m > n * (n - 1):
        raise DomainError("m exceeds the number of ordered pairs")
    mode = resolve_mode(n, m, mode)
    model = _tilt_model(n, m)
    retries = 0
    if mode == "reject":
        verts = np.arange(n)
        for attempt in range(reject_cap):
            deg = sample_degree_sequence(n, m, model, rng, method=method)
            tails = rng.permutation(np.repeat(verts, deg.out))
            heads = rng.permutation(np.repeat(verts, deg.inn))
            if (tails == heads).any():
                continue
            codes = tails * n + heads
            codes.sort()
            if (codes[1:] == codes[:-1]).any():
                continue
            raw = EdgeSequence(n, tails, heads)
            return raw, measure(raw, params.small_threshold, 0), attempt, model
        raise AttemptCapExceeded(f"no simple pairing in {reject_cap} draws")
    while True:
        try:
            deg = sample_degree_sequence(n, m, model, rng, method=method)
            raw = assemble_sequence(deg, rng)
            res = sanitize(raw, rng, params)
        except CapExceeded:
            retries += 1
            if retries > max_retries:
                raise
            continue
        diag = measure(raw, params.small_threshold, res.switch_count)
        return res.seq, diag, retries, model


def sample_simple_digraph(
    n: int,
    m: int,
    rng: np.random.Generator,
    params: Parameters | None = None,
    max_retries: int = 100,
    method: str = "split",
    mode: str = "auto",
) -> tuple[Digraph, Diagnostics]:
    seq, diag, _, _ = sample_sequence(n, m, rng, params, max_retries, method, mode)
    return build_digraph(seq), diag


def sample_outcome(n, m, rng, params=None, max_retries=100, method="split", mode="auto") -> SampleOutcome:
    seq, diag, retries, model = sample_sequence(n, m, rng, params, max_retries, method, mode)
    return SampleOutcome(build_digraph(seq), diag, seq, retries, model)


# local limit check -----------------------------------------------------------


def sum_distribution(n: int, model: TruncatedPoissonModel, tail: float = 1e-15) -> np.ndarray:
    """``P(Z_1 + ... + Z_n = s)`` for ``s = 0..len-1`` by repeated convolution."""
    vmax = pmf_support_max(model.z, tail)
    p = np.zeros(vmax + 1)
    p[1:] = trunc_poisson_pmf(np.arange(1, vmax + 1), model.z)
    result = np.array([1.0])
    power = p
    k = n
    while k:
        if k & 1:
            result = np.convolve(result, power)
        k >>= 1
        if k:
            power = np.convolve(power, power)
    return result


def local_clt_probability(n: int, m: int, model: TruncatedPoissonModel) -> float:
    """Exact ``P(sum of n truncated Poissons = m)``."""
    if n == 1:
        return trunc_poisson_pmf(m, model.z) if m >= 1 else 0.0
    dist = sum_distribution(n, model)
    return float(dist[m]) if m < dist.size else 0.0


def local_clt_approximation(n: int, model: TruncatedPoissonModel) -> float:
    return 1.0 / (model.sigma * math.sqrt(2 * math.pi * n))
