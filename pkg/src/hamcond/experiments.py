"""Monte Carlo sweeps over ``m = ceil(n/2 (log n + 2 log log n + c))``.

Every trial gets its own seed, derived from the base seed, the point index
and the trial index by a fixed bijective 64-bit mix (see :func:`trial_seed`),
so results do not depend on how trials are spread over worker processes.
Aggregates are recomputed from the per-trial records.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from scipy import stats

from .errors import BudgetExhausted, CapExceeded, TooLarge
from .graph import BipartiteGraph, verify_hamilton_cycle
from .hamilton import Policy, find_hamilton, max_bipartite_matching, split_arcs
from .oracle import detect_obstruction, digraph_key, enumerate_digraphs, hamilton_cycle_exact
from .params import Parameters, limit_probability, threshold_m
from .sampler import sample_outcome

MASK64 = (1 << 64) - 1
ESTIMATORS = ("engine", "exact", "matching", "obstruction")


def mix64(x: int) -> int:
    """SplitMix64 finaliser; a bijection on 64-bit integers."""
    x &= MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def trial_seed(base: int, point: int, trial: int) -> int:
    """Seed of trial ``trial`` at sweep point ``point``.

    ``mix64(base XOR mix64(point << 32 | trial))``: for a fixed base this is
    injective in ``(point, trial)`` while both stay below ``2^32``.
    """
    return mix64((base & MASK64) ^ mix64(((point & 0xFFFFFFFF) << 32) | (trial & 0xFFFFFFFF)))


def wilson_interval(successes: int, trials: int, z: float = 1.959963984540054) -> tuple[float, float]:
    if trials == 0:
        return 0.0, 1.0
    p = successes / trials
    denom = 1 + z * z / trials
    centre = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    lo = 0.0 if successes == 0 else max(0.0, centre - half)
    hi = 1.0 if successes == trials else min(1.0, centre + half)
    return min(lo, p), max(hi, p)


def worker_count() -> int:
    raw = os.environ.get("HAMCOND_THREADS", "").strip()
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return os.cpu_count() or 1


@dataclass
class ExperimentConfig:
    n: int
    c_values: list[float]
    trials: int
    seed: int
    profile: str = "desk"
    estimators: tuple[str, ...] = ("engine",)
    exact_limit: int = 200
    exact_fallback: bool = False
    workers: int | None = None

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        bad = set(self.estimators) - set(ESTIMATORS)
        if bad:
            raise ValueError(f"unknown estimators {sorted(bad)}")
        self.c_values = [float(c) for c in self.c_values]
        for c in self.c_values:
            m = threshold_m(self.n, c)
            if not (self.n < m <= self.n * (self.n - 1)):
                raise ValueError(f"c={c} gives m={m}, outside (n, n(n-1)]")

    def m_for(self, c: float) -> int:
        return threshold_m(self.n, c)


@dataclass
class ExperimentResult:
    kind: str
    config: dict
    points: list[dict]
    records: list[dict] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    CSV_COLUMNS = ("n", "c", "m", "trials", "p_hat", "lo95", "hi95", "prediction")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.CSV_COLUMNS)
        for p in self.points:
            w.writerow([_fmt(p.get(k)) for k in self.CSV_COLUMNS])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {"kind": self.kind, "config": self.config, "points": self.points, "records": self.records, "meta": self.meta}

    def to_json(self, timing: bool = False) -> str:
        """JSON sidecar. Wall-clock fields are dropped unless ``timing`` is set,
        so equal seeds give byte-identical files."""
        data = self.to_dict() if timing else strip_timing(self.to_dict())
        return json.dumps(data, indent=2, sort_keys=True, default=_json_default)

    def gnuplot_script(self, csv_path: str = "threshold.csv") -> str:
        return "\n".join(
            [
                "set datafile separator ','",
                "set key left top",
                "set xlabel 'c'",
                "set ylabel 'probability'",
                "set yrange [0:1.05]",
                "limit(x) = exp(-exp(-x)/8)",
                f"plot '{csv_path}' every ::1 using 2:5:6:7 with yerrorbars title 'empirical', \\",
                "     limit(x) with lines title 'exp(-exp(-c)/8)'",
                "",
            ]
        )


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    return "" if v is None else v


TIMING_KEYS = frozenset({"seconds", "runtime", "workers"})


def strip_timing(obj):
    if isinstance(obj, dict):
        return {k: strip_timing(v) for k, v in obj.items() if k not in TIMING_KEYS}
    if isinstance(obj, list):
        return [strip_timing(v) for v in obj]
    return obj


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serialisable: {type(o).__name__}")


# trials ------------------------------------------------------------------------


def _run_trial(task: tuple) -> dict:
    kind, n, m, c, seed, profile, estimators, exact_limit, exact_fallback = task
    params = Parameters.for_profile(profile, n, m)
    rng = np.random.default_rng(seed)
    rec: dict = {"seed": seed, "c": c, "m": m}
    t0 = time.perf_counter()
    try:
        out = sample_outcome(n, m, rng, params)
    except CapExceeded as exc:
        rec.update(status="sampler_failed", error=f"{type(exc).__name__}: {exc}")
        rec["runtime"] = time.perf_counter() - t0
        return rec
    d = out.digraph
    rec["sampler_retries"] = out.retries
    rec["status"] = "ok"
    rec["obstructions"] = detect_obstruction(d)
    if "engine" in estimators:
        policy = Policy(exact_fallback=exact_fallback, exact_limit=exact_limit)
        res = find_hamilton(d, params, rng, policy)
        rec["engine"] = res.found
        rec["engine_status"] = res.status
        rec["trace"] = res.trace
        rec["cycle_valid"] = None if res.cycle is None else verify_hamilton_cycle(d, res.cycle)
    if "exact" in estimators and n <= exact_limit:
        try:
            rec["exact"] = hamilton_cycle_exact(d) is not None
        except BudgetExhausted as exc:
            rec["exact"] = None
            rec["exact_error"] = str(exc)
    if "matching" in estimators:
        e1, _, _ = split_arcs(d, params, rng, rng.permutation(d.m))
        g1 = BipartiteGraph.from_arrays(n, d.tails[e1], d.heads[e1])
        rec["matching"] = bool((max_bipartite_matching(g1) >= 0).all())
        g = BipartiteGraph.from_arrays(n, d.tails, d.heads)
        rec["matching_full"] = bool((max_bipartite_matching(g) >= 0).all())
    rec["runtime"] = time.perf_counter() - t0
    return rec


def _map(tasks: list, workers: int | None) -> list[dict]:
    workers = worker_count() if workers is None else max(1, workers)
    if workers == 1 or len(tasks) < 2:
        return [_run_trial(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_trial, tasks, chunksize=max(1, len(tasks) // (8 * workers))))


def _sweep(kind: str, config: ExperimentConfig, estimators, progress: Callable | None = None) -> list[dict]:
    tasks = []
    for pi, c in enumerate(config.c_values):
        m = config.m_for(c)
        for t in range(config.trials):
            tasks.append(
                (kind, config.n, m, c, trial_seed(config.seed, pi, t), config.profile, tuple(estimators),
                 config.exact_limit, config.exact_fallback)
            )
    records = _map(tasks, config.workers)
    for i, r in enumerate(records):
        r["point"] = i // config.trials
        r["trial"] = i % config.trials
    return records


def _point_base(config: ExperimentConfig, pi: int, recs: list[dict]) -> dict:
    c = config.c_values[pi]
    ok = [r for r in recs if r["status"] == "ok"]
    failed = len(recs) - len(ok)
    return {
        "n": config.n,
        "c": c,
        "m": config.m_for(c),
        "trials": len(ok),
        "sampler_failed": failed,
        "valid": failed < 0.01 * len(recs),
        "prediction": limit_probability(c),
    }, ok


def _rate(point: dict, name: str, hits: int, total: int) -> None:
    lo, hi = wilson_interval(hits, total)
    point[f"{name}_hat"] = hits / total if total else None
    point[f"{name}_lo95"] = lo
    point[f"{name}_hi95"] = hi


def aggregate(kind: str, config: ExperimentConfig, records: list[dict]) -> list[dict]:
    """Per-point statistics, recomputed from per-trial records only."""
    points = []
    for pi in range(len(config.c_values)):
        recs = [r for r in records if r["point"] == pi]
        point, ok = _point_base(config, pi, recs)
        if kind == "threshold":
            hits = sum(1 for r in ok if r.get("engine"))
            lo, hi = wilson_interval(hits, len(ok))
            point.update(p_hat=hits / len(ok) if ok else None, lo95=lo, hi95=hi)
            point["engine_status"] = _histogram(r.get("engine_status") for r in ok)
            point["invalid_cycles"] = sum(1 for r in ok if r.get("cycle_valid") is False)
            exact = [r["exact"] for r in ok if r.get("exact") is not None]
            if exact:
                _rate(point, "exact", sum(exact), len(exact))
            point["exact_budget_exhausted"] = sum(1 for r in ok if "exact_error" in r)
        elif kind == "matching":
            hits = sum(1 for r in ok if r.get("matching"))
            lo, hi = wilson_interval(hits, len(ok))
            point.update(p_hat=hits / len(ok) if ok else None, lo95=lo, hi95=hi)
            full = sum(1 for r in ok if r.get("matching_full"))
            _rate(point, "full_matching", full, len(ok))
        elif kind == "obstruction":
            counts = np.array([r["obstructions"] for r in ok], dtype=float)
            point.update(_poisson_summary(counts, math.exp(-point["c"]) / 8))
            zero = int((counts == 0).sum())
            lo, hi = wilson_interval(zero, counts.size)
            point.update(p_hat=zero / counts.size if counts.size else None, lo95=lo, hi95=hi)
        points.append(point)
    return points


def _histogram(values) -> dict:
    out: dict = {}
    for v in values:
        out[str(v)] = out.get(str(v), 0) + 1
    return dict(sorted(out.items()))


def _poisson_summary(counts: np.ndarray, lam: float) -> dict:
    if counts.size == 0:
        return {"mean": None}
    mean = float(counts.mean())
    var = float(counts.var(ddof=1)) if counts.size > 1 else 0.0
    top = int(counts.max())
    hist = np.bincount(counts.astype(int), minlength=top + 1)
    # chi-square against Poisson(lam), pooling the upper tail until every
    # expected cell holds at least 5
    probs = stats.poisson.pmf(np.arange(top + 1), lam)
    probs[-1] = 1 - probs[:-1].sum()
    exp = probs * counts.size
    obs = hist.astype(float)
    while exp.size > 1 and exp[-1] < 5:
        exp[-2] += exp[-1]
        obs[-2] += obs[-1]
        exp = exp[:-1]
        obs = obs[:-1]
    if exp.size > 1:
        chi2 = float(((obs - exp) ** 2 / exp).sum())
        pval = float(stats.chi2.sf(chi2, exp.size - 1))
    else:
        chi2, pval = 0.0, 1.0
    return {
        "mean": mean,
        "variance": var,
        "dispersion": var / mean if mean > 0 else None,
        "zero_freq": float((counts == 0).mean()),
        "target_mean": lam,
        "target_zero": math.exp(-lam),
        "histogram": hist.tolist(),
        "chi2": chi2,
        "chi2_df": int(exp.size - 1),
        "chi2_p": pval,
    }


def _result(kind: str, config: ExperimentConfig, records: list[dict], t0: float) -> ExperimentResult:
    return ExperimentResult(
        kind=kind,
        config=asdict(config),
        points=aggregate(kind, config, records),
        records=records,
        meta={"seconds": round(time.perf_counter() - t0, 3), "workers": config.workers or worker_count()},
    )


def run_threshold(config: ExperimentConfig) -> ExperimentResult:
    """Engine success frequency per ``c`` against ``exp(-exp(-c)/8)``."""
    t0 = time.perf_counter()
    est = set(config.estimators) | {"engine"}
    return _result("threshold", config, _sweep("threshold", config, est), t0)


def run_matching_threshold(config: ExperimentConfig) -> ExperimentResult:
    """Frequency with which ``G(E1)`` after Phase 0 has a perfect matching."""
    t0 = time.perf_counter()
    return _result("matching", config, _sweep("matching", config, {"matching"}), t0)


def run_obstruction_law(config: ExperimentConfig) -> ExperimentResult:
    """Degree-one obstruction counts, summarised against a Poisson law."""
    t0 = time.perf_counter()
    return _result("obstruction", config, _sweep("obstruction", config, {"obstruction"}), t0)


# small-scale checks --------------------------------------------------------------


def run_uniformity(n: int, m: int, samples: int, seed: int, mode: str = "auto") -> dict:
    """Chi-square of sampled digraph frequencies against the uniform law."""
    from .sampler import sample_sequence

    support = {digraph_key(d): i for i, d in enumerate(enumerate_digraphs(n, m))}
    if not support:
        raise TooLarge(f"no digraphs with n={n}, m={m}")
    counts = np.zeros(len(support), dtype=np.int64)
    rng = np.random.default_rng(seed)
    outside = 0
    for _ in range(samples):
        seq, _, _, _ = sample_sequence(n, m, rng, mode=mode)
        key = tuple(sorted(zip(seq.tails.tolist(), seq.heads.tolist())))
        idx = support.get(key)
        if idx is None:
            outside += 1
        else:
            counts[idx] += 1
    k = len(support)
    if k > 1:
        chi2, pval = stats.chisquare(counts)
        chi2, pval = float(chi2), float(pval)
    else:
        chi2, pval = 0.0, 1.0
    expected = samples / k
    return {
        "n": n,
        "m": m,
        "mode": mode,
        "samples": samples,
        "classes": k,
        "outside_support": outside,
        "chi2": chi2,
        "df": k - 1,
        "p_value": pval,
        "max_rel_dev": float(np.abs(counts / expected - 1).max()),
        "counts": counts.tolist(),
    }


def run_equivalence(n: int, m: int, trials: int, seed: int, budget: int | None = None, workers: int | None = None) -> dict:
    """How often exact Hamiltonicity differs from 'no degree-one obstruction'."""
    tasks = [("equivalence", n, m, None, trial_seed(seed, 0, t), "desk", ("exact",), n, False) for t in range(trials)]
    records = _map(tasks, workers)
    ok = [r for r in records if r["status"] == "ok"]
    decided = [r for r in ok if r.get("exact") is not None]
    disagree = [r for r in decided if r["exact"] != (r["obstructions"] == 0)]
    violations = [r for r in decided if r["obstructions"] > 0 and r["exact"]]
    return {
        "n": n,
        "m": m,
        "trials": trials,
        "decided": len(decided),
        "budget_exhausted": sum(1 for r in ok if "exact_error" in r),
        "sampler_failed": len(records) - len(ok),
        "disagreements": len(disagree),
        "disagreement_fraction": len(disagree) / len(decided) if decided else None,
        "certificate_violations": len(violations),
        "disagreeing_seeds": [r["seed"] for r in disagree],
        "hamiltonian": sum(1 for r in decided if r["exact"]),
        "obstructed": sum(1 for r in decided if r["obstructions"] > 0),
    }
