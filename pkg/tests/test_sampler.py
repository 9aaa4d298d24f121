import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import optimize, stats

from hamcond.errors import DomainError, NotLoop, NotParallelPair, TargetIsLoop
from hamcond.graph import EdgeSequence, detect_defects
from hamcond.oracle import digraph_key, enumerate_digraphs
from hamcond.params import threshold_m
from hamcond.sampler import (
    DegreeSequence,
    Diagnostics,
    assemble_sequence,
    l_switch,
    local_clt_approximation,
    local_clt_probability,
    p_switch,
    sample_degree_sequence,
    sample_sequence,
    sample_simple_digraph,
    sample_truncated_poisson,
    sanitize,
    solve_z,
    sum_distribution,
    trunc_poisson_pmf,
)


def f(z):
    return z * math.exp(z) / (math.exp(z) - 1)


# tilt parameter ---------------------------------------------------------------------


def test_solve_z_rho_two():
    # independent oracle: Brent's method on the defining equation
    ref = optimize.brentq(lambda z: f(z) - 2.0, 1e-9, 2.0, xtol=1e-14)
    model = solve_z(2.0)
    assert model.z == pytest.approx(ref, abs=1e-10)
    assert model.z == pytest.approx(1.5936, abs=1e-4)


def test_solve_z_near_one():
    assert solve_z(1 + 1e-6).z < 1e-5


def test_solve_z_domain():
    with pytest.raises(DomainError):
        solve_z(1.0)


@given(st.floats(1.0001, 500.0))
def test_solve_z_bracket_and_variance(rho):
    m = solve_z(rho)
    assert rho - 1 <= m.z <= rho
    assert abs(f(m.z) - rho) <= 1e-9 * rho
    ez = math.exp(min(m.z, 700))
    if m.z < 50:
        expected = m.z * ez * (ez - 1 - m.z) / (ez - 1) ** 2
        assert m.sigma2 == pytest.approx(expected, rel=1e-9)
    assert m.sigma2 > 0


@given(st.floats(1.001, 100.0), st.floats(1.001, 100.0))
def test_solve_z_monotone(r1, r2):
    if r1 < r2 - 1e-9:
        assert solve_z(r1).z < solve_z(r2).z


# truncated Poisson ------------------------------------------------------------------


def test_pmf_values():
    assert trunc_poisson_pmf(1, 1.0) == pytest.approx(1 / (math.e - 1), rel=1e-12)
    assert trunc_poisson_pmf(2, 1e-8) < 1e-7
    with pytest.raises(DomainError):
        trunc_poisson_pmf(0, 1.0)


@pytest.mark.parametrize("z", [0.5, 2.0, 8.0])
def test_pmf_normalised(z):
    assert trunc_poisson_pmf(np.arange(1, 401), z).sum() == pytest.approx(1.0, abs=1e-12)


def test_pmf_large_k_is_finite():
    v = trunc_poisson_pmf(2000, 50.0)
    assert 0 <= v < 1e-300 or v == 0.0


def test_truncated_poisson_draws():
    model = solve_z(f(2.0))
    rng = np.random.default_rng(11)
    x = sample_truncated_poisson(model, rng, size=10**6)
    assert x.min() >= 1
    assert abs(x.mean() - f(2.0)) < 0.01
    kmax = int(x.max())
    emp = np.bincount(x, minlength=kmax + 1)[1:] / x.size
    exact = trunc_poisson_pmf(np.arange(1, kmax + 1), model.z)
    assert 0.5 * np.abs(emp - exact).sum() + 0.5 * (1 - exact.sum()) <= 0.005
    assert sample_truncated_poisson(model, rng) >= 1


# conditional degree sequences -----------------------------------------------------


@pytest.mark.parametrize("method", ["split", "rejection"])
def test_degree_sequences_sum(method):
    model = solve_z(3.0)
    rng = np.random.default_rng(2)
    for _ in range(50):
        deg = sample_degree_sequence(100, 300, model, rng, method=method)
        assert deg.out.sum() == deg.inn.sum() == 300
        assert deg.out.min() >= 1 and deg.inn.min() >= 1


def test_degree_sequence_m_equals_n():
    deg = sample_degree_sequence(5, 5, None, np.random.default_rng(0))
    assert deg.out.tolist() == deg.inn.tolist() == [1] * 5


def test_degree_sequence_domain():
    with pytest.raises(DomainError):
        sample_degree_sequence(5, 4, None, np.random.default_rng(0))


@pytest.mark.parametrize("method", ["split", "rejection"])
def test_two_vertex_conditional_law(method):
    model = solve_z(2.0)
    p = {k: trunc_poisson_pmf(k, model.z) for k in (1, 2, 3)}
    norm = 2 * p[1] * p[3] + p[2] ** 2
    expected = {(1, 3): p[1] * p[3] / norm, (2, 2): p[2] ** 2 / norm, (3, 1): p[1] * p[3] / norm}
    rng = np.random.default_rng(5)
    draws = 20000
    counts = Counter(tuple(sample_degree_sequence(2, 4, model, rng, method=method).out.tolist()) for _ in range(draws))
    assert set(counts) <= set(expected)
    obs = [counts[k] for k in expected]
    exp = [expected[k] * draws for k in expected]
    assert stats.chisquare(obs, exp).pvalue > 1e-3


def test_marginal_close_to_pmf():
    model = solve_z(3.0)
    rng = np.random.default_rng(8)
    vals = np.array([sample_degree_sequence(100, 300, model, rng).out[17] for _ in range(10**4)])
    kmax = int(vals.max())
    emp = np.bincount(vals, minlength=kmax + 1)[1:] / vals.size
    exact = trunc_poisson_pmf(np.arange(1, kmax + 1), model.z)
    assert 0.5 * (np.abs(emp - exact).sum() + (1 - exact.sum())) <= 0.02


# assembly and switchings --------------------------------------------------------------


def test_assemble_degrees_and_size():
    deg = DegreeSequence(np.array([2, 1, 3]), np.array([1, 4, 1]))
    s = assemble_sequence(deg, np.random.default_rng(0))
    assert s.out_degrees().tolist() == [2, 1, 3]
    assert s.in_degrees().tolist() == [1, 4, 1]
    assert s.slots.size == 12


def test_assemble_two_vertex_pairings_uniform():
    deg = DegreeSequence(np.array([1, 1]), np.array([1, 1]))
    rng = np.random.default_rng(3)
    c = Counter(tuple(assemble_sequence(deg, rng).slots.tolist()) for _ in range(10**5))
    # two independent permutations of {0, 1}: four equally likely pairings
    assert len(c) == 4
    assert stats.chisquare(list(c.values())).pvalue > 1e-3


def test_p_switch_example():
    s = EdgeSequence.from_slots(2, [0, 1, 0, 1])
    assert p_switch(s, 0, 1).slots.tolist() == [0, 0, 1, 1]


def test_p_switch_errors():
    with pytest.raises(NotParallelPair):
        p_switch(EdgeSequence.from_slots(3, [0, 1, 1, 2]), 0, 1)
    with pytest.raises(NotParallelPair):
        p_switch(EdgeSequence.from_slots(2, [0, 1, 0, 1]), 0, 0)


def test_l_switch_example():
    s = EdgeSequence.from_slots(3, [0, 0, 1, 2])
    assert l_switch(s, 0, 1).slots.tolist() == [1, 0, 0, 2]


def test_l_switch_errors():
    s = EdgeSequence.from_slots(3, [0, 0, 1, 1, 1, 2])
    with pytest.raises(NotLoop):
        l_switch(s, 2, 0)
    with pytest.raises(TargetIsLoop):
        l_switch(s, 0, 1)


@st.composite
def parallel_case(draw):
    n = draw(st.integers(2, 8))
    m = draw(st.integers(2, 20))
    tails = draw(st.lists(st.integers(0, n - 1), min_size=m, max_size=m))
    heads = draw(st.lists(st.integers(0, n - 1), min_size=m, max_size=m))
    i, j = draw(st.lists(st.integers(0, m - 1), min_size=2, max_size=2, unique=True))
    x, y = draw(st.lists(st.integers(0, n - 1), min_size=2, max_size=2, unique=True))
    tails[i] = tails[j] = x
    heads[i] = heads[j] = y
    return EdgeSequence(n, tails, heads), i, j


@settings(max_examples=300)
@given(parallel_case())
def test_p_switch_moves_one_unit_and_is_involution(case):
    s, i, j = case
    x, y = int(s.tails[i]), int(s.heads[i])
    out = p_switch(s, i, j)
    d_out = s.out_degrees().copy()
    d_in = s.in_degrees().copy()
    # (x,y),(x,y) -> (x,x),(y,y): one tail moves from x to y, one head from y to x
    d_out[x] -= 1
    d_out[y] += 1
    d_in[y] -= 1
    d_in[x] += 1
    assert out.out_degrees().tolist() == d_out.tolist()
    assert out.in_degrees().tolist() == d_in.tolist()
    assert (out.out_degrees() + out.in_degrees()).tolist() == (s.out_degrees() + s.in_degrees()).tolist()
    assert p_switch(out, i, j, check=False) == s
    L0, M0 = detect_defects(s)
    L1, M1 = detect_defects(out)
    codes = s.tails * s.n + s.heads
    if not L0 and (codes == codes[i]).sum() == 2:
        assert len(L1) == 2 and len(M1) == len(M0) - 2


@pytest.mark.xfail(strict=True, reason="turning (x,y),(x,y) into loops (x,x),(y,y) moves an out-degree from x to y")
def test_p_switch_preserves_exact_degrees():
    s = EdgeSequence.from_slots(2, [0, 1, 0, 1])
    out = p_switch(s, 0, 1)
    assert out.out_degrees().tolist() == s.out_degrees().tolist()


@st.composite
def loop_case(draw):
    n = draw(st.integers(2, 8))
    m = draw(st.integers(2, 20))
    tails = draw(st.lists(st.integers(0, n - 1), min_size=m, max_size=m))
    heads = draw(st.lists(st.integers(0, n - 1), min_size=m, max_size=m))
    i, j = draw(st.lists(st.integers(0, m - 1), min_size=2, max_size=2, unique=True))
    heads[i] = tails[i]
    if heads[j] == tails[j]:
        heads[j] = (tails[j] + 1) % n
    return EdgeSequence(n, tails, heads), i, j


@settings(max_examples=300)
@given(loop_case())
def test_l_switch_preserves_totals(case):
    s, i, j = case
    x = int(s.tails[i])
    out = l_switch(s, i, j)
    assert (out.out_degrees() + out.in_degrees()).tolist() == (s.out_degrees() + s.in_degrees()).tolist()
    assert out.out_degrees()[x] >= 1 and out.in_degrees()[x] >= 1


# sanitize ---------------------------------------------------------------------------------


def test_sanitize_simple_is_fixed_point():
    s = EdgeSequence.from_slots(3, [0, 1, 1, 2, 2, 0])
    res = sanitize(s, np.random.default_rng(0))
    assert res.seq == s and res.switch_count == 0


def test_sanitize_one_parallel_pair():
    # two copies of (0,1) plus enough other arcs to leave room for L-switches
    arcs = [(0, 1), (0, 1), (1, 2), (2, 3), (3, 4), (4, 0), (2, 4), (3, 1), (4, 2), (1, 3)]
    s = EdgeSequence(5, [a for a, _ in arcs], [b for _, b in arcs])
    seen_clean = False
    for seed in range(40):
        res = sanitize(s, np.random.default_rng(seed))
        L, M = detect_defects(res.seq)
        assert not L and not M
        assert res.p_switches == 1
        if res.rejected == 0:
            assert res.l_switches == 2
            seen_clean = True
    assert seen_clean


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([(20, 60), (30, 120), (50, 150)]))
def test_sanitize_postconditions(seed, nm):
    n, m = nm
    rng = np.random.default_rng(seed)
    deg = sample_degree_sequence(n, m, solve_z(m / n), rng)
    raw = assemble_sequence(deg, rng)
    try:
        res = sanitize(raw, rng)
    except Exception as exc:  # resample signals are legitimate outcomes
        from hamcond.errors import CapExceeded

        assert isinstance(exc, CapExceeded)
        return
    out = res.seq
    L, M = detect_defects(out)
    assert not L and not M
    assert out.out_degrees().min() >= 1 and out.in_degrees().min() >= 1
    assert out.m == m
    assert (out.out_degrees() + out.in_degrees()).tolist() == (raw.out_degrees() + raw.in_degrees()).tolist()


@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason="switching alone is visibly non-uniform at (3,4); see decisions ledger")
def test_switch_only_sanitizer_within_three_percent():
    keys = [digraph_key(d) for d in enumerate_digraphs(3, 4)]
    rng = np.random.default_rng(2024)
    counts = Counter()
    total = 9 * 10**4
    for _ in range(total):
        seq, _, _, _ = sample_sequence(3, 4, rng, mode="switch")
        counts[tuple(sorted(zip(seq.tails.tolist(), seq.heads.tolist())))] += 1
    assert set(counts) == set(keys)
    expected = total / 9
    assert all(abs(counts[k] / expected - 1) <= 0.03 for k in keys)


# full pipeline -----------------------------------------------------------------------------


@pytest.mark.parametrize("n,m,mode", [(3, 4, "auto"), (5, 9, "switch"), (40, 160, "auto"), (200, 1000, "switch")])
def test_sample_simple_digraph(n, m, mode):
    rng = np.random.default_rng(n * m)
    for _ in range(10):
        d, diag = sample_simple_digraph(n, m, rng, mode=mode)
        assert d.m == m and d.min_degree() >= 1
        assert len(d.edge_set()) == m
        assert all(u != v for u, v in d.edge_set())
        assert isinstance(diag, Diagnostics)


def test_sampler_is_deterministic():
    a, da = sample_simple_digraph(300, 1500, np.random.default_rng(99))
    b, db = sample_simple_digraph(300, 1500, np.random.default_rng(99))
    assert np.array_equal(a.tails, b.tails) and np.array_equal(a.heads, b.heads)
    assert da == db


def test_diagnostics_json_keys():
    _, diag = sample_simple_digraph(50, 200, np.random.default_rng(1))
    import json

    assert set(json.loads(diag.to_json())) == {"delta", "loops", "multis", "s1", "small", "switches"}


def _threshold_diagnostics(trials=100):
    n = 10**4
    m = threshold_m(n, 0.0)
    z = solve_z(m / n).z
    rng = np.random.default_rng(4)
    diags = [sample_simple_digraph(n, m, rng)[1] for _ in range(trials)]
    return n, m, z, diags


def test_diagnostics_degree_and_defect_bounds():
    n, m, z, diags = _threshold_diagnostics()
    ln = math.log(n)
    ok = sum(d.delta < ln**2 and d.loops + d.multis <= 3 * math.e**2 * ln**4 for d in diags)
    assert ok >= 99


def _s1_within_fraction(n, m, z):
    """Normal approximation to P(|S1 - m z| <= n^{2/3}) under the conditioned model."""
    k = np.arange(1, 400)
    p = trunc_poisson_pmf(k, z)
    y = k * (k - 1.0)
    ez, ey = (k * p).sum(), (y * p).sum()
    vz = ((k - ez) ** 2 * p).sum()
    cov = ((k - ez) * (y - ey) * p).sum()
    vy = ((y - ey) ** 2 * p).sum()
    sd = math.sqrt(n * (vy - cov * cov / vz))
    return 2 * stats.norm.cdf(n ** (2 / 3) / sd) - 1


def test_s1_concentration_matches_model():
    n, m, z, diags = _threshold_diagnostics()
    frac = np.mean([abs(d.s1 - m * z) <= n ** (2 / 3) for d in diags])
    assert abs(frac - _s1_within_fraction(n, m, z)) <= 0.15
    assert abs(np.mean([d.s1 for d in diags]) / (m * z) - 1) < 0.01


@pytest.mark.xfail(strict=True, reason="S1 has standard deviation about 950 > n^(2/3) = 464 at n = 10^4")
def test_s1_within_n_two_thirds_in_99_percent():
    n, m, z, diags = _threshold_diagnostics()
    assert sum(abs(d.s1 - m * z) <= n ** (2 / 3) for d in diags) >= 99


# local limit -----------------------------------------------------------------------------


def test_local_clt_single_summand():
    model = solve_z(3.0)
    assert local_clt_probability(1, 4, model) == pytest.approx(trunc_poisson_pmf(4, model.z))


def test_local_clt_n100():
    model = solve_z(3.0)
    exact = local_clt_probability(100, 300, model)
    assert exact == pytest.approx(local_clt_approximation(100, model), rel=0.05)


def test_sum_distribution_normalised():
    dist = sum_distribution(50, solve_z(2.5))
    assert dist[:50].sum() == 0
    assert dist.sum() == pytest.approx(1.0, abs=1e-10)
