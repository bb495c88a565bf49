import itertools
import math

import numpy as np
import pytest
from scipy import stats

from annexcode.layout import (
    CodeParams,
    GenerationLayout,
    build_layout,
    layout_statistics,
    make_disjoint,
    make_head_to_toe,
    make_random_annex,
    sample_annexes,
)


def test_params_validation():
    with pytest.raises(ValueError):
        CodeParams(N=0, h=1)
    with pytest.raises(ValueError):
        CodeParams(N=10, h=11)
    with pytest.raises(ValueError):
        CodeParams(N=10, h=2, l=9)  # l > N-h
    with pytest.raises(ValueError):
        CodeParams(N=10, h=2, q=100)
    with pytest.raises(ValueError):
        CodeParams(N=10, h=2, d=0)
    p = CodeParams(N=1000, h=25, l=12)
    assert p.n == 40 and p.g == 37


def test_remainder_base_blocks():
    p = CodeParams(N=103, h=10, l=3)
    assert p.n == 11
    assert list(p.base_block(10)) == [100, 101, 102]
    lay = make_random_annex(p, 3)
    assert len(lay.members[10]) == 3 + 3
    assert len(lay.members[0]) == 13


def test_random_annex_invariants_small():
    p = CodeParams(N=6, h=2, l=1, q=16)
    lay = make_random_annex(p, 9)
    for i, gen in enumerate(lay.members):
        assert len(gen) == 3
        base = set(p.base_block(i))
        assert base <= set(gen)
        assert not (set(gen) - base) & base
    # reverse is the exact transpose
    for pk, gens in enumerate(lay.reverse):
        for i in gens:
            assert pk in lay.members[i]
    for i, gen in enumerate(lay.members):
        for pk in gen:
            assert i in lay.reverse[pk]


def test_random_annex_empty_annex_is_disjoint():
    p = CodeParams(N=20, h=5, l=0)
    lay = make_random_annex(p, 1)
    assert lay.members == make_disjoint(p).members


def test_random_annex_deterministic_under_seed():
    p = CodeParams(N=50, h=5, l=4)
    assert make_random_annex(p, 123).members == make_random_annex(p, 123).members
    assert make_random_annex(p, 123).members != make_random_annex(p, 124).members


def test_annex_membership_probability_matches_formula():
    # P(packet in a given annex) = l/(N-h), Monte Carlo over 1e5 layouts
    p = CodeParams(N=1000, h=25, l=12)
    rng = np.random.default_rng(77)
    hits = 0
    total = 100_000
    done = 0
    packet = 500  # outside base block 0
    while done < total:
        B = min(20_000, total - done)
        annexes = sample_annexes(p, B, rng)
        hits += int((annexes[:, 0, :] == packet).any(axis=1).sum())
        done += B
    pi = p.l / (p.N - p.h)
    se = math.sqrt(pi * (1 - pi) / total)
    assert abs(hits / total - pi) < 3 * se


def test_degree_distribution_chi_square():
    # packet degree is 1 + Binom(n-1, pi)
    p = CodeParams(N=100, h=10, l=5)
    n, pi = p.n, p.l / (p.N - p.h)
    rng = np.random.default_rng(99)
    layouts = 2000
    counts = np.zeros(n + 1)
    annexes = sample_annexes(p, layouts, rng)
    for b in range(layouts):
        deg = np.ones(p.N, dtype=int)
        np.add.at(deg, annexes[b].ravel(), 1)
        for d in deg:
            counts[d - 1] += 1
    # bin the tail so expected counts stay above 5
    probs = stats.binom.pmf(np.arange(n), n - 1, pi)
    cut = int(np.searchsorted(np.cumsum(probs), 1 - 1e-4)) + 1
    obs = np.concatenate([counts[:cut], [counts[cut:].sum()]])
    exp = np.concatenate([probs[:cut], [probs[cut:].sum()]]) * layouts * p.N
    keep = exp > 5
    chi = stats.chisquare(obs[keep], exp[keep] * obs[keep].sum() / exp[keep].sum())
    assert chi.pvalue > 1e-3


def test_expected_unique_packets_monte_carlo():
    # packets of a generation present in no other generation: h*(1-pi)^(n-1)
    p = CodeParams(N=200, h=20, l=8)
    st = layout_statistics(p)
    rng = np.random.default_rng(31)
    layouts = 4000
    annexes = sample_annexes(p, layouts, rng)
    vals = np.empty(layouts)
    base0 = np.array(list(p.base_block(0)))
    for b in range(layouts):
        others = annexes[b, 1:, :].ravel()
        vals[b] = len(set(base0) - set(others.tolist()))
    se = vals.std(ddof=1) / math.sqrt(layouts)
    assert abs(vals.mean() - st.expected_unique) < 3 * se


def test_overlap_probability_enumeration_n3():
    # N=6, h=2, l=1: enumerate all annex placements of two generations
    p = CodeParams(N=6, h=2, l=1)
    st = layout_statistics(p)
    b0, b1 = set(p.base_block(0)), set(p.base_block(1))
    comp0 = [x for x in range(6) if x not in b0]
    comp1 = [x for x in range(6) if x not in b1]
    overlap = 0
    for r0, r1 in itertools.product(comp0, comp1):
        g0, g1 = b0 | {r0}, b1 | {r1}
        if g0 & g1:
            overlap += 1
    assert st.overlap_prob == pytest.approx(overlap / (len(comp0) * len(comp1)))
    assert st.overlap_prob == pytest.approx(0.875)


def test_overlap_count_monte_carlo():
    # number of generations overlapping a fixed one ~ Binom(n-1, overlap_prob)
    p = CodeParams(N=120, h=12, l=6)
    st = layout_statistics(p)
    rng = np.random.default_rng(41)
    layouts = 3000
    annexes = sample_annexes(p, layouts, rng)
    n = p.n
    vals = np.empty(layouts)
    base = [set(p.base_block(i)) for i in range(n)]
    for b in range(layouts):
        gens = [base[i] | set(annexes[b, i].tolist()) for i in range(n)]
        vals[b] = sum(1 for j in range(1, n) if gens[0] & gens[j])
    expect = (n - 1) * st.overlap_prob
    se = vals.std(ddof=1) / math.sqrt(layouts)
    assert abs(vals.mean() - expect) < 3 * se


def test_layout_statistics_values():
    st = layout_statistics(CodeParams(N=1000, h=25, l=12))
    assert st.pi == pytest.approx(12 / 975)
    assert st.mean_degree == pytest.approx(1.48)
    assert st.var_degree == pytest.approx(39 * st.pi * (1 - st.pi))
    assert st.expected_unique == pytest.approx(25 * (1 - 12 / 975) ** 39)
    assert st.expected_unique == pytest.approx(15.424, abs=5e-4)
    assert not st.forced_overlap


def test_layout_statistics_forced_overlap_flag():
    st = layout_statistics(CodeParams(N=10, h=4, l=2))  # N-2h-2l = -2
    assert st.forced_overlap and st.overlap_prob == 1.0
    st0 = layout_statistics(CodeParams(N=10, h=5, l=0))
    assert st0.overlap_prob == 0.0


def test_head_to_toe_definition():
    p = CodeParams(N=6, h=2, l=1)
    lay = make_head_to_toe(p)
    assert lay.members == ((0, 1, 2), (2, 3, 4), (4, 5, 0))
    degrees = [len(g) for g in lay.reverse]
    assert max(degrees) <= 2


def test_head_to_toe_overlap_mass():
    p = CodeParams(N=60, h=10, l=4)
    lay = make_head_to_toe(p)
    gens = [set(g) for g in lay.members]
    n = p.n
    for i in range(n):
        neighbors = [j for j in range(n) if j != i and gens[i] & gens[j]]
        assert len(neighbors) == 2
        shared = sum(len(gens[i] & gens[j]) for j in neighbors)
        assert shared == 2 * p.l


def test_head_to_toe_l_zero_and_validation():
    p = CodeParams(N=20, h=5, l=0)
    assert make_head_to_toe(p).members == make_disjoint(p).members
    with pytest.raises(ValueError):
        make_head_to_toe(CodeParams(N=30, h=3, l=4))


def test_disjoint_requires_l_zero():
    with pytest.raises(ValueError):
        make_disjoint(CodeParams(N=10, h=2, l=1))


def test_build_layout_dispatch():
    p = CodeParams(N=12, h=3, l=2)
    assert build_layout(p, "head-to-toe").members == make_head_to_toe(p).members
    with pytest.raises(ValueError):
        build_layout(p, "nonsense")


def test_json_roundtrip_and_validation():
    p = CodeParams(N=12, h=3, l=2, q=16, d=2)
    lay = make_random_annex(p, 5)
    again = GenerationLayout.from_json(lay.to_json())
    assert again.members == lay.members
    assert again.params == p
    with pytest.raises(ValueError):
        GenerationLayout(p, lay.members[:-1])
    bad = list(list(g) for g in lay.members)
    bad[0][3] = bad[0][0]  # annex collides with base
    with pytest.raises(ValueError):
        GenerationLayout(p, tuple(tuple(g) for g in bad))
