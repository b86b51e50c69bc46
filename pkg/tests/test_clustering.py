import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from abel_lab.clustering import (
    SplitPlan,
    assign_suboperators,
    chain_groups,
    choose_intermediate_radius,
    find_gap_subsequence,
    plan_from_root_system,
    ring_nesting_ok,
    ring_parameters,
    split_counting,
    start_cluster,
)
from abel_lab.errors import NotPowerRegularError, RingTooCrowdedError, ValidationError
from abel_lab.operator_lab import build_jordan, random_similarity

squares = np.arange(1, 32, dtype=float) ** 2


def test_squares_every_index_is_boundary():
    plan = find_gap_subsequence(squares[:21], 2.0, 0.5)
    assert plan.sizes() == [1] * 21


def test_hand_checked_groups():
    plan = find_gap_subsequence([1, 1.01, 5, 5.02, 30], 1.0, 0.5)
    assert plan.N == (0, 2, 4, 5)
    assert [list(plan.group(i)) for i in range(3)] == [[1, 1.01], [5, 5.02], [30]]


def test_single_value_one_group():
    plan = find_gap_subsequence([3.0], 1.0, 1.0)
    assert plan.n_groups == 1 and plan.sizes() == [1]


def test_unsorted_moduli_rejected():
    with pytest.raises(ValidationError):
        find_gap_subsequence([2.0, 1.0], 1.0, 1.0)


def test_ring_unit_case():
    for e in (0.3, 1.0, 2.5):
        R, d = ring_parameters(1.0, 1.0, e)
        assert R == 2.0 and d == 0.5


def test_ring_mu_100():
    R, d = ring_parameters(100.0, 1.0, 0.5)
    assert abs(R - 110) < 1e-12 and abs(d - 1 / 11) < 1e-15
    assert abs(R * (1 - d) - 100) < 1e-12


def test_ring_nesting_squares():
    plan = find_gap_subsequence(squares[:21], 2.0, 0.5)
    assert ring_nesting_ok(plan)
    assert np.all(plan.R[:-1] < plan.R[1:] * (1 - plan.delta[1:]))


def _diag_with_chars(chars):
    return np.diag(1.0 / np.asarray(chars, dtype=complex))


def test_radius_in_empty_ring_lies_inside():
    B = _diag_with_chars([1.0, 10.0])
    plan = find_gap_subsequence([1.0, 10.0], 1.0, 1.0)
    ch = choose_intermediate_radius(plan, B, 0)
    lo = plan.R[0] * (1 - plan.delta[0])
    assert lo < ch.radius < plan.R[0]


def test_radius_avoids_modulus_at_ring_centre():
    plan = find_gap_subsequence([1.0, 3.0], 1.0, 1.0)
    # ring 0 is (1, 2); put a characteristic number at its centre
    B = _diag_with_chars([1.0, 1.5])
    ch = choose_intermediate_radius(plan, B, 0)
    assert abs(ch.radius - 1.5) >= plan.margin(0)


def test_radius_argmin_beats_worst(rng):
    S = random_similarity(8, rng, 10.0)
    chars = np.array([1, 1.3, 2.9, 3.2, 7, 7.5, 16, 18]) * np.exp(0.2j * rng.uniform(-1, 1, 8))
    B = S @ np.diag(1 / chars) @ np.linalg.inv(S)
    plan = find_gap_subsequence(np.sort(np.abs(chars)), 1.0, 1.0)
    ch = choose_intermediate_radius(plan, B, 0)
    assert ch.max_norm < ch.worst_norm


def test_crowded_ring_raises():
    plan = find_gap_subsequence([1.0, 3.0], 1.0, 1.0)
    B = _diag_with_chars(np.linspace(1.0, 2.0, 40))
    with pytest.raises(RingTooCrowdedError):
        choose_intermediate_radius(plan, B, 0, samples=8, margin=0.2)


def test_split_triangular_numbers():
    sizes = [nu * nu for nu in range(1, 61)]
    sp = split_counting(sizes, 2, 1, 1)
    assert all(sp.sandwich_lower) and all(sp.sandwich_upper)
    for nu in range(1, 61):
        tri = nu * (nu + 1) / 2
        assert nu ** 2 / 2 + 0.5 <= tri <= ((nu + 1) ** 2 - 1) / 2
    rem = np.array(sp.remainders, dtype=float)
    nus = np.arange(1, 61)
    # linear growth: N'_nu / nu stays bounded and levels off
    ratio = rem[3:] / nus[3:]
    assert np.all((ratio > 2) & (ratio < 6))
    assert np.polyfit(np.log(nus[30:]), np.log(rem[30:]), 1)[0] < 1.1


def test_split_gamma_three_ratio():
    sizes = [round((nu + 1) ** 3 * 2 / 3) for nu in range(1, 41)]
    sp = split_counting(sizes, 3, 2, 1)
    ratios = np.array(sp.remainder_ratio[3:])
    assert np.all((ratios >= 0.5) & (ratios <= 4.0))


def test_split_first_cluster_all_remainder():
    sp = split_counting([3, 8, 20], 2, 1, 1)
    assert sp.counts[0] == (3,)


def test_split_conservation_and_start_clusters():
    sizes = [nu ** 3 for nu in range(1, 9)]
    sp = split_counting(sizes, 3, 1, 2)
    for n, row in zip(sizes, sp.counts):
        assert sum(row) == n and min(row) >= 0
    assert start_cluster(5, 2) == 3 and start_cluster(4, 2) == 2 and start_cluster(1, 1) == 1


def test_split_not_power_regular():
    with pytest.raises(NotPowerRegularError):
        split_counting([1, 4, 9, 16000], 2, 1, 1)


def test_split_rejects_inconsistent_orders():
    with pytest.raises(ValidationError):
        split_counting([1, 4], 3, 1, 1)


def _twelve(rng):
    chars = np.arange(1, 13) * np.exp(0.2j * rng.uniform(-1, 1, 12))
    op, rs = build_jordan([(1 / c, 1) for c in chars], random_similarity(12, rng, 5.0))
    plan = find_gap_subsequence(np.sort(np.abs(chars)), 20.0, 1.0)  # one group
    return op, rs, plan, chars


def test_one_subspace_is_whole_operator(rng):
    op, rs, plan, _ = _twelve(rng)
    subs = assign_suboperators(op.matrix, rs, plan, split_counting(plan.sizes(), 2, 1, 1, window=None))
    assert len(subs) == 1 and subs[0].k == 1
    ev = np.sort_complex(subs[0].eigenvalues)
    assert np.allclose(np.sort_complex(np.linalg.eigvals(op.matrix)), ev, atol=1e-10)


def test_split_eight_four(rng):
    op, rs, plan, chars = _twelve(rng)
    sp = SplitPlan(2, 1, 1, (12,), (1.0,), ((8, 4),), {2: 1}, (True,), (True,), (8.0,))
    subs = assign_suboperators(op.matrix, rs, plan, sp)
    by_k = {s.k: s for s in subs}
    assert len(by_k[1].chain_indices) == 8 and len(by_k[2].chain_indices) == 4
    for s in subs:
        expected = np.sort_complex(np.array([rs.chains[i].eigenvalue for i in s.chain_indices]))
        assert np.allclose(np.sort_complex(s.eigenvalues), expected, atol=1e-8)
    # B_2 takes the four smallest characteristic numbers
    got = sorted(abs(rs.chains[i].char_number) for i in by_k[2].chain_indices)
    assert np.allclose(got, [1, 2, 3, 4])
    sB = np.linalg.svd(op.matrix, compute_uv=False)
    for s in subs:
        sk = np.linalg.svd(s.matrix, compute_uv=False)
        assert np.all(sk <= sB[: sk.size] * (1 + 1e-12))


def test_chain_groups_respect_jordan_multiplicity(rng):
    op, rs = build_jordan([(1.0, 2), (0.1, 1), (0.05, 3)], random_similarity(6, rng, 5.0))
    plan = plan_from_root_system(rs, 1.0, 1.0)
    groups = chain_groups(rs, plan)
    assert sum(rs.chains[i].length for g in groups for i in g) == 6


@given(st.lists(st.floats(0.5, 1e4), min_size=1, max_size=30), st.floats(0.1, 5.0), st.floats(0.2, 1.5))
def test_ring_identities(values, K, e):
    plan = find_gap_subsequence(np.sort(values), K, e)
    b = plan.boundary_moduli()
    assert np.allclose(plan.R * (1 - plan.delta), b, rtol=1e-12, atol=0)
    assert np.allclose(1 / plan.delta, 1 + b ** e / K, rtol=1e-12, atol=0)


@given(st.lists(st.floats(0.5, 1e3), min_size=2, max_size=30, unique=True), st.floats(0.1, 5.0), st.floats(0.2, 1.5))
def test_ring_nesting_when_gaps_strict(values, K, e):
    mu = np.sort(values)
    plan = find_gap_subsequence(mu, K, e)
    b = plan.boundary_moduli()
    gaps = np.array([plan.mu[n] - plan.mu[n - 1] for n in plan.N[1:-1]])
    strict = np.all(gaps > K * b[:-1] ** (1 - e) * (1 + 1e-12))
    if strict:
        assert ring_nesting_ok(plan)


@given(st.lists(st.integers(0, 400), min_size=1, max_size=12), st.sampled_from([(2, 1, 1), (3, 2, 1), (3, 1, 2)]))
def test_split_conservation(sizes, orders):
    g, b, e = orders
    sp = split_counting(sizes, g, b, e, window=None)
    for n, row in zip(sizes, sp.counts):
        assert sum(row) == n and min(row) >= 0


@given(st.lists(st.floats(0.5, 100), min_size=1, max_size=20), st.floats(0.1, 3.0), st.floats(0.1, 3.0))
def test_ring_count_nonincreasing_in_K(values, K1, K2):
    mu = np.sort(values)
    lo, hi = sorted((K1, K2))
    assert find_gap_subsequence(mu, hi, 1.0).n_groups <= find_gap_subsequence(mu, lo, 1.0).n_groups
