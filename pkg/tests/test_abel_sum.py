import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from abel_lab.abel_sum import (
    abel_series,
    chain_coefficients,
    cluster_term,
    eigen_expansion,
    evolution_solution,
    hm_coefficient,
    split_series,
    static_coefficients,
)
from abel_lab.clustering import (
    choose_all_radii,
    find_gap_subsequence,
    plan_from_root_system,
    split_counting,
)
from abel_lab.errors import ValidationError
from abel_lab.operator_lab import SectorSpec, build_jordan, random_similarity
from abel_lab.spectral import compute_root_system

from oracles import fd_relative_error, matrix_phi, sectorial_instance

SECTOR = SectorSpec(0.3, 0.2)


def test_h0_is_one():
    for a, lam, t in [(0.5, 2 + 1j, 0.3), (1.7, 0.6, 2.0)]:
        assert hm_coefficient(a, lam, t, 0) == 1


def test_h1_closed_form():
    a, lam, t = 1.3, 2.0 - 0.5j, 0.7
    ref = a * t * np.exp((a + 1) * np.log(lam))
    assert abs(hm_coefficient(a, lam, t, 1) - ref) <= 1e-12 * abs(ref)


def test_h2_unit_values():
    assert abs(hm_coefficient(1.0, 1.0, 1.0, 2) + 0.5) < 1e-15


def test_h1_matches_central_difference():
    err, _ = fd_relative_error(0.8, 3.0 + 1j, 0.5, 1, hm_coefficient(0.8, 3.0 + 1j, 0.5, 1))
    assert err < 1e-6


def test_fixed_step_discrepancy_is_stencil_truncation():
    # at |lambda|=9, alpha=2.5, t=2 the absolute step 1e-5 is coarse; halving it cuts the gap ~16x
    a, lam, t = 2.5, 9.0, 2.0
    v = hm_coefficient(a, lam, t, 1)
    e1, _ = fd_relative_error(a, lam, t, 1, v, h=1e-5)
    e2, _ = fd_relative_error(a, lam, t, 1, v, h=5e-6)
    assert 10 < e1 / e2 < 20
    assert fd_relative_error(a, lam, t, 1, v)[0] < 1e-8


def test_variants_differ_and_unknown_rejected():
    a, lam, t = 0.7, 2.0, 1.0
    assert abs(hm_coefficient(a, lam, t, 1) - hm_coefficient(a, lam, t, 1, "char_variable")) > 1e-3
    with pytest.raises(ValidationError):
        hm_coefficient(a, lam, t, 1, "other")


def test_simple_chain_coefficient():
    op, rs = build_jordan([(0.5, 1), (0.25, 1)], random_similarity(2, np.random.default_rng(1), 3.0))
    f = np.array([1.0, 2.0j])
    for c, g in zip(rs.chains, rs.biorthogonal_chains):
        got = chain_coefficients(f, c, g, 0.8, 0.4)
        lam_a = np.exp(0.8 * np.log(c.char_number))
        assert abs(got[0] - np.exp(-lam_a * 0.4) * np.vdot(g[:, 0], f)) < 1e-14


def test_length_two_chain_on_eigenvector():
    op, rs = build_jordan([(0.5, 2)])
    c, g = rs.chains[0], rs.biorthogonal_chains[0]
    e0 = c.vectors[:, 0]
    coef = chain_coefficients(e0, c, g, 1.0, 0.3)
    damp = math.exp(-2.0 * 0.3)
    assert abs(coef[0] - damp * np.vdot(g[:, 1], e0)) < 1e-15
    assert abs(np.vdot(g[:, 0], e0)) == 0
    assert abs(coef[1]) < 1e-15


def test_small_t_reproduces_static_decomposition(rng):
    op, rs = build_jordan([(1.0, 3), (0.4, 2)], random_similarity(5, rng, 5.0))
    f = rng.standard_normal(5)
    for c, g in zip(rs.chains, rs.biorthogonal_chains):
        a = static_coefficients(f, c, g)
        assert np.allclose(chain_coefficients(f, c, g, 1.0, 1e-8), a, atol=1e-7)
    total = sum(c.vectors @ static_coefficients(f, c, g) for c, g in zip(rs.chains, rs.biorthogonal_chains))
    assert np.allclose(total, f, atol=1e-12)


def test_cluster_two_simple_eigenvalues():
    B = np.diag([0.5, 0.25])
    rs = compute_root_system(B)
    f = np.array([1.0, -2.0])
    term = cluster_term(rs, [0, 1], f, 1.0, 0.3)
    assert np.allclose(term.value, np.exp(-0.3 * np.array([2.0, 4.0])) * f, atol=1e-15)


def test_cluster_jordan_block_against_expm(rng):
    op, rs = build_jordan([(0.5, 2)], random_similarity(2, rng, 4.0))
    f = rng.standard_normal(2) + 1j * rng.standard_normal(2)
    for t in (0.05, 0.5, 2.0):
        ref = matrix_phi(op.matrix, 1.0, t) @ f
        assert np.linalg.norm(cluster_term(rs, [0], f, 1.0, t).value - ref) < 1e-12


def test_cluster_orthogonal_to_duals_is_zero(rng):
    op, rs = build_jordan([(1.0, 2), (0.3, 1)], random_similarity(3, rng, 4.0))
    g = rs.biorthogonal_chains[0]
    # f in the other chain's span pairs to zero with the first dual chain
    f = rs.chains[1].vectors[:, 0]
    assert np.allclose(g.conj().T @ f, 0, atol=1e-12)
    assert cluster_term(rs, [0], f, 1.0, 0.4).norm < 1e-12


def _plan(op, rs, K=1.0):
    return choose_all_radii(plan_from_root_system(rs, K, 1.0), op.matrix, phi=SECTOR.opening)


def test_series_rank_eight_residual():
    op, rs, f = sectorial_instance(11, 8)
    plan = _plan(op, rs, 0.8)
    rep = abel_series(op.matrix, rs, plan, 1.0, 0.5, f, u_ref=eigen_expansion(op.matrix, 1.0, 0.5, f))
    assert rep.residual < 1e-8 and rep.converged
    rep2 = abel_series(op.matrix, rs, plan, 1.0, 0.5, f, sector=SECTOR)
    assert rep2.reference == "contour" and rep2.residual < 1e-8


def test_series_identity_recovery_sweep():
    op, rs, f = sectorial_instance(12, 8)
    plan = _plan(op, rs, 0.8)
    res = [np.linalg.norm(abel_series(op.matrix, rs, plan, 1.0, t, f).total - f) for t in (1, 0.1, 0.01, 0.001)]
    assert all(b < a for a, b in zip(res, res[1:]))
    assert res[-1] < 0.05 * res[0]


def test_series_zero_vector():
    op, rs, _ = sectorial_instance(13, 6)
    rep = abel_series(op.matrix, rs, _plan(op, rs, 0.8), 1.0, 0.2, np.zeros(6))
    assert all(tm.norm == 0 for tm in rep.terms)


def test_series_reports_orientation():
    op, rs, f = sectorial_instance(14, 5)
    rep = abel_series(op.matrix, rs, _plan(op, rs, 0.8), 1.0, 0.2, f)
    assert rep.orientation.startswith("counterclockwise")


def _cluster_instance(seed=5, sizes=(1, 4, 9)):
    r = np.random.default_rng(seed)
    mods, x = [], 1.0
    for n in sizes:
        for _ in range(n):
            mods.append(x)
            x += 1.0
        x += 0.5
    chars = np.array(mods) * np.exp(1j * r.uniform(-0.2, 0.2, len(mods)))
    op, rs = build_jordan([(1 / c, 1) for c in chars], random_similarity(len(mods), r, 5.0))
    plan = _plan(op, rs, 1.2)
    f = r.standard_normal(len(mods)) + 1j * r.standard_normal(len(mods))
    return op, rs, plan, f


def test_split_regroups_to_unsplit():
    op, rs, plan, f = _cluster_instance()
    assert plan.sizes() == [1, 4, 9]
    sp = split_counting(plan.sizes(), 2, 1, 1)
    rep = split_series(op.matrix, rs, plan, sp, 0.75, 0.1, f, SECTOR)
    assert len(rep.sub_ids) >= 2
    assert rep.regroup_error < 1e-8 * np.linalg.norm(f)


def test_trivial_split_equals_series():
    op, rs, plan, f = _cluster_instance()
    sp = split_counting(plan.sizes(), 2, 1, 1)
    one = type(sp)(sp.gamma, sp.beta_exp, sp.eta_inv, sp.sizes, sp.C, tuple((n,) for n in sp.sizes), {},
                   sp.sandwich_lower, sp.sandwich_upper, sp.remainder_ratio)
    rep = split_series(op.matrix, rs, plan, one, 0.75, 0.1, f, SECTOR)
    ser = abel_series(op.matrix, rs, plan, 0.75, 0.1, f)
    assert rep.sub_ids == [1]
    assert np.linalg.norm(rep.total - ser.total) < 1e-8 * np.linalg.norm(f)


def test_split_identity_residual_decreases():
    op, rs, plan, f = _cluster_instance()
    sp = split_counting(plan.sizes(), 2, 1, 1)
    res = [split_series(op.matrix, rs, plan, sp, 0.75, t, f, SECTOR).identity_residual for t in (1, 0.1, 0.01, 0.001)]
    assert all(b < a for a, b in zip(res, res[1:]))


def test_evolution_diagonal_alpha_one():
    mu = np.array([0.5, 0.2, 0.1])
    f = np.array([1.0, 1.0, 1.0])
    rows = evolution_solution(np.diag(mu), 1.0, [0.1, 1.0], f)
    for t, u, _, res in rows:
        assert np.allclose(u, np.exp(-t / mu) * f, atol=1e-14) and res < 1e-14


def test_evolution_diagonal_half_order():
    lam = np.array([2.0, 3.0 + 1j])
    f = np.array([1.0, 2.0])
    (t, u, _, _), = evolution_solution(np.diag(1 / lam), 0.5, [0.7], f)
    assert np.allclose(u, np.exp(-0.7 * np.sqrt(lam)) * f, atol=1e-14)


def test_evolution_norm_nonincreasing_selfadjoint(rng):
    Q, _ = np.linalg.qr(rng.standard_normal((6, 6)))
    B = Q @ np.diag([1.0, 0.5, 0.3, 0.2, 0.1, 0.05]) @ Q.T
    rows = evolution_solution(B, 1.0, [0.01, 0.1, 0.5, 1.0, 3.0], rng.standard_normal(6))
    norms = [r[2] for r in rows]
    assert all(b <= a for a, b in zip(norms, norms[1:]))


def test_evolution_rejects_nonpositive_t():
    with pytest.raises(ValidationError):
        evolution_solution(np.eye(2), 1.0, [0.0, 1.0], np.ones(2))


@given(st.floats(0.3, 2.5), st.floats(0.5, 10.0), st.floats(-1.2, 1.2), st.floats(0.1, 2.0), st.integers(0, 4))
def test_hm_matches_finite_differences(alpha, r, phase, t, m):
    lam = r * np.exp(1j * phase)
    err, _ = fd_relative_error(alpha, lam, t, m, hm_coefficient(alpha, lam, t, m))
    assert err < 1e-6


@given(st.integers(0, 2**31), st.floats(0.05, 1.0), st.floats(0.05, 1.0))
def test_semigroup_property(seed, t1, t2):
    op, rs, f = sectorial_instance(seed, 6)
    (_, u12, _, _), = evolution_solution(op.matrix, 1.0, [t1 + t2], f, rs)
    lam = np.array([c.char_number for c in rs.chains])
    E = rs.vectors()
    coef = np.array([np.vdot(g[:, 0], f) for g in rs.biorthogonal_chains])
    seq = E @ (np.exp(-lam * t2) * (np.exp(-lam * t1) * coef))
    assert np.linalg.norm(u12 - seq) < 1e-9 * max(1.0, np.linalg.norm(f))


@given(st.integers(0, 2**31))
def test_residue_equals_quadrature_random_jordan(seed):
    from abel_lab.abel_sum import ring_agreement

    r = np.random.default_rng(seed)
    blocks = [(1.0 * np.exp(0.1j), int(r.integers(1, 4))), (0.3, int(r.integers(1, 3))), (0.07, 1)]
    n = sum(L for _, L in blocks)
    op, rs = build_jordan(blocks, random_similarity(n, r, 10 ** r.uniform(0, 3)))
    plan = _plan(op, rs)
    f = r.standard_normal(n) + 1j * r.standard_normal(n)
    dev = ring_agreement(op.matrix, rs, plan, SECTOR, 1.0, 0.3, f)
    assert np.max(dev) < 1e-8 * np.linalg.norm(f)
